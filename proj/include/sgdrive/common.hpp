#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdrive {

// ---------------------------------------------------------------------------
// Error categories. The CLI maps these onto exit codes (config=2, data=3,
// anything else=4), so new error types should derive from one of the three.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct RunError : Error {
    using Error::Error;
};

struct DegeneratePathError : DataError {
    using DataError::DataError;
};

struct CoincidentPointError : DataError {
    using DataError::DataError;
};

struct InvalidVectorError : DataError {
    using DataError::DataError;
};

struct InvalidActionError : DataError {
    using DataError::DataError;
};

struct RecordingError : RunError {
    using RunError::RunError;
};

// ---------------------------------------------------------------------------
// 2D vector
// ---------------------------------------------------------------------------

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    // scalar 2D cross product (z component of the 3D cross)
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double norm_sq() const { return x * x + y * y; }

    Vec2 normalized() const {
        const double n = norm();
        if (n == 0.0) throw CoincidentPointError("cannot normalize zero vector");
        return {x / n, y / n};
    }

    // unit vector 90 degrees to the right (clockwise)
    Vec2 right() const { return {y, -x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

inline double deg_to_rad(double d) { return d * M_PI / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / M_PI; }

template <typename T>
T clamp(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. Hand-rolled so that seeded draws are identical across
// platforms and standard libraries (std::shuffle and std distributions are
// implementation-defined).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// stateless mix of several seed words, for per-cell / per-tick noise
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                              std::uint64_t d = 0) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= c + 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(s);
    s ^= d + 0x165667b19e3779f9ULL;
    h ^= splitmix64(s);
    return h;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so that small seeds do not produce correlated first draws
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // uniform sample of k distinct indices from [0, n), in selection order
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        if (k > n) k = n;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
            std::swap(all[i], all[j]);
        }
        all.resize(k);
        return all;
    }

  private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Little-endian binary I/O helpers for the versioned file formats
// ---------------------------------------------------------------------------

namespace io {

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw DataError("unexpected end of file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* data, std::size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!is) throw DataError("unexpected end of file");
}

inline void write_magic(std::ostream& os, const char (&magic)[8]) {
    os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char (&magic)[8], const std::string& what) {
    char buf[8] = {};
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0)
        throw DataError("bad magic header, not a " + what + " file");
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RunError("cannot write " + path);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw RunError("short write to " + path);
}

}  // namespace io

}  // namespace sgdrive
