#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "sgdrive/common.hpp"

namespace sgdrive {

struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(element_count(shape)), 0.0);
    }

    static std::int64_t element_count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace sgdrive
