#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sgdrive/common.hpp"

namespace sgdrive {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Pose {
    Vec2 position;          // meters, world frame
    Vec2 heading{1.0, 0.0};  // unit vector
    double speed = 0.0;      // m/s, >= 0

    void validate() const {
        if (std::abs(heading.norm() - 1.0) > 1e-9)
            throw InvalidVectorError("pose heading is not unit length");
        if (speed < 0.0) throw DataError("pose speed is negative");
    }
};

// Ordered subgoal points; adjacent points at least spacing_min apart.
struct PathSpec {
    std::vector<Vec2> subgoal_points;
    double spacing_min = 2.0;

    std::size_t size() const { return subgoal_points.size(); }
    const Vec2& back() const { return subgoal_points.back(); }

    bool satisfies_spacing() const {
        for (std::size_t i = 1; i < subgoal_points.size(); ++i)
            if (distance(subgoal_points[i - 1], subgoal_points[i]) < spacing_min) return false;
        return true;
    }
};

// Signed angle between heading and subgoal direction, degrees, in (-180, 180].
// Positive means the subgoal lies to the right of the heading.
struct SubgoalAngle {
    double degrees = 0.0;

    bool valid() const { return degrees > -180.0 && degrees <= 180.0; }
};

enum class Branch : int { Left = 0, Straight = 1, Right = 2 };

inline const char* branch_name(Branch b) {
    switch (b) {
        case Branch::Left: return "left";
        case Branch::Straight: return "straight";
        default: return "right";
    }
}

// Monotone index into a PathSpec marking how far along the path the vehicle
// has progressed. Never decreases within an episode.
struct ProgressCursor {
    std::size_t last_passed_index = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Greedy chronological filter: keep the first point, then keep each subsequent
// point iff it is at least spacing_min away from the last kept point.
inline PathSpec discretize_path(const std::vector<Vec2>& trajectory, double spacing_min) {
    if (spacing_min <= 0.0) throw ConfigError("spacing_min must be positive");
    if (trajectory.size() < 2) throw DegeneratePathError("trajectory has fewer than 2 points");

    PathSpec path;
    path.spacing_min = spacing_min;
    path.subgoal_points.push_back(trajectory.front());
    for (std::size_t i = 1; i < trajectory.size(); ++i) {
        if (distance(trajectory[i], path.subgoal_points.back()) >= spacing_min)
            path.subgoal_points.push_back(trajectory[i]);
    }
    if (path.subgoal_points.size() < 2)
        throw DegeneratePathError("fewer than 2 points survive discretization");
    return path;
}

// The subgoal is the nearest point more than lookahead_min meters away,
// restricted to indices at or after the cursor so that points behind the
// vehicle are never selected. Consecutive points within lookahead_min are
// passed (the cursor advances over them). When every remaining point is
// within lookahead_min the final point is returned.
inline std::pair<Vec2, ProgressCursor> select_subgoal(const PathSpec& path, ProgressCursor cursor,
                                                      const Pose& pose, double lookahead_min) {
    if (lookahead_min <= 0.0) throw ConfigError("lookahead_min must be positive");
    const auto& pts = path.subgoal_points;
    if (pts.empty()) throw DegeneratePathError("empty path");

    std::size_t i = cursor.last_passed_index;
    while (i < pts.size() && distance(pts[i], pose.position) <= lookahead_min) ++i;

    if (i >= pts.size()) {
        cursor.last_passed_index = pts.size() - 1;
        return {pts.back(), cursor};
    }
    cursor.last_passed_index = i;
    return {pts[i], cursor};
}

// sd = (g - p) / ||g - p||
inline Vec2 subgoal_direction(const Vec2& subgoal, const Pose& pose) {
    const Vec2 delta = subgoal - pose.position;
    if (delta.norm_sq() == 0.0)
        throw CoincidentPointError("subgoal coincides with vehicle position");
    return delta.normalized();
}

// Signed angle (degrees) from heading to direction, right-positive, (-180, 180].
inline SubgoalAngle subgoal_angle(const Vec2& direction, const Vec2& heading) {
    if (std::abs(direction.norm() - 1.0) > 1e-6)
        throw InvalidVectorError("subgoal direction is not unit length");
    if (std::abs(heading.norm() - 1.0) > 1e-6)
        throw InvalidVectorError("heading is not unit length");

    double deg = -rad_to_deg(std::atan2(heading.cross(direction), heading.dot(direction)));
    if (deg == -180.0) deg = 180.0;  // exact-rear tie-break keeps the range half-open
    return SubgoalAngle{deg};
}

// Total partition of (-180, 180]: left [-180, -10), straight [-10, 10],
// right (10, 180].
inline Branch discretize_branch(const SubgoalAngle& angle) {
    if (angle.degrees < -10.0) return Branch::Left;
    if (angle.degrees <= 10.0) return Branch::Straight;
    return Branch::Right;
}

// Rotate a vector clockwise (to the right) by the given angle in degrees.
// Used by the expert's recovery geometry and by tests as the angle oracle.
inline Vec2 rotate_right(const Vec2& v, double degrees) {
    const double r = deg_to_rad(degrees);
    const double c = std::cos(r), s = std::sin(r);
    return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

}  // namespace sgdrive
