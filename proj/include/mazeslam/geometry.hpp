#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace mazeslam {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
[[nodiscard]] inline double wrap_angle(double a) noexcept {
    double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

struct Vec2 {
    double x{0};
    double y{0};

    friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;

    [[nodiscard]] double norm() const noexcept { return std::hypot(x, y); }
    [[nodiscard]] double dot(Vec2 o) const noexcept { return x * o.x + y * o.y; }
    [[nodiscard]] double cross(Vec2 o) const noexcept { return x * o.y - y * o.x; }
};

/// Planar pose. World axes: x right, y up, theta counterclockwise from +x.
/// theta is kept in (-pi, pi].
class Pose2 {
public:
    constexpr Pose2() = default;
    Pose2(double x, double y, double theta) noexcept : x_(x), y_(y), theta_(wrap_angle(theta)) {}

    [[nodiscard]] double x() const noexcept { return x_; }
    [[nodiscard]] double y() const noexcept { return y_; }
    [[nodiscard]] double theta() const noexcept { return theta_; }
    [[nodiscard]] Vec2 translation() const noexcept { return {x_, y_}; }

    [[nodiscard]] static Pose2 identity() noexcept { return {}; }

    friend bool operator==(const Pose2&, const Pose2&) = default;

private:
    double x_{0};
    double y_{0};
    double theta_{0};
};

/// a ⊕ b: b expressed in a's frame, mapped to the world.
[[nodiscard]] inline Pose2 compose(const Pose2& a, const Pose2& b) noexcept {
    const double c = std::cos(a.theta());
    const double s = std::sin(a.theta());
    return {a.x() + c * b.x() - s * b.y(), a.y() + s * b.x() + c * b.y(), a.theta() + b.theta()};
}

[[nodiscard]] inline Pose2 inverse(const Pose2& p) noexcept {
    const double c = std::cos(p.theta());
    const double s = std::sin(p.theta());
    return {-c * p.x() - s * p.y(), s * p.x() - c * p.y(), -p.theta()};
}

/// a⁻¹ ⊕ b, so that compose(a, between(a, b)) == b.
[[nodiscard]] inline Pose2 between(const Pose2& a, const Pose2& b) noexcept {
    const double c = std::cos(a.theta());
    const double s = std::sin(a.theta());
    const double dx = b.x() - a.x();
    const double dy = b.y() - a.y();
    return {c * dx + s * dy, -s * dx + c * dy, b.theta() - a.theta()};
}

[[nodiscard]] inline Vec2 transform_point(const Pose2& p, Vec2 q) noexcept {
    const double c = std::cos(p.theta());
    const double s = std::sin(p.theta());
    return {p.x() + c * q.x - s * q.y, p.y() + s * q.x + c * q.y};
}

struct Twist2 {
    double v{0};  // m/s forward
    double w{0};  // rad/s counterclockwise
    friend bool operator==(const Twist2&, const Twist2&) = default;
};

/// Covariance over (x, y, theta).
using Cov3 = Eigen::Matrix3d;

}  // namespace mazeslam
