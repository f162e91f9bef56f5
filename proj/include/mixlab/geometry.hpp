#ifndef MIXLAB_GEOMETRY_HPP
#define MIXLAB_GEOMETRY_HPP

#include <cmath>

#include "mixlab/common.hpp"

namespace mixlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) {
        x += o.x;
        y += o.y;
        return *this;
    }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

// Symmetric 2x2 matrix, row-major (a b; c d) with b == c when used as a
// covariance.
struct Mat2 {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    static Mat2 diagonal(double u, double v) { return {u, 0.0, 0.0, v}; }
    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

    double det() const { return a * d - b * c; }
    double trace() const { return a + d; }
    bool symmetric(double tol = 0.0) const { return std::abs(b - c) <= tol; }

    bool spd() const { return symmetric(1e-12 * (std::abs(b) + std::abs(c) + 1.0)) && det() > 0.0 && trace() > 0.0; }

    Mat2 inverse() const {
        const double dt = det();
        if (dt == 0.0) throw NumericError("singular-matrix: 2x2 inverse requested for det == 0");
        const double inv = 1.0 / dt;
        return {d * inv, -b * inv, -c * inv, a * inv};
    }

    Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }

    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2 operator+(Mat2 o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
};

} // namespace mixlab

#endif
