#pragma once

#include <cmath>
#include <numbers>

#include "vortexlab/vec.hpp"

// Shared closed-form pieces of the interaction laws, used by both the
// public geometry interface and the inner loops of the flow integrator.
namespace vortexlab::detail {

constexpr double inv_two_pi = 1.0 / (2.0 * std::numbers::pi);

// C^2 blend of the log singularity: p(s) = (-s^2 + 4s - 3)/4, s = (r/eps)^2.
inline double blend_p(double s) { return (-s * s + 4.0 * s - 3.0) * 0.25; }
inline double blend_dp(double s) { return (2.0 - s) * 0.5; }
inline constexpr double blend_d2p = -0.5;

// Disk harmonic image term g(x,y) = (1/4pi) log Q2 with
// Q2 = |x|^2 |y|^2 - 2 x.y + 1 = (|y| |x - y/|y|^2|)^2, regular through y = 0.
inline double disk_q2(Vec2 x, Vec2 y) { return norm2(x) * norm2(y) - 2.0 * dot(x, y) + 1.0; }

inline double disk_g(Vec2 x, Vec2 y) { return 0.5 * inv_two_pi * std::log(disk_q2(x, y)); }

inline Vec2 disk_g_gradient(Vec2 x, Vec2 y) {
    return (inv_two_pi / disk_q2(x, y)) * (norm2(y) * x - y);
}

inline Mat2 disk_g_hessian_xx(Vec2 x, Vec2 y) {
    const double q2 = disk_q2(x, y);
    const Vec2 u = norm2(y) * x - y;
    return inv_two_pi * iso_plus_outer(norm2(y) / q2, -2.0 / (q2 * q2), u);
}

inline Mat2 disk_g_hessian_xy(Vec2 x, Vec2 y) {
    const double q2 = disk_q2(x, y);
    const Vec2 u = norm2(y) * x - y;
    const Vec2 w = norm2(x) * y - x;
    Mat2 m = (2.0 / q2) * outer(x, y) + (-2.0 / (q2 * q2)) * outer(u, w);
    m.a11 -= 1.0 / q2;
    m.a22 -= 1.0 / q2;
    return inv_two_pi * m;
}

// -(1/2pi) Hess log|v|
inline Mat2 free_hessian(Vec2 v) {
    const double r2 = norm2(v);
    return iso_plus_outer(-inv_two_pi / r2, 2.0 * inv_two_pi / (r2 * r2), v);
}

// Hessian of the blended singular part -(1/2pi)(log eps + p((r/eps)^2)), r < eps.
inline Mat2 blend_hessian(Vec2 v, double eps) {
    const double ie2 = 1.0 / (eps * eps);
    const double s = norm2(v) * ie2;
    return iso_plus_outer(-2.0 * inv_two_pi * blend_dp(s) * ie2,
                          2.0 * inv_two_pi * ie2 * ie2, v);
}

// Gradient scale of the blended singular part: grad = coeff * (x - y).
inline double blend_gradient_coeff(double r2, double eps) {
    const double ie2 = 1.0 / (eps * eps);
    return -2.0 * inv_two_pi * blend_dp(r2 * ie2) * ie2;
}

// Disk boundary self-advection: velocity scale * rot(grad phi),
// phi = (1/4pi) log(1 - |x|^2).
inline Vec2 disk_phi_gradient(Vec2 x) { return (-inv_two_pi / (1.0 - norm2(x))) * x; }

inline Mat2 disk_phi_hessian(Vec2 x) {
    const double b = 1.0 - norm2(x);
    return iso_plus_outer(-inv_two_pi / b, -2.0 * inv_two_pi / (b * b), x);
}

}  // namespace vortexlab::detail
