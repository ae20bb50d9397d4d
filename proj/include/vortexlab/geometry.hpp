#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "vortexlab/detail.hpp"
#include "vortexlab/errors.hpp"
#include "vortexlab/rng.hpp"
#include "vortexlab/torus_green.hpp"
#include "vortexlab/vec.hpp"

namespace vortexlab {

enum class Surface { Torus, Sphere, UnitDisk, Plane };

Surface surface_from_id(std::string_view id);  // "torus" | "sphere" | "disk" | "plane"
std::string_view surface_id(Surface s);

// Points live in 3 ambient coordinates; flat surfaces ignore z.
using Point = Vec3;
inline Point pnt(double x, double y) { return {x, y, 0.0}; }
inline Point pnt(double x, double y, double z) { return {x, y, z}; }

// Orthonormal tangent basis at a point. For flat surfaces this is the
// standard basis of the plane. On the sphere the pair is oriented so that
// e1 x e2 = -x, which makes the ambient map v -> x cross v act on tangent
// coefficients exactly as the quarter turn (a,b) -> (b,-a). All gradients
// and velocity kernels are reported as coefficients in this basis, so the
// identity grad . rot(grad) = 0 holds bitwise on every surface.
struct Frame {
    Vec3 e1, e2;
};

// Interaction laws of the four supported surfaces.
//
// The Green function of -Laplace splits as
//     G(x,y) = -(1/2pi) log d(x,y) + g(x,y)
// with g smooth (torus: tabulated spectral remainder; sphere: the constant
// that makes G average to zero; disk: the harmonic image term; plane: 0).
// The regularized family G_eps replaces log r inside r < eps by the C^2
// blend log(eps) + p((r/eps)^2), p(s) = (-s^2 + 4s - 3)/4, leaving g alone.
class Geometry {
public:
    static Geometry torus(int table_resolution = 1024, double ewald_split = 2.0);
    static Geometry sphere();
    static Geometry unit_disk(bool literal_self_interaction = false);
    static Geometry plane();
    static Geometry from_id(std::string_view id);

    Surface kind() const { return kind_; }
    int dim() const;           // ambient coordinates per vortex (2, sphere: 3)
    double diameter() const;   // sup of d(x,y); +inf on the plane
    int torus_table_resolution() const { return table_ ? table_->resolution() : 0; }
    double ewald_split() const { return table_ ? table_->ewald_split() : 0.0; }
    const TorusGreen& table() const;
    bool literal_self_interaction() const { return literal_self_interaction_; }

    // throws surface_error (sphere, ||x|-1| > 1e-12) or boundary_error (disk, |x| >= 1)
    void validate_point(Point x) const;
    double distance(Point x, Point y) const;
    Point wrap(Point x) const;  // torus: reduce coordinates to [0,2pi); else identity
    Frame frame(Point x) const;
    Vec3 tangent_to_ambient(Point x, Vec2 coeffs) const;

    double green(Point x, Point y) const;        // coincident_error below 1e-14
    double smooth_part(Point x, Point y) const;  // g(x,y), finite at x = y
    Vec2 green_gradient(Point x, Point y) const; // grad_x G in frame(x) coefficients
    Vec2 kernel(Point x, Point y) const;         // rot(green_gradient)
    Vec3 kernel_ambient(Point x, Point y) const;

    // eps = 0 falls back to the unregularized functions; r >= eps reuses the
    // unregularized code path so the two families agree bitwise there.
    double regularized_green(double eps, Point x, Point y) const;
    Vec2 regularized_gradient(double eps, Point x, Point y) const;
    Vec2 regularized_kernel(double eps, Point x, Point y) const;
    Vec3 regularized_kernel_ambient(double eps, Point x, Point y) const;

    // Boundary-induced self-advection of one vortex in the disk (image at the
    // inverse point). Default scale xi per the half-factor image convention;
    // the literal_self_interaction flag switches to coefficient xi^2.
    Vec2 routh_velocity(double xi, Point x) const;
    Mat2 routh_jacobian(double xi, Point x) const;  // derivative in x
    // Energy coefficient of the matching self-interaction term xi^2 g(x,x).
    double self_energy_coeff(double xi) const {
        return (literal_self_interaction_ ? 1.0 : 0.5) * xi * xi;
    }

    // Second derivatives of G_eps for the variational (Jacobian) flow, as
    // tangent-coefficient blocks; flat surfaces only.
    Mat2 pair_hessian_xx(double eps, Point x, Point y) const;
    Mat2 pair_hessian_xy(double eps, Point x, Point y) const;

    // Sphere velocity kernel in product form K_eps(x,y) = w(r) * (x cross y)
    // with r = |x - y|; returns w and dw/dr (for the variational flow).
    struct RadialKernel {
        double w, dw;
    };
    RadialKernel sphere_w(double eps, double r) const;

    // One surface-uniform point (normalized area measure); throws
    // unsupported_geometry on the plane, which carries no uniform measure.
    Point sample_uniform(RngStream& rng) const;

private:
    explicit Geometry(Surface kind) : kind_(kind) {}

    Surface kind_;
    bool literal_self_interaction_ = false;
    std::shared_ptr<const TorusGreen> table_;  // torus only
};

using detail::blend_dp;
using detail::blend_p;

}  // namespace vortexlab
