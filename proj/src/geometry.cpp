#include "vortexlab/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace vortexlab {

namespace {

using detail::blend_hessian;
using detail::disk_g;
using detail::disk_g_gradient;
using detail::disk_g_hessian_xx;
using detail::disk_g_hessian_xy;
using detail::free_hessian;
using detail::inv_two_pi;

constexpr double kCoincident = 1e-14;
constexpr double kSphereTol = 1e-12;
constexpr double kBoundaryTol = 1e-12;

Vec2 flat(Point p) { return {p.x, p.y}; }

const double sphere_zero_avg_c = (std::log(2.0) - 0.5) * inv_two_pi;

}  // namespace

Surface surface_from_id(std::string_view id) {
    if (id == "torus") return Surface::Torus;
    if (id == "sphere") return Surface::Sphere;
    if (id == "disk") return Surface::UnitDisk;
    if (id == "plane") return Surface::Plane;
    throw unsupported_geometry("unknown geometry id: " + std::string(id));
}

std::string_view surface_id(Surface s) {
    switch (s) {
        case Surface::Torus: return "torus";
        case Surface::Sphere: return "sphere";
        case Surface::UnitDisk: return "disk";
        case Surface::Plane: return "plane";
    }
    return "?";
}

Geometry Geometry::torus(int table_resolution, double ewald_split) {
    Geometry g(Surface::Torus);
    g.table_ = TorusGreen::create(table_resolution, ewald_split);
    return g;
}

Geometry Geometry::sphere() { return Geometry(Surface::Sphere); }

Geometry Geometry::unit_disk(bool literal_self_interaction) {
    Geometry g(Surface::UnitDisk);
    g.literal_self_interaction_ = literal_self_interaction;
    return g;
}

Geometry Geometry::plane() { return Geometry(Surface::Plane); }

Geometry Geometry::from_id(std::string_view id) {
    switch (surface_from_id(id)) {
        case Surface::Torus: return torus();
        case Surface::Sphere: return sphere();
        case Surface::UnitDisk: return unit_disk();
        case Surface::Plane: return plane();
    }
    throw unsupported_geometry("unknown geometry id: " + std::string(id));
}

int Geometry::dim() const { return kind_ == Surface::Sphere ? 3 : 2; }

double Geometry::diameter() const {
    switch (kind_) {
        case Surface::Torus: return std::numbers::pi * std::numbers::sqrt2;
        case Surface::Sphere: return 2.0;
        case Surface::UnitDisk: return 2.0;
        case Surface::Plane: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
}

const TorusGreen& Geometry::table() const {
    if (!table_) throw unsupported_geometry("no kernel table on this surface");
    return *table_;
}

void Geometry::validate_point(Point x) const {
    switch (kind_) {
        case Surface::Sphere: {
            const double r = norm(x);
            if (std::abs(r - 1.0) > kSphereTol)
                throw surface_error("point off the unit sphere: |x| = " + std::to_string(r));
            return;
        }
        case Surface::UnitDisk: {
            if (norm2(flat(x)) >= 1.0)
                throw boundary_error("point outside the open unit disk: |x| = " +
                                     std::to_string(norm(flat(x))));
            return;
        }
        default:
            return;
    }
}

double Geometry::distance(Point x, Point y) const {
    switch (kind_) {
        case Surface::Torus: return norm(TorusGreen::reduce(flat(x) - flat(y)));
        case Surface::Sphere: return norm(x - y);
        default: return norm(flat(x) - flat(y));
    }
}

Point Geometry::wrap(Point x) const {
    if (kind_ != Surface::Torus) return x;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto w = [](double v) {
        double r = std::fmod(v, two_pi);
        if (r < 0.0) r += two_pi;
        return r;
    };
    return {w(x.x), w(x.y), 0.0};
}

Frame Geometry::frame(Point x) const {
    if (kind_ != Surface::Sphere) return {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    const Vec3 a = std::abs(x.x) <= 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    Vec3 e1 = cross(a, x);
    e1 = (1.0 / norm(e1)) * e1;
    const Vec3 e2 = cross(e1, x);  // e1 x e2 = -x
    return {e1, e2};
}

Vec3 Geometry::tangent_to_ambient(Point x, Vec2 coeffs) const {
    if (kind_ != Surface::Sphere) return {coeffs.x, coeffs.y, 0.0};
    const Frame f = frame(x);
    return coeffs.x * f.e1 + coeffs.y * f.e2;
}

double Geometry::green(Point x, Point y) const {
    validate_point(x);
    validate_point(y);
    const double d = distance(x, y);
    if (d < kCoincident) throw coincident_error(d);
    switch (kind_) {
        case Surface::Torus: return table_->value(flat(x) - flat(y));
        case Surface::Sphere: return -inv_two_pi * std::log(d) + sphere_zero_avg_c;
        case Surface::UnitDisk: return -inv_two_pi * std::log(d) + disk_g(flat(x), flat(y));
        case Surface::Plane: return -inv_two_pi * std::log(d);
    }
    return 0.0;
}

double Geometry::smooth_part(Point x, Point y) const {
    validate_point(x);
    validate_point(y);
    switch (kind_) {
        case Surface::Torus: return table_->smooth_value(flat(x) - flat(y));
        case Surface::Sphere: return sphere_zero_avg_c;
        case Surface::UnitDisk: return disk_g(flat(x), flat(y));
        case Surface::Plane: return 0.0;
    }
    return 0.0;
}

Vec2 Geometry::green_gradient(Point x, Point y) const {
    validate_point(x);
    validate_point(y);
    const double d = distance(x, y);
    if (d < kCoincident) throw coincident_error(d);
    switch (kind_) {
        case Surface::Torus: return table_->gradient(flat(x) - flat(y));
        case Surface::Sphere: {
            const Vec3 grad = (-inv_two_pi / (d * d)) * (x - y);
            const Frame f = frame(x);
            return {dot(f.e1, grad), dot(f.e2, grad)};
        }
        case Surface::UnitDisk: {
            const Vec2 v = flat(x) - flat(y);
            return (-inv_two_pi / norm2(v)) * v + disk_g_gradient(flat(x), flat(y));
        }
        case Surface::Plane: {
            const Vec2 v = flat(x) - flat(y);
            return (-inv_two_pi / norm2(v)) * v;
        }
    }
    return {};
}

Vec2 Geometry::kernel(Point x, Point y) const { return rot(green_gradient(x, y)); }

Vec3 Geometry::kernel_ambient(Point x, Point y) const {
    return tangent_to_ambient(x, kernel(x, y));
}

double Geometry::regularized_green(double eps, Point x, Point y) const {
    if (eps <= 0.0) return green(x, y);
    validate_point(x);
    validate_point(y);
    const double r = distance(x, y);
    if (r >= eps) return green(x, y);
    const double s = (r / eps) * (r / eps);
    const double blended = -inv_two_pi * (std::log(eps) + blend_p(s));
    switch (kind_) {
        case Surface::Torus: return blended + table_->smooth_value(flat(x) - flat(y));
        case Surface::Sphere: return blended + sphere_zero_avg_c;
        case Surface::UnitDisk: return blended + disk_g(flat(x), flat(y));
        case Surface::Plane: return blended;
    }
    return 0.0;
}

Vec2 Geometry::regularized_gradient(double eps, Point x, Point y) const {
    if (eps <= 0.0) return green_gradient(x, y);
    validate_point(x);
    validate_point(y);
    const double r = distance(x, y);
    if (r >= eps) return green_gradient(x, y);
    if (r == 0.0) return {0.0, 0.0};  // radial blend has zero gradient at r = 0
    const double ie2 = 1.0 / (eps * eps);
    const double s = r * r * ie2;
    const double c = -2.0 * inv_two_pi * blend_dp(s) * ie2;
    switch (kind_) {
        case Surface::Torus: {
            const Vec2 u = TorusGreen::reduce(flat(x) - flat(y));
            return c * u + table_->smooth_gradient(u);
        }
        case Surface::Sphere: {
            const Vec3 grad = c * (x - y);
            const Frame f = frame(x);
            return {dot(f.e1, grad), dot(f.e2, grad)};
        }
        case Surface::UnitDisk:
            return c * (flat(x) - flat(y)) + disk_g_gradient(flat(x), flat(y));
        case Surface::Plane:
            return c * (flat(x) - flat(y));
    }
    return {};
}

Vec2 Geometry::regularized_kernel(double eps, Point x, Point y) const {
    return rot(regularized_gradient(eps, x, y));
}

Vec3 Geometry::regularized_kernel_ambient(double eps, Point x, Point y) const {
    return tangent_to_ambient(x, regularized_kernel(eps, x, y));
}

Vec2 Geometry::routh_velocity(double xi, Point x) const {
    if (kind_ != Surface::UnitDisk)
        throw unsupported_geometry("boundary self-advection requires the disk");
    validate_point(x);
    const Vec2 p = flat(x);
    if (1.0 - norm(p) < kBoundaryTol)
        throw boundary_error("vortex within 1e-12 of the disk boundary");
    const double scale = literal_self_interaction_ ? xi * xi : xi;
    return scale * rot(detail::disk_phi_gradient(p));
}

Mat2 Geometry::routh_jacobian(double xi, Point x) const {
    if (kind_ != Surface::UnitDisk)
        throw unsupported_geometry("boundary self-advection requires the disk");
    validate_point(x);
    const Vec2 p = flat(x);
    const double scale = literal_self_interaction_ ? xi * xi : xi;
    return scale * rot_times(detail::disk_phi_hessian(p));
}

Mat2 Geometry::pair_hessian_xx(double eps, Point x, Point y) const {
    validate_point(x);
    validate_point(y);
    const double r = distance(x, y);
    const bool blend = eps > 0.0 && r < eps;
    if (!blend && r < kCoincident) throw coincident_error(r);
    switch (kind_) {
        case Surface::Torus: {
            const Vec2 u = TorusGreen::reduce(flat(x) - flat(y));
            return blend ? blend_hessian(u, eps) + table_->smooth_hessian(u)
                         : table_->hessian(u);
        }
        case Surface::UnitDisk: {
            const Vec2 v = flat(x) - flat(y);
            const Mat2 sing = blend ? blend_hessian(v, eps) : free_hessian(v);
            return sing + disk_g_hessian_xx(flat(x), flat(y));
        }
        case Surface::Plane: {
            const Vec2 v = flat(x) - flat(y);
            return blend ? blend_hessian(v, eps) : free_hessian(v);
        }
        case Surface::Sphere:
            throw unsupported_geometry("tangent-coefficient pair Hessians are flat-surface only");
    }
    return {};
}

Mat2 Geometry::pair_hessian_xy(double eps, Point x, Point y) const {
    if (kind_ == Surface::UnitDisk) {
        validate_point(x);
        validate_point(y);
        const double r = distance(x, y);
        const bool blend = eps > 0.0 && r < eps;
        if (!blend && r < kCoincident) throw coincident_error(r);
        const Vec2 v = flat(x) - flat(y);
        const Mat2 sing = blend ? blend_hessian(v, eps) : free_hessian(v);
        return (-sing) + disk_g_hessian_xy(flat(x), flat(y));
    }
    return -pair_hessian_xx(eps, x, y);  // translation invariant: G = G(x-y)
}

Geometry::RadialKernel Geometry::sphere_w(double eps, double r) const {
    if (eps > 0.0 && r < eps) {
        const double ie2 = 1.0 / (eps * eps);
        const double s = r * r * ie2;
        return {2.0 * inv_two_pi * blend_dp(s) * ie2, -2.0 * inv_two_pi * r * ie2 * ie2};
    }
    const double r2 = r * r;
    return {inv_two_pi / r2, -2.0 * inv_two_pi / (r2 * r)};
}

Point Geometry::sample_uniform(RngStream& rng) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (kind_) {
        case Surface::Torus: return {two_pi * rng.u01(), two_pi * rng.u01(), 0.0};
        case Surface::Sphere: {
            const double z = 2.0 * rng.u01() - 1.0;
            const double phi = two_pi * rng.u01();
            const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
            return {rho * std::cos(phi), rho * std::sin(phi), z};
        }
        case Surface::UnitDisk: {
            const double r = std::sqrt(rng.u01_open());
            const double phi = two_pi * rng.u01();
            return {r * std::cos(phi), r * std::sin(phi), 0.0};
        }
        case Surface::Plane:
            throw unsupported_geometry("the plane carries no uniform probability measure");
    }
    return {};
}

}  // namespace vortexlab
