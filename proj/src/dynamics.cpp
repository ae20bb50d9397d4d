#include "vortexlab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vortexlab/detail.hpp"

namespace vortexlab {

namespace {

using detail::inv_two_pi;

constexpr double kMinStep = 1e-13;       // |h| below this reports near-collapse
constexpr double kEventTimeTol = 1e-10;  // bisection tolerance for event_time
constexpr double kCoincident = 1e-14;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Dormand-Prince 5(4) tableau (FSAL), Hairer-Norsett-Wanner coefficients.
constexpr double kA21 = 0.2;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0, kA63 = 46732.0 / 5247.0,
                 kA64 = 49.0 / 176.0, kA65 = -5103.0 / 18656.0;
constexpr double kA71 = 35.0 / 384.0, kA73 = 500.0 / 1113.0, kA74 = 125.0 / 192.0,
                 kA75 = -2187.0 / 6784.0, kA76 = 11.0 / 84.0;
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0, kE4 = 71.0 / 1920.0,
                 kE5 = -17253.0 / 339200.0, kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;
constexpr double kD1 = -12715105075.0 / 11282082432.0, kD3 = 87487479700.0 / 32700410799.0,
                 kD4 = -10690763975.0 / 1880347072.0, kD5 = 701980252875.0 / 199316789632.0,
                 kD6 = -1453857185.0 / 822651844.0, kD7 = 69997945.0 / 29380423.0;

// Step-size controller constants (PI control).
constexpr double kBeta = 0.04;
constexpr double kExpo1 = 0.2 - kBeta * 0.75;
constexpr double kSafe = 0.9;
constexpr double kFacMin = 0.1, kFacMax = 5.0;  // hnew = h / fac, fac in [0.1, 5]

// Right-hand side of the vortex ODE (and its linearization) on the packed
// coordinate vector: positions first, then the variational matrix row-major.
struct Field {
    const Geometry& geom;
    const std::vector<double>& xi;
    double eps;
    int n, dm, npos;
    bool variational;
    int ntot;
    mutable std::vector<double> db;  // npos x npos Jacobian scratch

    Field(const VortexState& s, double eps_, bool var)
        : geom(s.geometry),
          xi(s.intensities),
          eps(eps_),
          n(s.n()),
          dm(geom.dim()),
          npos(n * dm),
          variational(var),
          ntot(npos + (var ? npos * npos : 0)) {
        if (var) db.assign(static_cast<std::size_t>(npos) * npos, 0.0);
    }

    void velocity(const double* y, double* f) const {
        std::fill(f, f + npos, 0.0);
        if (geom.kind() == Surface::Sphere) {
            for (int i = 0; i < n; ++i) {
                const Vec3 pi{y[3 * i], y[3 * i + 1], y[3 * i + 2]};
                for (int j = i + 1; j < n; ++j) {
                    const Vec3 pj{y[3 * j], y[3 * j + 1], y[3 * j + 2]};
                    const double r = norm(pi - pj);
                    const auto [w, dw] = geom.sphere_w(eps, r);
                    (void)dw;
                    const Vec3 c = cross(pi, pj);  // K(x,y) = w(|x-y|) x cross y
                    f[3 * i] += xi[j] * w * c.x;
                    f[3 * i + 1] += xi[j] * w * c.y;
                    f[3 * i + 2] += xi[j] * w * c.z;
                    f[3 * j] -= xi[i] * w * c.x;
                    f[3 * j + 1] -= xi[i] * w * c.y;
                    f[3 * j + 2] -= xi[i] * w * c.z;
                }
            }
            return;
        }
        const bool torus = geom.kind() == Surface::Torus;
        const bool disk = geom.kind() == Surface::UnitDisk;
        const double eps2 = eps * eps;
        for (int i = 0; i < n; ++i) {
            const Vec2 pi{y[2 * i], y[2 * i + 1]};
            for (int j = i + 1; j < n; ++j) {
                const Vec2 pj{y[2 * j], y[2 * j + 1]};
                Vec2 u = pi - pj;
                if (torus) u = TorusGreen::reduce(u);
                const double r2 = norm2(u);
                Vec2 grad;  // translation-invariant part of grad_x G_eps
                if (eps > 0.0 && r2 < eps2) {
                    grad = detail::blend_gradient_coeff(r2, eps) * u;
                    if (torus) grad = grad + geom.table().smooth_gradient(u);
                } else if (torus) {
                    grad = geom.table().gradient(u);
                } else {
                    grad = (-inv_two_pi / r2) * u;
                }
                if (disk) {
                    const Vec2 kij = rot(grad + detail::disk_g_gradient(pi, pj));
                    const Vec2 kji = rot((-1.0) * grad + detail::disk_g_gradient(pj, pi));
                    f[2 * i] += xi[j] * kij.x;
                    f[2 * i + 1] += xi[j] * kij.y;
                    f[2 * j] += xi[i] * kji.x;
                    f[2 * j + 1] += xi[i] * kji.y;
                } else {
                    const Vec2 k = rot(grad);
                    f[2 * i] += xi[j] * k.x;
                    f[2 * i + 1] += xi[j] * k.y;
                    f[2 * j] -= xi[i] * k.x;
                    f[2 * j + 1] -= xi[i] * k.y;
                }
            }
            if (disk) {
                const double scale = geom.literal_self_interaction() ? xi[i] * xi[i] : xi[i];
                const Vec2 self = scale * rot(detail::disk_phi_gradient(pi));
                f[2 * i] += self.x;
                f[2 * i + 1] += self.y;
            }
        }
    }

    void add2(int bi, int bj, Mat2 m) const {
        const std::size_t row = static_cast<std::size_t>(2 * bi) * npos + 2 * bj;
        db[row] += m.a11;
        db[row + 1] += m.a12;
        db[row + npos] += m.a21;
        db[row + npos + 1] += m.a22;
    }

    void jacobian(const double* y) const {
        std::fill(db.begin(), db.end(), 0.0);
        if (geom.kind() == Surface::Sphere) {
            for (int i = 0; i < n; ++i) {
                const Vec3 pi{y[3 * i], y[3 * i + 1], y[3 * i + 2]};
                for (int j = i + 1; j < n; ++j) {
                    const Vec3 pj{y[3 * j], y[3 * j + 1], y[3 * j + 2]};
                    const Vec3 d = pi - pj;
                    const double r = norm(d);
                    const auto [w, dw] = geom.sphere_w(eps, r);
                    const Vec3 c = cross(pi, pj);
                    const double q = dw / r;
                    // dV_i/dx_i += xi_j (-w [x_j]x + q c d^T), dV_i/dx_j = xi_j (w [x_i]x - q c d^T)
                    // dV_j/dx_j += xi_i (-w [x_i]x + q c d^T), dV_j/dx_i = xi_i (w [x_j]x - q c d^T)
                    add_sphere_block(i, i, -xi[j] * w, pj, xi[j] * q, c, d);
                    add_sphere_block(i, j, xi[j] * w, pi, -xi[j] * q, c, d);
                    add_sphere_block(j, j, -xi[i] * w, pi, xi[i] * q, c, d);
                    add_sphere_block(j, i, xi[i] * w, pj, -xi[i] * q, c, d);
                }
            }
            return;
        }
        const bool torus = geom.kind() == Surface::Torus;
        const bool disk = geom.kind() == Surface::UnitDisk;
        const double eps2 = eps * eps;
        for (int i = 0; i < n; ++i) {
            const Vec2 pi{y[2 * i], y[2 * i + 1]};
            for (int j = i + 1; j < n; ++j) {
                const Vec2 pj{y[2 * j], y[2 * j + 1]};
                Vec2 u = pi - pj;
                if (torus) u = TorusGreen::reduce(u);
                const double r2 = norm2(u);
                const bool blend = eps > 0.0 && r2 < eps2;
                Mat2 sing;  // Hessian of the translation-invariant part
                if (torus) {
                    sing = blend ? detail::blend_hessian(u, eps) + geom.table().smooth_hessian(u)
                                 : geom.table().hessian(u);
                } else {
                    sing = blend ? detail::blend_hessian(u, eps) : detail::free_hessian(u);
                }
                if (disk) {
                    const Mat2 hxx_ij = sing + detail::disk_g_hessian_xx(pi, pj);
                    const Mat2 hxy_ij = (-sing) + detail::disk_g_hessian_xy(pi, pj);
                    const Mat2 hxx_ji = sing + detail::disk_g_hessian_xx(pj, pi);
                    const Mat2 hxy_ji = (-sing) + detail::disk_g_hessian_xy(pj, pi);
                    add2(i, i, xi[j] * rot_times(hxx_ij));
                    add2(i, j, xi[j] * rot_times(hxy_ij));
                    add2(j, j, xi[i] * rot_times(hxx_ji));
                    add2(j, i, xi[i] * rot_times(hxy_ji));
                } else {
                    // G depends on x - y only and is even, so both orderings share
                    // the same Hessian and Hxy = -Hxx.
                    const Mat2 rxx = rot_times(sing);
                    add2(i, i, xi[j] * rxx);
                    add2(i, j, (-xi[j]) * rxx);
                    add2(j, j, xi[i] * rxx);
                    add2(j, i, (-xi[i]) * rxx);
                }
            }
            if (disk) {
                const double scale = geom.literal_self_interaction() ? xi[i] * xi[i] : xi[i];
                add2(i, i, scale * rot_times(detail::disk_phi_hessian(pi)));
            }
        }
    }

    void add_sphere_block(int bi, int bj, double s, Vec3 a, double c, Vec3 cv, Vec3 dv) const {
        const int r0 = 3 * bi, c0 = 3 * bj;
        auto at = [&](int r, int cc) -> double& {
            return db[static_cast<std::size_t>(r0 + r) * npos + c0 + cc];
        };
        // s * [a]x  (cross-product matrix)
        at(0, 1) += -s * a.z;
        at(0, 2) += s * a.y;
        at(1, 0) += s * a.z;
        at(1, 2) += -s * a.x;
        at(2, 0) += -s * a.y;
        at(2, 1) += s * a.x;
        // c * cv dv^T
        const double cr[3] = {cv.x, cv.y, cv.z};
        const double dr[3] = {dv.x, dv.y, dv.z};
        for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc) at(r, cc) += c * cr[r] * dr[cc];
    }

    void operator()(const double* y, double* f) const {
        velocity(y, f);
        if (!variational) return;
        jacobian(y);
        const double* Y = y + npos;
        double* fY = f + npos;
        std::fill(fY, fY + static_cast<std::size_t>(npos) * npos, 0.0);
        for (int r = 0; r < npos; ++r) {
            const double* dbr = &db[static_cast<std::size_t>(r) * npos];
            double* out = fY + static_cast<std::size_t>(r) * npos;
            for (int k = 0; k < npos; ++k) {
                const double a = dbr[k];
                if (a == 0.0) continue;
                const double* Yk = Y + static_cast<std::size_t>(k) * npos;
                for (int cc = 0; cc < npos; ++cc) out[cc] += a * Yk[cc];
            }
        }
    }
};

// Hairer's automatic initial step selection (algorithm from DOPRI5).
double initial_step(const Field& field, const std::vector<double>& y,
                    const std::vector<double>& f0, double dir, double atol, double rtol,
                    double hmax) {
    const int ntot = field.ntot;
    double dnf = 0.0, dny = 0.0;
    for (int i = 0; i < ntot; ++i) {
        const double sc = atol + rtol * std::fabs(y[i]);
        dnf += (f0[i] / sc) * (f0[i] / sc);
        dny += (y[i] / sc) * (y[i] / sc);
    }
    double h;
    if (dnf <= 1e-10 || dny <= 1e-10 || !std::isfinite(dnf) || !std::isfinite(dny))
        h = 1e-6;
    else
        h = std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);

    std::vector<double> y1(ntot), f1(ntot);
    for (int i = 0; i < ntot; ++i) y1[i] = y[i] + dir * h * f0[i];
    field(y1.data(), f1.data());
    double der2 = 0.0;
    for (int i = 0; i < ntot; ++i) {
        const double sc = atol + rtol * std::fabs(y[i]);
        der2 += ((f1[i] - f0[i]) / sc) * ((f1[i] - f0[i]) / sc);
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
    double h1;
    if (der12 <= 1e-15 || !std::isfinite(der12))
        h1 = std::max(1e-6, h * 1e-3);
    else
        h1 = std::pow(0.01 / der12, 0.2);
    return dir * std::min({100.0 * h, h1, hmax});
}

double pair_distance(const Geometry& geom, const double* pos, int i, int j) {
    if (geom.kind() == Surface::Sphere) {
        const Vec3 d{pos[3 * i] - pos[3 * j], pos[3 * i + 1] - pos[3 * j + 1],
                     pos[3 * i + 2] - pos[3 * j + 2]};
        return norm(d);
    }
    Vec2 u{pos[2 * i] - pos[2 * j], pos[2 * i + 1] - pos[2 * j + 1]};
    if (geom.kind() == Surface::Torus) u = TorusGreen::reduce(u);
    return norm(u);
}

struct MinInfo {
    double d = kInf;
    int i = 0, j = 1;
};

MinInfo min_pair(const Geometry& geom, const double* pos, int n) {
    MinInfo m;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = pair_distance(geom, pos, i, j);
            if (d < m.d) m = {d, i, j};
        }
    return m;
}

// Minimize the quartic through the five points (xs[m], ys[m]) over
// [xs[0], xs[4]]: solve the Vandermonde system for power-basis coefficients,
// then bracket the roots of the cubic derivative by scanning.
void quartic_minimize(const double* xs, const double* ys, std::vector<double>& out_candidates) {
    double v[5][6];
    for (int r = 0; r < 5; ++r) {
        double p = 1.0;
        for (int c = 0; c < 5; ++c) {
            v[r][c] = p;
            p *= xs[r];
        }
        v[r][5] = ys[r];
    }
    for (int k = 0; k < 5; ++k) {  // Gaussian elimination, partial pivot
        int piv = k;
        for (int r = k + 1; r < 5; ++r)
            if (std::fabs(v[r][k]) > std::fabs(v[piv][k])) piv = r;
        if (v[piv][k] == 0.0) return;
        if (piv != k)
            for (int c = 0; c < 6; ++c) std::swap(v[piv][c], v[k][c]);
        for (int r = k + 1; r < 5; ++r) {
            const double f = v[r][k] / v[k][k];
            for (int c = k; c < 6; ++c) v[r][c] -= f * v[k][c];
        }
    }
    double coef[5];
    for (int k = 4; k >= 0; --k) {
        double s = v[k][5];
        for (int c = k + 1; c < 5; ++c) s -= v[k][c] * coef[c];
        coef[k] = s / v[k][k];
    }
    auto dq = [&](double x) {
        return coef[1] + x * (2.0 * coef[2] + x * (3.0 * coef[3] + x * 4.0 * coef[4]));
    };
    const int kScan = 64;
    double prev_x = xs[0], prev_f = dq(prev_x);
    for (int s = 1; s <= kScan; ++s) {
        const double x = xs[0] + (xs[4] - xs[0]) * s / kScan;
        const double fx = dq(x);
        if ((prev_f <= 0.0 && fx >= 0.0) || (prev_f >= 0.0 && fx <= 0.0)) {
            double lo = prev_x, hi = x, flo = prev_f;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi), fm = dq(mid);
                if ((flo <= 0.0) == (fm <= 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            out_candidates.push_back(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_f = fx;
    }
}

}  // namespace

std::vector<Vec3> vector_field(const VortexState& state, double epsilon) {
    state.validate();
    if (epsilon < 0.0) throw config_error("epsilon must be nonnegative");
    if (epsilon == 0.0 && state.n() >= 2) {
        const double d = state.min_pair_distance();
        if (d < kCoincident) throw coincident_error(d);
    }
    Field field(state, epsilon, false);
    std::vector<double> y(field.npos), f(field.npos);
    for (int i = 0; i < field.n; ++i) {
        y[i * field.dm] = state.positions[i].x;
        y[i * field.dm + 1] = state.positions[i].y;
        if (field.dm == 3) y[i * field.dm + 2] = state.positions[i].z;
    }
    field.velocity(y.data(), f.data());
    std::vector<Vec3> out(state.n());
    for (int i = 0; i < field.n; ++i)
        out[i] = field.dm == 3 ? Vec3{f[3 * i], f[3 * i + 1], f[3 * i + 2]}
                               : Vec3{f[2 * i], f[2 * i + 1], 0.0};
    return out;
}

Trajectory integrate(const VortexState& state, double t_final, const FlowOptions& opts) {
    state.validate();
    opts.validate();
    const Geometry& geom = state.geometry;
    if (opts.epsilon == 0.0 && state.n() >= 2) {
        const double d0 = state.min_pair_distance();
        if (d0 < kCoincident) throw coincident_error(d0);
    }

    Field field(state, opts.epsilon, opts.track_variational);
    const int n = field.n, dm = field.dm, npos = field.npos, ntot = field.ntot;

    Trajectory traj;
    traj.geom_ = geom;
    traj.xi_ = state.intensities;

    std::vector<double> y(ntot, 0.0);
    for (int i = 0; i < n; ++i) {
        y[i * dm] = state.positions[i].x;
        y[i * dm + 1] = state.positions[i].y;
        if (dm == 3) y[i * dm + 2] = state.positions[i].z;
    }
    if (opts.track_variational)
        for (int i = 0; i < npos; ++i) y[npos + static_cast<std::size_t>(i) * npos + i] = 1.0;

    auto unpack_points = [&](const double* data) {
        std::vector<Point> pts(n);
        for (int i = 0; i < n; ++i)
            pts[i] = dm == 3 ? Point{data[3 * i], data[3 * i + 1], data[3 * i + 2]}
                             : Point{data[2 * i], data[2 * i + 1], 0.0};
        return pts;
    };
    auto jac_det_of = [&](const double* data) {
        if (!opts.track_variational) return kNaN;
        DMat m(npos);
        std::copy(data + npos, data + ntot, m.a.begin());
        return lu_det(m);
    };
    auto push_node = [&](double t, const double* data) {
        traj.nodes_.push_back({t, unpack_points(data), jac_det_of(data)});
    };
    auto set_final_variational = [&](const double* data) {
        if (!opts.track_variational) return;
        DMat m(npos);
        std::copy(data + npos, data + ntot, m.a.begin());
        traj.final_variational_ = std::move(m);
    };

    traj.running_min_ = n >= 2 ? min_pair(geom, y.data(), n).d : kInf;
    push_node(0.0, y.data());

    const bool has_event = opts.min_distance_event.has_value();
    const double thr = has_event ? *opts.min_distance_event : -kInf;
    if (has_event && traj.running_min_ <= thr) {
        traj.event_time_ = 0.0;
        traj.status_ = FlowStatus::Event;
        set_final_variational(y.data());
        return traj;
    }
    if (t_final == 0.0) {
        set_final_variational(y.data());
        return traj;
    }

    const double dir = t_final > 0.0 ? 1.0 : -1.0;
    const double atol = opts.abs_tol, rtol = opts.rel_tol;

    std::vector<double> k1(ntot), k2(ntot), k3(ntot), k4(ntot), k5(ntot), k6(ntot), k7(ntot),
        ytmp(ntot), ynew(ntot);
    std::vector<double> dense_buf(npos);

    field(y.data(), k1.data());

    // One full step of size hh from (y, k1) into ynew (k2..k7 scratch).
    auto run_stages = [&](double hh) {
        for (int i = 0; i < ntot; ++i) ytmp[i] = y[i] + hh * kA21 * k1[i];
        field(ytmp.data(), k2.data());
        for (int i = 0; i < ntot; ++i) ytmp[i] = y[i] + hh * (kA31 * k1[i] + kA32 * k2[i]);
        field(ytmp.data(), k3.data());
        for (int i = 0; i < ntot; ++i)
            ytmp[i] = y[i] + hh * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
        field(ytmp.data(), k4.data());
        for (int i = 0; i < ntot; ++i)
            ytmp[i] = y[i] + hh * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
        field(ytmp.data(), k5.data());
        for (int i = 0; i < ntot; ++i)
            ytmp[i] = y[i] + hh * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] + kA64 * k4[i] +
                                   kA65 * k5[i]);
        field(ytmp.data(), k6.data());
        for (int i = 0; i < ntot; ++i)
            ynew[i] = y[i] + hh * (kA71 * k1[i] + kA73 * k3[i] + kA74 * k4[i] + kA75 * k5[i] +
                                   kA76 * k6[i]);
        field(ynew.data(), k7.data());
    };

    auto dense_positions = [&](const Trajectory::Segment& s, double theta, double* out) {
        const double th1 = 1.0 - theta;
        for (int i = 0; i < npos; ++i)
            out[i] = s.c1[i] +
                     theta * (s.c2[i] + th1 * (s.c3[i] + theta * (s.c4[i] + th1 * s.c5[i])));
    };

    double t = 0.0;
    double h = initial_step(field, y, k1, dir, atol, rtol,
                            std::min(opts.max_step, std::fabs(t_final)));
    double facold = 1e-4;
    std::uint64_t nstep = 0;
    bool last = false;

    for (;;) {
        if (nstep >= opts.max_steps) {
            traj.status_ = FlowStatus::StepLimit;
            set_final_variational(y.data());
            break;
        }
        h = dir * std::min(std::fabs(h), opts.max_step);
        if ((t + 1.01 * h - t_final) * dir > 0.0) {
            h = t_final - t;
            last = true;
        } else {
            last = false;
        }
        if (!last && std::fabs(h) < kMinStep) {
            traj.status_ = FlowStatus::NearCollapse;
            traj.collapse_time_ = t;
            set_final_variational(y.data());
            break;
        }
        ++nstep;

        run_stages(h);

        double err = 0.0;
        for (int i = 0; i < ntot; ++i) {
            const double sc = atol + rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            const double e = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                                  kE6 * k6[i] + kE7 * k7[i]);
            err += (e / sc) * (e / sc);
        }
        err = std::sqrt(err / ntot);

        const double fac11 = std::pow(err, kExpo1);
        if (!(err <= 1.0)) {  // also catches NaN from singular trial stages
            h = h / std::min(kFacMax, fac11 / kSafe);
            last = false;
            continue;
        }

        // --- accepted ---
        facold = std::max(err, 1e-4);

        Trajectory::Segment seg;
        seg.t0 = t;
        seg.h = h;
        seg.c1.resize(npos);
        seg.c2.resize(npos);
        seg.c3.resize(npos);
        seg.c4.resize(npos);
        seg.c5.resize(npos);
        for (int i = 0; i < npos; ++i) {
            const double ydiff = ynew[i] - y[i];
            const double bspl = h * k1[i] - ydiff;
            seg.c1[i] = y[i];
            seg.c2[i] = ydiff;
            seg.c3[i] = bspl;
            seg.c4[i] = ydiff - h * k7[i] - bspl;
            seg.c5[i] = h * (kD1 * k1[i] + kD3 * k3[i] + kD4 * k4[i] + kD5 * k5[i] +
                             kD6 * k6[i] + kD7 * k7[i]);
        }
        traj.segs_.push_back(std::move(seg));
        const Trajectory::Segment& s = traj.segs_.back();

        double event_theta = -1.0;
        double event_dist = kInf;
        if (n >= 2) {
            const double rm_before = traj.running_min_;
            // sample the dense output at theta = k/8 (theta = 0 is the
            // previous step's endpoint, already accounted)
            double samp_d[9];
            MinInfo samp_info[9];
            dense_positions(s, 0.0, dense_buf.data());
            samp_info[0] = min_pair(geom, dense_buf.data(), n);
            samp_d[0] = samp_info[0].d;
            int kmin = 0;
            for (int k = 1; k <= 8; ++k) {
                dense_positions(s, k / 8.0, dense_buf.data());
                samp_info[k] = min_pair(geom, dense_buf.data(), n);
                samp_d[k] = samp_info[k].d;
                if (samp_d[k] < samp_d[kmin]) kmin = k;
            }
            double step_min = samp_d[kmin];
            double step_min_theta = kmin / 8.0;

            const bool refine = step_min < 2.0 * rm_before ||
                                (has_event && step_min <= 2.0 * thr);
            if (refine) {
                // quartic model of the squared distance of the minimizing pair
                const int lo = std::clamp(kmin - 2, 0, 4);
                double xs[5], ys[5];
                const int pi = samp_info[kmin].i, pj = samp_info[kmin].j;
                for (int m = 0; m < 5; ++m) {
                    xs[m] = (lo + m) / 8.0;
                    dense_positions(s, xs[m], dense_buf.data());
                    const double d = pair_distance(geom, dense_buf.data(), pi, pj);
                    ys[m] = d * d;
                }
                std::vector<double> cands;
                quartic_minimize(xs, ys, cands);
                for (const double th : cands) {
                    dense_positions(s, th, dense_buf.data());
                    const double d = min_pair(geom, dense_buf.data(), n).d;
                    if (d < step_min) {
                        step_min = d;
                        step_min_theta = th;
                    }
                }
            }

            if (has_event && step_min <= thr) {
                // first crossing: walk the ordered candidates, then bisect
                double lo_th = 0.0;
                double hi_th = step_min_theta;
                for (int k = 1; k <= 8; ++k) {
                    if (k / 8.0 >= hi_th) break;
                    if (samp_d[k] <= thr) {
                        hi_th = k / 8.0;
                        break;
                    }
                    lo_th = k / 8.0;
                }
                auto dist_at = [&](double th) {
                    dense_positions(s, th, dense_buf.data());
                    return min_pair(geom, dense_buf.data(), n).d;
                };
                for (int it = 0; it < 200 && (hi_th - lo_th) * std::fabs(h) > kEventTimeTol;
                     ++it) {
                    const double mid = 0.5 * (lo_th + hi_th);
                    if (dist_at(mid) <= thr)
                        hi_th = mid;
                    else
                        lo_th = mid;
                }
                event_theta = hi_th;
                event_dist = dist_at(hi_th);
                traj.running_min_ = std::min(rm_before, event_dist);
            } else {
                traj.running_min_ = std::min(rm_before, step_min);
            }
        }

        if (event_theta >= 0.0) {
            // re-run one exact step of size event_theta * h for a full-order
            // endpoint (including the variational block)
            const double he = event_theta * h;
            run_stages(he);
            if (geom.kind() == Surface::Sphere) {
                for (int i = 0; i < n; ++i) {
                    double* p = &ynew[3 * i];
                    const double rn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                    traj.sphere_residual_ += std::fabs(rn - 1.0);
                    p[0] /= rn;
                    p[1] /= rn;
                    p[2] /= rn;
                }
            }
            const double te = t + he;
            push_node(te, ynew.data());
            traj.event_time_ = te;
            traj.status_ = FlowStatus::Event;
            set_final_variational(ynew.data());
            break;
        }

        t += h;
        if (last) t = t_final;
        y.swap(ynew);
        if (geom.kind() == Surface::Sphere) {
            for (int i = 0; i < n; ++i) {
                double* p = &y[3 * i];
                const double rn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                traj.sphere_residual_ += std::fabs(rn - 1.0);
                p[0] /= rn;
                p[1] /= rn;
                p[2] /= rn;
            }
            if (traj.sphere_residual_ > 1e-9) throw surface_drift_error(traj.sphere_residual_);
            field(y.data(), k1.data());  // renormalization invalidates the FSAL stage
        } else {
            k1.swap(k7);
        }
        push_node(t, y.data());

        if (last) {
            traj.status_ = FlowStatus::Complete;
            set_final_variational(y.data());
            break;
        }

        double fac = fac11 / std::pow(facold, kBeta);
        fac = std::max(kFacMin, std::min(kFacMax, fac / kSafe));
        h = h / fac;  // growth capped at x10, shrink at x1/5
    }
    return traj;
}

std::vector<Point> Trajectory::positions_at(double t) const {
    const double lo = std::min(t_begin(), t_end()), hi = std::max(t_begin(), t_end());
    t = std::clamp(t, lo, hi);
    if (segs_.empty()) return nodes_.front().positions;
    const double dir = segs_.front().h > 0.0 ? 1.0 : -1.0;
    // segments are ordered by t0 along the integration direction
    std::size_t sl = 0, sh = segs_.size();
    while (sl < sh) {
        const std::size_t mid = (sl + sh) / 2;
        if ((segs_[mid].t0 - t) * dir <= 0.0)
            sl = mid + 1;
        else
            sh = mid;
    }
    const Segment& s = segs_[sl == 0 ? 0 : sl - 1];
    double theta = (t - s.t0) / s.h;
    theta = std::clamp(theta, 0.0, 1.0);
    const double th1 = 1.0 - theta;
    const int n = static_cast<int>(xi_.size());
    const int dm = geom_.dim();
    std::vector<Point> pts(n);
    for (int i = 0; i < n; ++i) {
        double c[3] = {0.0, 0.0, 0.0};
        for (int d = 0; d < dm; ++d) {
            const int k = i * dm + d;
            c[d] = s.c1[k] + theta * (s.c2[k] + th1 * (s.c3[k] + theta * (s.c4[k] + th1 * s.c5[k])));
        }
        pts[i] = {c[0], c[1], c[2]};
        if (dm == 3) {
            const double rn = norm(pts[i]);
            pts[i] = (1.0 / rn) * pts[i];
        }
    }
    return pts;
}

VortexState Trajectory::state_at(double t) const { return {geom_, positions_at(t), xi_}; }

VortexState Trajectory::final_state() const {
    return {geom_, nodes_.back().positions, xi_};
}

double hamiltonian(const VortexState& state, double epsilon) {
    state.validate();
    const Geometry& geom = state.geometry;
    double hsum = 0.0;
    for (int i = 0; i < state.n(); ++i)
        for (int j = i + 1; j < state.n(); ++j)
            hsum += state.intensities[i] * state.intensities[j] *
                    geom.regularized_green(epsilon, state.positions[i], state.positions[j]);
    if (geom.kind() == Surface::UnitDisk)
        for (int i = 0; i < state.n(); ++i)
            hsum += geom.self_energy_coeff(state.intensities[i]) *
                    geom.smooth_part(state.positions[i], state.positions[i]);
    return hsum;
}

FlowInvariants invariants(const VortexState& state) {
    state.validate();
    const Surface k = state.geometry.kind();
    if (k != Surface::Plane && k != Surface::Sphere)
        throw unsupported_geometry("vorticity center and moment are conserved on plane/sphere only");
    FlowInvariants inv{{0.0, 0.0, 0.0}, 0.0};
    for (int i = 0; i < state.n(); ++i) {
        inv.M = inv.M + state.intensities[i] * state.positions[i];
        inv.I += state.intensities[i] * norm2(state.positions[i]);
    }
    return inv;
}

double lyapunov(const VortexState& state, double epsilon) {
    state.validate();
    if (epsilon <= 0.0) throw config_error("epsilon must be positive");
    double sum = 0.0;
    for (int i = 0; i < state.n(); ++i)
        for (int j = i + 1; j < state.n(); ++j)
            sum += 2.0 * state.geometry.regularized_green(epsilon, state.positions[i],
                                                          state.positions[j]);
    return sum;
}

double lyapunov_rate(const VortexState& state, double epsilon) {
    state.validate();
    if (epsilon <= 0.0) throw config_error("epsilon must be positive");
    const Geometry& geom = state.geometry;
    const int n = state.n();
    double rate = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec2 grad =
                geom.regularized_gradient(epsilon, state.positions[i], state.positions[j]);
            for (int k = 0; k < n; ++k) {
                if (k == i || k == j) continue;
                const Vec2 kv =
                    geom.regularized_kernel(epsilon, state.positions[i], state.positions[k]);
                rate += 2.0 * state.intensities[k] * dot(grad, kv);
            }
            if (geom.kind() == Surface::UnitDisk) {
                const Vec2 self = geom.routh_velocity(state.intensities[i], state.positions[i]);
                rate += 2.0 * dot(grad, self);
            }
        }
    return rate;
}

DMat variational_flow(const VortexState& state, double t_final, const FlowOptions& opts) {
    FlowOptions o = opts;
    o.track_variational = true;
    const Trajectory traj = integrate(state, t_final, o);
    if (traj.status() != FlowStatus::Complete)
        throw std::runtime_error("variational flow did not reach the requested time");
    return traj.final_variational();
}

ArrestedResult arrested_flow(const VortexState& state, double t_final, double epsilon,
                             FlowOptions opts) {
    if (epsilon <= 0.0) throw config_error("epsilon must be positive");
    opts.epsilon = epsilon;
    // ties within 1e-12 of the threshold count as arrested
    opts.min_distance_event = epsilon + 1e-12;
    Trajectory traj = integrate(state, t_final, opts);
    if (traj.status() == FlowStatus::StepLimit)
        throw std::runtime_error("arrested flow exhausted the step budget");
    const bool arrested = traj.status() == FlowStatus::Event ||
                          traj.running_min_distance() <= epsilon + 1e-12;
    VortexState fin = arrested ? state : traj.final_state();
    return {std::move(fin), arrested, std::move(traj)};
}

}  // namespace vortexlab
