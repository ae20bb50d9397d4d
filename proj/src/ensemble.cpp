#include "vortexlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "vortexlab/errors.hpp"
#include "vortexlab/parallel.hpp"
#include "vortexlab/stats.hpp"

namespace vortexlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// The arrested flow treats a minimum distance within this absolute slack of
// the threshold as a hit; the sample classifiers below mirror it.
constexpr double kArrestTie = 1e-12;

double neg_inv_log(double c) { return 1.0 / (-std::log(c)); }

std::string coord_name(int vortex, int axis) {
    std::ostringstream os;
    os << (axis == 0 ? "x" : "y") << "_" << (vortex + 1);
    return os.str();
}

// Mean and standard error of the mean for complex samples; the spread is
// sqrt(Var Re + Var Im)/sqrt(n).
void complex_mean_stderr(const std::vector<Complex>& v, Complex& mean, double& se) {
    RunningStat re, im;
    for (const Complex& z : v) {
        re.add(z.real());
        im.add(z.imag());
    }
    mean = {re.mean(), im.mean()};
    const double n = static_cast<double>(v.size());
    se = v.size() > 1 ? std::sqrt((re.variance() + im.variance()) / n) : 0.0;
}

}  // namespace

// ---------------- IntensityDist ----------------

IntensityDist IntensityDist::two_point(double a, double b, double p) {
    IntensityDist d;
    d.kind = Kind::TwoPoint;
    d.a = a;
    d.b = b;
    d.p = p;
    return d;
}

IntensityDist IntensityDist::uniform_on(double lo, double hi) {
    IntensityDist d;
    d.kind = Kind::Uniform;
    d.a = lo;
    d.b = hi;
    return d;
}

IntensityDist IntensityDist::gaussian(double mean, double sigma) {
    IntensityDist d;
    d.kind = Kind::Gaussian;
    d.a = mean;
    d.b = sigma;
    return d;
}

void IntensityDist::validate() const {
    switch (kind) {
        case Kind::TwoPoint:
            if (p < 0.0 || p > 1.0) throw config_error("two-point weight must lie in [0,1]");
            return;
        case Kind::Uniform:
            if (!(a < b)) throw config_error("uniform intensity law needs lo < hi");
            return;
        case Kind::Gaussian:
            if (!(b > 0.0)) throw config_error("gaussian intensity law needs a positive stddev");
            return;
    }
}

double IntensityDist::second_moment() const {
    switch (kind) {
        case Kind::TwoPoint: return p * a * a + (1.0 - p) * b * b;
        case Kind::Uniform: return (a * a + a * b + b * b) / 3.0;
        case Kind::Gaussian: return a * a + b * b;
    }
    return 0.0;
}

double IntensityDist::sample(RngStream& rng) const {
    switch (kind) {
        case Kind::TwoPoint: return rng.u01() < p ? a : b;
        case Kind::Uniform: return rng.uniform(a, b);
        case Kind::Gaussian: return a + b * rng.normal();
    }
    return 0.0;
}

// ---------------- MeasureSpec ----------------

MeasureSpec MeasureSpec::uniform(Geometry g, std::vector<double> xi) {
    MeasureSpec s;
    s.kind = Kind::Uniform;
    s.geometry = std::move(g);
    s.intensities = std::move(xi);
    return s;
}

MeasureSpec MeasureSpec::gibbs(Geometry g, std::vector<double> xi, double beta) {
    MeasureSpec s;
    s.kind = Kind::Gibbs;
    s.geometry = std::move(g);
    s.intensities = std::move(xi);
    s.beta = beta;
    return s;
}

MeasureSpec MeasureSpec::gaussian_plane(std::vector<double> xi, double alpha, Vec2 eta) {
    MeasureSpec s;
    s.kind = Kind::GaussianPlane;
    s.geometry = Geometry::plane();
    s.intensities = std::move(xi);
    s.alpha = alpha;
    s.eta = eta;
    return s;
}

MeasureSpec MeasureSpec::poisson_config(Geometry g, double lambda, IntensityDist nu) {
    MeasureSpec s;
    s.kind = Kind::PoissonConfig;
    s.geometry = std::move(g);
    s.lambda = lambda;
    s.nu = nu;
    return s;
}

void MeasureSpec::validate() const {
    switch (kind) {
        case Kind::Uniform:
        case Kind::Gibbs:
            if (intensities.empty()) throw config_error("measure needs at least one intensity");
            if (geometry.kind() == Surface::Plane)
                throw unsupported_geometry(
                    "the plane carries no uniform probability measure; use the gaussian-plane "
                    "measure");
            return;
        case Kind::GaussianPlane:
            if (intensities.empty()) throw config_error("measure needs at least one intensity");
            if (geometry.kind() != Surface::Plane)
                throw config_error("gaussian-plane measure is defined on the plane");
            for (double x : intensities)
                if (!(x > 0.0))
                    throw config_error(
                        "gaussian-plane measure is normalizable only when all vortices are "
                        "positive");
            if (!(alpha > 0.0)) throw config_error("gaussian-plane weight needs alpha > 0");
            return;
        case Kind::PoissonConfig:
            if (!(lambda > 0.0)) throw config_error("poisson layer needs lambda > 0");
            if (geometry.kind() == Surface::Plane)
                throw unsupported_geometry(
                    "poisson layer positions are surface-uniform; the plane has no such law");
            nu.validate();
            return;
    }
}

// ---------------- GibbsSampler ----------------

GibbsSampler::GibbsSampler(MeasureSpec spec, std::uint64_t seed, std::uint64_t stream)
    : spec_(std::move(spec)),
      state_(spec_.geometry, {}, spec_.intensities),
      rng_(seed, stream) {
    spec_.validate();
    if (spec_.kind != MeasureSpec::Kind::Gibbs)
        throw config_error("gibbs sampler needs a gibbs measure spec");
    const int n = spec_.n_vortices();
    double max_pair = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            max_pair = std::max(max_pair, std::fabs(spec_.intensities[i] * spec_.intensities[j]));
    if (n > 1 && std::fabs(spec_.beta) * max_pair >= 4.0 * std::numbers::pi / (n - 1)) {
        std::ostringstream os;
        os << "|beta| * max|xi_i xi_j| = " << std::fabs(spec_.beta) * max_pair
           << " reaches the 4*pi/(N-1) integrability heuristic; acceptance statistics may "
              "degenerate";
        warnings_.push_back(os.str());
    }

    radius_ = spec_.geometry.diameter() / 4.0;
    for (int i = 0; i < n; ++i) state_.positions.push_back(spec_.geometry.sample_uniform(rng_));

    const int adapt_until = burn_in_sweeps / 2;
    for (int s = 0; s < burn_in_sweeps; ++s) {
        sweep(s < adapt_until);
        if (s < adapt_until && (s + 1) % 50 == 0 && window_proposals_ > 0) {
            const double rate =
                static_cast<double>(window_accepts_) / static_cast<double>(window_proposals_);
            radius_ *= std::exp(rate - 0.30);
            radius_ = std::clamp(radius_, 1e-4, spec_.geometry.diameter());
            window_proposals_ = window_accepts_ = 0;
        }
    }
    run_proposals_ = run_accepts_ = 0;
}

double GibbsSampler::site_energy(int i, Point p) const {
    const Geometry& g = spec_.geometry;
    double e = 0.0;
    for (int j = 0; j < state_.n(); ++j) {
        if (j == i) continue;
        e += spec_.intensities[i] * spec_.intensities[j] * g.green(p, state_.positions[j]);
    }
    if (g.kind() == Surface::UnitDisk)
        e += g.self_energy_coeff(spec_.intensities[i]) * g.smooth_part(p, p);
    return e;
}

void GibbsSampler::sweep(bool adapting) {
    const Geometry& g = spec_.geometry;
    for (int i = 0; i < state_.n(); ++i) {
        const Point x = state_.positions[i];
        Point prop{};
        bool in_domain = true;
        if (g.kind() == Surface::Sphere) {
            // uniform in the spherical cap of angular radius radius_ around x
            const double ang = std::min(radius_, std::numbers::pi);
            const double cz = 1.0 - rng_.u01() * (1.0 - std::cos(ang));
            const double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
            const double phi = kTwoPi * rng_.u01();
            const Frame f = g.frame(x);
            prop = cz * x + (sz * std::cos(phi)) * f.e1 + (sz * std::sin(phi)) * f.e2;
            const double nn = std::sqrt(dot(prop, prop));
            prop = (1.0 / nn) * prop;
        } else {
            // uniform in the disk of radius radius_ around x
            double u, v;
            do {
                u = 2.0 * rng_.u01() - 1.0;
                v = 2.0 * rng_.u01() - 1.0;
            } while (u * u + v * v > 1.0);
            prop = pnt(x.x + radius_ * u, x.y + radius_ * v);
            if (g.kind() == Surface::Torus) {
                prop = g.wrap(prop);
            } else if (g.kind() == Surface::UnitDisk) {
                in_domain = prop.x * prop.x + prop.y * prop.y < (1.0 - 1e-12) * (1.0 - 1e-12);
            }
        }

        ++window_proposals_;
        ++run_proposals_;
        bool accept = false;
        if (in_domain) {
            double near = std::numeric_limits<double>::infinity();
            for (int j = 0; j < state_.n(); ++j)
                if (j != i) near = std::min(near, g.distance(prop, state_.positions[j]));
            if (near > 1e-12) {
                const double delta_e = site_energy(i, prop) - site_energy(i, x);
                const double log_alpha = -spec_.beta * delta_e;
                if (std::isnan(log_alpha)) {
                    accept = false;
                } else if (log_alpha >= 0.0) {
                    accept = true;
                } else {
                    accept = std::log(rng_.u01_open()) < log_alpha;
                }
            }
        }
        if (accept) {
            state_.positions[i] = prop;
            ++window_accepts_;
            ++run_accepts_;
        }
    }
    ++sweeps_;
    if (!adapting) {
        // keep the sampler honest: flag degenerate mixing once
        if (!acceptance_warned_ && sweeps_ > burn_in_sweeps && run_proposals_ >= 1000) {
            const double rate =
                static_cast<double>(run_accepts_) / static_cast<double>(run_proposals_);
            if (rate <= 0.05 || rate >= 0.95) {
                std::ostringstream os;
                os << "metropolis acceptance " << rate
                   << " outside (0.05, 0.95); samples may not have converged";
                warnings_.push_back(os.str());
                acceptance_warned_ = true;
            }
        }
    }
}

const VortexState& GibbsSampler::next() {
    for (int s = 0; s < thinning_sweeps; ++s) sweep(false);
    return state_;
}

double GibbsSampler::acceptance() const {
    return run_proposals_ > 0
               ? static_cast<double>(run_accepts_) / static_cast<double>(run_proposals_)
               : 0.0;
}

// ---------------- sampling ----------------

VortexState sample(const MeasureSpec& spec, std::uint64_t seed, std::uint64_t index) {
    spec.validate();
    RngStream rng(seed, index);
    switch (spec.kind) {
        case MeasureSpec::Kind::Uniform: {
            VortexState st{spec.geometry, {}, spec.intensities};
            for (int i = 0; i < spec.n_vortices(); ++i)
                st.positions.push_back(spec.geometry.sample_uniform(rng));
            return st;
        }
        case MeasureSpec::Kind::Gibbs: {
            GibbsSampler chain(spec, seed, index);
            return chain.next();
        }
        case MeasureSpec::Kind::GaussianPlane: {
            VortexState st{spec.geometry, {}, spec.intensities};
            const Vec2 center{-spec.eta.x / (2.0 * spec.alpha), -spec.eta.y / (2.0 * spec.alpha)};
            for (int i = 0; i < spec.n_vortices(); ++i) {
                const double sigma = 1.0 / std::sqrt(2.0 * spec.alpha * spec.intensities[i]);
                st.positions.push_back(
                    pnt(center.x + sigma * rng.normal(), center.y + sigma * rng.normal()));
            }
            return st;
        }
        case MeasureSpec::Kind::PoissonConfig: {
            const std::uint64_t n = rng.poisson(spec.lambda);
            VortexState st{spec.geometry, {}, {}};
            for (std::uint64_t i = 0; i < n; ++i) {
                st.positions.push_back(spec.geometry.sample_uniform(rng));
                st.intensities.push_back(spec.nu.sample(rng));
            }
            return st;
        }
    }
    throw config_error("unknown measure kind");
}

std::vector<VortexState> sample_ensemble(const MeasureSpec& spec, int n_samples,
                                         std::uint64_t seed, unsigned threads) {
    spec.validate();
    if (n_samples < 1) throw config_error("ensemble needs n_samples >= 1");
    std::vector<VortexState> out;
    if (spec.kind == MeasureSpec::Kind::Gibbs) {
        // one chain: burn-in once, then thinned draws (draw order is the sample order)
        GibbsSampler chain(spec, seed, 0);
        out.reserve(n_samples);
        for (int i = 0; i < n_samples; ++i) out.push_back(chain.next());
        return out;
    }
    out.assign(n_samples, VortexState{spec.geometry, {}, {}});
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) { out[i] = sample(spec, seed, i); }, threads);
    return out;
}

// ---------------- collision tail ----------------

CollisionStats collision_tail_experiment(const MeasureSpec& spec, double t, double epsilon,
                                         std::vector<double> c_grid, int n_samples,
                                         std::uint64_t seed, unsigned threads) {
    spec.validate();
    if (c_grid.empty()) throw config_error("collision tail needs a threshold grid");
    for (std::size_t i = 0; i < c_grid.size(); ++i) {
        if (!(c_grid[i] > 0.0)) throw config_error("collision thresholds must be positive");
        if (i > 0 && !(c_grid[i] < c_grid[i - 1]))
            throw config_error("collision thresholds must decrease");
    }
    if (n_samples < 1) throw config_error("collision tail needs n_samples >= 1");
    const double c_min = c_grid.back();
    if (epsilon > 0.0 && c_min <= epsilon)
        throw config_error("collision thresholds must exceed the regularization radius");

    // Below the smallest threshold every count is already decided, so each
    // trajectory stops at the first crossing of c_min (shrunk by a hair so
    // the crossing itself counts as "below c_min").
    const double stop = c_min * (1.0 - 1e-9);

    CollisionStats stats;
    stats.c_grid = c_grid;
    stats.n_samples = n_samples;
    stats.t_horizon = t;
    stats.epsilon = epsilon;

    std::vector<double> mins(n_samples, std::numeric_limits<double>::infinity());
    std::vector<char> collapsed(n_samples, 0);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            VortexState st = sample(spec, seed, i);
            if (st.n() < 2) return;  // min over the empty pair set is +inf
            FlowOptions opts;
            opts.epsilon = epsilon;
            opts.min_distance_event = stop;
            Trajectory traj = integrate(st, t, opts);
            mins[i] = traj.running_min_distance();
            if (traj.status() == FlowStatus::NearCollapse) {
                mins[i] = 0.0;
                collapsed[i] = 1;
            }
        },
        threads);

    stats.counts.assign(c_grid.size(), 0);
    for (int i = 0; i < n_samples; ++i) {
        for (std::size_t j = 0; j < c_grid.size(); ++j)
            if (mins[i] < c_grid[j]) ++stats.counts[j];
        if (collapsed[i]) ++stats.near_collapses;
    }

    std::vector<double> xs, ys;
    for (std::size_t j = 0; j < c_grid.size(); ++j) {
        xs.push_back(neg_inv_log(c_grid[j]));
        ys.push_back(static_cast<double>(stats.counts[j]) / n_samples);
    }
    const LineFit fit = fit_through_origin(xs, ys);
    stats.fitted_a = fit.slope;
    double ss = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const double r = ys[j] - fit.slope * xs[j];
        ss += r * r;
    }
    stats.fit_residual = std::sqrt(ss / static_cast<double>(xs.size()));
    return stats;
}

// ---------------- measure preservation ----------------

PreservationReport measure_preservation_test(const MeasureSpec& spec, double t, double epsilon,
                                             int n_samples, std::uint64_t seed,
                                             bool use_arrested, unsigned threads) {
    spec.validate();
    if (spec.kind != MeasureSpec::Kind::Uniform)
        throw config_error("measure preservation test needs a uniform spec");
    if (spec.geometry.kind() != Surface::Torus)
        throw unsupported_geometry(
            "per-coordinate uniformity marginals are implemented on the torus");
    if (n_samples < 1000)
        throw config_error("statistical tests need n_samples >= 1000 (asymptotic critical values)");
    if (use_arrested && !(epsilon > 0.0))
        throw config_error("the arrested flow needs epsilon > 0");

    const int n_coords = 2 * spec.n_vortices();
    std::vector<std::vector<double>> coords(n_coords, std::vector<double>(n_samples));
    std::vector<char> collapsed(n_samples, 0);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            VortexState st = sample(spec, seed, i);
            VortexState pushed = st;
            if (t != 0.0) {
                if (use_arrested) {
                    pushed = arrested_flow(st, t, epsilon).final;
                } else {
                    FlowOptions opts;
                    opts.epsilon = epsilon;
                    Trajectory traj = integrate(st, t, opts);
                    pushed = traj.final_state();
                    if (traj.status() == FlowStatus::NearCollapse) collapsed[i] = 1;
                }
            }
            for (int v = 0; v < spec.n_vortices(); ++v) {
                const Point p = spec.geometry.wrap(pushed.positions[v]);
                coords[2 * v][i] = p.x;
                coords[2 * v + 1][i] = p.y;
            }
        },
        threads);

    PreservationReport rep;
    rep.n_samples = n_samples;
    for (char c : collapsed) rep.near_collapses += c;
    rep.ks_critical = ks_critical_1pct / std::sqrt(static_cast<double>(n_samples));
    rep.corr_bound = 4.0 / std::sqrt(static_cast<double>(n_samples));
    rep.pass = true;

    for (int c = 0; c < n_coords; ++c) {
        std::vector<double> u(n_samples);
        for (int i = 0; i < n_samples; ++i) u[i] = coords[c][i] / kTwoPi;
        MarginalTest m;
        m.name = coord_name(c / 2, c % 2);
        m.statistic = ks_statistic_uniform(std::move(u));
        m.pass = ks_pass_uniform(m.statistic, static_cast<std::size_t>(n_samples));
        rep.max_ks = std::max(rep.max_ks, m.statistic);
        rep.pass = rep.pass && m.pass;
        rep.marginals.push_back(std::move(m));
    }

    // independence proxies: circular moments of distinct coordinates decouple
    std::vector<std::vector<double>> cosc(n_coords, std::vector<double>(n_samples));
    std::vector<std::vector<double>> sinc(n_coords, std::vector<double>(n_samples));
    for (int c = 0; c < n_coords; ++c)
        for (int i = 0; i < n_samples; ++i) {
            cosc[c][i] = std::cos(coords[c][i]);
            sinc[c][i] = std::sin(coords[c][i]);
        }
    for (int a = 0; a < n_coords; ++a) {
        for (int b = a + 1; b < n_coords; ++b) {
            const char* kind[4] = {"cos~cos", "sin~sin", "cos~sin", "sin~cos"};
            const double rho[4] = {
                pearson_correlation(cosc[a], cosc[b]), pearson_correlation(sinc[a], sinc[b]),
                pearson_correlation(cosc[a], sinc[b]), pearson_correlation(sinc[a], cosc[b])};
            for (int k = 0; k < 4; ++k) {
                MarginalTest m;
                m.name = std::string(kind[k]) + "(" + coord_name(a / 2, a % 2) + "," +
                         coord_name(b / 2, b % 2) + ")";
                m.statistic = std::fabs(rho[k]);
                m.pass = m.statistic <= rep.corr_bound;
                rep.pass = rep.pass && m.pass;
                rep.correlations.push_back(std::move(m));
            }
        }
    }
    return rep;
}

// ---------------- inner products ----------------

McEstimate inner_product_mc(const CylinderObservable& f, const CylinderObservable& g,
                            const MeasureSpec& spec, int n_samples, std::uint64_t seed,
                            unsigned threads) {
    spec.validate();
    if (spec.kind != MeasureSpec::Kind::Uniform)
        throw config_error("monte carlo inner products are taken under a uniform spec");
    if (n_samples < 1) throw config_error("inner product needs n_samples >= 1");
    std::vector<Complex> vals(n_samples);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            const VortexState st = sample(spec, seed, i);
            vals[i] = std::conj(eval(f, st)) * eval(g, st);
        },
        threads);
    McEstimate est;
    est.n_samples = n_samples;
    complex_mean_stderr(vals, est.estimate, est.std_error);
    return est;
}

// ---------------- pair-kernel norm and the variance identity ----------------

namespace {

// Per-mode integrand of the pair-kernel norm: (k . K(u))^2 |1 - e^{i k.u}|^2.
// Bounded, periodic, and smooth except for a direction-dependent jump at
// u = 0 (the kernel direction u-perp/|u|^2 has no limit there).
double mode_integrand(const Geometry& g, int k1, int k2, double u1, double u2) {
    const Vec2 k = g.kernel(g.wrap(pnt(u1, u2)), pnt(0.0, 0.0));
    const double kd = k1 * k.x + k2 * k.y;
    return kd * kd * (2.0 - 2.0 * std::cos(k1 * u1 + k2 * u2));
}

// distance from u to the nearest lattice image of the singular point
double image_distance(double u1, double u2) {
    const double r1 = std::remainder(u1, kTwoPi);
    const double r2 = std::remainder(u2, kTwoPi);
    return std::hypot(r1, r2);
}

constexpr double kPatchRadius = 1.5;

// smooth radial window: 1 near the singular point, 0 beyond kPatchRadius
double patch_window(double r) { return 1.0 - cutoff_step(r / kPatchRadius, -1).v; }

// (1/(2 pi)^2) Int f (1 - eta) du by the M x M midpoint rule; the windowed
// integrand is a smooth periodic function, so the rule is spectral here.
double mode_grid_part(const Geometry& g, int k1, int k2, int m) {
    const double h = kTwoPi / m;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        const double u1 = (i + 0.5) * h;
        for (int j = 0; j < m; ++j) {
            const double u2 = (j + 0.5) * h;
            const double w = 1.0 - patch_window(image_distance(u1, u2));
            if (w != 0.0) acc += w * mode_integrand(g, k1, k2, u1, u2);
        }
    }
    return acc / (static_cast<double>(m) * m);
}

// (1/(2 pi)^2) Int f eta over the patch in polar coordinates: the angular
// slices are smooth and periodic (trapezoid, spectral) and the radial factor
// f r eta is smooth on [0, R] (composite Simpson). This carries the jump at
// u = 0, where the integrand has smooth angular limits.
double mode_patch_part(const Geometry& g, int k1, int k2, int n_theta, int n_r) {
    const double dr = kPatchRadius / n_r;
    double acc = 0.0;
    for (int ir = 1; ir <= n_r; ++ir) {  // ir = 0 contributes r * f = 0
        const double r = ir * dr;
        const double eta = patch_window(r);
        if (eta == 0.0) continue;
        const double simpson_w = (ir == n_r) ? 1.0 : (ir % 2 == 1 ? 4.0 : 2.0);
        double ring = 0.0;
        for (int it = 0; it < n_theta; ++it) {
            const double th = kTwoPi * it / n_theta;
            ring += mode_integrand(g, k1, k2, r * std::cos(th), r * std::sin(th));
        }
        acc += simpson_w * eta * r * ring / n_theta;
    }
    return acc * (dr / 3.0) * kTwoPi / (kTwoPi * kTwoPi);
}

}  // namespace

double hphi_norm_squared(const Geometry& torus, const TestFunction& phi, double* rel_error) {
    if (torus.kind() != Surface::Torus)
        throw unsupported_geometry("the pair-kernel quadrature is implemented on the torus");
    if (!phi.is_trig())
        throw config_error("the pair-kernel quadrature needs a trigonometric test function");

    // merge duplicate frequencies so the per-mode sum sees one coefficient each
    std::map<std::pair<int, int>, Complex> modes;
    for (const auto& term : phi.trig_terms()) modes[{term.k1, term.k2}] += term.c;

    double coarse = 0.0, fine = 0.0, patch = 0.0, patch_check = 0.0;
    for (const auto& [k, c] : modes) {
        if (k.first == 0 && k.second == 0) continue;  // constant mode: no pair interaction
        const double w = 0.25 * std::norm(c);
        if (w == 0.0) continue;
        coarse += w * mode_grid_part(torus, k.first, k.second, 256);
        fine += w * mode_grid_part(torus, k.first, k.second, 512);
        patch += w * mode_patch_part(torus, k.first, k.second, 256, 512);
        patch_check += w * mode_patch_part(torus, k.first, k.second, 128, 256);
    }
    const double total = fine + (fine - coarse) / 3.0 + patch;
    if (rel_error) {
        const double abs_err = std::fabs(fine - coarse) / 3.0 + std::fabs(patch - patch_check);
        *rel_error = total != 0.0 ? abs_err / std::fabs(total) : 0.0;
    }
    return total;
}

VarianceIdentityResult variance_identity_check(int n_vortices, const IntensityDist& nu,
                                               const TestFunction& phi, int n_samples,
                                               std::uint64_t seed, unsigned threads) {
    nu.validate();
    if (n_vortices < 1) throw config_error("variance identity needs at least one vortex");
    if (n_samples < 1) throw config_error("variance identity needs n_samples >= 1");
    const Geometry torus = Geometry::torus();

    VarianceIdentityResult res;
    res.n_samples = n_samples;
    if (n_vortices > 1) {
        res.hphi_norm2 = hphi_norm_squared(torus, phi, &res.quad_rel_error);
    }
    const double m2 = nu.second_moment();
    res.closed_form = 2.0 * n_vortices * (n_vortices - 1) * m2 * m2 * res.hphi_norm2;

    std::vector<double> vals(n_samples, 0.0);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t s) {
            RngStream rng(seed, s);
            std::vector<Point> x(n_vortices);
            std::vector<double> xi(n_vortices);
            for (int i = 0; i < n_vortices; ++i) x[i] = torus.sample_uniform(rng);
            for (int i = 0; i < n_vortices; ++i) xi[i] = nu.sample(rng);
            Complex sum{};
            for (int i = 0; i < n_vortices; ++i)
                for (int j = i + 1; j < n_vortices; ++j)
                    sum += 2.0 * xi[i] * xi[j] * symmetrized_kernel(torus, phi, x[i], x[j]);
            vals[s] = std::norm(sum);
        },
        threads);

    RunningStat stat;
    for (double v : vals) stat.add(v);
    res.mc = stat.mean();
    res.sigma = stat.stderr_mean();
    return res;
}

// ---------------- regularized-flow convergence ----------------

VepsilonReport vepsilon_convergence_experiment(const MeasureSpec& spec,
                                               const CylinderObservable& obs, double t,
                                               std::vector<double> epsilon_grid, int n_samples,
                                               std::uint64_t seed, unsigned threads) {
    spec.validate();
    if (spec.kind != MeasureSpec::Kind::Uniform)
        throw config_error("the convergence experiment samples a uniform spec");
    if (epsilon_grid.empty()) throw config_error("convergence experiment needs an epsilon grid");
    for (double e : epsilon_grid)
        if (!(e > 0.0)) throw config_error("epsilon grid entries must be positive");
    if (n_samples < 1) throw config_error("convergence experiment needs n_samples >= 1");

    const std::size_t ne = epsilon_grid.size();
    // Classification per sample: the regularized flow coincides with the true
    // flow until the first time the minimum distance reaches eps, so "arrested
    // at eps" is exactly "running minimum <= eps (+ tie slack)" along the true
    // trajectory. One integration classifies every eps in the grid.
    std::vector<double> mins(n_samples);
    std::vector<Complex> f0(n_samples), uf(n_samples);
    std::vector<char> substituted(n_samples, 0);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            const VortexState st = sample(spec, seed, i);
            f0[i] = eval(obs, st);
            Trajectory traj = integrate(st, t, {});
            mins[i] = traj.running_min_distance();
            if (traj.status() == FlowStatus::Complete) {
                uf[i] = eval(obs, traj.final_state());
            } else {
                // reference flow blew up: substitute the smallest-eps arrested
                // flow, which is itself arrested here, i.e. the identity
                substituted[i] = 1;
                uf[i] = f0[i];
                mins[i] = 0.0;
            }
        },
        threads);

    VepsilonReport rep;
    rep.n_samples = n_samples;
    for (char s : substituted) rep.reference_substitutions += s;

    std::vector<double> xs, ys;
    for (std::size_t j = 0; j < ne; ++j) {
        const double eps = epsilon_grid[j];
        RunningStat stat;
        long arrested = 0;
        for (int i = 0; i < n_samples; ++i) {
            const bool hit = mins[i] <= eps + kArrestTie;
            if (hit) ++arrested;
            stat.add(hit ? std::norm(uf[i] - f0[i]) : 0.0);
        }
        VepsilonRow row;
        row.epsilon = eps;
        row.l2_sq = stat.mean();
        row.std_error = stat.stderr_mean();
        row.arrested = arrested;
        rep.rows.push_back(row);
        xs.push_back(neg_inv_log(eps));
        ys.push_back(row.l2_sq);
    }

    std::vector<std::size_t> order(ne);
    for (std::size_t j = 0; j < ne; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return epsilon_grid[a] > epsilon_grid[b];
    });
    for (std::size_t j = 1; j < ne; ++j)
        if (rep.rows[order[j]].l2_sq > rep.rows[order[j - 1]].l2_sq + 1e-15)
            rep.monotone = false;

    rep.fitted_slope = fit_through_origin(xs, ys).slope;
    return rep;
}

// ---------------- generator symmetry and unitarity ----------------

KoopmanReport koopman_check(const MeasureSpec& spec, double t, int n_pairs, int n_samples,
                            std::uint64_t seed, unsigned threads) {
    spec.validate();
    if (spec.kind != MeasureSpec::Kind::Uniform)
        throw config_error("the symmetry/unitarity checks sample a uniform spec");
    if (n_pairs < 0) throw config_error("n_pairs must be nonnegative");
    if (n_samples < 1000)
        throw config_error("statistical tests need n_samples >= 1000 (asymptotic critical values)");

    // observables come from a stream far away from the per-sample indices
    constexpr std::uint64_t kObsStream = 0xB10C0B5ull << 20;
    RngStream obs_rng(seed, kObsStream);
    std::vector<CylinderObservable> fs, gs;
    for (int k = 0; k < n_pairs; ++k) {
        fs.push_back(random_cylinder_observable(obs_rng));
        gs.push_back(random_cylinder_observable(obs_rng));
    }
    const CylinderObservable fu = random_cylinder_observable(obs_rng);
    constexpr double kFallbackEps = 1e-5;

    const std::size_t np = static_cast<std::size_t>(n_pairs);
    std::vector<Complex> lfg(np * n_samples), flg(np * n_samples);
    std::vector<double> f2(n_samples), utf2(n_samples);
    std::vector<char> substituted(n_samples, 0);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            const VortexState st = sample(spec, seed, i);
            for (std::size_t k = 0; k < np; ++k) {
                lfg[k * n_samples + i] = std::conj(liouville_apply(fs[k], st)) * eval(gs[k], st);
                flg[k * n_samples + i] = std::conj(eval(fs[k], st)) * liouville_apply(gs[k], st);
            }
            f2[i] = std::norm(eval(fu, st));
            Trajectory traj = integrate(st, t, {});
            if (traj.status() == FlowStatus::Complete) {
                utf2[i] = std::norm(eval(fu, traj.final_state()));
            } else {
                substituted[i] = 1;
                utf2[i] = std::norm(eval(fu, arrested_flow(st, t, kFallbackEps).final));
            }
        },
        threads);

    KoopmanReport rep;
    rep.n_samples = n_samples;
    for (char s : substituted) rep.collapse_substitutions += s;
    rep.pass = true;
    for (std::size_t k = 0; k < np; ++k) {
        std::vector<Complex> a(lfg.begin() + k * n_samples, lfg.begin() + (k + 1) * n_samples);
        std::vector<Complex> b(flg.begin() + k * n_samples, flg.begin() + (k + 1) * n_samples);
        std::vector<Complex> diff(n_samples);
        for (int i = 0; i < n_samples; ++i) diff[i] = a[i] - b[i];
        SymmetryPair pair;
        Complex mean_diff;
        double se_unused;
        complex_mean_stderr(a, pair.lf_g, se_unused);
        complex_mean_stderr(b, pair.f_lg, se_unused);
        complex_mean_stderr(diff, mean_diff, pair.std_error);
        pair.pass = std::abs(mean_diff) <= 3.0 * pair.std_error + 1e-15;
        rep.pass = rep.pass && pair.pass;
        rep.pairs.push_back(pair);
    }

    RunningStat dstat, fstat, ustat;
    for (int i = 0; i < n_samples; ++i) {
        dstat.add(utf2[i] - f2[i]);
        fstat.add(f2[i]);
        ustat.add(utf2[i]);
    }
    rep.norm_f2 = fstat.mean();
    rep.norm_utf2 = ustat.mean();
    rep.unitarity_std_error = dstat.stderr_mean();
    rep.unitarity_pass = std::fabs(dstat.mean()) <= 3.0 * dstat.stderr_mean() + 1e-15;
    rep.pass = rep.pass && rep.unitarity_pass;
    return rep;
}

// ---------------- Gibbs invariance ----------------

GibbsInvarianceReport gibbs_invariance_test(const MeasureSpec& spec, double t, double epsilon,
                                            int n_samples, std::uint64_t seed,
                                            unsigned threads) {
    spec.validate();
    if (spec.kind != MeasureSpec::Kind::Gibbs)
        throw config_error("the invariance test needs a gibbs spec");
    if (n_samples < 1000)
        throw config_error("statistical tests need n_samples >= 1000 (asymptotic critical values)");

    GibbsSampler chain(spec, seed, 0);
    std::vector<VortexState> states;
    states.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) states.push_back(chain.next());

    std::vector<double> h_before(n_samples), h_after(n_samples);
    parallel_for(
        static_cast<std::size_t>(n_samples),
        [&](std::size_t i) {
            h_before[i] = hamiltonian(states[i]);
            FlowOptions opts;
            opts.epsilon = epsilon;
            h_after[i] = hamiltonian(integrate(states[i], t, opts).final_state());
        },
        threads);

    GibbsInvarianceReport rep;
    rep.n_samples = n_samples;
    rep.acceptance = chain.acceptance();
    rep.warnings = chain.warnings();
    rep.ks_stat = ks_statistic_two_sample(h_before, h_after);
    const double n = static_cast<double>(n_samples);
    rep.ks_critical = ks_critical_1pct * std::sqrt(2.0 / n);
    rep.pass = ks_pass_two_sample(rep.ks_stat, n_samples, n_samples);
    return rep;
}

// ---------------- random observables ----------------

CylinderObservable random_cylinder_observable(RngStream& rng, const RandomObsOptions& opts) {
    if (opts.n_inner < 1) throw config_error("random observable needs at least one coupling");
    CylinderObservable obs;
    for (int k = 0; k < opts.n_inner; ++k) {
        std::vector<TestFunction::TrigTerm> terms;
        for (int tcount = 0; tcount < opts.terms_per_function; ++tcount) {
            int k1 = 0, k2 = 0;
            while (k1 == 0 && k2 == 0) {
                k1 = static_cast<int>(rng.uniform_index(2 * opts.max_frequency + 1)) -
                     opts.max_frequency;
                k2 = static_cast<int>(rng.uniform_index(2 * opts.max_frequency + 1)) -
                     opts.max_frequency;
            }
            terms.push_back({k1, k2, Complex{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}});
        }
        obs.inner.push_back(TestFunction::trig(std::move(terms)));
    }

    const int last = opts.n_inner - 1;
    const Outer z0 = Outer::var(0);
    const Outer zl = Outer::var(last);
    const Outer s1 = Outer::constant({rng.uniform(0.05, 0.25), 0.0});
    const Outer s2 = Outer::constant({rng.uniform(0.05, 0.25), 0.0});
    const Outer c1 = Outer::constant({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    const Outer c2 = Outer::constant({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    // every additive piece carries a bump factor, so the outer function is
    // compactly supported in the couplings
    switch (rng.uniform_index(3)) {
        case 0:
            obs.outer = Outer::prod({Outer::bump(Outer::prod({s1, z0})), Outer::sum({zl, c1})});
            break;
        case 1:
            obs.outer =
                Outer::prod({Outer::bump(Outer::prod({s1, Outer::sum({z0, Outer::conjugate(zl)})})),
                             c1});
            break;
        default:
            obs.outer = Outer::sum(
                {Outer::prod({Outer::bump(Outer::prod({s1, z0})), Outer::conjugate(zl)}),
                 Outer::prod({Outer::bump(Outer::prod({s2, zl})), c2})});
            break;
    }
    obs.cutoff_delta = opts.delta;
    obs.cutoff_order = opts.cutoff_order;
    return obs;
}

}  // namespace vortexlab
