#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "vortexlab/dynamics.hpp"
#include "vortexlab/observables.hpp"
#include "vortexlab/rng.hpp"
#include "vortexlab/state.hpp"

namespace vortexlab {

// Intensity laws with closed-form second moments, for Poissonized ensembles
// and the variance identity.
struct IntensityDist {
    enum class Kind { TwoPoint, Uniform, Gaussian };
    Kind kind = Kind::TwoPoint;
    // TwoPoint: values a/b with P(a) = p; Uniform: on [a, b]; Gaussian: mean a, stddev b.
    double a = 1.0;
    double b = -1.0;
    double p = 0.5;

    static IntensityDist two_point(double a, double b, double p = 0.5);
    static IntensityDist uniform_on(double lo, double hi);
    static IntensityDist gaussian(double mean, double sigma);

    void validate() const;
    double second_moment() const;
    double sample(RngStream& rng) const;
};

struct MeasureSpec {
    enum class Kind { Uniform, Gibbs, GaussianPlane, PoissonConfig };
    Kind kind = Kind::Uniform;
    Geometry geometry = Geometry::torus();
    std::vector<double> intensities;  // fixed-intensity kinds; one entry per vortex
    double beta = 0.0;                // Gibbs: density proportional to exp(-beta H)
    double alpha = 1.0;               // GaussianPlane: exp(-eta.M - alpha I)
    Vec2 eta{0.0, 0.0};
    double lambda = 1.0;              // PoissonConfig: N ~ Poisson(lambda)
    IntensityDist nu;                 // PoissonConfig: i.i.d. intensity law

    static MeasureSpec uniform(Geometry g, std::vector<double> xi);
    static MeasureSpec gibbs(Geometry g, std::vector<double> xi, double beta);
    static MeasureSpec gaussian_plane(std::vector<double> xi, double alpha, Vec2 eta);
    static MeasureSpec poisson_config(Geometry g, double lambda, IntensityDist nu);

    int n_vortices() const { return static_cast<int>(intensities.size()); }
    void validate() const;
};

// Single-site Metropolis chain targeting exp(-beta H) dx^N. Proposals are
// uniform in a geodesic disk (spherical cap on the sphere) whose radius
// adapts toward 30% acceptance during the first half of burn-in and is
// frozen afterwards. next() advances `thinning_sweeps` full sweeps.
class GibbsSampler {
public:
    static constexpr int burn_in_sweeps = 10000;
    static constexpr int thinning_sweeps = 10;

    GibbsSampler(MeasureSpec spec, std::uint64_t seed, std::uint64_t stream = 0);

    const VortexState& next();
    const VortexState& current() const { return state_; }
    double acceptance() const;       // post-burn-in acceptance fraction
    double proposal_radius() const { return radius_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    void sweep(bool adapting);
    double site_energy(int i, Point p) const;

    MeasureSpec spec_;
    VortexState state_;
    RngStream rng_;
    double radius_ = 0.0;
    long window_proposals_ = 0, window_accepts_ = 0;
    long run_proposals_ = 0, run_accepts_ = 0;
    long sweeps_ = 0;
    bool acceptance_warned_ = false;
    std::vector<std::string> warnings_;
};

// One draw from the measure. Independent draws use distinct `index` values;
// the result is a pure function of (spec, seed, index). A Gibbs draw runs a
// full burn-in, so bulk Gibbs sampling should go through GibbsSampler or
// sample_ensemble instead.
VortexState sample(const MeasureSpec& spec, std::uint64_t seed, std::uint64_t index = 0);

std::vector<VortexState> sample_ensemble(const MeasureSpec& spec, int n_samples,
                                         std::uint64_t seed, unsigned threads = 1);

struct CollisionStats {
    std::vector<double> c_grid;  // decreasing thresholds
    std::vector<long> counts;    // per c: samples whose running minimum fell below c
    int n_samples = 0;
    double t_horizon = 0.0;
    double epsilon = 0.0;
    double fitted_a = 0.0;       // least squares counts/n ~ A / (-log c)
    double fit_residual = 0.0;   // rms residual of that fit
    long near_collapses = 0;     // unregularized runs that blew up (counted below every c)
};

CollisionStats collision_tail_experiment(const MeasureSpec& spec, double t, double epsilon,
                                         std::vector<double> c_grid, int n_samples,
                                         std::uint64_t seed, unsigned threads = 1);

struct MarginalTest {
    std::string name;
    double statistic = 0.0;
    bool pass = false;
};

struct PreservationReport {
    std::vector<MarginalTest> marginals;     // per-coordinate KS vs uniform
    std::vector<MarginalTest> correlations;  // cos/sin cross-correlation proxies
    double max_ks = 0.0;
    double ks_critical = 0.0;   // scaled 1% threshold for the KS statistics
    double corr_bound = 0.0;    // 4/sqrt(n) bound on |rho|
    int n_samples = 0;
    long near_collapses = 0;
    bool pass = false;
};

// Pushes uniform torus samples through the time-t flow (arrested variant if
// use_arrested) and tests every scalar coordinate marginal for uniformity
// plus pairwise independence proxies.
PreservationReport measure_preservation_test(const MeasureSpec& spec, double t, double epsilon,
                                             int n_samples, std::uint64_t seed,
                                             bool use_arrested, unsigned threads = 1);

struct McEstimate {
    Complex estimate{};
    double std_error = 0.0;
    int n_samples = 0;
};

// Monte Carlo estimate of <f, g> = E[conj(f) g] under a Uniform spec.
McEstimate inner_product_mc(const CylinderObservable& f, const CylinderObservable& g,
                            const MeasureSpec& spec, int n_samples, std::uint64_t seed,
                            unsigned threads = 1);

// Squared L2 norm of the symmetrized pair kernel of phi on the torus with
// respect to the normalized product measure, by per-mode tensor-grid
// quadrature with Richardson extrapolation (512^2 against 256^2). If
// rel_error is non-null it receives the extrapolation error estimate.
double hphi_norm_squared(const Geometry& torus, const TestFunction& phi,
                         double* rel_error = nullptr);

struct VarianceIdentityResult {
    double mc = 0.0;           // MC mean of |sum_{i != j} xi_i xi_j H_phi(x_i, x_j)|^2
    double closed_form = 0.0;  // 2 N (N-1) m2^2 ||H_phi||^2
    double sigma = 0.0;        // standard error of the MC mean
    double hphi_norm2 = 0.0;
    double quad_rel_error = 0.0;
    int n_samples = 0;
};

VarianceIdentityResult variance_identity_check(int n_vortices, const IntensityDist& nu,
                                               const TestFunction& phi, int n_samples,
                                               std::uint64_t seed, unsigned threads = 1);

struct VepsilonRow {
    double epsilon = 0.0;
    double l2_sq = 0.0;     // MC estimate of ||U_t f - V^eps_t f||^2
    double std_error = 0.0;
    long arrested = 0;      // samples arrested at this epsilon
};

struct VepsilonReport {
    std::vector<VepsilonRow> rows;     // same order as the input grid
    double fitted_slope = 0.0;         // l2_sq ~ slope / (-log eps), through the origin
    long reference_substitutions = 0;  // blown-up references replaced by the smallest-eps flow
    bool monotone = true;              // l2_sq nonincreasing as eps decreases
    int n_samples = 0;
};

VepsilonReport vepsilon_convergence_experiment(const MeasureSpec& spec,
                                               const CylinderObservable& obs, double t,
                                               std::vector<double> epsilon_grid, int n_samples,
                                               std::uint64_t seed, unsigned threads = 1);

struct SymmetryPair {
    Complex lf_g{};          // <Lf, g>
    Complex f_lg{};          // <f, Lg>
    double std_error = 0.0;  // standard error of the per-sample difference
    bool pass = false;
};

struct KoopmanReport {
    std::vector<SymmetryPair> pairs;
    double norm_f2 = 0.0;     // MC of |f|^2
    double norm_utf2 = 0.0;   // MC of |f . flow_t|^2
    double unitarity_std_error = 0.0;
    bool unitarity_pass = false;
    long collapse_substitutions = 0;
    int n_samples = 0;
    bool pass = false;
};

// Generator symmetry (<Lf,g> vs <f,Lg> for n_pairs random observable pairs)
// and composition-operator unitarity at time t, both by Monte Carlo under a
// Uniform spec with paired-sample error estimates.
KoopmanReport koopman_check(const MeasureSpec& spec, double t, int n_pairs, int n_samples,
                            std::uint64_t seed, unsigned threads = 1);

struct GibbsInvarianceReport {
    double ks_stat = 0.0;
    double ks_critical = 0.0;
    double acceptance = 0.0;
    int n_samples = 0;
    bool pass = false;
    std::vector<std::string> warnings;
};

// Two-sample KS between the interaction-energy histogram of a Gibbs ensemble
// and that of the same ensemble pushed through the time-t regularized flow.
GibbsInvarianceReport gibbs_invariance_test(const MeasureSpec& spec, double t, double epsilon,
                                            int n_samples, std::uint64_t seed,
                                            unsigned threads = 1);

struct RandomObsOptions {
    int n_inner = 2;            // number of couplings
    int max_frequency = 2;      // max |k| component of the trig test functions
    int terms_per_function = 2;
    double delta = 0.3;         // diagonal cutoff width
    int cutoff_order = -1;      // C-infinity step
};

// Deterministic random observable in the smooth bounded class: trig test
// functions with a compactly supported outer composition.
CylinderObservable random_cylinder_observable(RngStream& rng, const RandomObsOptions& opts = {});

}  // namespace vortexlab
