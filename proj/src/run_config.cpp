#include "vortexlab/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vortexlab/errors.hpp"
#include "vortexlab/stats.hpp"

namespace vortexlab {

namespace {

using json = nlohmann::json;

const std::set<std::string> kSubcommands = {
    "kernels-selftest",   "simulate",          "collision-tail",      "measure-preservation",
    "koopman-check",      "variance-identity", "vepsilon-convergence", "gibbs-sample"};

const std::set<std::string> kRandomized = {"collision-tail",      "measure-preservation",
                                           "koopman-check",       "variance-identity",
                                           "vepsilon-convergence", "gibbs-sample"};

const std::set<std::string> kMeasures = {"uniform", "gibbs", "gaussian-plane", "poisson"};
const std::set<std::string> kNuKinds = {"two-point", "uniform", "gaussian"};

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
            if (j.at(key).is_null()) {
                out = std::nullopt;
            } else {
                out = j.at(key).template get<std::uint64_t>();
            }
        } else {
            out = j.at(key).template get<T>();
        }
    } catch (const json::exception&) {
        throw config_error(std::string(key) + ": malformed value");
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config must be a JSON object");

    static const std::set<std::string> kKnown = {
        "subcommand", "geometry",   "n",           "xi",          "measure",
        "beta",       "alpha",      "eta",         "lambda",      "nu_kind",
        "nu_a",       "nu_b",       "nu_p",        "t",           "epsilon",
        "delta",      "cutoff_order", "rel_tol",   "abs_tol",     "c_grid",
        "epsilon_grid", "n_samples", "n_pairs",    "use_arrested", "positions",
        "track_variational", "seed", "threads",    "out"};
    for (const auto& item : j.items())
        if (!kKnown.count(item.key()))
            throw config_error("unknown config field: " + item.key());

    RunConfig c;
    read_field(j, "subcommand", c.subcommand);
    read_field(j, "geometry", c.geometry_id);
    read_field(j, "n", c.n_vortices);
    read_field(j, "xi", c.intensities);
    read_field(j, "measure", c.measure);
    read_field(j, "beta", c.beta);
    read_field(j, "alpha", c.alpha);
    read_field(j, "eta", c.eta);
    read_field(j, "lambda", c.lambda);
    read_field(j, "nu_kind", c.nu_kind);
    read_field(j, "nu_a", c.nu_a);
    read_field(j, "nu_b", c.nu_b);
    read_field(j, "nu_p", c.nu_p);
    read_field(j, "t", c.t);
    read_field(j, "epsilon", c.epsilon);
    read_field(j, "delta", c.delta);
    read_field(j, "cutoff_order", c.cutoff_order);
    read_field(j, "rel_tol", c.rel_tol);
    read_field(j, "abs_tol", c.abs_tol);
    read_field(j, "c_grid", c.c_grid);
    read_field(j, "epsilon_grid", c.epsilon_grid);
    read_field(j, "n_samples", c.n_samples);
    read_field(j, "n_pairs", c.n_pairs);
    read_field(j, "use_arrested", c.use_arrested);
    read_field(j, "positions", c.positions);
    read_field(j, "track_variational", c.track_variational);
    read_field(j, "seed", c.seed);
    read_field(j, "threads", c.threads);
    read_field(j, "out", c.out_dir);
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_json_text(os.str());
}

std::string RunConfig::to_json_text() const {
    json j;
    j["subcommand"] = subcommand;
    j["geometry"] = geometry_id;
    j["n"] = n_vortices;
    j["xi"] = intensities;
    j["measure"] = measure;
    j["beta"] = beta;
    j["alpha"] = alpha;
    j["eta"] = eta;
    j["lambda"] = lambda;
    j["nu_kind"] = nu_kind;
    j["nu_a"] = nu_a;
    j["nu_b"] = nu_b;
    j["nu_p"] = nu_p;
    j["t"] = t;
    j["epsilon"] = epsilon;
    j["delta"] = delta;
    j["cutoff_order"] = cutoff_order;
    j["rel_tol"] = rel_tol;
    j["abs_tol"] = abs_tol;
    j["c_grid"] = c_grid;
    j["epsilon_grid"] = epsilon_grid;
    j["n_samples"] = n_samples;
    j["n_pairs"] = n_pairs;
    j["use_arrested"] = use_arrested;
    j["positions"] = positions;
    j["track_variational"] = track_variational;
    if (seed) {
        j["seed"] = *seed;
    } else {
        j["seed"] = nullptr;
    }
    j["threads"] = threads;
    j["out"] = out_dir;
    return j.dump(2) + "\n";
}

void RunConfig::validate() const {
    if (!kSubcommands.count(subcommand))
        throw config_error("subcommand: unknown value '" + subcommand + "'");
    try {
        surface_from_id(geometry_id);
    } catch (const std::exception&) {
        throw config_error("geometry: unknown value '" + geometry_id + "'");
    }
    if (!kMeasures.count(measure))
        throw config_error("measure: unknown value '" + measure + "'");
    if (!kNuKinds.count(nu_kind))
        throw config_error("nu_kind: unknown value '" + nu_kind + "'");
    if (n_vortices < 0) throw config_error("n: must be nonnegative");
    if (kRandomized.count(subcommand) && !seed)
        throw config_error("seed: randomized subcommands require an explicit seed");

    const bool fixed_xi = measure != "poisson";
    const bool needs_state = subcommand == "simulate";
    // variance-identity draws intensities from nu, not from the xi list
    const bool needs_measure = subcommand != "simulate" && subcommand != "kernels-selftest" &&
                               subcommand != "variance-identity";
    if ((needs_state || (needs_measure && fixed_xi)) &&
        static_cast<int>(intensities.size()) != n_vortices)
        throw config_error("xi: length " + std::to_string(intensities.size()) +
                           " does not match n = " + std::to_string(n_vortices));
    if (needs_state) {
        const int dim = make_geometry().dim();
        if (static_cast<int>(positions.size()) != dim * n_vortices)
            throw config_error("positions: need " + std::to_string(dim * n_vortices) +
                               " coordinates for n = " + std::to_string(n_vortices));
    }
    if (subcommand != "simulate" && subcommand != "kernels-selftest" && n_samples < 1)
        throw config_error("n_samples: must be positive");
    if (subcommand == "collision-tail" && c_grid.empty())
        throw config_error("c_grid: collision-tail needs thresholds");
    if (subcommand == "vepsilon-convergence" && epsilon_grid.empty())
        throw config_error("epsilon_grid: vepsilon-convergence needs an epsilon grid");
}

Geometry RunConfig::make_geometry() const { return Geometry::from_id(geometry_id); }

MeasureSpec RunConfig::measure_spec() const {
    Geometry g = make_geometry();
    if (measure == "uniform") return MeasureSpec::uniform(std::move(g), intensities);
    if (measure == "gibbs") return MeasureSpec::gibbs(std::move(g), intensities, beta);
    if (measure == "gaussian-plane")
        return MeasureSpec::gaussian_plane(intensities, alpha, {eta[0], eta[1]});
    IntensityDist nu;
    if (nu_kind == "two-point") nu = IntensityDist::two_point(nu_a, nu_b, nu_p);
    if (nu_kind == "uniform") nu = IntensityDist::uniform_on(nu_a, nu_b);
    if (nu_kind == "gaussian") nu = IntensityDist::gaussian(nu_a, nu_b);
    return MeasureSpec::poisson_config(std::move(g), lambda, nu);
}

VortexState RunConfig::initial_state() const {
    Geometry g = make_geometry();
    const int dim = g.dim();
    VortexState st{g, {}, intensities};
    for (int i = 0; i < n_vortices; ++i) {
        if (dim == 2) {
            st.positions.push_back(pnt(positions[2 * i], positions[2 * i + 1]));
        } else {
            st.positions.push_back(
                Point{positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]});
        }
    }
    st.validate();
    return st;
}

// ---------------- run ----------------

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw config_error("cannot write output file: " + (dir / name).string());
    return f;
}

void write_manifest(const RunConfig& cfg, const fs::path& dir) {
    std::ofstream f = open_out(dir, "manifest.json");
    f << cfg.to_json_text();
}

int run_selftest(const RunConfig&, const fs::path& dir) {
    std::ofstream rep = open_out(dir, "selftest.txt");
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        rep << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };

    constexpr double inv_two_pi = 1.0 / (2.0 * std::numbers::pi);
    {
        Geometry plane = Geometry::plane();
        const Vec2 k = plane.kernel(pnt(1.0, 0.0), pnt(0.0, 0.0));
        check("plane unit-separation kernel is (0, 1/(2 pi))",
              k.x == 0.0 && std::fabs(k.y - inv_two_pi) < 1e-16);
    }

    const Geometry geoms[] = {Geometry::torus(), Geometry::sphere(), Geometry::unit_disk(),
                              Geometry::plane()};
    const char* names[] = {"torus", "sphere", "disk", "plane"};
    for (int gi = 0; gi < 4; ++gi) {
        const Geometry& g = geoms[gi];
        RngStream rng(0xC0FFEEull, gi);
        auto draw = [&]() {
            if (g.kind() == Surface::Plane) return pnt(rng.uniform(-2, 2), rng.uniform(-2, 2));
            return g.sample_uniform(rng);
        };
        bool dist_sym = true, green_sym = true, ortho = true, tail_match = true;
        for (int s = 0; s < 200; ++s) {
            const Point x = draw(), y = draw();
            const double d = g.distance(x, y);
            if (d < 1e-6) continue;
            dist_sym = dist_sym && d == g.distance(y, x);
            green_sym = green_sym && std::fabs(g.green(x, y) - g.green(y, x)) <
                                         1e-9 * (1.0 + std::fabs(g.green(x, y)));
            const Vec2 gr = g.green_gradient(x, y);
            const Vec2 k = g.kernel(x, y);
            ortho = ortho && gr.x * k.x + gr.y * k.y == 0.0;
            for (double eps : {0.1, 0.01}) {
                const Vec2 gre = g.regularized_gradient(eps, x, y);
                const Vec2 ke = g.regularized_kernel(eps, x, y);
                ortho = ortho && gre.x * ke.x + gre.y * ke.y == 0.0;
                if (d >= eps)
                    tail_match = tail_match && gre.x == gr.x && gre.y == gr.y &&
                                 ke.x == k.x && ke.y == k.y;
            }
        }
        const std::string tag = names[gi];
        check(tag + ": distance is symmetric", dist_sym);
        check(tag + ": green function is symmetric", green_sym);
        check(tag + ": gradient is orthogonal to the velocity kernel (exact)", ortho);
        check(tag + ": regularization is inactive beyond its radius (bitwise)", tail_match);
    }
    rep << (failures ? "FAILURES: " + std::to_string(failures) : std::string("all passed"))
        << "\n";
    std::printf("kernels-selftest: %s -> %s\n", failures ? "FAIL" : "ok",
                (dir / "selftest.txt").c_str());
    return failures ? 2 : 0;
}

int run_simulate(const RunConfig& cfg, const fs::path& dir) {
    VortexState st = cfg.initial_state();
    FlowOptions opts;
    opts.epsilon = cfg.epsilon;
    opts.rel_tol = cfg.rel_tol;
    opts.abs_tol = cfg.abs_tol;
    opts.track_variational = cfg.track_variational;

    bool arrested = false;
    Trajectory traj = [&] {
        if (cfg.use_arrested) {
            ArrestedResult r = arrested_flow(st, cfg.t, cfg.epsilon, opts);
            arrested = r.arrested;
            return std::move(r.trajectory);
        }
        return integrate(st, cfg.t, opts);
    }();

    std::ofstream csv = open_out(dir, "trajectory.csv");
    const int dim = st.geometry.dim();
    csv << "t";
    for (int i = 0; i < st.n(); ++i)
        for (int dcoord = 0; dcoord < dim; ++dcoord)
            csv << ",x_" << (i + 1) << "_" << (dcoord + 1);
    csv << ",min_dist,H,jac_det\n";
    for (const auto& node : traj.nodes()) {
        VortexState at{st.geometry, node.positions, st.intensities};
        csv << format_double(node.t);
        for (const Point& p : node.positions) {
            csv << "," << format_double(p.x) << "," << format_double(p.y);
            if (dim == 3) csv << "," << format_double(p.z);
        }
        csv << "," << format_double(at.min_pair_distance());
        csv << "," << format_double(hamiltonian(at, cfg.epsilon));
        csv << "," << format_double(node.jac_det);
        csv << "\n";
    }

    const char* status = "complete";
    switch (traj.status()) {
        case FlowStatus::Complete: status = "complete"; break;
        case FlowStatus::Event: status = "event"; break;
        case FlowStatus::NearCollapse: status = "near-collapse"; break;
        case FlowStatus::StepLimit: status = "step-limit"; break;
    }
    const double h0 = hamiltonian(st, cfg.epsilon);
    const double h1 = hamiltonian(traj.final_state(), cfg.epsilon);
    std::printf("simulate: status=%s%s t_end=%g nodes=%zu min_dist=%.3g dH=%.3g -> %s\n",
                status, cfg.use_arrested ? (arrested ? " arrested" : " through") : "",
                traj.t_end(), traj.nodes().size(), traj.running_min_distance(),
                std::fabs(h1 - h0) / (1.0 + std::fabs(h0)),
                (dir / "trajectory.csv").c_str());
    return 0;
}

int run_collision_tail(const RunConfig& cfg, const fs::path& dir) {
    CollisionStats stats = collision_tail_experiment(cfg.measure_spec(), cfg.t, cfg.epsilon,
                                                     cfg.c_grid, cfg.n_samples, *cfg.seed,
                                                     cfg.threads);
    std::ofstream csv = open_out(dir, "collision_tail.csv");
    csv << "c,count,frequency,neg_log_c_times_frequency\n";
    for (std::size_t i = 0; i < stats.c_grid.size(); ++i) {
        const double fr = double(stats.counts[i]) / stats.n_samples;
        csv << format_double(stats.c_grid[i]) << "," << stats.counts[i] << ","
            << format_double(fr) << "," << format_double(-std::log(stats.c_grid[i]) * fr)
            << "\n";
    }
    std::printf(
        "collision-tail: n=%d t=%g eps=%g fitted_A=%.4g residual=%.3g near_collapses=%ld -> "
        "%s\n",
        stats.n_samples, stats.t_horizon, stats.epsilon, stats.fitted_a, stats.fit_residual,
        stats.near_collapses, (dir / "collision_tail.csv").c_str());
    return 0;
}

int run_preservation(const RunConfig& cfg, const fs::path& dir) {
    PreservationReport rep =
        measure_preservation_test(cfg.measure_spec(), cfg.t, cfg.epsilon, cfg.n_samples,
                                  *cfg.seed, cfg.use_arrested, cfg.threads);
    std::ofstream csv = open_out(dir, "marginals.csv");
    csv << "name,ks,critical,pass\n";
    for (const auto& m : rep.marginals)
        csv << m.name << "," << format_double(m.statistic) << ","
            << format_double(rep.ks_critical) << "," << (m.pass ? 1 : 0) << "\n";
    std::ofstream ccsv = open_out(dir, "correlations.csv");
    ccsv << "name,abs_rho,bound,pass\n";
    for (const auto& m : rep.correlations)
        ccsv << m.name << "," << format_double(m.statistic) << ","
             << format_double(rep.corr_bound) << "," << (m.pass ? 1 : 0) << "\n";
    std::printf(
        "measure-preservation: %s max_ks=%.4g crit=%.4g n=%d arrested_map=%d -> %s\n",
        rep.pass ? "pass" : "FAIL", rep.max_ks, rep.ks_critical, rep.n_samples,
        cfg.use_arrested ? 1 : 0, (dir / "marginals.csv").c_str());
    return rep.pass ? 0 : 2;
}

int run_koopman(const RunConfig& cfg, const fs::path& dir) {
    KoopmanReport rep = koopman_check(cfg.measure_spec(), cfg.t, cfg.n_pairs, cfg.n_samples,
                                      *cfg.seed, cfg.threads);
    std::ofstream csv = open_out(dir, "koopman.csv");
    csv << "row,re_lf_g,im_lf_g,re_f_lg,im_f_lg,std_error,pass\n";
    for (std::size_t k = 0; k < rep.pairs.size(); ++k) {
        const auto& p = rep.pairs[k];
        csv << "pair_" << k << "," << format_double(p.lf_g.real()) << ","
            << format_double(p.lf_g.imag()) << "," << format_double(p.f_lg.real()) << ","
            << format_double(p.f_lg.imag()) << "," << format_double(p.std_error) << ","
            << (p.pass ? 1 : 0) << "\n";
    }
    csv << "unitarity," << format_double(rep.norm_utf2) << ",0," << format_double(rep.norm_f2)
        << ",0," << format_double(rep.unitarity_std_error) << ","
        << (rep.unitarity_pass ? 1 : 0) << "\n";
    std::printf("koopman-check: %s pairs=%zu |U_t f|^2=%.6g |f|^2=%.6g substitutions=%ld -> %s\n",
                rep.pass ? "pass" : "FAIL", rep.pairs.size(), rep.norm_utf2, rep.norm_f2,
                rep.collapse_substitutions, (dir / "koopman.csv").c_str());
    return rep.pass ? 0 : 2;
}

int run_variance(const RunConfig& cfg, const fs::path& dir) {
    IntensityDist nu;
    if (cfg.nu_kind == "two-point") nu = IntensityDist::two_point(cfg.nu_a, cfg.nu_b, cfg.nu_p);
    if (cfg.nu_kind == "uniform") nu = IntensityDist::uniform_on(cfg.nu_a, cfg.nu_b);
    if (cfg.nu_kind == "gaussian") nu = IntensityDist::gaussian(cfg.nu_a, cfg.nu_b);
    // single-mode real test function cos(x + y) unless a config grows richer
    TestFunction phi = TestFunction::trig({{1, 1, {0.5, 0.0}}, {-1, -1, {0.5, 0.0}}});
    VarianceIdentityResult r =
        variance_identity_check(cfg.n_vortices, nu, phi, cfg.n_samples, *cfg.seed, cfg.threads);
    std::ofstream csv = open_out(dir, "variance.csv");
    csv << "mc,closed_form,sigma,hphi_norm2,quad_rel_error,n\n";
    csv << format_double(r.mc) << "," << format_double(r.closed_form) << ","
        << format_double(r.sigma) << "," << format_double(r.hphi_norm2) << ","
        << format_double(r.quad_rel_error) << "," << r.n_samples << "\n";
    const bool pass = std::fabs(r.mc - r.closed_form) <= 3.0 * r.sigma;
    std::printf("variance-identity: %s mc=%.6g closed=%.6g sigma=%.3g -> %s\n",
                pass ? "pass" : "FAIL", r.mc, r.closed_form, r.sigma,
                (dir / "variance.csv").c_str());
    return pass ? 0 : 2;
}

int run_vepsilon(const RunConfig& cfg, const fs::path& dir) {
    RngStream obs_rng(*cfg.seed, 0xA11CEull);
    RandomObsOptions oopts;
    oopts.delta = cfg.delta;
    oopts.cutoff_order = cfg.cutoff_order;
    CylinderObservable obs = random_cylinder_observable(obs_rng, oopts);
    VepsilonReport rep = vepsilon_convergence_experiment(
        cfg.measure_spec(), obs, cfg.t, cfg.epsilon_grid, cfg.n_samples, *cfg.seed, cfg.threads);
    std::ofstream csv = open_out(dir, "vepsilon.csv");
    csv << "epsilon,l2_sq,std_error,arrested\n";
    for (const auto& row : rep.rows)
        csv << format_double(row.epsilon) << "," << format_double(row.l2_sq) << ","
            << format_double(row.std_error) << "," << row.arrested << "\n";
    std::printf(
        "vepsilon-convergence: %s slope=%.4g substitutions=%ld n=%d -> %s\n",
        rep.monotone ? "monotone" : "NON-MONOTONE", rep.fitted_slope,
        rep.reference_substitutions, rep.n_samples, (dir / "vepsilon.csv").c_str());
    return rep.monotone ? 0 : 2;
}

int run_gibbs_sample(const RunConfig& cfg, const fs::path& dir) {
    MeasureSpec spec = cfg.measure_spec();
    if (spec.kind != MeasureSpec::Kind::Gibbs)
        throw config_error("measure: gibbs-sample needs measure = 'gibbs'");
    GibbsSampler chain(spec, *cfg.seed, 0);
    std::ofstream csv = open_out(dir, "samples.csv");
    const int dim = spec.geometry.dim();
    csv << "sample,vortex,x,y" << (dim == 3 ? ",z" : "") << ",xi,H\n";
    for (int s = 0; s < cfg.n_samples; ++s) {
        const VortexState& st = chain.next();
        const double h = hamiltonian(st);
        for (int v = 0; v < st.n(); ++v) {
            csv << s << "," << v << "," << format_double(st.positions[v].x) << ","
                << format_double(st.positions[v].y);
            if (dim == 3) csv << "," << format_double(st.positions[v].z);
            csv << "," << format_double(st.intensities[v]) << "," << format_double(h) << "\n";
        }
    }
    if (!chain.warnings().empty()) {
        std::ofstream w = open_out(dir, "warnings.txt");
        for (const auto& s : chain.warnings()) w << s << "\n";
    }
    std::printf("gibbs-sample: n=%d acceptance=%.3f radius=%.3g warnings=%zu -> %s\n",
                cfg.n_samples, chain.acceptance(), chain.proposal_radius(),
                chain.warnings().size(), (dir / "samples.csv").c_str());
    return 0;
}

}  // namespace

int run(const RunConfig& config) {
    config.validate();
    const fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory: " + dir.string());
    write_manifest(config, dir);

    if (config.subcommand == "kernels-selftest") return run_selftest(config, dir);
    if (config.subcommand == "simulate") return run_simulate(config, dir);
    if (config.subcommand == "collision-tail") return run_collision_tail(config, dir);
    if (config.subcommand == "measure-preservation") return run_preservation(config, dir);
    if (config.subcommand == "koopman-check") return run_koopman(config, dir);
    if (config.subcommand == "variance-identity") return run_variance(config, dir);
    if (config.subcommand == "vepsilon-convergence") return run_vepsilon(config, dir);
    if (config.subcommand == "gibbs-sample") return run_gibbs_sample(config, dir);
    throw config_error("subcommand: unknown value '" + config.subcommand + "'");
}

}  // namespace vortexlab
