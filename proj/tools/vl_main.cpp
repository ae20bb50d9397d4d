#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vortexlab/errors.hpp"
#include "vortexlab/run_config.hpp"

namespace {

struct FlagValues {
    vortexlab::RunConfig v;  // scratch storage for flag values
    std::string config_path;
    std::uint64_t seed = 0;
};

void add_options(CLI::App* sub, FlagValues& f) {
    sub->add_option("--config", f.config_path, "JSON config file (flags override it)");
    sub->add_option("--geometry", f.v.geometry_id, "torus | sphere | disk | plane");
    sub->add_option("--n", f.v.n_vortices, "number of vortices");
    sub->add_option("--xi", f.v.intensities, "vortex intensities")->delimiter(',');
    sub->add_option("--measure", f.v.measure, "uniform | gibbs | gaussian-plane | poisson");
    sub->add_option("--beta", f.v.beta, "inverse temperature for the gibbs measure");
    sub->add_option("--alpha", f.v.alpha, "angular-impulse weight of the plane gaussian");
    sub->add_option("--eta", f.v.eta, "momentum weight (two components)")->delimiter(',');
    sub->add_option("--lambda", f.v.lambda, "poisson mean number of vortices");
    sub->add_option("--nu-kind", f.v.nu_kind, "two-point | uniform | gaussian");
    sub->add_option("--nu-a", f.v.nu_a, "first intensity-law parameter");
    sub->add_option("--nu-b", f.v.nu_b, "second intensity-law parameter");
    sub->add_option("--nu-p", f.v.nu_p, "two-point law weight of nu_a");
    sub->add_option("--t", f.v.t, "time horizon");
    sub->add_option("--epsilon", f.v.epsilon, "regularization radius (0 = none)");
    sub->add_option("--delta", f.v.delta, "observable cutoff scale");
    sub->add_option("--cutoff-order", f.v.cutoff_order, "-1 = smooth cutoff, m >= 1 polynomial");
    sub->add_option("--rel-tol", f.v.rel_tol, "integrator relative tolerance");
    sub->add_option("--abs-tol", f.v.abs_tol, "integrator absolute tolerance");
    sub->add_option("--c-grid", f.v.c_grid, "collision thresholds, decreasing")->delimiter(',');
    sub->add_option("--epsilon-grid", f.v.epsilon_grid, "regularization radii, decreasing")
        ->delimiter(',');
    sub->add_option("--n-samples", f.v.n_samples, "Monte Carlo sample count");
    sub->add_option("--n-pairs", f.v.n_pairs, "observable pairs for the symmetry check");
    sub->add_flag("--use-arrested", f.v.use_arrested, "use the arrested flow map");
    sub->add_option("--positions", f.v.positions, "initial coordinates, flattened")
        ->delimiter(',');
    sub->add_flag("--track-variational", f.v.track_variational, "carry the flow Jacobian");
    sub->add_option("--seed", f.seed, "RNG seed (required for randomized subcommands)");
    sub->add_option("--threads", f.v.threads, "worker threads (0 = hardware default)");
    sub->add_option("--out", f.v.out_dir, "output directory");
}

vortexlab::RunConfig merge(const CLI::App* sub, const FlagValues& f) {
    vortexlab::RunConfig cfg;
    if (sub->count("--config")) cfg = vortexlab::RunConfig::from_json_file(f.config_path);
    cfg.subcommand = sub->get_name();
    if (sub->count("--geometry")) cfg.geometry_id = f.v.geometry_id;
    if (sub->count("--n")) cfg.n_vortices = f.v.n_vortices;
    if (sub->count("--xi")) cfg.intensities = f.v.intensities;
    if (sub->count("--measure")) cfg.measure = f.v.measure;
    if (sub->count("--beta")) cfg.beta = f.v.beta;
    if (sub->count("--alpha")) cfg.alpha = f.v.alpha;
    if (sub->count("--eta")) {
        if (f.v.eta.size() != 2) throw vortexlab::config_error("eta: need two components");
        cfg.eta = f.v.eta;
    }
    if (sub->count("--lambda")) cfg.lambda = f.v.lambda;
    if (sub->count("--nu-kind")) cfg.nu_kind = f.v.nu_kind;
    if (sub->count("--nu-a")) cfg.nu_a = f.v.nu_a;
    if (sub->count("--nu-b")) cfg.nu_b = f.v.nu_b;
    if (sub->count("--nu-p")) cfg.nu_p = f.v.nu_p;
    if (sub->count("--t")) cfg.t = f.v.t;
    if (sub->count("--epsilon")) cfg.epsilon = f.v.epsilon;
    if (sub->count("--delta")) cfg.delta = f.v.delta;
    if (sub->count("--cutoff-order")) cfg.cutoff_order = f.v.cutoff_order;
    if (sub->count("--rel-tol")) cfg.rel_tol = f.v.rel_tol;
    if (sub->count("--abs-tol")) cfg.abs_tol = f.v.abs_tol;
    if (sub->count("--c-grid")) cfg.c_grid = f.v.c_grid;
    if (sub->count("--epsilon-grid")) cfg.epsilon_grid = f.v.epsilon_grid;
    if (sub->count("--n-samples")) cfg.n_samples = f.v.n_samples;
    if (sub->count("--n-pairs")) cfg.n_pairs = f.v.n_pairs;
    if (sub->count("--use-arrested")) cfg.use_arrested = f.v.use_arrested;
    if (sub->count("--positions")) cfg.positions = f.v.positions;
    if (sub->count("--track-variational")) cfg.track_variational = f.v.track_variational;
    if (sub->count("--seed")) cfg.seed = f.seed;
    if (sub->count("--threads")) cfg.threads = f.v.threads;
    if (sub->count("--out")) cfg.out_dir = f.v.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vortexlab: point-vortex flows, Koopman checks, and ensemble experiments"};
    app.require_subcommand(1);
    FlagValues flags;

    const std::pair<const char*, const char*> subs[] = {
        {"kernels-selftest", "deterministic checks of the geometry kernels"},
        {"simulate", "integrate one vortex configuration and write the trajectory"},
        {"collision-tail", "estimate P(min pair distance < c) over a random ensemble"},
        {"measure-preservation", "KS tests of marginal invariance under the flow"},
        {"koopman-check", "generator antisymmetry and Koopman unitarity by Monte Carlo"},
        {"variance-identity", "compare an ensemble variance against its closed form"},
        {"vepsilon-convergence", "L2 distance of the arrested Koopman family to the limit"},
        {"gibbs-sample", "draw configurations from a Gibbs ensemble"}};
    for (const auto& [name, desc] : subs) add_options(app.add_subcommand(name, desc), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        return vortexlab::run(merge(app.get_subcommands().front(), flags));
    } catch (const vortexlab::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
