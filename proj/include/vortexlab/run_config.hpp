#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vortexlab/ensemble.hpp"

namespace vortexlab {

// Persisted description of one CLI run. A config file (JSON) and flag
// overrides resolve into this struct; the resolved struct is echoed to the
// run manifest, and re-running a manifest reproduces the outputs bit for bit.
struct RunConfig {
    std::string subcommand;
    std::string geometry_id = "torus";
    int n_vortices = 0;
    std::vector<double> intensities;

    std::string measure = "uniform";  // uniform | gibbs | gaussian-plane | poisson
    double beta = 0.0;
    double alpha = 1.0;
    std::array<double, 2> eta{0.0, 0.0};
    double lambda = 1.0;
    std::string nu_kind = "two-point";  // two-point | uniform | gaussian
    double nu_a = 1.0;
    double nu_b = -1.0;
    double nu_p = 0.5;

    double t = 1.0;
    double epsilon = 0.0;
    double delta = 0.3;
    int cutoff_order = -1;
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    std::vector<double> c_grid;
    std::vector<double> epsilon_grid;
    int n_samples = 0;
    int n_pairs = 10;
    bool use_arrested = false;

    std::vector<double> positions;  // simulate: flattened initial positions
    bool track_variational = false;

    std::optional<std::uint64_t> seed;
    unsigned threads = 0;  // 0 = machine parallelism
    std::string out_dir = ".";

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_json_file(const std::string& path);
    std::string to_json_text() const;  // canonical manifest form

    void validate() const;  // config_error on any malformed field
    Geometry make_geometry() const;
    MeasureSpec measure_spec() const;
    VortexState initial_state() const;  // simulate only
};

// Executes the subcommand: writes manifest and data files into out_dir and
// prints a one-line summary. Returns 0 on success and 2 when a statistical
// check failed; configuration errors throw config_error (exit code 1).
int run(const RunConfig& config);

}  // namespace vortexlab
