#pragma once

#include "heg/mpnn.hpp"
#include "heg/orbitals.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace heg {

struct SystemConfig {
    int particles = 0;           // required
    double polarization = -1.0;  // required, (n_up - n_down) / N
    double rs = 0.0;             // required
    OrbitalKind orbitals = OrbitalKind::PlaneWave;
    IVec3 k_total{0, 0, 0};
    bool interaction = true;
    std::optional<double> gaussian_alpha;  // default 2 m^2 / L^2
    int image_cutoff = 1;
    double ewald_tolerance = 1e-10;

    int n_up() const;
    int n_down() const { return particles - n_up(); }
};

struct NetworkConfig {
    NetworkShape shape;
    double output_scale = 1e-2;
    std::uint64_t seed = 1;
};

struct SamplerConfig {
    int walkers = 1024;
    int burn_in = 200;
    int sweeps_per_sample = 1;
    std::optional<double> step_size;  // default 0.2 x mean spacing
    double target_acceptance = 0.5;
    bool all_particle = false;
};

struct OptimizerConfig {
    int steps = 2000;
    std::optional<double> learning_rate;  // default from the r_s table
    double diag_shift = 1e-4;
    double cg_tolerance = 1e-6;
    int cg_max_iterations = 1000;
    double max_update_norm = 0.3;  // Euclidean cap on the SR step; 0 disables
    int checkpoint_every = 50;
};

struct ObservablesConfig {
    int sweeps = 200;
    int g2_bins = 100;
    int sk_n2_max = 12;
    bool sk_raw = false;
};

struct DmcConfig {
    int walkers = 1000;
    std::optional<double> time_step;  // default 0.01 r_s^2
    int equilibration = 500;
    int steps = 2000;
    int jastrow_terms = 6;
    int jastrow_iterations = 50;
    int jastrow_walkers = 256;
    int jastrow_sweeps = 10;
    double jastrow_learning_rate = 0.05;
    int vmc_sweeps = 200;
};

struct ExperimentConfig {
    SystemConfig system;
    NetworkConfig network;
    SamplerConfig sampler;
    OptimizerConfig optimizer;
    ObservablesConfig observables;
    std::optional<DmcConfig> dmc;
    std::string output = "output";
    std::uint64_t seed = 1;
    int threads = 1;

    /// Learning rate in effect (explicit override or table lookup).
    double learning_rate() const;
    /// Non-fatal remarks produced while resolving defaults (e.g. r_s not in the eta table).
    std::vector<std::string> warnings;
};

/// Parses YAML text, applies defaults and environment overrides (HEG_<SECTION>_<KEY>,
/// e.g. HEG_SYSTEM_RS, HEG_SEED), then validates. Every problem found is reported
/// in one ConfigError with line references.
ExperimentConfig parse_config(const std::string& text, const std::map<std::string, std::string>& env = {});
ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& env = {});

/// Environment variables carrying the override prefix.
std::map<std::string, std::string> override_environment();

/// Fully resolved configuration as YAML.
std::string dump_config(const ExperimentConfig& config);

/// Stable 64-bit hash of everything that affects the physics (not output paths or thread counts).
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace heg
