#pragma once

#include "heg/checkpoint.hpp"
#include "heg/config.hpp"
#include "heg/ewald.hpp"
#include "heg/observables.hpp"
#include "heg/sampler.hpp"
#include "heg/sr.hpp"
#include "heg/wavefunction.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace heg {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3 };

SimulationCell make_cell(const SystemConfig& system);
OrbitalSet make_orbitals(const SystemConfig& system, const SimulationCell& cell);
Wavefunction make_wavefunction(const ExperimentConfig& config);
/// Ewald context, or null when the interaction is disabled.
std::unique_ptr<EwaldContext> make_ewald(const SystemConfig& system, const SimulationCell& cell);

/// Energy estimate and SR statistics of one optimization iteration.
struct VmcIteration {
    long iteration = 0;
    double energy = 0.0;  ///< per particle
    double error = 0.0;   ///< per particle
    double energy_imag = 0.0;
    double variance = 0.0;  ///< of Re E_loc per particle
    double acceptance = 0.0;
    double force_norm = 0.0;
    int cg_iterations = 0;
    std::optional<double> alpha;  ///< Gaussian width after the update
};

/// Sweeps the ensemble, collects E_loc and log-derivatives, applies one SR update.
VmcIteration vmc_iteration(Wavefunction& wf, WalkerEnsemble& ensemble, const EwaldContext* ewald,
                           const ExperimentConfig& config, long iteration, std::ostream* warnings = nullptr);

struct Measurement {
    BlockingResult energy;  ///< per particle
    double acceptance = 0.0;
    PairHistogram::Result g2;
    StructureFactor::Result sk;
};

/// Observables on the current ensemble: energy, g(r) and S(k), `sweeps` samples per walker.
Measurement measure(const Wavefunction& wf, WalkerEnsemble& ensemble, const EwaldContext* ewald,
                    const ExperimentConfig& config);

Checkpoint make_checkpoint(const Wavefunction& wf, const WalkerEnsemble& ensemble, const ExperimentConfig& config,
                           long iteration);
/// Restores parameters into `wf` and walkers into `ensemble`; returns the stored iteration.
long restore_checkpoint(const Checkpoint& ck, Wavefunction& wf, WalkerEnsemble& ensemble);

struct RunOptions {
    std::optional<std::string> resume;
    bool force = false;  ///< accept a checkpoint written under a different configuration
};

/// Subcommands. Each writes its artifacts under config.output and returns an exit code;
/// configuration problems throw ConfigError, numerical failures NumericalAbort.
int run_vmc(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
int run_measure(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
int run_dmc_command(const ExperimentConfig& config, std::ostream& log);

}  // namespace heg
