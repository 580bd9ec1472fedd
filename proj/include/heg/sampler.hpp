#pragma once

#include "heg/cell.hpp"
#include "heg/wavefunction.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace heg {

/// Any log-amplitude evaluator; the sampler only needs log|Psi|.
using LogPsiFn = std::function<LogAmplitude(const ParticleConfiguration&)>;

struct Walker {
    ParticleConfiguration config;
    LogAmplitude log_psi;
    std::mt19937_64 rng;
};

/// Independent random stream for walker `index` derived from the master seed.
std::mt19937_64 walker_rng(std::uint64_t master_seed, std::uint64_t index);

struct SweepStats {
    long accepted = 0;
    long proposed = 0;
    long singular = 0;  ///< proposals rejected because Psi vanished there
    double rate() const { return proposed > 0 ? double(accepted) / double(proposed) : 0.0; }
    SweepStats& operator+=(const SweepStats& o);
};

/// Metropolis acceptance probability for |Psi|^2 with a symmetric proposal.
double acceptance_probability(double log_modulus_old, double log_modulus_new);

/// Multiplicative step-size update sigma * exp(kappa (rate - target)), clamped to [1e-4 L, 0.5 L].
double adjust_step_size(double sigma, double rate, double target, double side_length, double kappa = 0.5);

/// Runs `body(i)` for i in [0, count), split over `threads` workers (serial for threads <= 1).
void parallel_for(int count, int threads, const std::function<void(int)>& body);

/// Walkers sampling |Psi|^2 with single-particle (default) or all-particle Gaussian moves.
class WalkerEnsemble {
public:
    WalkerEnsemble(const SimulationCell& cell, int n_walkers, std::uint64_t seed, double step_size = 0.0);

    /// Start from explicit configurations (one walker each).
    WalkerEnsemble(const SimulationCell& cell, std::vector<ParticleConfiguration> configs, std::uint64_t seed,
                   double step_size = 0.0);

    int size() const { return static_cast<int>(walkers_.size()); }
    const std::vector<Walker>& walkers() const { return walkers_; }
    std::vector<Walker>& walkers() { return walkers_; }
    double step_size() const { return step_size_; }
    void set_step_size(double s) { step_size_ = s; }
    bool all_particle_moves() const { return all_particle_; }
    void set_all_particle_moves(bool v) { all_particle_ = v; }
    int threads() const { return threads_; }
    void set_threads(int t) { threads_ = t; }

    /// Recompute cached amplitudes, e.g. after a parameter update. Walkers sitting
    /// on a node are moved to a fresh random configuration.
    void refresh(const LogPsiFn& log_psi);

    /// One sweep per walker: N single-particle moves (or one all-particle move).
    SweepStats sweep(const LogPsiFn& log_psi);

    /// Adapts the step size towards `target` after a sweep with acceptance `rate`.
    double tune_step_size(double rate, double target = 0.5);

    /// Burn-in with step-size tuning after every sweep.
    SweepStats burn_in(const LogPsiFn& log_psi, int sweeps, double target = 0.5);

private:
    SweepStats move_walker(Walker& w, const LogPsiFn& log_psi) const;

    SimulationCell cell_;
    std::vector<Walker> walkers_;
    double step_size_;
    bool all_particle_ = false;
    int threads_ = 1;
};

}  // namespace heg
