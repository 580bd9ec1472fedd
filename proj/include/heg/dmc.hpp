#pragma once

#include "heg/cell.hpp"
#include "heg/ewald.hpp"
#include "heg/observables.hpp"
#include "heg/orbitals.hpp"
#include "heg/sampler.hpp"
#include "heg/sr.hpp"
#include "heg/wavefunction.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace heg {

/// j(x) = |x| (1 - 2 |x|^3 / L^3) for a minimum-image component |x| <= L/2.
double jastrow_kernel(double x, double side_length);

/// Slater-Jastrow trial state exp(J) det_up det_down over plane waves with
/// J = sum_{i<j} sum_n c_{n,s_i s_j} rho_ij^n,
/// rho_ij = r_s * sqrt(j(x)^2 + j(y)^2 + j(z)^2) measured in Bohr.
///
/// c_1 is pinned by the cusp conditions (1/4 parallel, 1/2 antiparallel); the
/// free coefficients are c_n for n = 2..N_J, ordered [n=2 same, n=2 opposite, n=3 same, ...].
class SlaterJastrowTrial {
public:
    SlaterJastrowTrial(const SimulationCell& cell, OrbitalSet orbitals, int n_terms = 6);

    const SimulationCell& cell() const { return cell_; }
    const OrbitalSet& orbitals() const { return orbitals_; }
    int n_terms() const { return n_terms_; }
    const Eigen::VectorXd& free_coefficients() const { return free_; }
    void set_free_coefficients(const Eigen::VectorXd& c);
    /// c_{n, same/opposite}; n = 1 returns the cusp value.
    double coefficient(int n, bool same_spin) const;
    /// Turn the correlation factor off entirely (bare determinant).
    void set_jastrow_enabled(bool enabled) { jastrow_enabled_ = enabled; }
    bool jastrow_enabled() const { return jastrow_enabled_; }

    double jastrow(const ParticleConfiguration& config) const;
    LogAmplitude log_psi(const ParticleConfiguration& config) const;

    struct Local {
        LogAmplitude value;
        ComplexPositions grad_log;
        cd laplacian_log;
        cd kinetic;            ///< -(lap + grad.grad) / (2 r_s^2)
        Eigen::VectorXd o;     ///< d log Psi / d free coefficients
    };
    Local local(const ParticleConfiguration& config) const;

    /// Local energy in Hartree; a null Ewald context disables the interaction.
    cd local_energy(const ParticleConfiguration& config, const EwaldContext* ewald) const;

private:
    SimulationCell cell_;
    OrbitalSet orbitals_;
    int n_terms_;
    Eigen::VectorXd free_;
    bool jastrow_enabled_ = true;
};

struct DmcSettings {
    int walkers = 1000;
    double time_step = 0.0;  ///< Hartree^-1; 0 selects 0.01 r_s^2
    int equilibration = 500;
    int steps = 2000;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct DmcWalker {
    ParticleConfiguration config;
    LogAmplitude log_psi;
    double potential = 0.0;
    cd e_loc;
    double weight = 1.0;
    std::mt19937_64 rng;
};

struct DmcStepStats {
    double growth_factor = 0.0;  ///< weight-averaged signed (w+ + w-)/2
    double e_growth = 0.0;       ///< -ln(growth_factor) / dtau
    double e_mixed = 0.0;        ///< weighted <E_L> after the move
    double mean_weight = 0.0;    ///< mean walker weight before resampling
    double trial_energy = 0.0;   ///< E_T in use during the step
    int population = 0;
    int killed = 0;
};

class DmcPopulation {
public:
    DmcPopulation(const SlaterJastrowTrial& trial, const EwaldContext* ewald, std::vector<ParticleConfiguration> start,
                  double time_step, std::uint64_t seed, int threads = 1);

    const std::vector<DmcWalker>& walkers() const { return walkers_; }
    double time_step() const { return dtau_; }
    double trial_energy() const { return e_trial_; }

    /// One mirror-sampled free-propagator step for every walker followed by
    /// weight-proportional resampling back to the target population.
    DmcStepStats step();

private:
    void evaluate(DmcWalker& w) const;
    void resample();

    const SlaterJastrowTrial& trial_;
    const EwaldContext* ewald_;
    std::vector<DmcWalker> walkers_;
    double dtau_;
    int target_;
    int threads_;
    double e_trial_ = 0.0;
    long steps_ = 0;
    std::mt19937_64 rng_;
};

/// Free-propagator displacement for one walker: Gaussian with variance dtau / r_s^2 per scaled component.
Positions free_propagator_displacement(int n, double time_step, double rs, std::mt19937_64& rng);

struct DmcResult {
    std::vector<DmcStepStats> trace;  ///< production steps only
    BlockingResult growth;            ///< per particle
    BlockingResult mixed;             ///< per particle
};

using DmcObserver = std::function<void(long step, bool production, const DmcStepStats&)>;

DmcResult run_dmc(const SlaterJastrowTrial& trial, const EwaldContext* ewald, const DmcSettings& settings,
                  const DmcObserver& observer = {});

/// Plain VMC energy of the trial (per particle), sampled from |Psi_V|^2.
struct VmcEstimate {
    BlockingResult energy;  ///< per particle
    double acceptance = 0.0;
};
VmcEstimate vmc_energy(const SlaterJastrowTrial& trial, const EwaldContext* ewald, int walkers, int burn_in,
                       int sweeps, std::uint64_t seed, int threads = 1);

struct JastrowOptimization {
    Eigen::VectorXd best;
    double best_energy = 0.0;  ///< per particle, from the iteration that produced `best`
    std::vector<double> energies;
    std::vector<double> errors;
};

/// Energy minimization of the free coefficients with SR on VMC samples;
/// returns (and installs) the best coefficients seen.
JastrowOptimization optimize_jastrow(SlaterJastrowTrial& trial, const EwaldContext* ewald, int iterations,
                                     int walkers, int sweeps_per_iteration, const SrSettings& sr, std::uint64_t seed,
                                     int threads = 1);

}  // namespace heg
