#pragma once

#include "heg/cell.hpp"
#include "heg/ewald.hpp"
#include "heg/mpnn.hpp"
#include "heg/orbitals.hpp"

#include <Eigen/Dense>

namespace heg {

/// log Psi = log_modulus + i * phase, phase reported in (-pi, pi].
struct LogAmplitude {
    double log_modulus = 0.0;
    double phase = 0.0;
};

struct DerivativeBundle {
    LogAmplitude value;
    ComplexPositions grad_log;        ///< N x 3, grad_i log Psi
    cd laplacian_log{0.0, 0.0};       ///< sum_i lap_i log Psi
    Eigen::VectorXcd param_log_derivs;  ///< d log Psi / d theta (empty unless requested)
};

/// Pivots below this magnitude mark the orbital matrix as singular.
inline constexpr double kSingularPivot = 1e-300;

/// Psi(X) = det[ exp(J(Y, mu)) phi_mu(y_i) ] with backflow coordinates
/// y_i = r_i + delta r_i(X) and J(Y, mu) = sum_i j(delta r_i, mu).
///
/// j reads the (translation-invariant) backflow displacement of particle i
/// split into real and imaginary parts together with the encoding of mu.
class Wavefunction {
public:
    Wavefunction(const SimulationCell& cell, OrbitalSet orbitals, NetworkParameters params);

    const SimulationCell& cell() const { return cell_; }
    const OrbitalSet& orbitals() const { return orbitals_; }
    const NetworkParameters& params() const { return params_; }
    NetworkParameters& params() { return params_; }
    std::size_t num_parameters() const { return params_.size(); }

    LogAmplitude log_psi(const ParticleConfiguration& config) const;

    /// Exact coordinate gradient and Laplacian of log Psi; parameter
    /// log-derivatives when `with_params` is set.
    DerivativeBundle derivatives(const ParticleConfiguration& config, bool with_params = true) const;

    /// Kinetic part of the local energy from a derivative bundle: -(lap + grad.grad) / (2 r_s^2).
    cd kinetic_local(const DerivativeBundle& d) const;

private:
    /// Orbital set with the Gaussian width taken from the parameter vector.
    OrbitalSet current_orbitals() const;
    nn::Matrix jastrow_inputs(const ComplexPositions& dr) const;

    SimulationCell cell_;
    OrbitalSet orbitals_;
    NetworkParameters params_;
    nn::Matrix encodings_;  // N x 4
};

/// Free-function spellings of the wavefunction operations.
LogAmplitude log_psi(const ParticleConfiguration& config, const Wavefunction& wf);
DerivativeBundle derivatives(const ParticleConfiguration& config, const Wavefunction& wf, bool with_params = true);

/// E_loc = -1/(2 r_s^2) [lap log Psi + sum (grad log Psi)^2] + V(X) in Hartree.
/// A null Ewald context disables the interaction.
cd local_energy(const ParticleConfiguration& config, const Wavefunction& wf, const EwaldContext* ewald);
cd local_energy(const DerivativeBundle& d, const ParticleConfiguration& config, const Wavefunction& wf,
                const EwaldContext* ewald);

/// Wraps an accumulated phase into (-pi, pi].
double wrap_phase(double phase);

}  // namespace heg
