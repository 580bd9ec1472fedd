#pragma once

#include "heg/cell.hpp"
#include "heg/mpnn.hpp"
#include "heg/orbitals.hpp"
#include "heg/wavefunction.hpp"

#include <cstdint>
#include <random>

namespace heg::testing {

inline NetworkShape small_shape(int iterations = 1) {
    NetworkShape s;
    s.iterations = iterations;
    s.embedding = 4;
    s.node_hidden = 6;
    s.edge_hidden = 6;
    s.mlp_width = 8;
    s.jastrow_width = 8;
    return s;
}

/// Plane-wave wavefunction with a random, deliberately non-small backflow.
inline Wavefunction plane_wave_psi(const SimulationCell& cell, int iterations, std::uint64_t seed,
                                   double output_scale = 0.3, NetworkShape shape = small_shape()) {
    shape.iterations = iterations;
    auto params = NetworkParameters::initialize(shape, false, 0.0, seed, output_scale);
    return {cell, fill_shells(cell), std::move(params)};
}

inline Wavefunction gaussian_psi(const SimulationCell& cell, int iterations, std::uint64_t seed,
                                 double output_scale = 0.3) {
    NetworkShape shape = small_shape(iterations);
    const double alpha = default_gaussian_alpha(cell);
    auto params = NetworkParameters::initialize(shape, true, alpha, seed, output_scale);
    return {cell, gaussian_bcc_orbitals(cell, alpha), std::move(params)};
}

inline ParticleConfiguration random_config(const SimulationCell& cell, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_configuration(cell, rng);
}

inline cd log_value(const LogAmplitude& a) { return {a.log_modulus, a.phase}; }

/// Difference of complex logs with the phase difference wrapped into (-pi, pi].
inline cd log_diff(const LogAmplitude& a, const LogAmplitude& b) {
    return {a.log_modulus - b.log_modulus, wrap_phase(a.phase - b.phase)};
}

}  // namespace heg::testing
