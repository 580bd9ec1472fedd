#pragma once

#include "heg/cell.hpp"

#include <array>
#include <optional>
#include <vector>

namespace heg {

/// Precomputed Ewald splitting for one cell: real-space erfc sum, reciprocal
/// Gaussian sum over half of reciprocal space, background and self terms.
///
/// Energies follow the usual jellium convention
///   V = 1/r_s * [ sum_{i<j} psi(r_ij) + N xi / 2 ],
/// where psi is the periodic pair potential of a unit charge in a neutralizing
/// background (zero cell average) and xi the Madelung constant.
class EwaldContext {
public:
    struct ReciprocalTerm {
        std::array<int, 3> n;  ///< k = 2 pi n / L, one representative of each +-k pair
        double weight;         ///< 2 * 4 pi / V * exp(-k^2 / 4 alpha^2) / k^2
    };

    double alpha() const { return alpha_; }
    double real_cutoff() const { return real_cutoff_; }
    double reciprocal_cutoff() const { return reciprocal_cutoff_; }
    double tolerance() const { return tolerance_; }
    double madelung() const { return madelung_; }
    int max_reciprocal_index() const { return max_index_; }
    const std::vector<ReciprocalTerm>& reciprocal_terms() const { return terms_; }

    /// psi(r): periodic pair potential with background, any representative r.
    double pair_potential(const Vec3& r) const;

    /// Real-space erfc part of psi for a minimum-image displacement.
    double real_space_sum(const Vec3& r_min_image) const;

    friend EwaldContext build_context(const SimulationCell& cell, double tolerance, std::optional<double> alpha);

private:
    double side_ = 0.0;
    double volume_ = 0.0;
    double alpha_ = 0.0;
    double real_cutoff_ = 0.0;
    double reciprocal_cutoff_ = 0.0;
    double tolerance_ = 0.0;
    double madelung_ = 0.0;
    int image_range_ = 1;
    int max_index_ = 0;
    std::vector<ReciprocalTerm> terms_;
};

/// Chooses alpha and cutoffs so that each truncated term is below `tolerance`.
/// A manual alpha fixes the splitting and only the cutoffs are derived.
/// Throws ConfigError for tolerances outside (0, 1e-4] or unreachable settings.
EwaldContext build_context(const SimulationCell& cell, double tolerance = 1e-10,
                           std::optional<double> alpha = std::nullopt);

/// Total Coulomb energy in Hartree including the background/self constant.
/// Throws Divergence when two particles coincide.
double potential_energy(const ParticleConfiguration& config, const EwaldContext& ctx, const SimulationCell& cell);

/// Same as `potential_energy` for raw positions (no wrapping required).
double potential_energy(const Positions& positions, const EwaldContext& ctx, const SimulationCell& cell);

double madelung_constant(const EwaldContext& ctx, const SimulationCell& cell);

}  // namespace heg
