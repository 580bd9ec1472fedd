#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace heg {

using Vec3 = Eigen::Vector3d;
/// N x 3 positions, one particle per row.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Cubic periodic cell in r_s-scaled units (one particle per unit Wigner-Seitz sphere).
class SimulationCell {
public:
    SimulationCell(int n_up, int n_down, double rs);

    int n_particles() const { return n_up_ + n_down_; }
    int n_up() const { return n_up_; }
    int n_down() const { return n_down_; }
    double rs() const { return rs_; }
    double side_length() const { return side_; }
    double volume() const { return side_ * side_ * side_; }
    static constexpr int dimension = 3;

    /// Mean interparticle spacing (V/N)^(1/3) in scaled units.
    double mean_spacing() const;

    /// Wrap a single coordinate into [0, L).
    double wrap(double x) const;
    Vec3 wrap(const Vec3& r) const;

private:
    int n_up_;
    int n_down_;
    double rs_;
    double side_;
};

/// Positions inside the primary cell plus immutable spin labels (+1 up, -1 down).
///
/// Up spins come first by construction when built through `with_default_spins`,
/// but any ordering is accepted as long as the spin counts match the cell.
class ParticleConfiguration {
public:
    ParticleConfiguration(const SimulationCell& cell, Positions positions, std::vector<int> spins);

    /// Spins ordered [up..., down...].
    static ParticleConfiguration with_default_spins(const SimulationCell& cell, Positions positions);

    int size() const { return static_cast<int>(spins_.size()); }
    const Positions& positions() const { return positions_; }
    Vec3 position(int i) const { return positions_.row(i).transpose(); }
    int spin(int i) const { return spins_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& spins() const { return spins_; }

    /// Sets particle i to r wrapped into the cell.
    void set_position(int i, const Vec3& r);
    /// Replace every position (wrapped).
    void set_positions(const Positions& positions);

private:
    double side_;
    Positions positions_;
    std::vector<int> spins_;
};

/// a - b reduced to (-L/2, L/2] per component; exact L/2 ties resolve to +L/2.
Vec3 min_image_displacement(const Vec3& a, const Vec3& b, const SimulationCell& cell);
/// Single-component version of the minimum-image reduction.
double min_image(double x, double side_length);

/// [sin(2 pi r / L), cos(2 pi r / L)] component-wise.
Eigen::Matrix<double, 6, 1> fourier_features(const Vec3& r, const SimulationCell& cell);

/// || sin(pi r / L) ||, in [0, sqrt(3)].
double periodic_norm_surrogate(const Vec3& r, const SimulationCell& cell);

/// Uniformly random configuration with spins [up..., down...].
template <class Rng>
ParticleConfiguration random_configuration(const SimulationCell& cell, Rng& rng);

}  // namespace heg

#include <random>

namespace heg {

template <class Rng>
ParticleConfiguration random_configuration(const SimulationCell& cell, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, cell.side_length());
    Positions pos(cell.n_particles(), 3);
    for (int i = 0; i < pos.rows(); ++i)
        for (int a = 0; a < 3; ++a) pos(i, a) = uni(rng);
    return ParticleConfiguration::with_default_spins(cell, std::move(pos));
}

}  // namespace heg
