#pragma once

#include "heg/cell.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <vector>

namespace heg {

using cd = std::complex<double>;
using Vec3c = Eigen::Vector3cd;
/// N x 3 complex coordinates (backflow coordinates y_i), one particle per row.
using ComplexPositions = Eigen::Matrix<cd, Eigen::Dynamic, 3, Eigen::RowMajor>;
using IVec3 = std::array<int, 3>;

enum class OrbitalKind { PlaneWave, GaussianBcc };

/// Single-particle spin-orbital quantum numbers.
struct Orbital {
    IVec3 n{0, 0, 0};   ///< plane waves: k = 2 pi n / L
    Vec3 center{0, 0, 0};  ///< Gaussians: lattice site R_mu
    int spin = 1;
};

/// Value and derivatives of one orbital at a complex point.
struct OrbitalValue {
    cd value;
    Vec3c grad;
    Eigen::Matrix3cd hessian;
    cd d_alpha;  ///< derivative with respect to the Gaussian width (zero for plane waves)
};

/// Reference orbitals for the determinant. Orbitals are indexed
/// [up..., down...]; with spin-diagonal orbitals the determinant factorizes
/// into one block per spin species.
class OrbitalSet {
public:
    OrbitalSet(OrbitalKind kind, double side_length, std::vector<Orbital> up, std::vector<Orbital> down,
               double alpha = 0.0, int image_cutoff = 1);

    OrbitalKind kind() const { return kind_; }
    double side_length() const { return side_; }
    double alpha() const { return alpha_; }
    int image_cutoff() const { return image_cutoff_; }
    int n_up() const { return static_cast<int>(up_.size()); }
    int n_down() const { return static_cast<int>(down_.size()); }
    int size() const { return n_up() + n_down(); }
    const std::vector<Orbital>& up() const { return up_; }
    const std::vector<Orbital>& down() const { return down_; }
    const Orbital& orbital(int mu) const;
    /// Sum of k over all occupied plane waves, in units of 2 pi / L.
    IVec3 total_momentum() const;
    /// Sum of |k|^2 over occupied plane waves (free kinetic energy is this / (2 r_s^2)).
    double kinetic_sum() const;

    /// Same orbitals with a different Gaussian width.
    OrbitalSet with_alpha(double alpha) const;

    /// Spatial part of orbital mu at y (spin ignored).
    cd value(int mu, const Vec3c& y) const;
    /// Value, gradient, Hessian and alpha-derivative; `second` = false skips the Hessian.
    OrbitalValue evaluate(int mu, const Vec3c& y, bool second = true) const;

    /// Encoding of mu fed to the orbital-dependent correlation network:
    /// plane waves (n_x, n_y, n_z, 1), Gaussians (R/L, 1); the constant slot is s_mu s_i.
    Eigen::Vector4d encoding(int mu) const;

private:
    OrbitalKind kind_;
    double side_;
    std::vector<Orbital> up_;
    std::vector<Orbital> down_;
    double alpha_;
    int image_cutoff_;
};

/// Integer vectors ordered by |n|^2 then lexicographically in (n_x, n_y, n_z).
std::vector<IVec3> shell_ordering(int count);

/// Lowest-|k|^2 plane waves per spin at the requested total momentum
/// (deterministic choice within a partially filled shell).
OrbitalSet fill_shells(const SimulationCell& cell, IVec3 k_target = {0, 0, 0});

struct BccSite {
    Vec3 position;
    int spin;
};

/// Conventional BCC sites tiling the cube (N = 2 m^3); corners carry up spins
/// and body centers down spins for unpolarized cells.
std::vector<BccSite> bcc_sites(const SimulationCell& cell);

/// Default Gaussian width: 2 m^2 / L^2 (half the inverse squared half-spacing).
double default_gaussian_alpha(const SimulationCell& cell);

OrbitalSet gaussian_bcc_orbitals(const SimulationCell& cell, double alpha, int image_cutoff = 1);

/// Entry (i, mu) = phi_mu(y_i) delta(s_mu, s_i); orbitals ordered [up..., down...].
Eigen::MatrixXcd evaluate_orbital_matrix(const OrbitalSet& orbitals, const ComplexPositions& y,
                                         const std::vector<int>& spins);

}  // namespace heg
