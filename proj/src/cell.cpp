#include "heg/cell.hpp"

#include "heg/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace heg {

SimulationCell::SimulationCell(int n_up, int n_down, double rs)
    : n_up_(n_up), n_down_(n_down), rs_(rs) {
    if (n_up < 0 || n_down < 0 || n_up + n_down == 0)
        throw ConfigError("particle counts must be non-negative with at least one particle");
    if (!(rs > 0.0) || !std::isfinite(rs)) throw ConfigError("r_s must be positive and finite");
    side_ = std::cbrt(4.0 * std::numbers::pi * (n_up + n_down) / 3.0);
}

double SimulationCell::mean_spacing() const { return std::cbrt(volume() / n_particles()); }

double SimulationCell::wrap(double x) const {
    double w = x - side_ * std::floor(x / side_);
    // floor can round a tiny negative x up to exactly L
    if (w >= side_) w -= side_;
    if (w < 0.0) w = 0.0;
    return w;
}

Vec3 SimulationCell::wrap(const Vec3& r) const { return {wrap(r.x()), wrap(r.y()), wrap(r.z())}; }

ParticleConfiguration::ParticleConfiguration(const SimulationCell& cell, Positions positions,
                                             std::vector<int> spins)
    : side_(cell.side_length()), positions_(std::move(positions)), spins_(std::move(spins)) {
    if (positions_.rows() != cell.n_particles() || static_cast<int>(spins_.size()) != cell.n_particles())
        throw InvalidInput("configuration size does not match the cell");
    int up = 0;
    for (int s : spins_) {
        if (s != 1 && s != -1) throw InvalidInput("spin labels must be +1 or -1");
        up += (s == 1);
    }
    if (up != cell.n_up())
        throw InvalidInput("spin multiset (" + std::to_string(up) + " up) does not match the cell (" +
                           std::to_string(cell.n_up()) + " up)");
    for (int i = 0; i < positions_.rows(); ++i)
        for (int a = 0; a < 3; ++a) {
            if (!std::isfinite(positions_(i, a))) throw InvalidInput("non-finite particle position");
            positions_(i, a) = cell.wrap(positions_(i, a));
        }
}

ParticleConfiguration ParticleConfiguration::with_default_spins(const SimulationCell& cell, Positions positions) {
    std::vector<int> spins(static_cast<std::size_t>(cell.n_particles()), -1);
    for (int i = 0; i < cell.n_up(); ++i) spins[static_cast<std::size_t>(i)] = 1;
    return {cell, std::move(positions), std::move(spins)};
}

void ParticleConfiguration::set_position(int i, const Vec3& r) {
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(r[a])) throw InvalidInput("non-finite particle position");
        double w = r[a] - side_ * std::floor(r[a] / side_);
        if (w >= side_) w -= side_;
        if (w < 0.0) w = 0.0;
        positions_(i, a) = w;
    }
}

void ParticleConfiguration::set_positions(const Positions& positions) {
    if (positions.rows() != positions_.rows()) throw InvalidInput("configuration size mismatch");
    for (int i = 0; i < positions.rows(); ++i) set_position(i, positions.row(i).transpose());
}

double min_image(double x, double side_length) {
    return x - side_length * std::ceil(x / side_length - 0.5);
}

Vec3 min_image_displacement(const Vec3& a, const Vec3& b, const SimulationCell& cell) {
    if (!a.allFinite() || !b.allFinite()) throw InvalidInput("non-finite position in min_image_displacement");
    const double side = cell.side_length();
    Vec3 r = a - b;
    for (int k = 0; k < 3; ++k) r[k] = min_image(r[k], side);
    return r;
}

Eigen::Matrix<double, 6, 1> fourier_features(const Vec3& r, const SimulationCell& cell) {
    const double w = 2.0 * std::numbers::pi / cell.side_length();
    Eigen::Matrix<double, 6, 1> out;
    for (int k = 0; k < 3; ++k) {
        out[k] = std::sin(w * r[k]);
        out[k + 3] = std::cos(w * r[k]);
    }
    return out;
}

double periodic_norm_surrogate(const Vec3& r, const SimulationCell& cell) {
    const double w = std::numbers::pi / cell.side_length();
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double v = std::sin(w * r[k]);
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace heg
