#include "heg/orbitals.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace heg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int norm2(const IVec3& n) { return n[0] * n[0] + n[1] * n[1] + n[2] * n[2]; }

IVec3 add(IVec3 a, const IVec3& b) {
    for (int k = 0; k < 3; ++k) a[k] += b[k];
    return a;
}

// Picks `count` entries of a shell so that |base + sum - target| is minimal;
// the first minimizer in lexicographic combination order wins.
std::vector<IVec3> choose_subset(const std::vector<IVec3>& shell, int count, const IVec3& base, const IVec3& target) {
    const int g = static_cast<int>(shell.size());
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), 0);
    // C(g, count) grows quickly; beyond this budget keep the lexicographic prefix
    double combos = 1.0;
    for (int k = 0; k < count; ++k) combos = combos * (g - k) / (k + 1);
    if (combos > 2e7) return {shell.begin(), shell.begin() + count};

    std::vector<int> best = idx;
    int best_dist = -1;
    while (true) {
        IVec3 s = base;
        for (int i : idx) s = add(s, shell[static_cast<std::size_t>(i)]);
        const IVec3 d{s[0] - target[0], s[1] - target[1], s[2] - target[2]};
        const int dist = norm2(d);
        if (best_dist < 0 || dist < best_dist) {
            best_dist = dist;
            best = idx;
        }
        int pos = count - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == g - count + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (int k = pos + 1; k < count; ++k) idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k - 1)] + 1;
    }
    std::vector<IVec3> out;
    for (int i : best) out.push_back(shell[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<IVec3> fill_species(int count, const IVec3& base, const IVec3& target) {
    if (count == 0) return {};
    const auto order = shell_ordering(count);
    const int last = norm2(order[static_cast<std::size_t>(count - 1)]);
    std::vector<IVec3> chosen;
    std::vector<IVec3> shell;
    for (const auto& n : order) {
        if (norm2(n) < last) chosen.push_back(n);
        if (norm2(n) == last) shell.push_back(n);
    }
    const int remaining = count - static_cast<int>(chosen.size());
    IVec3 partial = base;
    for (const auto& n : chosen) partial = add(partial, n);
    auto subset = choose_subset(shell, remaining, partial, target);
    chosen.insert(chosen.end(), subset.begin(), subset.end());
    return chosen;
}

}  // namespace

std::vector<IVec3> shell_ordering(int count) {
    // every shell with |n|^2 < radius^2 lies fully inside the enumerated cube
    for (int radius = 2;; ++radius) {
        std::vector<IVec3> out;
        for (int x = -radius; x <= radius; ++x)
            for (int y = -radius; y <= radius; ++y)
                for (int z = -radius; z <= radius; ++z)
                    if (x * x + y * y + z * z < radius * radius) out.push_back({x, y, z});
        if (static_cast<int>(out.size()) < count) continue;
        std::sort(out.begin(), out.end(), [](const IVec3& a, const IVec3& b) {
            const int na = norm2(a), nb = norm2(b);
            if (na != nb) return na < nb;
            return a < b;
        });
        return out;
    }
}

OrbitalSet::OrbitalSet(OrbitalKind kind, double side_length, std::vector<Orbital> up, std::vector<Orbital> down,
                       double alpha, int image_cutoff)
    : kind_(kind), side_(side_length), up_(std::move(up)), down_(std::move(down)), alpha_(alpha),
      image_cutoff_(image_cutoff) {
    if (kind_ == OrbitalKind::GaussianBcc && image_cutoff_ < 0) throw ConfigError("image cutoff must be >= 0");
    for (auto& o : up_) o.spin = 1;
    for (auto& o : down_) o.spin = -1;
}

const Orbital& OrbitalSet::orbital(int mu) const {
    return mu < n_up() ? up_[static_cast<std::size_t>(mu)] : down_[static_cast<std::size_t>(mu - n_up())];
}

IVec3 OrbitalSet::total_momentum() const {
    IVec3 k{0, 0, 0};
    for (const auto& o : up_) k = add(k, o.n);
    for (const auto& o : down_) k = add(k, o.n);
    return k;
}

double OrbitalSet::kinetic_sum() const {
    const double dk = kTwoPi / side_;
    double s = 0.0;
    for (const auto& o : up_) s += dk * dk * norm2(o.n);
    for (const auto& o : down_) s += dk * dk * norm2(o.n);
    return s;
}

OrbitalSet OrbitalSet::with_alpha(double alpha) const {
    OrbitalSet copy = *this;
    copy.alpha_ = alpha;
    return copy;
}

cd OrbitalSet::value(int mu, const Vec3c& y) const {
    const Orbital& o = orbital(mu);
    if (kind_ == OrbitalKind::PlaneWave) {
        const double dk = kTwoPi / side_;
        const cd phase = dk * (double(o.n[0]) * y[0] + double(o.n[1]) * y[1] + double(o.n[2]) * y[2]);
        return std::exp(cd(0.0, 1.0) * phase);
    }
    Vec3c v = y - o.center.cast<cd>();
    for (int a = 0; a < 3; ++a) v[a] += min_image(v[a].real(), side_) - v[a].real();
    cd sum = 0.0;
    const int c = image_cutoff_;
    for (int a = -c; a <= c; ++a)
        for (int b = -c; b <= c; ++b)
            for (int d = -c; d <= c; ++d) {
                const Vec3c w = v + side_ * Vec3(a, b, d).cast<cd>();
                sum += std::exp(-alpha_ * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]));
            }
    return sum;
}

OrbitalValue OrbitalSet::evaluate(int mu, const Vec3c& y, bool second) const {
    const Orbital& o = orbital(mu);
    OrbitalValue out;
    out.hessian.setZero();
    out.d_alpha = 0.0;
    if (kind_ == OrbitalKind::PlaneWave) {
        const double dk = kTwoPi / side_;
        const Vec3 k = dk * Vec3(o.n[0], o.n[1], o.n[2]);
        const cd phase = k[0] * y[0] + k[1] * y[1] + k[2] * y[2];
        out.value = std::exp(cd(0.0, 1.0) * phase);
        out.grad = cd(0.0, 1.0) * out.value * k.cast<cd>();
        if (second) out.hessian = -out.value * (k * k.transpose()).cast<cd>();
        return out;
    }
    Vec3c v = y - o.center.cast<cd>();
    for (int a = 0; a < 3; ++a) v[a] += min_image(v[a].real(), side_) - v[a].real();
    out.value = 0.0;
    out.grad.setZero();
    const int c = image_cutoff_;
    for (int a = -c; a <= c; ++a)
        for (int b = -c; b <= c; ++b)
            for (int d = -c; d <= c; ++d) {
                const Vec3c w = v + side_ * Vec3(a, b, d).cast<cd>();
                const cd w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
                const cd e = std::exp(-alpha_ * w2);
                out.value += e;
                out.grad += -2.0 * alpha_ * e * w;
                out.d_alpha += -w2 * e;
                if (second)
                    out.hessian += e * (4.0 * alpha_ * alpha_ * (w * w.transpose()) -
                                        2.0 * alpha_ * Eigen::Matrix3cd::Identity());
            }
    return out;
}

Eigen::Vector4d OrbitalSet::encoding(int mu) const {
    // last slot is s_mu * s_i, which is +1 for every nonzero entry of a spin-diagonal
    // determinant; the raw spin label would break spin-inversion invariance
    const Orbital& o = orbital(mu);
    if (kind_ == OrbitalKind::PlaneWave) return {double(o.n[0]), double(o.n[1]), double(o.n[2]), 1.0};
    return {o.center[0] / side_, o.center[1] / side_, o.center[2] / side_, 1.0};
}

OrbitalSet fill_shells(const SimulationCell& cell, IVec3 k_target) {
    const IVec3 zero{0, 0, 0};
    const auto up_n = fill_species(cell.n_up(), zero, k_target);
    IVec3 k_up = zero;
    for (const auto& n : up_n) k_up = add(k_up, n);
    const auto down_n = fill_species(cell.n_down(), k_up, k_target);
    std::vector<Orbital> up, down;
    for (const auto& n : up_n) up.push_back({n, Vec3::Zero(), 1});
    for (const auto& n : down_n) down.push_back({n, Vec3::Zero(), -1});
    return {OrbitalKind::PlaneWave, cell.side_length(), std::move(up), std::move(down)};
}

std::vector<BccSite> bcc_sites(const SimulationCell& cell) {
    const int n = cell.n_particles();
    const int m = static_cast<int>(std::lround(std::cbrt(n / 2.0)));
    if (m < 1 || 2 * m * m * m != n)
        throw ConfigError("BCC filling needs N = 2 m^3 particles (e.g. 16, 54, 128); got N = " + std::to_string(n));
    const double a = cell.side_length() / m;
    std::vector<BccSite> sites;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) sites.push_back({a * Vec3(i, j, k), 1});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) sites.push_back({a * Vec3(i + 0.5, j + 0.5, k + 0.5), -1});
    if (cell.n_up() != cell.n_down()) {
        for (std::size_t s = 0; s < sites.size(); ++s) sites[s].spin = static_cast<int>(s) < cell.n_up() ? 1 : -1;
    }
    return sites;
}

double default_gaussian_alpha(const SimulationCell& cell) {
    const int m = static_cast<int>(std::lround(std::cbrt(cell.n_particles() / 2.0)));
    const double spacing = cell.side_length() / std::max(m, 1);
    return 0.5 * 4.0 / (spacing * spacing);
}

OrbitalSet gaussian_bcc_orbitals(const SimulationCell& cell, double alpha, int image_cutoff) {
    if (!(alpha > 0.0)) throw ConfigError("Gaussian width must be positive");
    std::vector<Orbital> up, down;
    for (const auto& site : bcc_sites(cell)) {
        if (site.spin == 1)
            up.push_back({{0, 0, 0}, site.position, 1});
        else
            down.push_back({{0, 0, 0}, site.position, -1});
    }
    return {OrbitalKind::GaussianBcc, cell.side_length(), std::move(up), std::move(down), alpha, image_cutoff};
}

Eigen::MatrixXcd evaluate_orbital_matrix(const OrbitalSet& orbitals, const ComplexPositions& y,
                                         const std::vector<int>& spins) {
    const int n = static_cast<int>(y.rows());
    if (static_cast<int>(spins.size()) != n || orbitals.size() != n)
        throw InvalidInput("orbital matrix: particle and orbital counts differ");
    const int up = static_cast<int>(std::count(spins.begin(), spins.end(), 1));
    if (up != orbitals.n_up()) throw InvalidInput("orbital matrix: spin counts do not match the orbital set");
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const Vec3c yi = y.row(i).transpose();
        for (int mu = 0; mu < n; ++mu)
            if (orbitals.orbital(mu).spin == spins[static_cast<std::size_t>(i)]) m(i, mu) = orbitals.value(mu, yi);
    }
    return m;
}

}  // namespace heg
