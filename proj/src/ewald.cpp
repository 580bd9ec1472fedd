#include "heg/ewald.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace heg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMaxReciprocalTerms = 2'000'000;

// Truncation error of the real-space sum at cutoff rc: the larger of the first
// omitted term and the integrated tail (4 pi / V) int_rc^inf r erfc(alpha r) dr.
double real_space_error(double alpha, double rc, double volume) {
    const double e = std::erfc(alpha * rc);
    return std::max(e / rc, 2.0 * kPi * e / (volume * alpha * alpha));
}

// Same for the reciprocal sum at cutoff kc; the tail integral uses the continuum density of k-points.
double reciprocal_error(double alpha, double kc, double volume) {
    const double g = std::exp(-kc * kc / (4.0 * alpha * alpha));
    return std::max(4.0 * kPi / volume * g / (kc * kc), 4.0 * alpha * alpha / (kPi * kc) * g);
}

// Bisection for the boundary of a monotone predicate on [lo, hi]; `ok(hi)` must hold.
template <class Ok>
double bisect(double lo, double hi, Ok ok) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ok(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

}  // namespace

EwaldContext build_context(const SimulationCell& cell, double tolerance, std::optional<double> alpha) {
    if (!(tolerance > 0.0) || tolerance > 1e-4)
        throw ConfigError("ewald tolerance must lie in (0, 1e-4]");
    EwaldContext ctx;
    ctx.side_ = cell.side_length();
    ctx.volume_ = cell.volume();
    ctx.tolerance_ = tolerance;
    const double side = ctx.side_;

    if (alpha) {
        if (!(*alpha > 0.0) || !std::isfinite(*alpha)) throw ConfigError("ewald alpha must be positive");
        ctx.alpha_ = *alpha;
        const auto ok = [&](double rc) { return real_space_error(ctx.alpha_, rc, ctx.volume_) <= tolerance; };
        if (!ok(1e3 * side)) throw ConfigError("ewald alpha too small for the requested tolerance");
        ctx.real_cutoff_ = bisect(1e-6 * side, 1e3 * side, ok);
    } else {
        ctx.real_cutoff_ = side;
        ctx.alpha_ = bisect(0.0, 50.0 / side,
                            [&](double a) { return real_space_error(a, side, ctx.volume_) <= tolerance; });
    }
    ctx.image_range_ = static_cast<int>(std::ceil(ctx.real_cutoff_ / side + 0.5));

    // reciprocal cutoff: largest k whose term still exceeds tol
    const double a2 = ctx.alpha_ * ctx.alpha_;
    auto term = [&](double k2) { return 4.0 * kPi / ctx.volume_ * std::exp(-k2 / (4.0 * a2)) / k2; };
    const double dk = 2.0 * kPi / side;
    double kc = dk;
    while (reciprocal_error(ctx.alpha_, kc, ctx.volume_) > tolerance) kc += 0.25 * dk;
    ctx.reciprocal_cutoff_ = kc;
    const int nmax = static_cast<int>(std::ceil(kc / dk));
    const double approx_count = 4.0 / 3.0 * kPi * nmax * nmax * nmax / 2.0;
    if (approx_count > static_cast<double>(kMaxReciprocalTerms)) {
        std::ostringstream msg;
        msg << "ewald tolerance " << tolerance << " unreachable: needs ~" << approx_count << " reciprocal vectors";
        throw ConfigError(msg.str());
    }
    ctx.max_index_ = nmax;
    const double kc2 = kc * kc;
    for (int nx = 0; nx <= nmax; ++nx)
        for (int ny = -nmax; ny <= nmax; ++ny)
            for (int nz = -nmax; nz <= nmax; ++nz) {
                // half space: nx > 0, or nx == 0 && ny > 0, or nx == ny == 0 && nz > 0
                if (nx == 0 && (ny < 0 || (ny == 0 && nz <= 0))) continue;
                const double k2 = dk * dk * (nx * nx + ny * ny + nz * nz);
                if (k2 > kc2) continue;
                ctx.terms_.push_back({{nx, ny, nz}, 2.0 * term(k2)});
            }

    double xi = 0.0;
    const int m = ctx.image_range_;
    for (int a = -m; a <= m; ++a)
        for (int b = -m; b <= m; ++b)
            for (int c = -m; c <= m; ++c) {
                if (a == 0 && b == 0 && c == 0) continue;
                const double d = side * std::sqrt(double(a * a + b * b + c * c));
                if (d <= ctx.real_cutoff_) xi += std::erfc(ctx.alpha_ * d) / d;
            }
    for (const auto& t : ctx.terms_) xi += t.weight;
    xi -= kPi / (a2 * ctx.volume_);
    xi -= 2.0 * ctx.alpha_ / std::sqrt(kPi);
    ctx.madelung_ = xi;
    return ctx;
}

double EwaldContext::real_space_sum(const Vec3& r) const {
    double s = 0.0;
    const int m = image_range_;
    for (int a = -m; a <= m; ++a)
        for (int b = -m; b <= m; ++b)
            for (int c = -m; c <= m; ++c) {
                const Vec3 v = r + side_ * Vec3(a, b, c);
                const double d = v.norm();
                if (d <= real_cutoff_) s += std::erfc(alpha_ * d) / d;
            }
    return s;
}

double EwaldContext::pair_potential(const Vec3& r) const {
    Vec3 rm;
    for (int k = 0; k < 3; ++k) rm[k] = min_image(r[k], side_);
    if (rm.norm() < 1e-12 * side_) throw Divergence("pair potential evaluated at coincident points");
    double s = real_space_sum(rm);
    const double dk = 2.0 * kPi / side_;
    for (const auto& t : terms_) s += t.weight * std::cos(dk * (t.n[0] * rm[0] + t.n[1] * rm[1] + t.n[2] * rm[2]));
    return s - kPi / (alpha_ * alpha_ * volume_);
}

double potential_energy(const Positions& pos, const EwaldContext& ctx, const SimulationCell& cell) {
    const int n = static_cast<int>(pos.rows());
    const double side = cell.side_length();
    double real_part = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Vec3 r;
            for (int k = 0; k < 3; ++k) r[k] = min_image(pos(i, k) - pos(j, k), side);
            if (!r.allFinite()) throw InvalidInput("non-finite position in potential_energy");
            if (r.norm() < 1e-12 * side) throw Divergence("coincident particles in Coulomb energy");
            real_part += ctx.real_space_sum(r);
        }

    // rho_k via per-axis phase tables e^{i 2 pi n x / L}, n in [-nmax, nmax]
    const int nmax = ctx.max_reciprocal_index();
    const int width = 2 * nmax + 1;
    std::vector<std::complex<double>> table(static_cast<std::size_t>(n) * 3 * width);
    auto at = [&](int i, int axis, int idx) -> std::complex<double>& {
        return table[(static_cast<std::size_t>(i) * 3 + axis) * width + (idx + nmax)];
    };
    const double dk = 2.0 * kPi / side;
    for (int i = 0; i < n; ++i)
        for (int axis = 0; axis < 3; ++axis) {
            const std::complex<double> e1 = std::polar(1.0, dk * pos(i, axis));
            at(i, axis, 0) = 1.0;
            for (int q = 1; q <= nmax; ++q) {
                at(i, axis, q) = at(i, axis, q - 1) * e1;
                at(i, axis, -q) = std::conj(at(i, axis, q));
            }
        }
    double recip = 0.0;
    for (const auto& t : ctx.reciprocal_terms()) {
        std::complex<double> rho = 0.0;
        for (int i = 0; i < n; ++i) rho += at(i, 0, t.n[0]) * at(i, 1, t.n[1]) * at(i, 2, t.n[2]);
        // sum_{i<j} cos(k.r_ij) = (|rho|^2 - N) / 2
        recip += t.weight * 0.5 * (std::norm(rho) - n);
    }
    const double a = ctx.alpha();
    const double background = -0.5 * n * (n - 1) * kPi / (a * a * cell.volume());
    const double total = real_part + recip + background + 0.5 * n * ctx.madelung();
    return total / cell.rs();
}

double potential_energy(const ParticleConfiguration& config, const EwaldContext& ctx, const SimulationCell& cell) {
    return potential_energy(config.positions(), ctx, cell);
}

double madelung_constant(const EwaldContext& ctx, const SimulationCell&) { return ctx.madelung(); }

}  // namespace heg
