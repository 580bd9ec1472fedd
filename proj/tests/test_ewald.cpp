#include "doctest.h"
#include "helpers.hpp"

#include "heg/errors.hpp"
#include "heg/ewald.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

using namespace heg;
using namespace heg::testing;

namespace {

// Simple-cubic Madelung constant of a unit charge in a neutralizing background, times L.
constexpr double kMadelungSc = -2.8372974794806;

// Direct lattice sum of 1/|r + nL| - 1/|nL| in complete spherical shells of
// radius <= R (in units of L). For cubic lattices the spherical ordering differs
// from the background-neutral periodic potential by (2 pi / 3V) |r|^2 + xi.
double shell_sum(const Vec3& r, double L, int R) {
    std::map<int, double> shells;
    for (int a = -R; a <= R; ++a)
        for (int b = -R; b <= R; ++b)
            for (int c = -R; c <= R; ++c) {
                const int n2 = a * a + b * b + c * c;
                if (n2 > R * R) continue;
                const Vec3 t(a * L, b * L, c * L);
                double v = 1.0 / (r + t).norm();
                if (n2 > 0) v -= 1.0 / t.norm();
                shells[n2] += v;
            }
    double s = 0.0;
    for (auto& [n2, v] : shells) s += v;
    return s;
}

double direct_pair(const Vec3& r, double L) {
    // Richardson in 1/R^2, the leading truncation error of complete shells
    const double s1 = shell_sum(r, L, 40), s2 = shell_sum(r, L, 80);
    const double d = (4 * s2 - s1) / 3;
    return d + 2 * std::numbers::pi / (3 * L * L * L) * r.squaredNorm() + kMadelungSc / L;
}

}  // namespace

TEST_CASE("Madelung constant of the simple cubic cell") {
    for (int n : {1, 2, 7}) {
        const SimulationCell cell(n, n, 1.0);
        const auto ctx = build_context(cell);
        CHECK(std::abs(ctx.madelung() * cell.side_length() - kMadelungSc) < 1e-9);
    }
}

TEST_CASE("pair potential agrees with the direct lattice sum") {
    const SimulationCell cell(1, 1, 1.0);
    const double L = cell.side_length();
    const auto ctx = build_context(cell);
    for (const Vec3& r : {Vec3(0.1, 0.2, -0.3), Vec3(0.5 * L, 0.0, 0.0), Vec3(0.31, 0.77, 1.02)}) {
        const double ref = direct_pair(r, L);
        CHECK(std::abs(ctx.pair_potential(r) - ref) < 1e-6);
    }
}

TEST_CASE("energies of small configurations agree with the direct sum") {
    for (auto [up, dn] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}}) {
        const SimulationCell cell(up, dn, 1.0);
        const double L = cell.side_length();
        const auto ctx = build_context(cell);
        const auto x = random_config(cell, 40 + up + dn);
        const int n = x.size();
        double ref = n * (kMadelungSc / L) / 2;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) ref += direct_pair(x.position(i) - x.position(j), L);
        CHECK(std::abs(potential_energy(x, ctx, cell) - ref) < 1e-6);
    }
}

TEST_CASE("energy is invariant under translation and permutation") {
    const SimulationCell cell(7, 7, 2.0);
    const auto ctx = build_context(cell);
    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        const auto x = random_configuration(cell, rng);
        const double e = potential_energy(x, ctx, cell);
        Positions p = x.positions();
        p.rowwise() += Eigen::RowVector3d(0.37, -1.9, 12.4);
        CHECK(std::abs(potential_energy(p, ctx, cell) - e) < 1e-10);
        std::vector<int> perm(static_cast<std::size_t>(x.size()));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Positions q(x.size(), 3);
        for (int i = 0; i < x.size(); ++i) q.row(i) = x.positions().row(perm[static_cast<std::size_t>(i)]);
        CHECK(std::abs(potential_energy(q, ctx, cell) - e) < 1e-10);
    }
}

TEST_CASE("energy scales exactly as 1/r_s in scaled coordinates") {
    const SimulationCell a(3, 3, 1.0), b(3, 3, 5.0);
    const auto ca = build_context(a), cb = build_context(b);
    const auto x = random_config(a, 9);
    const double ea = potential_energy(x.positions(), ca, a), eb = potential_energy(x.positions(), cb, b);
    CHECK(eb * 5.0 == doctest::Approx(ea).epsilon(1e-14));
}

TEST_CASE("different splittings agree") {
    const SimulationCell cell(4, 3, 1.0);
    const auto c1 = build_context(cell);
    const auto c2 = build_context(cell, 1e-10, 2 * c1.alpha());
    const auto x = random_config(cell, 11);
    CHECK(std::abs(potential_energy(x, c1, cell) - potential_energy(x, c2, cell)) < 1e-9);
}

TEST_CASE("errors: coincident particles and unreachable tolerances") {
    const SimulationCell cell(1, 1, 1.0);
    const auto ctx = build_context(cell);
    Positions p = Positions::Zero(2, 3);
    CHECK_THROWS_AS(potential_energy(p, ctx, cell), Divergence);
    CHECK_THROWS_AS(build_context(cell, 0.0), ConfigError);
    CHECK_THROWS_AS(build_context(cell, 1e-2), ConfigError);
}
