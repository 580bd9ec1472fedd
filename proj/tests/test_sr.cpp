#include "doctest.h"
#include "helpers.hpp"

#include "heg/errors.hpp"
#include "heg/sampler.hpp"
#include "heg/sr.hpp"

#include <cmath>

using namespace heg;
using namespace heg::testing;

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    return m * m.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

// Weighted samples with S = A and F = A theta exactly: O = +-sqrt(P l_k) v_k,
// E = +-sqrt(P l_k) (v_k . theta) / 2, weight 1 / 2P each.
EstimatorAccumulator quadratic_toy(const Eigen::MatrixXd& a, const Eigen::VectorXd& theta) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const auto p = a.rows();
    EstimatorAccumulator acc(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const double s = std::sqrt(double(p) * es.eigenvalues()[k]);
        const Eigen::VectorXd v = es.eigenvectors().col(k);
        for (double sign : {1.0, -1.0})
            acc.add(sign * s * v.dot(theta) / 2, (sign * s * v).cast<cd>(), 1.0 / (2.0 * double(p)));
    }
    return acc;
}

}  // namespace

TEST_CASE("learning-rate table with nearest-entry fallback") {
    bool exact = false;
    CHECK(learning_rate_for(1.0, &exact) == 0.05);
    CHECK(exact);
    CHECK(learning_rate_for(110.0) == 2.5);
    CHECK(learning_rate_for(3.0, &exact) == 0.05);
    CHECK_FALSE(exact);
    CHECK(learning_rate_for(40.0) == 0.5);
}

TEST_CASE("quadratic toy: S and F are exact and one step with eta = 1 reaches the minimum") {
    const int p = 12;
    const Eigen::MatrixXd a = random_spd(p, 1);
    Eigen::VectorXd theta = Eigen::VectorXd::LinSpaced(p, -1.0, 2.0);
    const auto acc = quadratic_toy(a, theta);
    CHECK((estimate_qgt(acc) - a).norm() < 1e-12);
    CHECK((estimate_force(acc) - a * theta).norm() < 1e-12);
    for (bool dense : {true, false}) {
        Eigen::VectorXd t = theta;
        SrSettings s{1.0, 1e-14, 1e-14, 1000, dense};
        sr_update(t, acc, s);
        CHECK(t.norm() < 1e-10);
    }
}

TEST_CASE("zero-variance samples give zero force") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    EstimatorAccumulator acc(5);
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXcd o(5);
        for (auto& v : o) v = cd(g(rng), g(rng));
        acc.add(cd(-1.25, 0.0), o);
    }
    CHECK(estimate_force(acc).norm() < 1e-14);
}

TEST_CASE("duplicating every sample changes nothing") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    EstimatorAccumulator a(4), b(4);
    for (int k = 0; k < 30; ++k) {
        Eigen::VectorXcd o(4);
        for (auto& v : o) v = cd(g(rng), g(rng));
        const cd e(g(rng), g(rng));
        a.add(e, o);
        b.add(e, o);
        b.add(e, o);
    }
    CHECK((estimate_force(a) - estimate_force(b)).norm() < 1e-12);
    CHECK((estimate_qgt(a) - estimate_qgt(b)).norm() < 1e-12);
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(4);
    CHECK((QgtOperator(a)(v) - estimate_qgt(a) * v).norm() < 1e-12);
}

TEST_CASE("vanishing S leaves a pure diagonal-shift update") {
    EstimatorAccumulator acc(3);
    const Eigen::VectorXcd o = Eigen::VectorXcd::Constant(3, cd(0.3, -0.2));
    const Eigen::VectorXd f(Eigen::Vector3d(0.1, -0.2, 0.3));
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    for (int k = 0; k < 10; ++k) acc.add(cd(k, 0), o);
    CHECK(estimate_qgt(acc).norm() < 1e-30);
    const QgtOperator op(acc);
    SrSettings s{0.05, 1e-4, 1e-12, 100, false};
    sr_update(theta, f, [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return op(v); }, s);
    CHECK((theta + 0.05 / 1e-4 * f).norm() < 1e-9);
}

TEST_CASE("conjugate gradient decreases the A-norm error monotonically") {
    const int n = 30;
    const Eigen::MatrixXd a = random_spd(n, 4);
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
    const Eigen::VectorXd exact = a.ldlt().solve(b);
    const auto res = conjugate_gradient([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, b, 1e-12,
                                        200, true);
    CHECK(res.converged);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& x : res.iterates) {
        const Eigen::VectorXd e = x - exact;
        const double an = std::sqrt(e.dot(a * e));
        CHECK(an <= prev * (1 + 1e-12));
        prev = an;
    }
    CHECK((res.x - exact).norm() < 1e-9);
}

TEST_CASE("CG that runs out of iterations falls back with a warning") {
    const Eigen::MatrixXd a = random_spd(40, 5);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(40);
    const Eigen::VectorXd f = Eigen::VectorXd::Ones(40);
    SrSettings s{0.1, 1e-4, 1e-14, 2, false};
    const auto step = sr_update(theta, f, [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, s);
    CHECK_FALSE(step.warning.empty());
    CHECK(theta.allFinite());
}

TEST_CASE("step-length cap rescales the capped entries only") {
    // S = 0: the raw step is -eta / eps * F
    const LinearOperator zero = [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return 0.0 * v; };
    const Eigen::VectorXd f(Eigen::Vector3d(3e-4, 4e-4, 1e-4));
    SrSettings s{1.0, 1e-4, 1e-14, 100, false};
    s.max_update_norm = 0.5;

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    auto step = sr_update(theta, f, zero, s);
    CHECK(step.clipped);
    CHECK(theta.norm() == doctest::Approx(0.5));
    CHECK((theta / theta.norm() + f / f.norm()).norm() < 1e-12);

    s.uncapped = {2};
    theta.setZero();
    step = sr_update(theta, f, zero, s);
    CHECK(theta.head<2>().norm() == doctest::Approx(0.5));
    CHECK(theta[2] == doctest::Approx(-1.0));

    s.max_update_norm = 10.0;
    theta.setZero();
    step = sr_update(theta, f, zero, s);
    CHECK_FALSE(step.clipped);
    CHECK((theta + f / 1e-4).norm() < 1e-9);
}

TEST_CASE("non-finite solutions abort and keep the parameters") {
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(3);
    const Eigen::VectorXd f = Eigen::VectorXd::Constant(3, std::nan(""));
    SrSettings s;
    CHECK_THROWS_AS(sr_update(theta, f, [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v; }, s),
                    NumericalAbort);
    CHECK(theta == Eigen::VectorXd::Ones(3));
}

TEST_CASE("descent on frozen samples") {
    // Reweighted energy of the updated parameters on fixed configurations drawn from |Psi|^2
    const SimulationCell cell(2, 1, 1.0);
    Wavefunction wf = plane_wave_psi(cell, 1, 21, 0.05);
    const auto ewald = build_context(cell);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return wf.log_psi(c); };
    WalkerEnsemble ens(cell, 200, 6);
    ens.refresh(fn);
    ens.burn_in(fn, 100);
    std::vector<ParticleConfiguration> configs;
    std::vector<double> base_log;
    EstimatorAccumulator acc(static_cast<Eigen::Index>(wf.num_parameters()));
    for (const auto& w : ens.walkers()) {
        const auto d = wf.derivatives(w.config);
        acc.add(local_energy(d, w.config, wf, &ewald), d.param_log_derivs);
        configs.push_back(w.config);
        base_log.push_back(d.value.log_modulus);
    }
    auto reweighted = [&](const Eigen::VectorXd& theta) {
        Wavefunction trial = wf;
        trial.params().values() = theta;
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < configs.size(); ++k) {
            const double w = std::exp(2 * (trial.log_psi(configs[k]).log_modulus - base_log[k]));
            num += w * local_energy(configs[k], trial, &ewald).real();
            den += w;
        }
        return num / den;
    };
    const double e0 = acc.mean_energy().real();
    CHECK(std::abs(reweighted(wf.params().values()) - e0) < 1e-10);
    bool descended = false;
    for (double eta : {0.05, 0.005}) {
        Eigen::VectorXd theta = wf.params().values();
        sr_update(theta, acc, SrSettings{eta, 1e-4, 1e-10, 2000, false});
        if (reweighted(theta) < e0) {
            descended = true;
            break;
        }
    }
    CHECK(descended);
}

TEST_CASE("empty accumulator is an error") {
    EstimatorAccumulator acc(2);
    CHECK_THROWS_AS(estimate_force(acc), InvalidState);
}
