// Acceptance run: one PASS/FAIL line per criterion.
//
//   ACCEPTANCE_SCALE  multiplies the Monte Carlo budgets (default 1)
//   ACCEPTANCE_ONLY   comma-separated criterion numbers to run (default all)

#include "helpers.hpp"

#include "heg/config.hpp"
#include "heg/dmc.hpp"
#include "heg/errors.hpp"
#include "heg/ewald.hpp"
#include "heg/observables.hpp"
#include "heg/runner.hpp"
#include "heg/sampler.hpp"
#include "heg/sr.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace heg;
using namespace heg::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double budget_scale() {
    const char* s = std::getenv("ACCEPTANCE_SCALE");
    return s ? std::max(0.01, std::atof(s)) : 1.0;
}

int scaled(int base, int minimum = 1) { return std::max(minimum, static_cast<int>(std::lround(base * budget_scale()))); }

std::string fmt(double v, int digits = 6) {
    std::ostringstream o;
    o << std::setprecision(digits) << v;
    return o.str();
}

std::string pm(double mean, double err) { return fmt(mean, 8) + "(" + fmt(err, 2) + ")"; }

double combined(double a, double b) { return std::sqrt(a * a + b * b); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("heg_acceptance_" + std::to_string(::getpid())) / name;
    fs::create_directories(p);
    return p;
}

ParticleConfiguration with_positions(const ParticleConfiguration& x, const Positions& p) {
    ParticleConfiguration y = x;
    y.set_positions(p);
    return y;
}

// ---------------------------------------------------------------------------
// 1. zero-variance free gas

// Closed-shell sum of |n|^2 over the lowest `per_spin` integer vectors, counted
// by brute force over a cube; independent of the library's shell filling.
double closed_shell_n2_sum(int per_spin) {
    std::vector<int> n2;
    for (int x = -3; x <= 3; ++x)
        for (int y = -3; y <= 3; ++y)
            for (int z = -3; z <= 3; ++z) n2.push_back(x * x + y * y + z * z);
    std::sort(n2.begin(), n2.end());
    if (n2[static_cast<std::size_t>(per_spin)] == n2[static_cast<std::size_t>(per_spin - 1)])
        throw InvalidInput("not a closed shell");
    return std::accumulate(n2.begin(), n2.begin() + per_spin, 0.0);
}

Outcome free_gas() {
    const auto t0 = std::chrono::steady_clock::now();
    const double rs = 1.0;
    const SimulationCell cell(7, 7, rs);
    const double side = std::cbrt(4.0 * kPi * 14 / 3.0);
    const double dk = 2 * kPi / side;
    const double exact = 2 * closed_shell_n2_sum(7) * dk * dk / (2 * rs * rs);

    ExperimentConfig cfg = parse_config(
        "system: {particles: 14, polarization: 0, rs: 1.0, interaction: false}\n"
        "network: {output_scale: 0.0}\n"
        "sampler: {walkers: 32, burn_in: 10}\n");
    const Wavefunction wf = make_wavefunction(cfg);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return wf.log_psi(c); };
    WalkerEnsemble ens(cell, cfg.sampler.walkers, 5);
    ens.refresh(fn);
    ens.burn_in(fn, cfg.sampler.burn_in);
    double worst = 0.0;
    long count = 0;
    for (int s = 0; s < 5; ++s) {
        ens.sweep(fn);
        for (const auto& w : ens.walkers()) {
            const cd e = local_energy(w.config, wf, nullptr);
            worst = std::max(worst, std::abs(e - cd(exact, 0.0)) / exact);
            ++count;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst < 1e-10 && secs < 60.0, "E = " + fmt(exact, 12) + " Ha (" + fmt(exact / 14, 12) + " per particle) over " + std::to_string(count) +
                                             " samples, max relative deviation " + fmt(worst, 3) + ", " +
                                             fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2-4. optimized energies (shared runs)

struct EnergyRun {
    double energy = 0.0, error = 0.0;
    long iterations = 0;
    double seconds = 0.0;
};

int vmc_walkers() { return scaled(256, 64); }
int vmc_steps() { return scaled(40, 1); }
int vmc_sweeps() { return scaled(60, 10); }

EnergyRun run_energy(const std::string& name, double rs, int iterations, bool bare) {
    std::ostringstream y;
    y << "system: {particles: 14, polarization: 0, rs: " << rs << "}\n";
    y << "network: {iterations: " << iterations << (bare ? ", output_scale: 0.0" : "") << "}\n";
    y << "sampler: {walkers: " << vmc_walkers() << ", burn_in: 100}\n";
    y << "optimizer: {steps: " << (bare ? 0 : vmc_steps()) << ", checkpoint_every: 1000}\n";
    y << "observables: {sweeps: " << vmc_sweeps() << "}\n";
    y << "output: " << scratch(name).string() << "\n";
    const ExperimentConfig cfg = parse_config(y.str());
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    run_vmc(cfg, RunOptions{}, log);
    std::ifstream in(fs::path(cfg.output) / "result.json");
    const auto j = nlohmann::json::parse(in);
    EnergyRun r;
    r.energy = j.at("energy").get<double>();
    r.error = j.at("error").get<double>();
    r.iterations = j.at("iterations").get<long>();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "  [" << name << "] E/N = " << pm(r.energy, r.error) << " after " << r.iterations << " SR steps, "
              << fmt(r.seconds, 3) << " s\n";
    return r;
}

std::map<std::string, EnergyRun> g_runs;

const EnergyRun& energy_run(const std::string& name, double rs, int iterations, bool bare) {
    auto it = g_runs.find(name);
    if (it == g_runs.end()) it = g_runs.emplace(name, run_energy(name, rs, iterations, bare)).first;
    return it->second;
}

std::string budget_note() {
    return " [budget: " + std::to_string(vmc_walkers()) + " walkers, " + std::to_string(vmc_steps()) +
           " SR steps; reference protocol 1024 walkers, 2000 steps]";
}

Outcome reference_energy() {
    const auto& a = energy_run("rs1_T1", 1.0, 1, false);
    const auto& b = energy_run("rs5_T1", 5.0, 1, false);
    const double da = a.energy - 0.568967, db = b.energy - (-0.0798544);
    const bool pass = std::abs(da) <= 2e-3 && std::abs(db) <= 2e-3;
    return {pass, "r_s=1: " + pm(a.energy, a.error) + " (off by " + fmt(da * 1e3, 3) + " mHa); r_s=5: " +
                      pm(b.energy, b.error) + " (off by " + fmt(db * 1e3, 3) + " mHa); tolerance 2 mHa" +
                      budget_note()};
}

Outcome depth() {
    const auto& t1 = energy_run("rs5_T1", 5.0, 1, false);
    const auto& t2 = energy_run("rs5_T2", 5.0, 2, false);
    const double c = combined(t1.error, t2.error);
    return {t2.energy <= t1.energy + c, "r_s=5: T=1 " + pm(t1.energy, t1.error) + ", T=2 " + pm(t2.energy, t2.error) +
                                            ", difference " + fmt((t2.energy - t1.energy) / c, 3) + " sigma" +
                                            budget_note()};
}

Outcome variational_ordering() {
    bool pass = true;
    std::string detail;
    for (double rs : {1.0, 5.0}) {
        const std::string tag = rs == 1.0 ? "rs1" : "rs5";
        const auto& nqs = energy_run(tag + "_T1", rs, 1, false);
        const auto& bare = energy_run(tag + "_bare", rs, 0, true);
        const double c = combined(nqs.error, bare.error);
        pass = pass && nqs.energy < bare.energy - 2 * c;
        detail += "r_s=" + fmt(rs) + ": MP-NQS " + pm(nqs.energy, nqs.error) + " vs determinant " +
                  pm(bare.energy, bare.error) + " (" + fmt((bare.energy - nqs.energy) / c, 3) + " sigma); ";
    }
    return {pass, detail + budget_note()};
}

// ---------------------------------------------------------------------------
// 5. derivatives vs finite differences

LogAmplitude shifted(const Wavefunction& wf, ParticleConfiguration x, int i, int a, double h) {
    Positions p = x.positions();
    p(i, a) += h;
    x.set_positions(p);
    return wf.log_psi(x);
}

Outcome derivatives_fd() {
    const SimulationCell cell(7, 7, 1.0);
    NetworkShape shape;
    shape.iterations = 1;
    Wavefunction wf(cell, fill_shells(cell), NetworkParameters::initialize(shape, false, 0.0, 11, 0.1));
    double worst_grad = 0.0, worst_lap = 0.0, worst_param = 0.0;
    for (int c = 0; c < 20; ++c) {
        const auto x = random_config(cell, 500 + c);
        const auto d = wf.derivatives(x, true);
        const auto base = wf.log_psi(x);
        // Richardson over h, h/2, h/4 removes the h^2 and h^4 stencil errors, which
        // dominate near nodes where log Psi varies on short length scales
        auto richardson = [](const auto& f, double h) {
            const auto a = f(h), b = f(h / 2), c = f(h / 4);
            const auto ab = (4.0 * b - a) / 3.0, bc = (4.0 * c - b) / 3.0;
            return (16.0 * bc - ab) / 15.0;
        };
        ComplexPositions g_fd(x.size(), 3);
        for (int i = 0; i < x.size(); ++i)
            for (int a = 0; a < 3; ++a)
                g_fd(i, a) = richardson(
                    [&](double h) { return log_diff(shifted(wf, x, i, a, h), shifted(wf, x, i, a, -h)) / (2 * h); },
                    1e-4);
        const cd lap_fd = richardson(
            [&](double h) {
                cd lap = 0.0;
                for (int i = 0; i < x.size(); ++i)
                    for (int a = 0; a < 3; ++a)
                        lap += (log_diff(shifted(wf, x, i, a, h), base) + log_diff(shifted(wf, x, i, a, -h), base)) /
                               (h * h);
                return lap;
            },
            4e-4);
        worst_grad = std::max(worst_grad, (g_fd - d.grad_log).norm() / g_fd.norm());
        worst_lap = std::max(worst_lap, std::abs(lap_fd - d.laplacian_log) / std::abs(lap_fd));

        Eigen::VectorXcd p_fd(d.param_log_derivs.size());
        const double hp = 1e-5;
        auto& v = wf.params().values();
        for (Eigen::Index p = 0; p < v.size(); ++p) {
            const double v0 = v[p];
            v[p] = v0 + hp;
            const auto up = wf.log_psi(x);
            v[p] = v0 - hp;
            const auto dn = wf.log_psi(x);
            v[p] = v0;
            p_fd[p] = log_diff(up, dn) / (2 * hp);
        }
        worst_param = std::max(worst_param, (p_fd - d.param_log_derivs).norm() / p_fd.norm());
    }
    const bool pass = worst_grad < 1e-6 && worst_lap < 1e-5 && worst_param < 1e-6;
    return {pass, "N=14, " + std::to_string(wf.num_parameters()) +
                      " parameters, 20 configurations; max relative error: gradient " + fmt(worst_grad, 3) +
                      ", Laplacian " + fmt(worst_lap, 3) + ", parameters " + fmt(worst_param, 3)};
}

// ---------------------------------------------------------------------------
// 6. symmetries

Outcome symmetries() {
    const SimulationCell cell(7, 7, 1.0);
    const double L = cell.side_length();
    double exchange = 0.0, translation = 0.0, periodic = 0.0, spin = 0.0, equivariance = 0.0;
    for (int t : {1, 2}) {
        NetworkShape shape;
        shape.iterations = t;
        const Wavefunction wf(cell, fill_shells(cell), NetworkParameters::initialize(shape, false, 0.0, 30 + t, 0.1));
        for (int c = 0; c < 5; ++c) {
            const auto x = random_config(cell, 40 + 10 * t + c);
            const auto base = wf.log_psi(x);
            for (auto [a, b] : {std::pair{0, 3}, std::pair{8, 12}}) {
                Positions p = x.positions();
                p.row(a).swap(p.row(b));
                const auto ex = wf.log_psi(with_positions(x, p));
                exchange = std::max({exchange, std::abs(ex.log_modulus - base.log_modulus),
                                     std::abs(std::abs(wrap_phase(ex.phase - base.phase)) - kPi)});
            }
            Positions shifted_p = x.positions();
            shifted_p.rowwise() += Eigen::RowVector3d(0.37 * c + 0.1, -0.2, 1.3);
            translation = std::max(translation, std::abs(log_diff(wf.log_psi(with_positions(x, shifted_p)), base)));

            Positions wrapped = x.positions();
            wrapped.row(c) += Eigen::RowVector3d(L, -L, 2 * L);
            periodic = std::max(periodic,
                                std::abs(log_diff(wf.log_psi(ParticleConfiguration(cell, wrapped, x.spins())), base)));

            std::vector<int> flipped = x.spins();
            for (int& s : flipped) s = -s;
            spin = std::max(spin, std::abs(wf.log_psi(ParticleConfiguration(cell, x.positions(), flipped)).log_modulus -
                                           base.log_modulus));

            // arbitrary permutation (spins move with their particles)
            std::vector<int> perm(static_cast<std::size_t>(x.size()));
            std::iota(perm.begin(), perm.end(), 0);
            std::mt19937_64 rng(c + 7);
            std::shuffle(perm.begin(), perm.end(), rng);
            Positions pp(x.size(), 3);
            std::vector<int> ps(perm.size());
            for (int i = 0; i < x.size(); ++i) {
                pp.row(i) = x.positions().row(perm[static_cast<std::size_t>(i)]);
                ps[static_cast<std::size_t>(i)] = x.spins()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
            }
            const auto dr = backflow_displacements(x, cell, wf.params());
            const auto dr_p = backflow_displacements(ParticleConfiguration(cell, pp, ps), cell, wf.params());
            for (int i = 0; i < x.size(); ++i)
                equivariance =
                    std::max(equivariance, (dr_p.row(i) - dr.row(perm[static_cast<std::size_t>(i)])).norm());
        }
    }
    const double worst = std::max({exchange, translation, periodic, spin, equivariance});
    return {worst < 1e-10, "T=1,2 at N=14, max deviations: exchange " + fmt(exchange, 3) + ", translation " +
                               fmt(translation, 3) + ", periodicity " + fmt(periodic, 3) + ", spin flip " +
                               fmt(spin, 3) + ", backflow equivariance " + fmt(equivariance, 3)};
}

// ---------------------------------------------------------------------------
// 7. Ewald

constexpr double kMadelungSc = -2.8372974794806;

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

// Spherically ordered direct sum, converted to the neutral periodic potential
double direct_pair(const Vec3& r, double L) {
    const double s1 = shell_sum(r, L, 40), s2 = shell_sum(r, L, 80);
    return (4 * s2 - s1) / 3 + 2 * kPi / (3 * L * L * L) * r.squaredNorm() + kMadelungSc / L;
}

Outcome ewald() {
    double oracle = 0.0, invariance = 0.0, scaling = 0.0;
    for (auto [up, dn] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}}) {
        const SimulationCell cell(up, dn, 1.0);
        const double L = cell.side_length();
        const auto ctx = build_context(cell);
        const auto x = random_config(cell, 60 + up + dn);
        const int n = x.size();
        double ref = n * (kMadelungSc / L) / 2;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) ref += direct_pair(x.position(i) - x.position(j), L);
        const double e = potential_energy(x, ctx, cell);
        oracle = std::max(oracle, std::abs(e - ref));

        Positions p = x.positions();
        p.rowwise() += Eigen::RowVector3d(0.3, -1.1, 0.77);
        invariance = std::max(invariance, std::abs(potential_energy(p, ctx, cell) - e));
        Positions q = x.positions();
        q.colwise().reverseInPlace();
        invariance = std::max(invariance, std::abs(potential_energy(q, ctx, cell) - e));

        for (double rs : {0.5, 5.0, 110.0}) {
            const SimulationCell scaled_cell(up, dn, rs);
            const auto c2 = build_context(scaled_cell);
            const double e2 = potential_energy(x.positions(), c2, scaled_cell);
            scaling = std::max(scaling, std::abs(e2 * rs - e) / std::abs(e));
        }
    }
    // exact 1/r_s: only floating-point rounding is allowed
    const bool pass = oracle < 1e-6 && invariance < 1e-10 && scaling < 1e-13;
    return {pass, "N<=4: max |E - direct sum| " + fmt(oracle, 3) + " Ha, translation/permutation " +
                      fmt(invariance, 3) + " Ha, r_s scaling relative " + fmt(scaling, 3)};
}

// ---------------------------------------------------------------------------
// 8. stochastic reconfiguration

Outcome sr_sanity() {
    // quadratic toy: weighted samples with S = A and F = A theta exactly
    const int p = 12;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(p, p);
    for (auto& v : m.reshaped()) v = g(rng);
    const Eigen::MatrixXd a = m * m.transpose() / p + 0.1 * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd theta0 = Eigen::VectorXd::LinSpaced(p, -1.0, 2.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    EstimatorAccumulator toy(p);
    for (int k = 0; k < p; ++k) {
        const double s = std::sqrt(double(p) * es.eigenvalues()[k]);
        const Eigen::VectorXd v = es.eigenvectors().col(k);
        for (double sign : {1.0, -1.0})
            toy.add(sign * s * v.dot(theta0) / 2, (sign * s * v).cast<cd>(), 1.0 / (2.0 * p));
    }
    double newton = 0.0;
    for (bool dense : {true, false}) {
        Eigen::VectorXd t = theta0;
        sr_update(t, toy, SrSettings{1.0, 1e-14, 1e-14, 1000, dense});
        newton = std::max(newton, t.norm());
    }

    // zero-variance local energies
    EstimatorAccumulator flat(5);
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXcd o(5);
        for (auto& v : o) v = cd(g(rng), g(rng));
        flat.add(cd(-1.25, 0.0), o);
    }
    const double zero_force = estimate_force(flat).norm();

    // descent on frozen samples, judged by the reweighted energy
    const SimulationCell cell(2, 1, 1.0);
    Wavefunction wf = plane_wave_psi(cell, 1, 21, 0.05);
    const auto ctx = build_context(cell);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return wf.log_psi(c); };
    WalkerEnsemble ens(cell, 200, 6);
    ens.refresh(fn);
    ens.burn_in(fn, 100);
    std::vector<ParticleConfiguration> configs;
    std::vector<double> base_log;
    EstimatorAccumulator acc(static_cast<Eigen::Index>(wf.num_parameters()));
    for (const auto& w : ens.walkers()) {
        const auto d = wf.derivatives(w.config);
        acc.add(local_energy(d, w.config, wf, &ctx), d.param_log_derivs);
        configs.push_back(w.config);
        base_log.push_back(d.value.log_modulus);
    }
    auto reweighted = [&](const Eigen::VectorXd& theta) {
        Wavefunction trial = wf;
        trial.params().values() = theta;
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < configs.size(); ++k) {
            const double w = std::exp(2 * (trial.log_psi(configs[k]).log_modulus - base_log[k]));
            num += w * local_energy(configs[k], trial, &ctx).real();
            den += w;
        }
        return num / den;
    };
    const double e0 = acc.mean_energy().real();
    const double eta = 0.005;
    Eigen::VectorXd theta = wf.params().values();
    sr_update(theta, acc, SrSettings{eta, 1e-4, 1e-10, 2000, false});
    const double e1 = reweighted(theta);
    const bool pass = newton < 1e-10 && zero_force < 1e-12 && e1 < e0;
    return {pass, "Newton toy |theta - theta*| = " + fmt(newton, 3) + "; |F| on zero variance " + fmt(zero_force, 3) +
                      "; frozen samples at eta=" + fmt(eta) + ": " + fmt(e0, 10) + " -> " + fmt(e1, 10) + " Ha"};
}

// ---------------------------------------------------------------------------
// 9. diffusion Monte Carlo

Outcome dmc() {
    std::string detail;
    bool pass = true;
    {
        const SimulationCell cell(7, 7, 1.0);
        SlaterJastrowTrial trial(cell, fill_shells(cell), 2);
        trial.set_jastrow_enabled(false);
        const double dk = 2 * kPi / cell.side_length();
        const double exact = 2 * closed_shell_n2_sum(7) * dk * dk / 2 / 14;
        DmcSettings s;
        s.walkers = scaled(200, 20);
        s.time_step = 0.01;
        s.equilibration = 20;
        s.steps = scaled(200, 20);
        s.seed = 3;
        const auto r = run_dmc(trial, nullptr, s);
        const bool ok = std::abs(r.growth.mean - exact) <= 3 * r.growth.error + 1e-12;
        pass = pass && ok;
        detail += "non-interacting growth " + pm(r.growth.mean, r.growth.error) + " vs " + fmt(exact, 10) + "; ";
    }
    {
        const SimulationCell cell(7, 7, 1.0);
        const auto ctx = build_context(cell);
        SlaterJastrowTrial trial(cell, fill_shells(cell), 6);
        SrSettings sr;
        sr.learning_rate = 0.05;
        sr.dense = true;
        optimize_jastrow(trial, &ctx, scaled(40, 5), scaled(256, 32), 10, sr, 7);
        const auto vmc = vmc_energy(trial, &ctx, scaled(256, 32), 100, scaled(200, 20), 8);
        DmcSettings s;
        s.walkers = scaled(400, 40);
        s.equilibration = scaled(300, 30);
        s.steps = scaled(1500, 100);
        s.seed = 9;
        s.time_step = 0.02;
        const auto coarse = run_dmc(trial, &ctx, s);
        s.time_step = 0.01;
        s.equilibration *= 2;
        s.steps *= 2;
        s.seed = 10;
        const auto fine = run_dmc(trial, &ctx, s);
        const double c_var = combined(fine.growth.error, vmc.energy.error);
        const double c_tau = combined(fine.growth.error, coarse.growth.error);
        const bool below = fine.growth.mean <= vmc.energy.mean + c_var;
        const bool halving = std::abs(fine.growth.mean - coarse.growth.mean) <= c_tau;
        pass = pass && below && halving;
        detail += "N=14 r_s=1: Slater-Jastrow VMC " + pm(vmc.energy.mean, vmc.energy.error) + ", DMC(tau=0.02) " +
                  pm(coarse.growth.mean, coarse.growth.error) + ", DMC(tau=0.01) " +
                  pm(fine.growth.mean, fine.growth.error) + "; tau-halving difference " +
                  fmt((fine.growth.mean - coarse.growth.mean) / c_tau, 3) + " sigma";
    }
    return {pass, detail};
}

// ---------------------------------------------------------------------------
// 10. observables

Outcome observables() {
    std::string detail;
    bool pass = true;
    {
        const SimulationCell cell(4, 4, 1.0);
        PairHistogram g2(cell, 25, 50);
        StructureFactor sk(cell, 12, 50);
        std::mt19937_64 rng(3);
        for (int s = 0; s < scaled(20000, 2000); ++s) {
            const auto x = random_configuration(cell, rng);
            g2.accumulate(x);
            sk.accumulate(x);
        }
        const auto g = g2.normalize();
        int g_out = 0;
        for (std::size_t b = 0; b < g.g.size(); ++b) g_out += std::abs(g.g[b] - 1.0) > 3 * g.error[b];
        const auto s = sk.evaluate();
        int s_out = 0;
        for (std::size_t k = 0; k < s.s.size(); ++k) s_out += std::abs(s.s[k] - 1.0) > 3 * s.error[k];
        pass = pass && g_out == 0 && s_out == 0;
        detail += "uniform: " + std::to_string(g_out) + "/" + std::to_string(g.g.size()) + " g bins and " +
                  std::to_string(s_out) + "/" + std::to_string(s.s.size()) + " S orbits outside 3 sigma; ";
    }
    {
        const SimulationCell cell(8, 8, 1.0);
        const auto sites = bcc_sites(cell);
        Positions p(16, 3);
        std::vector<int> spins;
        for (int i = 0; i < 16; ++i) {
            p.row(i) = sites[static_cast<std::size_t>(i)].position.transpose();
            spins.push_back(sites[static_cast<std::size_t>(i)].spin);
        }
        StructureFactor sk(cell, 12);
        sk.accumulate(ParticleConfiguration(cell, p, spins));
        const auto s = sk.evaluate(true);
        double worst = 0.0;
        for (std::size_t k = 0; k < s.s.size(); ++k) {
            const auto& n = s.representative[k];
            const bool peak =
                n[0] % 2 == 0 && n[1] % 2 == 0 && n[2] % 2 == 0 && ((n[0] + n[1] + n[2]) / 2) % 2 == 0;
            worst = std::max(worst, std::abs(s.s[k] - (peak ? 16.0 : 0.0)));
        }
        pass = pass && worst < 1e-12;
        detail += "BCC delta pattern max deviation " + fmt(worst, 3) + "; ";
    }
    {
        // crystal vs liquid at N = 16: same optimize-then-measure protocol for both states
        auto peak_of = [](const std::string& name, const std::string& system) {
            std::ostringstream y;
            y << "system: {particles: 16, polarization: 0, " << system << "}\n";
            y << "sampler: {walkers: " << scaled(64, 16) << ", burn_in: 50}\n";
            y << "optimizer: {steps: " << scaled(30, 5) << ", checkpoint_every: 1000}\n";
            y << "observables: {sweeps: " << scaled(30, 5) << ", sk_raw: true}\n";
            y << "output: " << scratch(name).string() << "\n";
            const ExperimentConfig cfg = parse_config(y.str());
            std::ostringstream log;
            run_vmc(cfg, RunOptions{}, log);
            std::ifstream in(fs::path(cfg.output) / "sk.csv");
            std::string line;
            std::getline(in, line);
            double best_s = 0.0, best_k = 0.0;
            while (std::getline(in, line)) {
                std::stringstream ls(line);
                std::string k, sv;
                std::getline(ls, k, ',');
                std::getline(ls, sv, ',');
                if (std::stod(sv) > best_s) {
                    best_s = std::stod(sv);
                    best_k = std::stod(k);
                }
            }
            return std::pair{best_s, best_k};
        };
        const auto [crystal, kc] = peak_of("crystal", "rs: 110, orbitals: gaussian_bcc");
        const auto [liquid, kl] = peak_of("liquid", "rs: 1");
        const bool ok = crystal > 3.0 && crystal > 3.0 * liquid;
        pass = pass && ok;
        detail += "max raw S(k) after " + std::to_string(scaled(30, 5)) + " SR steps: Gaussian r_s=110 " +
                  fmt(crystal, 4) + " at k=" + fmt(kc, 4) + ", plane waves r_s=1 " + fmt(liquid, 4) + " at k=" +
                  fmt(kl, 4);
    }
    return {pass, detail};
}

}  // namespace

int main() {
    std::set<int> only;
    if (const char* s = std::getenv("ACCEPTANCE_ONLY")) {
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) only.insert(std::stoi(tok));
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"zero-variance free gas", free_gas},
        {"reference energies N=14, r_s=1 and 5", reference_energy},
        {"depth: T=2 <= T=1 at r_s=5", depth},
        {"MP-NQS below the bare determinant", variational_ordering},
        {"derivatives vs finite differences", derivatives_fd},
        {"symmetry suite", symmetries},
        {"Ewald summation", ewald},
        {"stochastic reconfiguration", sr_sanity},
        {"diffusion Monte Carlo", dmc},
        {"observable estimators", observables},
    };
    std::cout << "budget scale " << budget_scale() << '\n';
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
                  << " [" << fmt(secs, 3) << " s]" << std::endl;
    }
    std::error_code ec;
    fs::remove_all(fs::temp_directory_path() / ("heg_acceptance_" + std::to_string(::getpid())), ec);
    return failures == 0 ? 0 : 1;
}
