#include "heg/dmc.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace heg {

namespace {

using Eigen::MatrixXcd;

struct PairGeometry {
    double rho = 0.0;  // scaled units
    Vec3 d1;           // d rho / d x_a (x = r_i - r_j)
    Vec3 d2;           // d^2 rho / d x_a^2
};

PairGeometry pair_geometry(const Vec3& r, double side) {
    PairGeometry g;
    const double l3 = side * side * side;
    Vec3 j, jp, jpp;
    for (int a = 0; a < 3; ++a) {
        const double x = r[a];
        j[a] = jastrow_kernel(x, side);
        jp[a] = (x >= 0 ? 1.0 : -1.0) - 8.0 * x * x * x / l3;
        jpp[a] = -24.0 * x * x / l3;
    }
    g.rho = j.norm();
    if (g.rho == 0.0) throw Divergence("coincident particles in the Jastrow factor");
    for (int a = 0; a < 3; ++a) {
        g.d1[a] = j[a] * jp[a] / g.rho;
        g.d2[a] = (jp[a] * jp[a] + j[a] * jpp[a]) / g.rho - g.d1[a] * g.d1[a] / g.rho;
    }
    return g;
}

}  // namespace

double jastrow_kernel(double x, double side_length) {
    const double a = std::abs(x);
    return a * (1.0 - 2.0 * a * a * a / (side_length * side_length * side_length));
}

SlaterJastrowTrial::SlaterJastrowTrial(const SimulationCell& cell, OrbitalSet orbitals, int n_terms)
    : cell_(cell), orbitals_(std::move(orbitals)), n_terms_(n_terms) {
    if (orbitals_.kind() != OrbitalKind::PlaneWave) throw ConfigError("the Slater-Jastrow trial uses plane waves");
    if (orbitals_.n_up() != cell.n_up() || orbitals_.size() != cell.n_particles())
        throw ConfigError("orbital set does not match the cell's spin populations");
    if (n_terms < 1) throw ConfigError("the Jastrow needs at least the cusp term");
    free_ = Eigen::VectorXd::Zero(2 * (n_terms - 1));
}

void SlaterJastrowTrial::set_free_coefficients(const Eigen::VectorXd& c) {
    if (c.size() != free_.size()) throw InvalidInput("wrong number of Jastrow coefficients");
    if (!c.allFinite()) throw NumericalAbort("non-finite Jastrow coefficients");
    free_ = c;
}

double SlaterJastrowTrial::coefficient(int n, bool same_spin) const {
    if (n == 1) return same_spin ? 0.25 : 0.5;
    if (n < 1 || n > n_terms_) throw InvalidInput("Jastrow term index out of range");
    return free_[2 * (n - 2) + (same_spin ? 0 : 1)];
}

double SlaterJastrowTrial::jastrow(const ParticleConfiguration& config) const {
    if (!jastrow_enabled_) return 0.0;
    double total = 0.0;
    for (int i = 0; i < config.size(); ++i)
        for (int j = i + 1; j < config.size(); ++j) {
            const Vec3 r = min_image_displacement(config.position(i), config.position(j), cell_);
            Vec3 jr;
            for (int a = 0; a < 3; ++a) jr[a] = jastrow_kernel(r[a], cell_.side_length());
            const double u = cell_.rs() * jr.norm();
            const bool same = config.spin(i) == config.spin(j);
            double un = 1.0;
            for (int n = 1; n <= n_terms_; ++n) {
                un *= u;
                total += coefficient(n, same) * un;
            }
        }
    return total;
}

LogAmplitude SlaterJastrowTrial::log_psi(const ParticleConfiguration& config) const {
    const double dk = 2.0 * std::numbers::pi / cell_.side_length();
    cd total = jastrow(config);
    for (int s : {1, -1}) {
        std::vector<int> idx;
        for (int i = 0; i < config.size(); ++i)
            if (config.spin(i) == s) idx.push_back(i);
        const int m = static_cast<int>(idx.size());
        if (m == 0) continue;
        const auto& orbs = s == 1 ? orbitals_.up() : orbitals_.down();
        MatrixXcd a(m, m);
        for (int p = 0; p < m; ++p) {
            const Vec3 r = config.position(idx[static_cast<std::size_t>(p)]);
            for (int q = 0; q < m; ++q) {
                const auto& n = orbs[static_cast<std::size_t>(q)].n;
                const double phase = dk * (n[0] * r[0] + n[1] * r[1] + n[2] * r[2]);
                a(p, q) = cd(std::cos(phase), std::sin(phase));
            }
        }
        const Eigen::PartialPivLU<MatrixXcd> lu(a);
        double sign_phase = lu.permutationP().determinant() < 0 ? std::numbers::pi : 0.0;
        double log_mod = 0.0;
        for (int k = 0; k < m; ++k) {
            const double v = std::abs(lu.matrixLU()(k, k));
            if (!(v >= kSingularPivot)) throw SingularWavefunction("Slater matrix is singular");
            log_mod += std::log(v);
            sign_phase += std::arg(lu.matrixLU()(k, k));
        }
        total += cd(log_mod, sign_phase);
    }
    return {total.real(), wrap_phase(total.imag())};
}

SlaterJastrowTrial::Local SlaterJastrowTrial::local(const ParticleConfiguration& config) const {
    const int n = config.size();
    const double dk = 2.0 * std::numbers::pi / cell_.side_length();
    Local out;
    out.value = log_psi(config);
    out.grad_log = ComplexPositions::Zero(n, 3);
    out.laplacian_log = 0.0;
    out.o = Eigen::VectorXd::Zero(free_.size());

    for (int s : {1, -1}) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (config.spin(i) == s) idx.push_back(i);
        const int m = static_cast<int>(idx.size());
        if (m == 0) continue;
        const auto& orbs = s == 1 ? orbitals_.up() : orbitals_.down();
        MatrixXcd a(m, m);
        Eigen::MatrixXd k(m, 3);
        for (int q = 0; q < m; ++q)
            for (int c = 0; c < 3; ++c) k(q, c) = dk * orbs[static_cast<std::size_t>(q)].n[static_cast<std::size_t>(c)];
        for (int p = 0; p < m; ++p) {
            const Vec3 r = config.position(idx[static_cast<std::size_t>(p)]);
            for (int q = 0; q < m; ++q) {
                const double phase = k.row(q).dot(r);
                a(p, q) = cd(std::cos(phase), std::sin(phase));
            }
        }
        const MatrixXcd b = a.partialPivLu().inverse();
        const MatrixXcd ba = b.transpose().cwiseProduct(a);  // (p, q) -> B_qp A_pq
        for (int p = 0; p < m; ++p) {
            const int i = idx[static_cast<std::size_t>(p)];
            for (int c = 0; c < 3; ++c) {
                cd g = 0.0, h = 0.0;
                for (int q = 0; q < m; ++q) {
                    g += ba(p, q) * cd(0.0, k(q, c));
                    h -= ba(p, q) * k(q, c) * k(q, c);
                }
                out.grad_log(i, c) += g;
                out.laplacian_log += h - g * g;
            }
        }
    }

    if (jastrow_enabled_) {
        const double rs = cell_.rs();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const Vec3 r = min_image_displacement(config.position(i), config.position(j), cell_);
                const PairGeometry g = pair_geometry(r, cell_.side_length());
                const bool same = config.spin(i) == config.spin(j);
                const double u = rs * g.rho;
                // f(u) = sum c_n u^n; derivatives with respect to rho carry factors of r_s
                double f1 = 0.0, f2 = 0.0, un = 1.0;
                for (int p = 1; p <= n_terms_; ++p) {
                    const double c = coefficient(p, same);
                    f1 += c * p * un * rs;
                    if (p >= 2) f2 += c * p * (p - 1) * (un / u) * rs * rs;
                    un *= u;
                    if (p >= 2) out.o[2 * (p - 2) + (same ? 0 : 1)] += un;
                }
                for (int a = 0; a < 3; ++a) {
                    const double d = f1 * g.d1[a];
                    out.grad_log(i, a) += d;
                    out.grad_log(j, a) -= d;
                    out.laplacian_log += 2.0 * (f2 * g.d1[a] * g.d1[a] + f1 * g.d2[a]);
                }
            }
    }
    cd sq = 0.0;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) sq += out.grad_log(i, a) * out.grad_log(i, a);
    out.kinetic = -(out.laplacian_log + sq) / (2.0 * cell_.rs() * cell_.rs());
    return out;
}

cd SlaterJastrowTrial::local_energy(const ParticleConfiguration& config, const EwaldContext* ewald) const {
    cd e = local(config).kinetic;
    if (ewald) e += potential_energy(config, *ewald, cell_);
    return e;
}

Positions free_propagator_displacement(int n, double time_step, double rs, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(time_step) / rs);
    Positions d(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) d(i, a) = gauss(rng);
    return d;
}

DmcPopulation::DmcPopulation(const SlaterJastrowTrial& trial, const EwaldContext* ewald,
                             std::vector<ParticleConfiguration> start, double time_step, std::uint64_t seed,
                             int threads)
    : trial_(trial), ewald_(ewald), dtau_(time_step), target_(static_cast<int>(start.size())), threads_(threads),
      rng_(walker_rng(seed, ~std::uint64_t{0})) {
    if (!(time_step > 0.0)) throw ConfigError("DMC time step must be positive");
    if (start.empty()) throw ConfigError("DMC needs at least one walker");
    for (std::size_t k = 0; k < start.size(); ++k)
        walkers_.push_back({std::move(start[k]), {}, 0.0, 0.0, 1.0, walker_rng(seed, k)});
    parallel_for(target_, threads_, [&](int k) { evaluate(walkers_[static_cast<std::size_t>(k)]); });
    double e = 0.0;
    for (const auto& w : walkers_) e += w.e_loc.real();
    e_trial_ = e / target_;
}

void DmcPopulation::evaluate(DmcWalker& w) const {
    w.log_psi = trial_.log_psi(w.config);
    w.potential = ewald_ ? potential_energy(w.config, *ewald_, trial_.cell()) : 0.0;
    w.e_loc = trial_.local(w.config).kinetic + w.potential;
}

DmcStepStats DmcPopulation::step() {
    const auto nw = walkers_.size();
    std::vector<double> signed_factor(nw, 0.0);
    std::vector<double> old_weight(nw);
    for (std::size_t k = 0; k < nw; ++k) old_weight[k] = walkers_[k].weight;
    const int n = trial_.cell().n_particles();
    const double rs = trial_.cell().rs();

    parallel_for(static_cast<int>(nw), threads_, [&](int k) {
        DmcWalker& w = walkers_[static_cast<std::size_t>(k)];
        const Positions d = free_propagator_displacement(n, dtau_, rs, w.rng);
        std::array<ParticleConfiguration, 2> mirror{w.config, w.config};
        mirror[0].set_positions(w.config.positions() + d);
        mirror[1].set_positions(w.config.positions() - d);
        std::array<double, 2> wt{0.0, 0.0};
        std::array<LogAmplitude, 2> amp;
        std::array<double, 2> pot{0.0, 0.0};
        for (int m = 0; m < 2; ++m) {
            try {
                amp[m] = trial_.log_psi(mirror[m]);
                pot[m] = ewald_ ? potential_energy(mirror[m], *ewald_, trial_.cell()) : 0.0;
            } catch (const SingularWavefunction&) {
                continue;
            } catch (const Divergence&) {
                continue;
            }
            const double ratio = std::exp(amp[m].log_modulus - w.log_psi.log_modulus) *
                                 std::cos(amp[m].phase - w.log_psi.phase);
            wt[m] = ratio * std::exp(-(pot[m] + w.potential) * dtau_ / 2.0);
        }
        // the average is formed from the signed weights; node crossings are zeroed afterwards
        const double average = 0.5 * (wt[0] + wt[1]);
        signed_factor[static_cast<std::size_t>(k)] = average;
        const double p0 = std::max(wt[0], 0.0), p1 = std::max(wt[1], 0.0);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double u = uni(w.rng);
        if (p0 + p1 <= 0.0 || average <= 0.0) {
            w.weight = 0.0;
            return;
        }
        const int pick = u * (p0 + p1) < p0 ? 0 : 1;
        w.config = std::move(mirror[pick]);
        w.log_psi = amp[pick];
        w.potential = pot[pick];
        w.e_loc = trial_.local(w.config).kinetic + w.potential;
        w.weight *= average * std::exp(e_trial_ * dtau_);
    });

    DmcStepStats st;
    st.trial_energy = e_trial_;
    double gf = 0.0, old_total = 0.0;
    for (std::size_t k = 0; k < nw; ++k) {
        gf += old_weight[k] * signed_factor[k];
        old_total += old_weight[k];
    }
    double new_total = 0.0, e_sum = 0.0;
    for (std::size_t k = 0; k < nw; ++k) {
        const auto& w = walkers_[k];
        if (w.weight > 0.0) {
            new_total += w.weight;
            e_sum += w.weight * w.e_loc.real();
        } else {
            ++st.killed;
        }
    }
    st.growth_factor = gf / old_total;
    if (!(new_total > 0.0)) throw NumericalAbort("DMC population went extinct");
    if (!(st.growth_factor > 0.0)) throw NumericalAbort("non-positive DMC growth factor");
    st.e_growth = -std::log(st.growth_factor) / dtau_;
    st.e_mixed = e_sum / new_total;
    st.mean_weight = new_total / double(nw);
    resample();
    st.population = static_cast<int>(walkers_.size());
    ++steps_;
    // E_T follows a running average of the growth estimate
    e_trial_ += (st.e_growth - e_trial_) / double(std::min<long>(steps_, 100));
    return st;
}

void DmcPopulation::resample() {
    std::vector<double> cum(walkers_.size());
    double total = 0.0;
    for (std::size_t k = 0; k < walkers_.size(); ++k) {
        total += walkers_[k].weight;
        cum[k] = total;
    }
    // systematic resampling: one uniform offset, evenly spaced pointers
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double offset = uni(rng_);
    std::vector<DmcWalker> next;
    next.reserve(static_cast<std::size_t>(target_));
    std::size_t src = 0;
    for (int k = 0; k < target_; ++k) {
        const double pointer = (k + offset) * total / target_;
        while (src + 1 < cum.size() && cum[src] <= pointer) ++src;
        next.push_back(walkers_[src]);
        next.back().weight = 1.0;
    }
    // copies must not share random streams
    const std::uint64_t stream = rng_();
    for (std::size_t k = 0; k < next.size(); ++k) next[k].rng = walker_rng(stream, k);
    walkers_ = std::move(next);
}

namespace {

std::vector<ParticleConfiguration> vmc_start(const SlaterJastrowTrial& trial, int walkers, std::uint64_t seed,
                                             int threads, int burn_in) {
    WalkerEnsemble ens(trial.cell(), walkers, seed);
    ens.set_threads(threads);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return trial.log_psi(c); };
    ens.refresh(fn);
    ens.burn_in(fn, burn_in);
    std::vector<ParticleConfiguration> out;
    for (const auto& w : ens.walkers()) out.push_back(w.config);
    return out;
}

}  // namespace

DmcResult run_dmc(const SlaterJastrowTrial& trial, const EwaldContext* ewald, const DmcSettings& settings,
                  const DmcObserver& observer) {
    if (settings.walkers < 1 || settings.steps < 1 || settings.equilibration < 0)
        throw ConfigError("DMC needs positive walker and step counts");
    const double rs = trial.cell().rs();
    const double dtau = settings.time_step > 0.0 ? settings.time_step : 0.01 * rs * rs;
    DmcPopulation pop(trial, ewald, vmc_start(trial, settings.walkers, settings.seed, settings.threads, 100), dtau,
                      settings.seed + 1, settings.threads);
    DmcResult res;
    const int n = trial.cell().n_particles();
    std::vector<double> growth, mixed;
    for (long s = 0; s < settings.equilibration + settings.steps; ++s) {
        const DmcStepStats st = pop.step();
        const bool production = s >= settings.equilibration;
        if (observer) observer(s, production, st);
        if (!production) continue;
        res.trace.push_back(st);
        growth.push_back(st.e_growth / n);
        mixed.push_back(st.e_mixed / n);
    }
    res.growth = blocking_analysis(growth);
    res.mixed = blocking_analysis(mixed);
    return res;
}

VmcEstimate vmc_energy(const SlaterJastrowTrial& trial, const EwaldContext* ewald, int walkers, int burn_in,
                       int sweeps, std::uint64_t seed, int threads) {
    WalkerEnsemble ens(trial.cell(), walkers, seed);
    ens.set_threads(threads);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return trial.log_psi(c); };
    ens.refresh(fn);
    ens.burn_in(fn, burn_in);
    std::vector<double> series;
    SweepStats acc;
    const int n = trial.cell().n_particles();
    for (int s = 0; s < sweeps; ++s) {
        acc += ens.sweep(fn);
        std::vector<double> e(static_cast<std::size_t>(ens.size()));
        parallel_for(ens.size(), threads, [&](int k) {
            e[static_cast<std::size_t>(k)] =
                trial.local_energy(ens.walkers()[static_cast<std::size_t>(k)].config, ewald).real();
        });
        series.push_back(std::accumulate(e.begin(), e.end(), 0.0) / double(e.size()) / n);
    }
    return {blocking_analysis(series), acc.rate()};
}

JastrowOptimization optimize_jastrow(SlaterJastrowTrial& trial, const EwaldContext* ewald, int iterations,
                                     int walkers, int sweeps_per_iteration, const SrSettings& sr, std::uint64_t seed,
                                     int threads) {
    JastrowOptimization res;
    WalkerEnsemble ens(trial.cell(), walkers, seed);
    ens.set_threads(threads);
    const LogPsiFn fn = [&](const ParticleConfiguration& c) { return trial.log_psi(c); };
    ens.refresh(fn);
    ens.burn_in(fn, 100);
    const int n = trial.cell().n_particles();
    res.best = trial.free_coefficients();
    res.best_energy = std::numeric_limits<double>::infinity();
    double best_upper = std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations; ++it) {
        ens.refresh(fn);
        ens.sweep(fn);
        EstimatorAccumulator acc(trial.free_coefficients().size());
        std::vector<double> series;
        for (int s = 0; s < sweeps_per_iteration; ++s) {
            ens.sweep(fn);
            std::vector<SlaterJastrowTrial::Local> loc(static_cast<std::size_t>(ens.size()));
            std::vector<double> pot(loc.size());
            parallel_for(ens.size(), threads, [&](int k) {
                const auto& c = ens.walkers()[static_cast<std::size_t>(k)].config;
                loc[static_cast<std::size_t>(k)] = trial.local(c);
                pot[static_cast<std::size_t>(k)] = ewald ? potential_energy(c, *ewald, trial.cell()) : 0.0;
            });
            double e_mean = 0.0;
            for (std::size_t k = 0; k < loc.size(); ++k) {
                const cd e = loc[k].kinetic + pot[k];
                acc.add(e, loc[k].o.cast<cd>());
                e_mean += e.real();
            }
            series.push_back(e_mean / double(loc.size()) / n);
        }
        const auto b = blocking_analysis(series);
        res.energies.push_back(b.mean);
        res.errors.push_back(b.error);
        // the coefficients that produced the lowest upper confidence bound are kept
        if (b.mean + b.error < best_upper) {
            best_upper = b.mean + b.error;
            res.best = trial.free_coefficients();
            res.best_energy = b.mean;
        }
        Eigen::VectorXd c = trial.free_coefficients();
        try {
            sr_update(c, acc, sr);
            trial.set_free_coefficients(c);
        } catch (const NumericalAbort&) {
            trial.set_free_coefficients(res.best);
        }
    }
    trial.set_free_coefficients(res.best);
    return res;
}

}  // namespace heg
