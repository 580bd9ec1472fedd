#include "heg/runner.hpp"

#include "heg/dmc.hpp"
#include "heg/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace heg {

namespace fs = std::filesystem;
using nlohmann::json;

SimulationCell make_cell(const SystemConfig& system) { return {system.n_up(), system.n_down(), system.rs}; }

OrbitalSet make_orbitals(const SystemConfig& system, const SimulationCell& cell) {
    if (system.orbitals == OrbitalKind::PlaneWave) return fill_shells(cell, system.k_total);
    const double alpha = system.gaussian_alpha ? *system.gaussian_alpha : default_gaussian_alpha(cell);
    return gaussian_bcc_orbitals(cell, alpha, system.image_cutoff);
}

Wavefunction make_wavefunction(const ExperimentConfig& config) {
    const SimulationCell cell = make_cell(config.system);
    OrbitalSet orbitals = make_orbitals(config.system, cell);
    const bool gaussian = orbitals.kind() == OrbitalKind::GaussianBcc;
    auto params = NetworkParameters::initialize(config.network.shape, gaussian, orbitals.alpha(), config.network.seed,
                                                config.network.output_scale);
    return {cell, std::move(orbitals), std::move(params)};
}

std::unique_ptr<EwaldContext> make_ewald(const SystemConfig& system, const SimulationCell& cell) {
    if (!system.interaction) return nullptr;
    return std::make_unique<EwaldContext>(build_context(cell, system.ewald_tolerance));
}

namespace {

LogPsiFn log_psi_of(const Wavefunction& wf) {
    return [&wf](const ParticleConfiguration& c) { return wf.log_psi(c); };
}

WalkerEnsemble make_ensemble(const ExperimentConfig& config, const SimulationCell& cell) {
    WalkerEnsemble ens(cell, config.sampler.walkers, config.seed, config.sampler.step_size.value_or(0.0));
    ens.set_all_particle_moves(config.sampler.all_particle);
    ens.set_threads(config.threads);
    return ens;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

}  // namespace

VmcIteration vmc_iteration(Wavefunction& wf, WalkerEnsemble& ensemble, const EwaldContext* ewald,
                           const ExperimentConfig& config, long iteration, std::ostream* warnings) {
    const LogPsiFn fn = log_psi_of(wf);
    SweepStats stats;
    for (int s = 0; s < config.sampler.sweeps_per_sample; ++s) stats += ensemble.sweep(fn);

    const int nw = ensemble.size();
    std::vector<DerivativeBundle> bundles(static_cast<std::size_t>(nw));
    std::vector<cd> energies(static_cast<std::size_t>(nw));
    parallel_for(nw, config.threads, [&](int k) {
        const auto& c = ensemble.walkers()[static_cast<std::size_t>(k)].config;
        auto& b = bundles[static_cast<std::size_t>(k)];
        b = wf.derivatives(c, true);
        energies[static_cast<std::size_t>(k)] = local_energy(b, c, wf, ewald);
    });

    const int n = wf.cell().n_particles();
    EstimatorAccumulator acc(static_cast<Eigen::Index>(wf.num_parameters()));
    double sum = 0.0, sum_im = 0.0;
    for (int k = 0; k < nw; ++k) {
        const cd e = energies[static_cast<std::size_t>(k)];
        if (!std::isfinite(e.real()) || !std::isfinite(e.imag()))
            throw NumericalAbort("non-finite local energy at iteration " + std::to_string(iteration));
        acc.add(e, bundles[static_cast<std::size_t>(k)].param_log_derivs);
        sum += e.real();
        sum_im += e.imag();
    }
    VmcIteration it;
    it.iteration = iteration;
    it.acceptance = stats.rate();
    it.energy = sum / nw / n;
    it.energy_imag = sum_im / nw / n;
    double var = 0.0;
    for (const cd& e : energies) var += (e.real() - sum / nw) * (e.real() - sum / nw);
    var /= nw;
    it.variance = var / (double(n) * n);
    it.error = nw > 1 ? std::sqrt(var / (nw - 1)) / n : 0.0;

    if (nw >= 2) {
        const Eigen::VectorXd force = estimate_force(acc);
        it.force_norm = force.norm();
        SrSettings sr;
        sr.learning_rate = config.learning_rate();
        sr.diag_shift = config.optimizer.diag_shift;
        sr.cg_tolerance = config.optimizer.cg_tolerance;
        sr.cg_max_iterations = config.optimizer.cg_max_iterations;
        sr.max_update_norm = config.optimizer.max_update_norm;
        // the orbital width is one well-sampled direction; the cap targets the network
        if (wf.params().has_alpha()) sr.uncapped.push_back(static_cast<Eigen::Index>(wf.params().alpha_offset()));
        const QgtOperator op(acc);
        Eigen::VectorXd theta = wf.params().values();
        try {
            const SrStep step = sr_update(theta, force, [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return op(v); },
                                          sr);
            it.cg_iterations = step.solve.iterations;
            if (!step.warning.empty() && warnings) *warnings << "iteration " << iteration << ": " << step.warning << '\n';
            wf.params().values() = theta;
        } catch (const NumericalAbort& e) {
            if (warnings) *warnings << "iteration " << iteration << ": " << e.what() << '\n';
        }
        ensemble.refresh(fn);
    }
    if (wf.params().has_alpha()) it.alpha = wf.params().alpha();
    return it;
}

Measurement measure(const Wavefunction& wf, WalkerEnsemble& ensemble, const EwaldContext* ewald,
                    const ExperimentConfig& config) {
    const LogPsiFn fn = log_psi_of(wf);
    const auto& cell = wf.cell();
    const int nw = ensemble.size();
    PairHistogram g2(cell, config.observables.g2_bins, nw);
    StructureFactor sk(cell, config.observables.sk_n2_max, nw);
    std::vector<double> series;
    SweepStats stats;
    for (int s = 0; s < config.observables.sweeps; ++s) {
        stats += ensemble.sweep(fn);
        std::vector<double> e(static_cast<std::size_t>(nw));
        parallel_for(nw, config.threads, [&](int k) {
            e[static_cast<std::size_t>(k)] =
                local_energy(ensemble.walkers()[static_cast<std::size_t>(k)].config, wf, ewald).real();
        });
        for (const auto& w : ensemble.walkers()) {
            g2.accumulate(w.config);
            sk.accumulate(w.config);
        }
        series.push_back(std::accumulate(e.begin(), e.end(), 0.0) / nw / cell.n_particles());
    }
    Measurement m;
    if (series.empty()) throw ConfigError("observables.sweeps must be positive to measure");
    m.energy = blocking_analysis(series);
    m.acceptance = stats.rate();
    m.g2 = g2.normalize();
    m.sk = sk.evaluate(config.observables.sk_raw);
    return m;
}

Checkpoint make_checkpoint(const Wavefunction& wf, const WalkerEnsemble& ensemble, const ExperimentConfig& config,
                           long iteration) {
    Checkpoint ck;
    ck.config_hash = config_hash(config);
    ck.iteration = iteration;
    ck.step_size = ensemble.step_size();
    const auto& values = wf.params().values();
    for (const auto& b : wf.params().layout().blocks()) {
        NamedArray a;
        a.name = "param/" + b.name;
        for (int s : b.shape) a.shape.push_back(s);
        a.data.assign(values.data() + b.offset, values.data() + b.offset + b.size);
        ck.arrays.push_back(std::move(a));
    }
    const auto nw = static_cast<std::int64_t>(ensemble.size());
    const auto n = static_cast<std::int64_t>(wf.cell().n_particles());
    NamedArray pos{"walkers/positions", {nw, n, 3}, {}};
    NamedArray spins{"walkers/spins", {nw, n}, {}};
    for (const auto& w : ensemble.walkers()) {
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) pos.data.push_back(w.config.positions()(i, a));
            spins.data.push_back(w.config.spin(i));
        }
        std::ostringstream rng;
        rng << w.rng;
        ck.rng_states.push_back(rng.str());
    }
    ck.arrays.push_back(std::move(pos));
    ck.arrays.push_back(std::move(spins));
    return ck;
}

long restore_checkpoint(const Checkpoint& ck, Wavefunction& wf, WalkerEnsemble& ensemble) {
    auto& values = wf.params().values();
    for (const auto& b : wf.params().layout().blocks()) {
        const auto& a = ck.array("param/" + b.name);
        if (a.data.size() != b.size) throw ConfigError("checkpoint block " + b.name + " has the wrong size");
        std::copy(a.data.begin(), a.data.end(), values.data() + b.offset);
    }
    const auto& pos = ck.array("walkers/positions");
    const auto& spins = ck.array("walkers/spins");
    const int n = wf.cell().n_particles();
    if (pos.shape.size() != 3 || pos.shape[1] != n || pos.shape[0] != ensemble.size() ||
        static_cast<int>(ck.rng_states.size()) != ensemble.size())
        throw ConfigError("checkpoint walker layout does not match the configuration");
    for (int w = 0; w < ensemble.size(); ++w) {
        Positions p(n, 3);
        std::vector<int> s(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) p(i, a) = pos.data[static_cast<std::size_t>((w * n + i) * 3 + a)];
            s[static_cast<std::size_t>(i)] = static_cast<int>(spins.data[static_cast<std::size_t>(w * n + i)]);
        }
        auto& walker = ensemble.walkers()[static_cast<std::size_t>(w)];
        walker.config = ParticleConfiguration(wf.cell(), std::move(p), std::move(s));
        std::istringstream rng(ck.rng_states[static_cast<std::size_t>(w)]);
        rng >> walker.rng;
    }
    ensemble.set_step_size(ck.step_size);
    return ck.iteration;
}

namespace {

void write_observables(const fs::path& dir, const Measurement& m) {
    std::ofstream g(dir / "g2.csv");
    write_g2_csv(g, m.g2);
    std::ofstream s(dir / "sk.csv");
    write_sk_csv(s, m.sk);
}

json trace_line(const VmcIteration& it) {
    json j = {{"iteration", it.iteration}, {"energy", it.energy},           {"error", it.error},
            {"acceptance", it.acceptance}, {"force_norm", it.force_norm}, {"energy_imag", it.energy_imag},
            {"variance", it.variance},     {"cg_iterations", it.cg_iterations}};
    if (it.alpha) j["alpha"] = *it.alpha;
    return j;
}

Checkpoint load_matching(const std::string& path, const ExperimentConfig& config, bool force) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.config_hash != config_hash(config) && !force)
        throw ConfigError("checkpoint " + path + " was written with a different configuration (use --force to load)");
    return ck;
}

}  // namespace

int run_vmc(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    const fs::path dir(config.output);
    fs::create_directories(dir);
    {
        std::ofstream(dir / "config.yaml") << dump_config(config);
    }
    Wavefunction wf = make_wavefunction(config);
    const auto ewald = make_ewald(config.system, wf.cell());
    WalkerEnsemble ens = make_ensemble(config, wf.cell());
    const LogPsiFn fn = log_psi_of(wf);

    long start = 0;
    if (options.resume) {
        start = restore_checkpoint(load_matching(*options.resume, config, options.force), wf, ens);
        ens.refresh(fn);
        log << "resumed from " << *options.resume << " at iteration " << start << '\n';
    } else {
        ens.refresh(fn);
        const auto burn = ens.burn_in(fn, config.sampler.burn_in, config.sampler.target_acceptance);
        log << "burn-in: " << config.sampler.burn_in << " sweeps, acceptance " << burn.rate() << ", step "
            << ens.step_size() << '\n';
    }
    log << "parameters: " << wf.num_parameters() << ", learning rate " << config.learning_rate() << '\n';

    std::ofstream trace(dir / "energy_trace.jsonl", options.resume ? std::ios::app : std::ios::trunc);
    const fs::path ckpt = dir / "checkpoint.bin";
    for (long it = start; it < config.optimizer.steps; ++it) {
        const VmcIteration r = vmc_iteration(wf, ens, ewald.get(), config, it, &log);
        trace << trace_line(r).dump() << '\n' << std::flush;
        log << "iter " << it << "  E/N = " << r.energy << " +- " << r.error << "  acc " << r.acceptance << "  |F| "
            << r.force_norm << '\n';
        if ((it + 1) % config.optimizer.checkpoint_every == 0)
            save_checkpoint(ckpt.string(), make_checkpoint(wf, ens, config, it + 1));
    }
    const long done = std::max<long>(start, config.optimizer.steps);
    save_checkpoint(ckpt.string(), make_checkpoint(wf, ens, config, done));

    if (config.observables.sweeps > 0) {
        const Measurement m = measure(wf, ens, ewald.get(), config);
        write_observables(dir, m);
        write_json_file(dir / "result.json", {{"energy", m.energy.mean},
                                              {"error", m.energy.error},
                                              {"acceptance", m.acceptance},
                                              {"iterations", done},
                                              {"unit", "Hartree per particle"}});
        log << "final E/N = " << m.energy.mean << " +- " << m.energy.error << '\n';
    }
    return kExitOk;
}

int run_measure(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    const fs::path dir(config.output);
    fs::create_directories(dir);
    const std::string path = options.resume ? *options.resume : (dir / "checkpoint.bin").string();
    Wavefunction wf = make_wavefunction(config);
    const auto ewald = make_ewald(config.system, wf.cell());
    WalkerEnsemble ens = make_ensemble(config, wf.cell());
    const long iteration = restore_checkpoint(load_matching(path, config, options.force), wf, ens);
    ens.refresh(log_psi_of(wf));
    const Measurement m = measure(wf, ens, ewald.get(), config);
    write_observables(dir, m);
    write_json_file(dir / "result.json", {{"energy", m.energy.mean},
                                          {"error", m.energy.error},
                                          {"acceptance", m.acceptance},
                                          {"iterations", iteration},
                                          {"unit", "Hartree per particle"}});
    log << "E/N = " << m.energy.mean << " +- " << m.energy.error << '\n';
    return kExitOk;
}

int run_dmc_command(const ExperimentConfig& config, std::ostream& log) {
    if (!config.dmc) throw ConfigError("dmc requires a 'dmc' section describing the trial state");
    const DmcConfig& d = *config.dmc;
    const fs::path dir(config.output);
    fs::create_directories(dir);
    const SimulationCell cell = make_cell(config.system);
    SlaterJastrowTrial trial(cell, fill_shells(cell, config.system.k_total), d.jastrow_terms);
    const auto ewald = make_ewald(config.system, cell);

    if (d.jastrow_iterations > 0 && trial.free_coefficients().size() > 0) {
        SrSettings sr;
        sr.learning_rate = d.jastrow_learning_rate;
        sr.diag_shift = config.optimizer.diag_shift;
        sr.dense = true;
        const auto opt = optimize_jastrow(trial, ewald.get(), d.jastrow_iterations, d.jastrow_walkers,
                                          d.jastrow_sweeps, sr, config.seed + 11, config.threads);
        log << "Jastrow optimized: best E/N = " << opt.best_energy << '\n';
    }
    const VmcEstimate vmc = vmc_energy(trial, ewald.get(), d.jastrow_walkers, 100, d.vmc_sweeps, config.seed + 17,
                                       config.threads);
    log << "Slater-Jastrow VMC E/N = " << vmc.energy.mean << " +- " << vmc.energy.error << '\n';

    DmcSettings settings;
    settings.walkers = d.walkers;
    settings.time_step = d.time_step.value_or(0.0);
    settings.equilibration = d.equilibration;
    settings.steps = d.steps;
    settings.seed = config.seed;
    settings.threads = config.threads;
    std::ofstream trace(dir / "dmc_trace.jsonl", std::ios::trunc);
    const int n = cell.n_particles();
    const DmcResult res = run_dmc(trial, ewald.get(), settings, [&](long step, bool production, const DmcStepStats& s) {
        trace << json{{"step", step},
                      {"production", production},
                      {"e_growth", s.e_growth / n},
                      {"e_mixed", s.e_mixed / n},
                      {"population", s.population},
                      {"mean_weight", s.mean_weight},
                      {"killed", s.killed},
                      {"trial_energy", s.trial_energy / n}}
                     .dump()
              << '\n';
    });
    std::vector<double> coeffs(trial.free_coefficients().data(),
                               trial.free_coefficients().data() + trial.free_coefficients().size());
    write_json_file(dir / "dmc_result.json", {{"vmc_energy", vmc.energy.mean},
                                              {"vmc_error", vmc.energy.error},
                                              {"mixed_energy", res.mixed.mean},
                                              {"mixed_error", res.mixed.error},
                                              {"growth_energy", res.growth.mean},
                                              {"growth_error", res.growth.error},
                                              {"jastrow_coefficients", coeffs},
                                              {"unit", "Hartree per particle"}});
    log << "DMC mixed E/N = " << res.mixed.mean << " +- " << res.mixed.error << ", growth E/N = " << res.growth.mean
        << " +- " << res.growth.error << '\n';
    return kExitOk;
}

}  // namespace heg
