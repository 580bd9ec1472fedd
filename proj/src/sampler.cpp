#include "heg/sampler.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace heg {

std::mt19937_64 walker_rng(std::uint64_t master_seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

SweepStats& SweepStats::operator+=(const SweepStats& o) {
    accepted += o.accepted;
    proposed += o.proposed;
    singular += o.singular;
    return *this;
}

double acceptance_probability(double log_modulus_old, double log_modulus_new) {
    const double log_ratio = 2.0 * (log_modulus_new - log_modulus_old);
    return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double adjust_step_size(double sigma, double rate, double target, double side_length, double kappa) {
    const double s = sigma * std::exp(kappa * (rate - target));
    return std::clamp(s, 1e-4 * side_length, 0.5 * side_length);
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                // static partition keeps the per-walker work assignment deterministic
                for (int i = w; i < count; i += workers) body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

WalkerEnsemble::WalkerEnsemble(const SimulationCell& cell, int n_walkers, std::uint64_t seed, double step_size)
    : cell_(cell), step_size_(step_size > 0.0 ? step_size : 0.2 * cell.mean_spacing()) {
    if (n_walkers < 1) throw ConfigError("need at least one walker");
    walkers_.reserve(static_cast<std::size_t>(n_walkers));
    for (int w = 0; w < n_walkers; ++w) {
        auto rng = walker_rng(seed, static_cast<std::uint64_t>(w));
        auto config = random_configuration(cell, rng);
        walkers_.push_back({std::move(config), {}, std::move(rng)});
    }
}

WalkerEnsemble::WalkerEnsemble(const SimulationCell& cell, std::vector<ParticleConfiguration> configs,
                               std::uint64_t seed, double step_size)
    : cell_(cell), step_size_(step_size > 0.0 ? step_size : 0.2 * cell.mean_spacing()) {
    if (configs.empty()) throw ConfigError("need at least one walker");
    for (std::size_t w = 0; w < configs.size(); ++w)
        walkers_.push_back({std::move(configs[w]), {}, walker_rng(seed, w)});
}

void WalkerEnsemble::refresh(const LogPsiFn& log_psi) {
    parallel_for(size(), threads_, [&](int i) {
        auto& w = walkers_[static_cast<std::size_t>(i)];
        for (int attempt = 0;; ++attempt) {
            try {
                w.log_psi = log_psi(w.config);
                return;
            } catch (const SingularWavefunction&) {
                if (attempt >= 100) throw;
                w.config = random_configuration(cell_, w.rng);
            }
        }
    });
}

SweepStats WalkerEnsemble::move_walker(Walker& w, const LogPsiFn& log_psi) const {
    SweepStats stats;
    std::normal_distribution<double> gauss(0.0, step_size_);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto attempt = [&](ParticleConfiguration trial) {
        ++stats.proposed;
        LogAmplitude next;
        try {
            next = log_psi(trial);
        } catch (const SingularWavefunction&) {
            ++stats.singular;
            uni(w.rng);  // keep the stream aligned with the accepted/rejected branch
            return;
        }
        if (uni(w.rng) < acceptance_probability(w.log_psi.log_modulus, next.log_modulus)) {
            w.config = std::move(trial);
            w.log_psi = next;
            ++stats.accepted;
        }
    };
    const int n = w.config.size();
    if (all_particle_) {
        Positions p = w.config.positions();
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) p(i, a) += gauss(w.rng);
        ParticleConfiguration trial = w.config;
        trial.set_positions(p);
        attempt(std::move(trial));
        return stats;
    }
    for (int i = 0; i < n; ++i) {
        const Vec3 r = w.config.position(i) + Vec3(gauss(w.rng), gauss(w.rng), gauss(w.rng));
        ParticleConfiguration trial = w.config;
        trial.set_position(i, r);
        attempt(std::move(trial));
    }
    return stats;
}

SweepStats WalkerEnsemble::sweep(const LogPsiFn& log_psi) {
    std::vector<SweepStats> per(walkers_.size());
    parallel_for(size(), threads_, [&](int i) {
        per[static_cast<std::size_t>(i)] = move_walker(walkers_[static_cast<std::size_t>(i)], log_psi);
    });
    SweepStats total;
    for (const auto& s : per) total += s;
    return total;
}

double WalkerEnsemble::tune_step_size(double rate, double target) {
    if (!(target > 0.0 && target < 1.0)) throw ConfigError("target acceptance must lie in (0, 1)");
    step_size_ = adjust_step_size(step_size_, rate, target, cell_.side_length());
    return step_size_;
}

SweepStats WalkerEnsemble::burn_in(const LogPsiFn& log_psi, int sweeps, double target) {
    SweepStats last;
    for (int s = 0; s < sweeps; ++s) {
        last = sweep(log_psi);
        tune_step_size(last.rate(), target);
    }
    return last;
}

}  // namespace heg
