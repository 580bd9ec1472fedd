#include "heg/observables.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

namespace heg {

namespace {

double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / double(x.size());
}

SeriesStats column_stats(const std::vector<std::vector<double>>& series, std::size_t width) {
    SeriesStats st;
    st.mean.assign(width, 0.0);
    st.error.assign(width, 0.0);
    std::vector<double> col(series.size());
    for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t t = 0; t < series.size(); ++t) col[t] = series[t][c];
        const auto b = blocking_analysis(col);
        st.mean[c] = b.mean;
        st.error[c] = b.error;
    }
    return st;
}

}  // namespace

BlockingResult blocking_analysis(const std::vector<double>& series) {
    BlockingResult res;
    if (series.empty()) throw InvalidState("blocking analysis of an empty series");
    res.mean = mean_of(series);
    if (series.size() < 2) return res;

    std::vector<double> x = series;
    std::vector<double> err_of_err;
    while (x.size() >= 2) {
        const double m = mean_of(x);
        double var = 0.0;
        for (double v : x) var += (v - m) * (v - m);
        const double n = double(x.size());
        var /= n - 1.0;
        const double err = std::sqrt(var / n);
        res.errors_by_level.push_back(err);
        err_of_err.push_back(err / std::sqrt(2.0 * (n - 1.0)));
        std::vector<double> next(x.size() / 2);
        for (std::size_t k = 0; k < next.size(); ++k) next[k] = 0.5 * (x[2 * k] + x[2 * k + 1]);
        x = std::move(next);
    }
    // levels with fewer than 8 blocks are too noisy to define a plateau
    const int usable = static_cast<int>(res.errors_by_level.size());
    for (int l = 0; l + 1 < usable; ++l) {
        if ((series.size() >> (l + 1)) < 8) break;
        if (res.errors_by_level[l + 1] <= res.errors_by_level[l] + err_of_err[static_cast<std::size_t>(l)]) {
            res.level = l;
            res.error = res.errors_by_level[static_cast<std::size_t>(l)];
            res.plateau = true;
            return res;
        }
    }
    const auto it = std::max_element(res.errors_by_level.begin(), res.errors_by_level.end());
    res.level = static_cast<int>(it - res.errors_by_level.begin());
    res.error = *it;
    return res;
}

PairHistogram::PairHistogram(const SimulationCell& cell, int bins, int batch_size)
    : side_(cell.side_length()), volume_(cell.volume()), n_(cell.n_particles()), bins_(bins),
      width_(0.5 * cell.side_length() / bins), batch_size_(batch_size) {
    if (bins < 1) throw ConfigError("g(r) needs at least one bin");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    total_.assign(static_cast<std::size_t>(bins), 0.0);
    batch_.assign(static_cast<std::size_t>(bins), 0.0);
}

void PairHistogram::accumulate(const ParticleConfiguration& config) {
    if (config.size() != n_) throw InvalidInput("configuration does not match the histogram's cell");
    const double half = 0.5 * side_;
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) {
            Vec3 r;
            for (int a = 0; a < 3; ++a) r[a] = min_image(config.position(i)[a] - config.position(j)[a], side_);
            const double d = r.norm();
            if (d > half) continue;
            const int b = std::min(bins_ - 1, static_cast<int>(d / width_));
            batch_[static_cast<std::size_t>(b)] += 1.0;
            total_[static_cast<std::size_t>(b)] += 1.0;
        }
    ++samples_;
    if (++in_batch_ == batch_size_) flush();
}

void PairHistogram::flush() {
    if (in_batch_ == 0) return;
    std::vector<double> row(batch_.size());
    for (std::size_t b = 0; b < batch_.size(); ++b) row[b] = batch_[b] / in_batch_;
    series_.push_back(std::move(row));
    std::fill(batch_.begin(), batch_.end(), 0.0);
    in_batch_ = 0;
}

void PairHistogram::merge(const PairHistogram& other) {
    if (other.bins_ != bins_ || other.n_ != n_ || other.side_ != side_)
        throw InvalidInput("cannot merge histograms over different grids");
    for (std::size_t b = 0; b < total_.size(); ++b) total_[b] += other.total_[b];
    samples_ += other.samples_;
    series_.insert(series_.end(), other.series_.begin(), other.series_.end());
    // partial batches are folded in as their own (short) batch
    if (other.in_batch_ > 0) {
        std::vector<double> row(batch_.size());
        for (std::size_t b = 0; b < row.size(); ++b) row[b] = other.batch_[b] / other.in_batch_;
        series_.push_back(std::move(row));
    }
}

PairHistogram::Result PairHistogram::normalize() const {
    if (samples_ == 0) throw InvalidState("g(r) requested before any sample was accumulated");
    auto series = series_;
    if (in_batch_ > 0) {
        std::vector<double> row(batch_.size());
        for (std::size_t b = 0; b < row.size(); ++b) row[b] = batch_[b] / in_batch_;
        series.push_back(std::move(row));
    }
    const SeriesStats st = column_stats(series, static_cast<std::size_t>(bins_));
    const double pairs = 0.5 * n_ * (n_ - 1);
    Result out;
    for (int b = 0; b < bins_; ++b) {
        const double r0 = b * width_, r1 = (b + 1) * width_;
        const double shell = 4.0 * std::numbers::pi / 3.0 * (r1 * r1 * r1 - r0 * r0 * r0);
        const double norm = pairs * shell / volume_;
        out.r.push_back(0.5 * (r0 + r1));
        out.g.push_back(total_[static_cast<std::size_t>(b)] / (double(samples_) * norm));
        out.error.push_back(st.error[static_cast<std::size_t>(b)] / norm);
    }
    return out;
}

StructureFactor::StructureFactor(const SimulationCell& cell, int n2_max, int batch_size)
    : side_(cell.side_length()), n_(cell.n_particles()), batch_size_(batch_size) {
    if (n2_max < 1) throw ConfigError("structure factor needs n2_max >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    const int r = static_cast<int>(std::ceil(std::sqrt(double(n2_max))));
    std::map<std::array<int, 3>, int> orbit_index;
    for (int x = -r; x <= r; ++x)
        for (int y = -r; y <= r; ++y)
            for (int z = -r; z <= r; ++z) {
                const int n2 = x * x + y * y + z * z;
                if (n2 == 0 || n2 > n2_max) continue;
                std::array<int, 3> rep{std::abs(x), std::abs(y), std::abs(z)};
                std::sort(rep.begin(), rep.end(), std::greater<>());
                auto [it, inserted] = orbit_index.try_emplace(rep, static_cast<int>(orbits_.size()));
                if (inserted) orbits_.push_back({rep, n2, {}});
                orbits_[static_cast<std::size_t>(it->second)].members.push_back(static_cast<int>(ks_.size()));
                ks_.push_back({x, y, z});
            }
    std::vector<std::size_t> order(orbits_.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (orbits_[a].n2 != orbits_[b].n2) return orbits_[a].n2 < orbits_[b].n2;
        return orbits_[a].representative > orbits_[b].representative;
    });
    std::vector<Orbit> sorted;
    for (auto k : order) sorted.push_back(orbits_[k]);
    orbits_ = std::move(sorted);
    rho_sum_.assign(ks_.size(), 0.0);
    rho2_sum_.assign(ks_.size(), 0.0);
    batch_.assign(orbits_.size(), 0.0);
}

void StructureFactor::accumulate(const ParticleConfiguration& config) {
    if (config.size() != n_) throw InvalidInput("configuration does not match the structure factor's cell");
    const double dk = 2.0 * std::numbers::pi / side_;
    std::vector<double> rho2(ks_.size());
    for (std::size_t q = 0; q < ks_.size(); ++q) {
        const auto& n = ks_[q];
        std::complex<double> rho = 0.0;
        for (int i = 0; i < n_; ++i) {
            const Vec3 r = config.position(i);
            const double phase = dk * (n[0] * r[0] + n[1] * r[1] + n[2] * r[2]);
            rho += std::complex<double>(std::cos(phase), std::sin(phase));
        }
        rho_sum_[q] += rho;
        rho2[q] = std::norm(rho);
        rho2_sum_[q] += rho2[q];
    }
    for (std::size_t o = 0; o < orbits_.size(); ++o) {
        double s = 0.0;
        for (int q : orbits_[o].members) s += rho2[static_cast<std::size_t>(q)];
        batch_[o] += s / double(orbits_[o].members.size()) / n_;
    }
    ++samples_;
    if (++in_batch_ == batch_size_) flush();
}

void StructureFactor::flush() {
    if (in_batch_ == 0) return;
    std::vector<double> row(batch_.size());
    for (std::size_t o = 0; o < row.size(); ++o) row[o] = batch_[o] / in_batch_;
    series_.push_back(std::move(row));
    std::fill(batch_.begin(), batch_.end(), 0.0);
    in_batch_ = 0;
}

void StructureFactor::merge(const StructureFactor& other) {
    if (other.ks_ != ks_ || other.n_ != n_) throw InvalidInput("cannot merge structure factors over different grids");
    for (std::size_t q = 0; q < ks_.size(); ++q) {
        rho_sum_[q] += other.rho_sum_[q];
        rho2_sum_[q] += other.rho2_sum_[q];
    }
    samples_ += other.samples_;
    series_.insert(series_.end(), other.series_.begin(), other.series_.end());
    if (other.in_batch_ > 0) {
        std::vector<double> row(batch_.size());
        for (std::size_t o = 0; o < row.size(); ++o) row[o] = other.batch_[o] / other.in_batch_;
        series_.push_back(std::move(row));
    }
}

StructureFactor::Result StructureFactor::evaluate(bool raw) const {
    if (samples_ == 0) throw InvalidState("S(k) requested before any sample was accumulated");
    auto series = series_;
    if (in_batch_ > 0) {
        std::vector<double> row(batch_.size());
        for (std::size_t o = 0; o < row.size(); ++o) row[o] = batch_[o] / in_batch_;
        series.push_back(std::move(row));
    }
    const SeriesStats st = column_stats(series, orbits_.size());
    const double dk = 2.0 * std::numbers::pi / side_;
    const double ns = double(samples_);
    Result out;
    for (std::size_t o = 0; o < orbits_.size(); ++o) {
        double s = 0.0;
        for (int q : orbits_[o].members) {
            const auto qq = static_cast<std::size_t>(q);
            s += rho2_sum_[qq] / ns;
            if (!raw) s -= std::norm(rho_sum_[qq] / ns);
        }
        out.k.push_back(dk * std::sqrt(double(orbits_[o].n2)));
        out.s.push_back(s / double(orbits_[o].members.size()) / n_);
        out.error.push_back(st.error[o]);
        out.representative.push_back(orbits_[o].representative);
    }
    return out;
}

void write_g2_csv(std::ostream& out, const PairHistogram::Result& g) {
    out << "r,g,g_err\n";
    out.precision(10);
    for (std::size_t b = 0; b < g.r.size(); ++b) out << g.r[b] << ',' << g.g[b] << ',' << g.error[b] << '\n';
}

void write_sk_csv(std::ostream& out, const StructureFactor::Result& s) {
    out << "k,S,S_err\n";
    out.precision(10);
    for (std::size_t o = 0; o < s.k.size(); ++o) out << s.k[o] << ',' << s.s[o] << ',' << s.error[o] << '\n';
}

}  // namespace heg
