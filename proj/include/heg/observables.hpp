#pragma once

#include "heg/cell.hpp"

#include <array>
#include <complex>
#include <iosfwd>
#include <vector>

namespace heg {

/// Flyvbjerg-Petersen blocking analysis of a correlated time series.
struct BlockingResult {
    double mean = 0.0;
    double error = 0.0;
    int level = 0;          ///< number of pairwise averagings at the chosen plateau
    bool plateau = false;   ///< false: no plateau found, the largest estimate is reported
    std::vector<double> errors_by_level;
};

/// Error of the mean, taken at the first level where the estimate stops growing
/// beyond its own statistical uncertainty. Series shorter than 2 give zero error.
BlockingResult blocking_analysis(const std::vector<double>& series);

/// Mean over samples of a fixed-length vector, with per-component blocking errors.
struct SeriesStats {
    std::vector<double> mean;
    std::vector<double> error;
};

/// Spin-averaged pair histogram on [0, L/2] in batches; each batch is one
/// entry of the series that feeds the blocking errors.
class PairHistogram {
public:
    PairHistogram(const SimulationCell& cell, int bins = 100, int batch_size = 1);

    int bins() const { return bins_; }
    double bin_width() const { return width_; }
    long samples() const { return samples_; }
    const std::vector<double>& counts() const { return total_; }

    /// Adds every unordered pair with min-image distance <= L/2.
    void accumulate(const ParticleConfiguration& config);
    /// Merges another histogram over the same cell (associative).
    void merge(const PairHistogram& other);

    struct Result {
        std::vector<double> r, g, error;
    };
    /// g(r) = counts / (samples * N(N-1)/2 * V_shell / V) with exact sphere-shell volumes.
    Result normalize() const;

private:
    void flush();

    double side_;
    double volume_;
    int n_;
    int bins_;
    double width_;
    int batch_size_;
    long samples_ = 0;
    std::vector<double> total_;
    std::vector<double> batch_;
    int in_batch_ = 0;
    std::vector<std::vector<double>> series_;  // per-batch mean counts
};

/// Static structure factor on reciprocal-lattice vectors 0 < |n|^2 <= n2_max,
/// reported per cubic orbit (k-vectors related by axis permutations and sign flips).
class StructureFactor {
public:
    StructureFactor(const SimulationCell& cell, int n2_max = 12, int batch_size = 1);

    struct Orbit {
        std::array<int, 3> representative;  ///< sorted |n| components, descending
        int n2 = 0;
        std::vector<int> members;  ///< indices into k_vectors()
    };

    const std::vector<std::array<int, 3>>& k_vectors() const { return ks_; }
    const std::vector<Orbit>& orbits() const { return orbits_; }
    long samples() const { return samples_; }

    void accumulate(const ParticleConfiguration& config);
    void merge(const StructureFactor& other);

    struct Result {
        std::vector<double> k, s, error;
        std::vector<std::array<int, 3>> representative;
    };
    /// Variance form (<|rho_k|^2> - |<rho_k>|^2) / N by default; raw <|rho_k|^2> / N on request.
    Result evaluate(bool raw = false) const;

private:
    void flush();

    double side_;
    int n_;
    int batch_size_;
    std::vector<std::array<int, 3>> ks_;
    std::vector<Orbit> orbits_;
    long samples_ = 0;
    std::vector<std::complex<double>> rho_sum_;
    std::vector<double> rho2_sum_;
    std::vector<double> batch_;  // per-orbit |rho|^2 / N
    int in_batch_ = 0;
    std::vector<std::vector<double>> series_;
};

/// CSV with header `r,g,g_err` / `k,S,S_err`.
void write_g2_csv(std::ostream& out, const PairHistogram::Result& g);
void write_sk_csv(std::ostream& out, const StructureFactor::Result& s);

}  // namespace heg
