#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace heg {

/// Learning rate by density: {1, 2, 5, 10, 20, 50, 100, 110} ->
/// {0.05, 0.05, 0.05, 0.1, 0.1, 0.5, 1, 2.5}. Other r_s take the nearest entry;
/// `exact` reports whether r_s was in the table.
double learning_rate_for(double rs, bool* exact = nullptr);

struct SrSettings {
    double learning_rate = 0.05;
    double diag_shift = 1e-4;
    double cg_tolerance = 1e-6;  ///< relative residual
    int cg_max_iterations = 1000;
    bool dense = false;  ///< explicit S and a direct solve (small parameter counts only)
    double max_update_norm = 0.0;  ///< caps |delta| (Euclidean); 0 disables
    std::vector<Eigen::Index> uncapped;  ///< entries left out of the cap (e.g. a single physical parameter)
};

/// Sample-wise local energies and parameter log-derivatives. Samples carry
/// weights so that exact enumerations over discrete toy measures work too.
class EstimatorAccumulator {
public:
    explicit EstimatorAccumulator(Eigen::Index n_params) : n_params_(n_params) {}

    void add(std::complex<double> e_loc, const Eigen::VectorXcd& o, double weight = 1.0);
    void clear();

    Eigen::Index n_params() const { return n_params_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(energies_.size()); }
    const std::vector<std::complex<double>>& energies() const { return energies_; }

    /// Weighted mean of E_loc.
    std::complex<double> mean_energy() const;

    /// Column-centered, sqrt-weight-scaled real and imaginary parts of O and E.
    struct Centered {
        Eigen::MatrixXd o_re, o_im;  // samples x params
        Eigen::VectorXd e_re, e_im;
    };
    const Centered& centered() const;

private:
    void require_samples() const;

    Eigen::Index n_params_;
    std::vector<std::complex<double>> energies_;
    std::vector<Eigen::VectorXcd> derivs_;
    std::vector<double> weights_;
    mutable bool dirty_ = true;
    mutable Centered centered_;
};

/// F = 2 Re[<conj(O) E> - <conj(O)><E>].
Eigen::VectorXd estimate_force(const EstimatorAccumulator& acc);

/// S = Re[<conj(O) O^T> - <conj(O)><O>^T] as an explicit matrix.
Eigen::MatrixXd estimate_qgt(const EstimatorAccumulator& acc);

/// Matrix-free v -> S v from the centered samples.
class QgtOperator {
public:
    explicit QgtOperator(const EstimatorAccumulator& acc) : acc_(acc) {}
    Eigen::VectorXd operator()(const Eigen::VectorXd& v) const;

private:
    const EstimatorAccumulator& acc_;
};

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct CgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_norms;
    std::vector<Eigen::VectorXd> iterates;  // only when requested
};

/// Conjugate gradient for a symmetric positive definite operator.
CgResult conjugate_gradient(const LinearOperator& a, const Eigen::VectorXd& b, double rel_tol, int max_iter,
                            bool keep_iterates = false);

struct SrStep {
    Eigen::VectorXd delta;  ///< applied change, -eta x
    CgResult solve;
    bool applied = false;
    bool clipped = false;
    std::string warning;
};

/// theta <- theta - eta (S + eps I)^-1 F; the capped entries are rescaled to max_update_norm when longer. A non-finite solution leaves theta untouched
/// and throws NumericalAbort; CG non-convergence falls back to the best iterate with a warning.
SrStep sr_update(Eigen::VectorXd& params, const Eigen::VectorXd& force, const LinearOperator& s,
                 const SrSettings& settings);

/// Convenience: builds F and S from the accumulator and applies the update.
SrStep sr_update(Eigen::VectorXd& params, const EstimatorAccumulator& acc, const SrSettings& settings);

}  // namespace heg
