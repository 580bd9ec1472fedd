#include "heg/sr.hpp"

#include "heg/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace heg {

double learning_rate_for(double rs, bool* exact) {
    static constexpr std::array<std::pair<double, double>, 8> table{
        {{1, 0.05}, {2, 0.05}, {5, 0.05}, {10, 0.1}, {20, 0.1}, {50, 0.5}, {100, 1.0}, {110, 2.5}}};
    if (!(rs > 0.0)) throw ConfigError("r_s must be positive");
    const auto* best = &table[0];
    for (const auto& entry : table)
        if (std::abs(entry.first - rs) < std::abs(best->first - rs)) best = &entry;
    if (exact) *exact = best->first == rs;
    return best->second;
}

void EstimatorAccumulator::add(std::complex<double> e_loc, const Eigen::VectorXcd& o, double weight) {
    if (o.size() != n_params_) throw InvalidInput("log-derivative vector has the wrong length");
    if (!(weight > 0.0) || !std::isfinite(weight)) throw InvalidInput("sample weights must be positive");
    energies_.push_back(e_loc);
    derivs_.push_back(o);
    weights_.push_back(weight);
    dirty_ = true;
}

void EstimatorAccumulator::clear() {
    energies_.clear();
    derivs_.clear();
    weights_.clear();
    dirty_ = true;
}

void EstimatorAccumulator::require_samples() const {
    if (energies_.size() < 2) throw InvalidState("estimator needs at least two samples");
}

std::complex<double> EstimatorAccumulator::mean_energy() const {
    if (energies_.empty()) throw InvalidState("no samples accumulated");
    std::complex<double> s = 0.0;
    double w = 0.0;
    for (std::size_t k = 0; k < energies_.size(); ++k) {
        s += weights_[k] * energies_[k];
        w += weights_[k];
    }
    return s / w;
}

const EstimatorAccumulator::Centered& EstimatorAccumulator::centered() const {
    require_samples();
    if (!dirty_) return centered_;
    const auto n = size();
    double total = 0.0;
    for (double w : weights_) total += w;
    Eigen::VectorXd sw(n);
    for (Eigen::Index k = 0; k < n; ++k) sw[k] = std::sqrt(weights_[static_cast<std::size_t>(k)] / total);

    auto& c = centered_;
    c.o_re.resize(n, n_params_);
    c.o_im.resize(n, n_params_);
    c.e_re.resize(n);
    c.e_im.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& o = derivs_[static_cast<std::size_t>(k)];
        c.o_re.row(k) = o.real().transpose();
        c.o_im.row(k) = o.imag().transpose();
        c.e_re[k] = energies_[static_cast<std::size_t>(k)].real();
        c.e_im[k] = energies_[static_cast<std::size_t>(k)].imag();
    }
    const Eigen::RowVectorXd mean_re = sw.cwiseAbs2().transpose() * c.o_re;
    const Eigen::RowVectorXd mean_im = sw.cwiseAbs2().transpose() * c.o_im;
    const double me_re = sw.cwiseAbs2().dot(c.e_re);
    const double me_im = sw.cwiseAbs2().dot(c.e_im);
    c.o_re = sw.asDiagonal() * (c.o_re.rowwise() - mean_re);
    c.o_im = sw.asDiagonal() * (c.o_im.rowwise() - mean_im);
    c.e_re = sw.cwiseProduct((c.e_re.array() - me_re).matrix());
    c.e_im = sw.cwiseProduct((c.e_im.array() - me_im).matrix());
    dirty_ = false;
    return c;
}

Eigen::VectorXd estimate_force(const EstimatorAccumulator& acc) {
    const auto& c = acc.centered();
    return 2.0 * (c.o_re.transpose() * c.e_re + c.o_im.transpose() * c.e_im);
}

Eigen::MatrixXd estimate_qgt(const EstimatorAccumulator& acc) {
    const auto& c = acc.centered();
    Eigen::MatrixXd s = c.o_re.transpose() * c.o_re;
    s.noalias() += c.o_im.transpose() * c.o_im;
    return s;
}

Eigen::VectorXd QgtOperator::operator()(const Eigen::VectorXd& v) const {
    const auto& c = acc_.centered();
    Eigen::VectorXd out = c.o_re.transpose() * (c.o_re * v);
    out.noalias() += c.o_im.transpose() * (c.o_im * v);
    return out;
}

CgResult conjugate_gradient(const LinearOperator& a, const Eigen::VectorXd& b, double rel_tol, int max_iter,
                            bool keep_iterates) {
    CgResult res;
    res.x = Eigen::VectorXd::Zero(b.size());
    const double b_norm = b.norm();
    res.residual_norms.push_back(b_norm);
    if (keep_iterates) res.iterates.push_back(res.x);
    if (b_norm == 0.0) {
        res.converged = true;
        return res;
    }
    Eigen::VectorXd r = b, p = b;
    double rr = r.squaredNorm();
    Eigen::VectorXd best = res.x;
    double best_norm = b_norm;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd ap = a(p);
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) break;  // loss of positive definiteness in round-off
        const double step = rr / pap;
        res.x += step * p;
        r -= step * ap;
        const double rr_new = r.squaredNorm();
        res.iterations = it + 1;
        res.residual_norms.push_back(std::sqrt(rr_new));
        if (keep_iterates) res.iterates.push_back(res.x);
        if (std::sqrt(rr_new) < best_norm) {
            best_norm = std::sqrt(rr_new);
            best = res.x;
        }
        if (std::sqrt(rr_new) <= rel_tol * b_norm) {
            res.converged = true;
            return res;
        }
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    res.x = best;
    return res;
}

SrStep sr_update(Eigen::VectorXd& params, const Eigen::VectorXd& force, const LinearOperator& s,
                 const SrSettings& settings) {
    if (!(settings.learning_rate > 0.0) || !(settings.diag_shift > 0.0))
        throw ConfigError("SR learning rate and diagonal shift must be positive");
    if (force.size() != params.size()) throw InvalidInput("force and parameter sizes differ");
    if (!force.allFinite()) throw NumericalAbort("non-finite force; parameters kept");
    SrStep step;
    const double eps = settings.diag_shift;
    const LinearOperator shifted = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return s(v) + eps * v; };
    if (settings.dense) {
        const auto n = params.size();
        Eigen::MatrixXd m(n, n);
        for (Eigen::Index j = 0; j < n; ++j) m.col(j) = shifted(Eigen::VectorXd::Unit(n, j));
        step.solve.x = m.ldlt().solve(force);
        step.solve.converged = true;
    } else {
        step.solve = conjugate_gradient(shifted, force, settings.cg_tolerance, settings.cg_max_iterations);
        if (!step.solve.converged)
            step.warning = "conjugate gradient did not converge in " + std::to_string(step.solve.iterations) +
                           " iterations; using the best iterate";
    }
    if (!step.solve.x.allFinite()) throw NumericalAbort("SR solve produced non-finite values; parameters kept");
    step.delta = -settings.learning_rate * step.solve.x;
    if (settings.max_update_norm > 0.0) {
        Eigen::VectorXd capped = step.delta;
        for (Eigen::Index i : settings.uncapped) capped[i] = 0.0;
        const double len = capped.norm();
        if (len > settings.max_update_norm) {
            const double scale = settings.max_update_norm / len;
            for (Eigen::Index i = 0; i < capped.size(); ++i)
                if (std::find(settings.uncapped.begin(), settings.uncapped.end(), i) == settings.uncapped.end())
                    step.delta[i] *= scale;
            step.clipped = true;
        }
    }
    params += step.delta;
    step.applied = true;
    return step;
}

SrStep sr_update(Eigen::VectorXd& params, const EstimatorAccumulator& acc, const SrSettings& settings) {
    const Eigen::VectorXd f = estimate_force(acc);
    if (settings.dense) {
        const Eigen::MatrixXd s = estimate_qgt(acc);
        return sr_update(params, f, [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return s * v; }, settings);
    }
    const QgtOperator op(acc);
    return sr_update(params, f, [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return op(v); }, settings);
}

}  // namespace heg
