#include "heg/wavefunction.hpp"

#include "heg/errors.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace heg {

namespace {

using Eigen::MatrixXcd;

struct SpinBlock {
    std::vector<int> particles;
    int first_orbital = 0;
};

std::vector<SpinBlock> spin_blocks(const ParticleConfiguration& config, const OrbitalSet& orbitals) {
    if (config.size() != orbitals.size()) throw InvalidInput("particle and orbital counts differ");
    SpinBlock up, down;
    up.first_orbital = 0;
    down.first_orbital = orbitals.n_up();
    for (int i = 0; i < config.size(); ++i) (config.spin(i) == 1 ? up : down).particles.push_back(i);
    if (static_cast<int>(up.particles.size()) != orbitals.n_up())
        throw InvalidInput("spin counts do not match the orbital set");
    return {up, down};
}

// log det via pivoted LU; throws on (near-)singular pivots.
cd log_det(const Eigen::PartialPivLU<MatrixXcd>& lu) {
    const auto& m = lu.matrixLU();
    double log_mod = 0.0;
    double phase = lu.permutationP().determinant() < 0 ? std::numbers::pi : 0.0;
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
        const double a = std::abs(m(k, k));
        if (!(a >= kSingularPivot) || !std::isfinite(a)) throw SingularWavefunction("orbital matrix is singular");
        log_mod += std::log(a);
        phase += std::arg(m(k, k));
    }
    return {log_mod, phase};
}

LogAmplitude to_amplitude(cd log_value) {
    if (!std::isfinite(log_value.real()) || !std::isfinite(log_value.imag()))
        throw SingularWavefunction("non-finite log amplitude");
    return {log_value.real(), wrap_phase(log_value.imag())};
}

ComplexPositions backflow_coordinates(const ParticleConfiguration& config, const ComplexPositions& dr) {
    ComplexPositions y = dr;
    for (int i = 0; i < config.size(); ++i)
        for (int a = 0; a < 3; ++a) y(i, a) += config.positions()(i, a);
    return y;
}

}  // namespace

double wrap_phase(double phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double p = std::remainder(phase, two_pi);
    if (p <= -std::numbers::pi) p += two_pi;
    return p;
}

Wavefunction::Wavefunction(const SimulationCell& cell, OrbitalSet orbitals, NetworkParameters params)
    : cell_(cell), orbitals_(std::move(orbitals)), params_(std::move(params)) {
    if (orbitals_.size() != cell_.n_particles() || orbitals_.n_up() != cell_.n_up())
        throw ConfigError("orbital set does not match the cell's spin populations");
    if ((orbitals_.kind() == OrbitalKind::GaussianBcc) != params_.has_alpha())
        throw ConfigError("Gaussian orbitals require a Gaussian width parameter and vice versa");
    const auto& jl = params_.jastrow().layers();
    if (jl.size() != 2 || jl.front().in != 10 || jl.back().out != 1)
        throw ConfigError("orbital correlation network must be a 10 -> width -> 1 perceptron");
    const int n = orbitals_.size();
    encodings_.resize(n, 4);
    for (int mu = 0; mu < n; ++mu) encodings_.row(mu) = orbitals_.encoding(mu).transpose();
}

OrbitalSet Wavefunction::current_orbitals() const {
    if (orbitals_.kind() != OrbitalKind::GaussianBcc) return orbitals_;
    const double alpha = params_.alpha();
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw NumericalAbort("Gaussian width left the positive range");
    return orbitals_.with_alpha(alpha);
}

// Row i*N + mu holds [Re dr_i, Im dr_i, encoding(mu)].
nn::Matrix Wavefunction::jastrow_inputs(const ComplexPositions& dr) const {
    const int n = static_cast<int>(dr.rows());
    nn::Matrix x(n * n, 10);
    for (int i = 0; i < n; ++i)
        for (int mu = 0; mu < n; ++mu) {
            const int row = i * n + mu;
            for (int a = 0; a < 3; ++a) {
                x(row, a) = dr(i, a).real();
                x(row, 3 + a) = dr(i, a).imag();
            }
            x.block(row, 6, 1, 4) = encodings_.row(mu);
        }
    return x;
}

LogAmplitude Wavefunction::log_psi(const ParticleConfiguration& config) const {
    const ComplexPositions dr = backflow_forward(config, cell_, params_, nullptr);
    const ComplexPositions y = backflow_coordinates(config, dr);
    const OrbitalSet orb = current_orbitals();
    cd total = params_.jastrow().forward(params_.data(), jastrow_inputs(dr)).sum();
    for (const auto& block : spin_blocks(config, orb)) {
        const int m = static_cast<int>(block.particles.size());
        if (m == 0) continue;
        MatrixXcd a(m, m);
        for (int p = 0; p < m; ++p) {
            const Vec3c yi = y.row(block.particles[static_cast<std::size_t>(p)]).transpose();
            for (int q = 0; q < m; ++q) a(p, q) = orb.value(block.first_orbital + q, yi);
        }
        total += log_det(Eigen::PartialPivLU<MatrixXcd>(a));
    }
    return to_amplitude(total);
}

DerivativeBundle Wavefunction::derivatives(const ParticleConfiguration& config, bool with_params) const {
    const int n = config.size();
    const int nc = 3 * n;
    const OrbitalSet orb = current_orbitals();

    BackflowCache cache;
    const ComplexPositions dr = backflow_forward(config, cell_, params_, with_params ? &cache : nullptr);
    const ComplexPositions y = backflow_coordinates(config, dr);
    const BackflowJet jet = backflow_jet(config, cell_, params_);

    // dy[k](i, a) = d y_ia / d x_k
    std::vector<MatrixXcd> dy(static_cast<std::size_t>(nc), MatrixXcd(n, 3));
    for (int k = 0; k < nc; ++k) {
        auto& d = dy[static_cast<std::size_t>(k)];
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a)
                d(i, a) = cd(jet.re.grad(k * n + i, a), jet.im.grad(k * n + i, a)) + (k == 3 * i + a ? 1.0 : 0.0);
    }
    std::vector<Eigen::Matrix3cd> c(static_cast<std::size_t>(n), Eigen::Matrix3cd::Zero());
    for (int k = 0; k < nc; ++k)
        for (int i = 0; i < n; ++i) {
            const Eigen::RowVector3cd row = dy[static_cast<std::size_t>(k)].row(i);
            c[static_cast<std::size_t>(i)] += row.transpose() * row;
        }

    DerivativeBundle out;
    Eigen::VectorXcd grad = Eigen::VectorXcd::Zero(nc);
    cd lap = 0.0;
    cd log_value = 0.0;
    ComplexPositions g_y = ComplexPositions::Zero(n, 3);  // d log det / d y (holomorphic)
    cd d_alpha = 0.0;

    for (const auto& block : spin_blocks(config, orb)) {
        const int m = static_cast<int>(block.particles.size());
        if (m == 0) continue;
        MatrixXcd a(m, m), lap_a(m, m), d_alpha_a(m, m);
        std::vector<MatrixXcd> grad_phi(3, MatrixXcd(m, m));
        for (int p = 0; p < m; ++p) {
            const int i = block.particles[static_cast<std::size_t>(p)];
            const Vec3c yi = y.row(i).transpose();
            const Vec3c lap_y(cd(jet.re.lap(i, 0), jet.im.lap(i, 0)), cd(jet.re.lap(i, 1), jet.im.lap(i, 1)),
                              cd(jet.re.lap(i, 2), jet.im.lap(i, 2)));
            for (int q = 0; q < m; ++q) {
                const OrbitalValue v = orb.evaluate(block.first_orbital + q, yi, true);
                a(p, q) = v.value;
                for (int x = 0; x < 3; ++x) grad_phi[static_cast<std::size_t>(x)](p, q) = v.grad[x];
                lap_a(p, q) = (v.grad.array() * lap_y.array()).sum() + (v.hessian.cwiseProduct(c[static_cast<std::size_t>(i)])).sum();
                d_alpha_a(p, q) = v.d_alpha;
            }
        }
        const Eigen::PartialPivLU<MatrixXcd> lu(a);
        log_value += log_det(lu);
        const MatrixXcd b = lu.inverse();

        lap += b.transpose().cwiseProduct(lap_a).sum();
        d_alpha += b.transpose().cwiseProduct(d_alpha_a).sum();
        for (int x = 0; x < 3; ++x) {
            const Eigen::VectorXcd gx = b.transpose().cwiseProduct(grad_phi[static_cast<std::size_t>(x)]).rowwise().sum();
            for (int p = 0; p < m; ++p) g_y(block.particles[static_cast<std::size_t>(p)], x) = gx[p];
        }
        MatrixXcd da(m, m);
        for (int k = 0; k < nc; ++k) {
            const auto& d = dy[static_cast<std::size_t>(k)];
            for (int p = 0; p < m; ++p) {
                const int i = block.particles[static_cast<std::size_t>(p)];
                da.row(p) = grad_phi[0].row(p) * d(i, 0) + grad_phi[1].row(p) * d(i, 1) + grad_phi[2].row(p) * d(i, 2);
            }
            const MatrixXcd mk = b * da;
            grad[k] += mk.trace();
            lap -= mk.cwiseProduct(mk.transpose()).sum();
        }
    }

    // Correlation factor: J = sum_{i,mu} j(w_i, mu) with w_i = [Re dr_i, Im dr_i].
    const auto& jl = params_.jastrow().layers();
    const nn::ConstMatrixMap w0 = nn::weight_map(params_.data(), jl[0]);
    const nn::ConstMatrixMap w1 = nn::weight_map(params_.data(), jl[1]);
    nn::MlpCache jcache;
    const nn::Matrix jx = jastrow_inputs(dr);
    log_value += params_.jastrow().forward(params_.data(), jx, &jcache).sum();
    const nn::Matrix& z = jcache.preactivations[0];
    const int width = jl[0].out;
    nn::Matrix grad_w(n, 6);  // dJ/dw_i
    for (int i = 0; i < n; ++i) {
        Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(width);
        Eigen::RowVectorXd s2 = Eigen::RowVectorXd::Zero(width);
        for (int mu = 0; mu < n; ++mu)
            for (int h = 0; h < width; ++h) {
                s1[h] += nn::gelu_d1(z(i * n + mu, h)) * w1(0, h);
                s2[h] += nn::gelu_d2(z(i * n + mu, h)) * w1(0, h);
            }
        const auto w0l = w0.leftCols(6);
        grad_w.row(i) = s1 * w0l;
        const Eigen::Matrix<double, 6, 6> hess = w0l.transpose() * s2.asDiagonal() * w0l;
        // chain rule through w_i(X)
        Eigen::Matrix<double, 6, 6> cw = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> lw;
        for (int a = 0; a < 3; ++a) {
            lw[a] = jet.re.lap(i, a);
            lw[3 + a] = jet.im.lap(i, a);
        }
        for (int k = 0; k < nc; ++k) {
            Eigen::Matrix<double, 6, 1> dw;
            for (int a = 0; a < 3; ++a) {
                dw[a] = jet.re.grad(k * n + i, a);
                dw[3 + a] = jet.im.grad(k * n + i, a);
            }
            grad[k] += grad_w.row(i).dot(dw);
            cw.noalias() += dw * dw.transpose();
        }
        lap += grad_w.row(i).dot(lw) + hess.cwiseProduct(cw).sum();
    }

    out.value = to_amplitude(log_value);
    out.grad_log.resize(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) out.grad_log(i, a) = grad[3 * i + a];
    out.laplacian_log = lap;

    if (with_params) {
        const auto np = static_cast<Eigen::Index>(params_.size());
        Eigen::VectorXd g_re = Eigen::VectorXd::Zero(np);
        Eigen::VectorXd g_im = Eigen::VectorXd::Zero(np);
        std::span<double> span_re(g_re.data(), params_.size());
        std::span<double> span_im(g_im.data(), params_.size());
        nn::Matrix re_u(n, 3), re_v(n, 3), im_u(n, 3), im_v(n, 3);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) {
                const cd g = g_y(i, a);
                re_u(i, a) = g.real() + grad_w(i, a);
                re_v(i, a) = -g.imag() + grad_w(i, 3 + a);
                im_u(i, a) = g.imag();
                im_v(i, a) = g.real();
            }
        backflow_backward(params_, cache, re_u, re_v, span_re);
        backflow_backward(params_, cache, im_u, im_v, span_im);
        params_.jastrow().backward(params_.data(), jcache, nn::Matrix::Ones(n * n, 1), span_re);
        if (params_.has_alpha()) {
            const auto k = static_cast<Eigen::Index>(params_.alpha_offset());
            g_re[k] += d_alpha.real();
            g_im[k] += d_alpha.imag();
        }
        out.param_log_derivs.resize(np);
        for (Eigen::Index p = 0; p < np; ++p) out.param_log_derivs[p] = cd(g_re[p], g_im[p]);
    }
    return out;
}

cd Wavefunction::kinetic_local(const DerivativeBundle& d) const {
    cd sq = 0.0;
    for (Eigen::Index i = 0; i < d.grad_log.rows(); ++i)
        for (int a = 0; a < 3; ++a) sq += d.grad_log(i, a) * d.grad_log(i, a);
    return -(d.laplacian_log + sq) / (2.0 * cell_.rs() * cell_.rs());
}

LogAmplitude log_psi(const ParticleConfiguration& config, const Wavefunction& wf) { return wf.log_psi(config); }

DerivativeBundle derivatives(const ParticleConfiguration& config, const Wavefunction& wf, bool with_params) {
    return wf.derivatives(config, with_params);
}

cd local_energy(const DerivativeBundle& d, const ParticleConfiguration& config, const Wavefunction& wf,
                const EwaldContext* ewald) {
    cd e = wf.kinetic_local(d);
    if (ewald) e += potential_energy(config, *ewald, wf.cell());
    return e;
}

cd local_energy(const ParticleConfiguration& config, const Wavefunction& wf, const EwaldContext* ewald) {
    return local_energy(wf.derivatives(config, false), config, wf, ewald);
}

}  // namespace heg
