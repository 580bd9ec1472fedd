#include "heg/mpnn.hpp"

#include "heg/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace heg {

using nn::Jet;
using nn::Matrix;
using nn::RowMatrix;
using ColMap = Eigen::Map<const Eigen::MatrixXd>;
using MutColMap = Eigen::Map<Eigen::MatrixXd>;

NetworkParameters::NetworkParameters(const NetworkShape& shape, bool gaussian_orbitals) : shape_(shape) {
    if (shape.iterations < 0 || shape.embedding < 1 || shape.node_hidden < 1 || shape.edge_hidden < 1 ||
        shape.mlp_width < 1 || shape.jastrow_width < 1)
        throw ConfigError("network widths must be positive and the iteration count non-negative");
    const int d1 = shape.node_dim();
    const int d2 = shape.edge_dim();
    embedding_ = layout_.add("embedding", {shape.embedding});
    node_hidden0_ = layout_.add("node_hidden0", {shape.node_hidden});
    edge_hidden0_ = layout_.add("edge_hidden0", {shape.edge_hidden});
    for (int t = 0; t < shape.iterations; ++t) {
        const std::string p = "step" + std::to_string(t);
        StepLayout s;
        s.wq = layout_.add(p + ".wq", {d2, d2});
        s.wk = layout_.add(p + ".wk", {d2, d2});
        s.phi = nn::Mlp(layout_, p + ".phi", {d2, shape.mlp_width, d2});
        s.node = nn::Mlp(layout_, p + ".node", {d1 + d2, shape.mlp_width, shape.node_hidden});
        // edges after the final step are never read
        s.updates_edges = t + 1 < shape.iterations;
        if (s.updates_edges) s.edge = nn::Mlp(layout_, p + ".edge", {2 * d2, shape.mlp_width, shape.edge_hidden});
        steps_.push_back(std::move(s));
    }
    output_re_ = layout_.add("output.re", {3, d1});
    output_im_ = layout_.add("output.im", {3, d1});
    jastrow_ = nn::Mlp(layout_, "jastrow", {10, shape.jastrow_width, 1});
    if (gaussian_orbitals) alpha_ = layout_.add("orbital.alpha", {1});
    values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
}

constexpr double kAttentionInitScale = 0.03;

NetworkParameters NetworkParameters::initialize(const NetworkShape& shape, bool gaussian_orbitals, double alpha,
                                                std::uint64_t seed, double output_scale) {
    NetworkParameters p(shape, gaussian_orbitals);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::span<double> v(p.values_.data(), p.size());
    auto fill = [&](std::size_t offset, std::size_t count, double scale) {
        for (std::size_t i = 0; i < count; ++i) v[offset + i] = scale * unit(rng);
    };
    fill(p.embedding_, static_cast<std::size_t>(shape.embedding), 1.0);
    fill(p.node_hidden0_, static_cast<std::size_t>(shape.node_hidden), 1.0);
    fill(p.edge_hidden0_, static_cast<std::size_t>(shape.edge_hidden), 1.0);
    // The particle contraction sum_l Q_il K_lj and the message sum over j are
    // unnormalized, so fan-in scaled W_Q, W_K blow activations up like N^2 per
    // step; starting them small keeps the graph O(1) up to N ~ 50.
    const int d2 = shape.edge_dim();
    const double attention_scale = kAttentionInitScale / std::sqrt(double(d2));
    for (const auto& s : p.steps_) {
        fill(s.wq, static_cast<std::size_t>(d2 * d2), attention_scale);
        fill(s.wk, static_cast<std::size_t>(d2 * d2), attention_scale);
        s.phi.initialize(v, rng);
        s.node.initialize(v, rng);
        if (s.updates_edges) s.edge.initialize(v, rng);
    }
    const std::size_t out_size = static_cast<std::size_t>(3 * shape.node_dim());
    fill(p.output_re_, out_size, output_scale);
    fill(p.output_im_, out_size, output_scale);
    p.jastrow_.initialize(v, rng, output_scale);
    if (p.alpha_) v[*p.alpha_] = alpha;
    return p;
}

void NetworkParameters::zero_output() {
    const auto n = static_cast<Eigen::Index>(3 * shape_.node_dim());
    values_.segment(static_cast<Eigen::Index>(output_re_), n).setZero();
    values_.segment(static_cast<Eigen::Index>(output_im_), n).setZero();
}

void NetworkParameters::zero_jastrow() {
    const auto& last = jastrow_.layers().back();
    values_.segment(static_cast<Eigen::Index>(last.weight), last.in * last.out).setZero();
    values_.segment(static_cast<Eigen::Index>(last.bias), last.out).setZero();
}

namespace {

constexpr double kPi = std::numbers::pi;

Matrix broadcast(const double* data, int length, int rows) {
    const Eigen::Map<const Eigen::RowVectorXd> row(data, length);
    return row.replicate(rows, 1);
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

// S_ij[c] = sum_l Q_il[c] K_lj[c]. Column c of an N^2 x D edge array, viewed as
// a column-major N x N map, is the transpose of the channel matrix, so S^T = K^T Q^T.
Matrix attention_scores(const Matrix& q, const Matrix& k, int n) {
    Matrix s(q.rows(), q.cols());
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        const ColMap qt(q.col(c).data(), n, n);
        const ColMap kt(k.col(c).data(), n, n);
        MutColMap st(s.col(c).data(), n, n);
        st.noalias() = kt * qt;
    }
    return s;
}

Matrix offdiagonal_row_sums(const Matrix& m, int n) {
    Matrix out = Matrix::Zero(n, m.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) out.row(i) += m.row(i * n + j);
    return out;
}

Jet offdiagonal_row_sums(const Jet& m, int n) {
    Jet out;
    out.ncoord = m.ncoord;
    out.val = offdiagonal_row_sums(m.val, n);
    out.lap = offdiagonal_row_sums(m.lap, n);
    out.grad.resize(static_cast<Eigen::Index>(n) * m.ncoord, m.cols());
    for (int k = 0; k < m.ncoord; ++k) out.block(k) = offdiagonal_row_sums(Matrix(m.block(k)), n);
    return out;
}

Jet attention_scores(const Jet& q, const Jet& k, int n) {
    Jet s;
    s.ncoord = q.ncoord;
    s.val = attention_scores(q.val, k.val, n);
    s.grad.resize(q.grad.rows(), q.cols());
    s.lap.resize(q.rows(), q.cols());
    const Eigen::Index nn2 = static_cast<Eigen::Index>(n) * n;
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        const ColMap qt(q.val.col(c).data(), n, n);
        const ColMap kt(k.val.col(c).data(), n, n);
        MutColMap lap(s.lap.col(c).data(), n, n);
        lap.noalias() = ColMap(k.lap.col(c).data(), n, n) * qt;
        lap.noalias() += kt * ColMap(q.lap.col(c).data(), n, n);
        for (int x = 0; x < q.ncoord; ++x) {
            const ColMap dq(q.grad.col(c).data() + x * nn2, n, n);
            const ColMap dk(k.grad.col(c).data() + x * nn2, n, n);
            MutColMap ds(s.grad.col(c).data() + x * nn2, n, n);
            ds.noalias() = dk * qt;
            ds.noalias() += kt * dq;
            lap.noalias() += 2.0 * dk * dq;
        }
    }
    return s;
}

// Edge features and their derivatives. Feature f(r_ij) enters with +grad for
// particle i, -grad for particle j and twice its own Laplacian.
Jet edge_feature_jet(const ParticleConfiguration& config, const SimulationCell& cell) {
    const int n = config.size();
    const int nc = 3 * n;
    const int rows = n * n;
    Jet x;
    x.ncoord = nc;
    x.val = Matrix::Zero(rows, NetworkShape::edge_features);
    x.grad = Matrix::Zero(static_cast<Eigen::Index>(rows) * nc, NetworkShape::edge_features);
    x.lap = Matrix::Zero(rows, NetworkShape::edge_features);
    const double side = cell.side_length();
    const double w = 2.0 * kPi / side;
    const double v = kPi / side;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int row = i * n + j;
            x.val(row, 7) = double(config.spin(i) * config.spin(j));
            if (i == j) {
                for (int a = 0; a < 3; ++a) x.val(row, 3 + a) = 1.0;
                continue;
            }
            const Vec3 r = min_image_displacement(config.position(i), config.position(j), cell);
            Eigen::Matrix<double, 7, 3> d1 = Eigen::Matrix<double, 7, 3>::Zero();
            Eigen::Matrix<double, 7, 1> d2 = Eigen::Matrix<double, 7, 1>::Zero();
            Vec3 u, cu;
            for (int a = 0; a < 3; ++a) {
                const double s = std::sin(w * r[a]), c = std::cos(w * r[a]);
                x.val(row, a) = s;
                x.val(row, 3 + a) = c;
                d1(a, a) = w * c;
                d2[a] = -w * w * s;
                d1(3 + a, a) = -w * s;
                d2[3 + a] = -w * w * c;
                u[a] = std::sin(v * r[a]);
                cu[a] = v * std::cos(v * r[a]);
            }
            const double norm = u.norm();
            x.val(row, 6) = norm;
            for (int a = 0; a < 3; ++a) {
                const double da = u[a] * cu[a] / norm;
                d1(6, a) = da;
                d2[6] += (cu[a] * cu[a] - v * v * u[a] * u[a]) / norm - da * da / norm;
            }
            for (int a = 0; a < 3; ++a)
                for (int f = 0; f < 7; ++f) {
                    x.grad(static_cast<Eigen::Index>(3 * i + a) * rows + row, f) = d1(f, a);
                    x.grad(static_cast<Eigen::Index>(3 * j + a) * rows + row, f) = -d1(f, a);
                }
            for (int f = 0; f < 7; ++f) x.lap(row, f) = 2.0 * d2[f];
        }
    return x;
}

}  // namespace

InitialFeatures initial_features(const ParticleConfiguration& config, const SimulationCell& cell,
                                 const NetworkParameters& params) {
    const int n = config.size();
    InitialFeatures f;
    f.nodes = broadcast(params.values().data() + params.embedding_offset(), params.shape().embedding, n);
    f.edges.resize(static_cast<Eigen::Index>(n) * n, NetworkShape::edge_features);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int row = i * n + j;
            const Vec3 r = i == j ? Vec3::Zero() : min_image_displacement(config.position(i), config.position(j), cell);
            f.edges.row(row).head<6>() = fourier_features(r, cell).transpose();
            f.edges(row, 6) = periodic_norm_surrogate(r, cell);
            f.edges(row, 7) = double(config.spin(i) * config.spin(j));
        }
    return f;
}

GraphState initial_graph(const InitialFeatures& features, const NetworkParameters& params) {
    const auto& shape = params.shape();
    const auto rows_n = static_cast<int>(features.nodes.rows());
    const auto rows_e = static_cast<int>(features.edges.rows());
    GraphState g;
    g.nodes = hstack(features.nodes, broadcast(params.values().data() + params.node_hidden_offset(),
                                               shape.node_hidden, rows_n));
    g.edges = hstack(features.edges, broadcast(params.values().data() + params.edge_hidden_offset(),
                                               shape.edge_hidden, rows_e));
    g.step = 0;
    return g;
}

Matrix particle_attention(const Matrix& edges, const Eigen::Ref<const RowMatrix>& wq,
                          const Eigen::Ref<const RowMatrix>& wk, const nn::Mlp& phi, std::span<const double> params) {
    const int n = static_cast<int>(std::lround(std::sqrt(double(edges.rows()))));
    const Matrix q = edges * wq.transpose();
    const Matrix k = edges * wk.transpose();
    const Matrix s = attention_scores(q, k, n);
    const Matrix omega = s.unaryExpr([](double x) { return nn::gelu(x); });
    return omega.cwiseProduct(phi.forward(params, edges));
}

GraphState mpnn_step(const GraphState& graph, const InitialFeatures& features, const NetworkParameters& params) {
    if (graph.step >= params.shape().iterations) throw InvalidInput("mpnn_step beyond the configured iterations");
    const auto& layout = params.steps()[static_cast<std::size_t>(graph.step)];
    const int n = static_cast<int>(graph.nodes.rows());
    const int d2 = params.shape().edge_dim();
    const Matrix m = particle_attention(graph.edges, params.matrix(layout.wq, d2, d2),
                                        params.matrix(layout.wk, d2, d2), layout.phi, params.data());
    const Matrix msum = offdiagonal_row_sums(m, n);
    GraphState next;
    next.step = graph.step + 1;
    next.nodes = hstack(features.nodes, layout.node.forward(params.data(), hstack(graph.nodes, msum)));
    if (layout.updates_edges)
        next.edges = hstack(features.edges, layout.edge.forward(params.data(), hstack(graph.edges, m)));
    else
        next.edges = graph.edges;
    return next;
}

ComplexPositions backflow_forward(const ParticleConfiguration& config, const SimulationCell& cell,
                                  const NetworkParameters& params, BackflowCache* cache) {
    const int n = config.size();
    const auto& shape = params.shape();
    const int d1 = shape.node_dim();
    const int d2 = shape.edge_dim();
    InitialFeatures features = initial_features(config, cell, params);
    GraphState g = initial_graph(features, params);
    if (cache) {
        cache->n = n;
        cache->steps.clear();
    }
    for (const auto& layout : params.steps()) {
        BackflowCache::Step st;
        const Matrix q = g.edges * params.matrix(layout.wq, d2, d2).transpose();
        const Matrix k = g.edges * params.matrix(layout.wk, d2, d2).transpose();
        const Matrix s = attention_scores(q, k, n);
        const Matrix v = layout.phi.forward(params.data(), g.edges, cache ? &st.phi : nullptr);
        const Matrix m = s.unaryExpr([](double x) { return nn::gelu(x); }).cwiseProduct(v);
        const Matrix msum = offdiagonal_row_sums(m, n);
        Matrix h_node = layout.node.forward(params.data(), hstack(g.nodes, msum), cache ? &st.node : nullptr);
        Matrix next_edges;
        if (layout.updates_edges)
            next_edges = hstack(features.edges,
                                layout.edge.forward(params.data(), hstack(g.edges, m), cache ? &st.edge : nullptr));
        if (cache) {
            st.g_node = g.nodes;
            st.g_edge = g.edges;
            st.q = q;
            st.k = k;
            st.s = s;
            st.v = v;
            st.m = m;
            cache->steps.push_back(std::move(st));
        }
        g.nodes = hstack(features.nodes, h_node);
        if (layout.updates_edges) g.edges = std::move(next_edges);
        ++g.step;
    }
    const Matrix re = g.nodes * params.matrix(params.output_re_offset(), 3, d1).transpose();
    const Matrix im = g.nodes * params.matrix(params.output_im_offset(), 3, d1).transpose();
    ComplexPositions dr(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) dr(i, a) = cd(re(i, a), im(i, a));
    if (cache) {
        cache->g_final = g.nodes;
        cache->features = std::move(features);
    }
    return dr;
}

ComplexPositions backflow_displacements(const ParticleConfiguration& config, const SimulationCell& cell,
                                        const NetworkParameters& params) {
    return backflow_forward(config, cell, params, nullptr);
}

void backflow_backward(const NetworkParameters& params, const BackflowCache& cache, const Matrix& seed_re,
                       const Matrix& seed_im, std::span<double> grad) {
    const int n = cache.n;
    const auto& shape = params.shape();
    const int d1 = shape.node_dim();
    const int d2 = shape.edge_dim();
    const int de = shape.embedding;
    const int fe = NetworkShape::edge_features;

    Eigen::Map<RowMatrix>(grad.data() + params.output_re_offset(), 3, d1).noalias() += seed_re.transpose() * cache.g_final;
    Eigen::Map<RowMatrix>(grad.data() + params.output_im_offset(), 3, d1).noalias() += seed_im.transpose() * cache.g_final;
    Matrix d_node = seed_re * params.matrix(params.output_re_offset(), 3, d1) +
                    seed_im * params.matrix(params.output_im_offset(), 3, d1);
    Matrix d_edge = Matrix::Zero(static_cast<Eigen::Index>(n) * n, d2);

    Eigen::Map<Eigen::RowVectorXd> d_embedding(grad.data() + params.embedding_offset(), de);
    for (std::size_t t = params.steps().size(); t-- > 0;) {
        const auto& layout = params.steps()[t];
        const auto& st = cache.steps[t];
        d_embedding += d_node.leftCols(de).colwise().sum();
        const Matrix d_h_node = d_node.rightCols(shape.node_hidden);
        const Matrix d_node_in = layout.node.backward(params.data(), st.node, d_h_node, grad);
        Matrix d_prev_node = d_node_in.leftCols(d1);
        const Matrix d_msum = d_node_in.rightCols(d2);

        Matrix d_m(static_cast<Eigen::Index>(n) * n, d2);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j)
                    d_m.row(i * n + j).setZero();
                else
                    d_m.row(i * n + j) = d_msum.row(i);
            }
        Matrix d_prev_edge = Matrix::Zero(static_cast<Eigen::Index>(n) * n, d2);
        if (layout.updates_edges) {
            const Matrix d_edge_in = layout.edge.backward(params.data(), st.edge, d_edge.rightCols(shape.edge_hidden), grad);
            d_prev_edge += d_edge_in.leftCols(d2);
            d_m += d_edge_in.rightCols(d2);
        }
        const Matrix omega = st.s.unaryExpr([](double x) { return nn::gelu(x); });
        const Matrix d_v = d_m.cwiseProduct(omega);
        const Matrix d_s =
            d_m.cwiseProduct(st.v).cwiseProduct(st.s.unaryExpr([](double x) { return nn::gelu_d1(x); }));
        Matrix d_q(d_s.rows(), d2), d_k(d_s.rows(), d2);
        for (int c = 0; c < d2; ++c) {
            const ColMap qt(st.q.col(c).data(), n, n);
            const ColMap kt(st.k.col(c).data(), n, n);
            const ColMap dst(d_s.col(c).data(), n, n);
            MutColMap(d_k.col(c).data(), n, n).noalias() = dst * qt.transpose();
            MutColMap(d_q.col(c).data(), n, n).noalias() = kt.transpose() * dst;
        }
        Eigen::Map<RowMatrix>(grad.data() + layout.wq, d2, d2).noalias() += d_q.transpose() * st.g_edge;
        Eigen::Map<RowMatrix>(grad.data() + layout.wk, d2, d2).noalias() += d_k.transpose() * st.g_edge;
        d_prev_edge.noalias() += d_q * params.matrix(layout.wq, d2, d2);
        d_prev_edge.noalias() += d_k * params.matrix(layout.wk, d2, d2);
        d_prev_edge += layout.phi.backward(params.data(), st.phi, d_v, grad);

        d_node = std::move(d_prev_node);
        d_edge = std::move(d_prev_edge);
    }
    d_embedding += d_node.leftCols(de).colwise().sum();
    Eigen::Map<Eigen::RowVectorXd>(grad.data() + params.node_hidden_offset(), shape.node_hidden) +=
        d_node.rightCols(shape.node_hidden).colwise().sum();
    Eigen::Map<Eigen::RowVectorXd>(grad.data() + params.edge_hidden_offset(), shape.edge_hidden) +=
        d_edge.rightCols(d2 - fe).colwise().sum();
}

BackflowJet backflow_jet(const ParticleConfiguration& config, const SimulationCell& cell,
                         const NetworkParameters& params) {
    const int n = config.size();
    const int nc = 3 * n;
    const auto& shape = params.shape();
    const int d1 = shape.node_dim();
    const int d2 = shape.edge_dim();
    const Jet x0_edge = edge_feature_jet(config, cell);
    const Jet x0_node =
        Jet::constant(broadcast(params.values().data() + params.embedding_offset(), shape.embedding, n), nc);
    Jet g_node =
        hconcat(x0_node, Jet::constant(broadcast(params.values().data() + params.node_hidden_offset(),
                                                 shape.node_hidden, n),
                                       nc));
    Jet g_edge =
        hconcat(x0_edge, Jet::constant(broadcast(params.values().data() + params.edge_hidden_offset(),
                                                 shape.edge_hidden, n * n),
                                       nc));
    for (const auto& layout : params.steps()) {
        const Jet q = nn::linear(g_edge, params.matrix(layout.wq, d2, d2));
        const Jet k = nn::linear(g_edge, params.matrix(layout.wk, d2, d2));
        const Jet omega = nn::gelu(attention_scores(q, k, n));
        const Jet m = nn::hadamard(omega, layout.phi.forward(params.data(), g_edge));
        const Jet msum = offdiagonal_row_sums(m, n);
        Jet h_node = layout.node.forward(params.data(), nn::hconcat(g_node, msum));
        if (layout.updates_edges) g_edge = nn::hconcat(x0_edge, layout.edge.forward(params.data(), nn::hconcat(g_edge, m)));
        g_node = nn::hconcat(x0_node, h_node);
    }
    BackflowJet out;
    out.re = nn::linear(g_node, params.matrix(params.output_re_offset(), 3, d1));
    out.im = nn::linear(g_node, params.matrix(params.output_im_offset(), 3, d1));
    return out;
}

}  // namespace heg
