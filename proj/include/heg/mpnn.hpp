#pragma once

#include "heg/cell.hpp"
#include "heg/nn.hpp"
#include "heg/orbitals.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace heg {

/// Hyperparameters of the message-passing backflow network.
struct NetworkShape {
    int iterations = 1;     ///< number of message-passing steps T
    int embedding = 8;      ///< node embedding size, D1 - D1h
    int node_hidden = 32;   ///< D1h
    int edge_hidden = 32;   ///< D2h
    int mlp_width = 32;     ///< hidden width of phi, f and f-tilde
    int jastrow_width = 32; ///< hidden width of the orbital correlation network j

    static constexpr int edge_features = 8;  ///< 6 Fourier + periodic norm + spin product
    int node_dim() const { return embedding + node_hidden; }
    int edge_dim() const { return edge_features + edge_hidden; }
};

/// Parameter views for one message-passing step.
struct StepLayout {
    std::size_t wq = 0;  ///< D2 x D2 query matrix
    std::size_t wk = 0;  ///< D2 x D2 key matrix
    nn::Mlp phi;         ///< edge -> message values
    nn::Mlp node;        ///< [g_i, sum_j m_ij] -> h_i
    nn::Mlp edge;        ///< [g_ij, m_ij] -> h_ij (absent on the last step)
    bool updates_edges = false;
};

/// All variational parameters: backflow network, orbital correlation network
/// j(y, mu), and the Gaussian width when Gaussian orbitals are used. The layout
/// depends only on the hyperparameters, never on the particle count.
class NetworkParameters {
public:
    NetworkParameters(const NetworkShape& shape, bool gaussian_orbitals);

    /// Random initialization: fan-in scaled MLP weights, output map of magnitude `output_scale`.
    static NetworkParameters initialize(const NetworkShape& shape, bool gaussian_orbitals, double alpha,
                                        std::uint64_t seed, double output_scale = 1e-2);

    const NetworkShape& shape() const { return shape_; }
    const nn::ParameterLayout& layout() const { return layout_; }
    std::size_t size() const { return layout_.size(); }
    const Eigen::VectorXd& values() const { return values_; }
    Eigen::VectorXd& values() { return values_; }
    std::span<const double> data() const { return {values_.data(), static_cast<std::size_t>(values_.size())}; }

    std::size_t embedding_offset() const { return embedding_; }
    std::size_t node_hidden_offset() const { return node_hidden0_; }
    std::size_t edge_hidden_offset() const { return edge_hidden0_; }
    const std::vector<StepLayout>& steps() const { return steps_; }
    std::size_t output_re_offset() const { return output_re_; }
    std::size_t output_im_offset() const { return output_im_; }
    const nn::Mlp& jastrow() const { return jastrow_; }
    bool has_alpha() const { return alpha_.has_value(); }
    std::size_t alpha_offset() const { return *alpha_; }
    double alpha() const { return alpha_ ? values_[static_cast<Eigen::Index>(*alpha_)] : 0.0; }

    /// Zero the complex output map (identity backflow).
    void zero_output();
    /// Zero the final layer of j so that J vanishes.
    void zero_jastrow();

    nn::ConstMatrixMap matrix(std::size_t offset, int rows, int cols) const {
        return {values_.data() + offset, rows, cols};
    }

private:
    NetworkShape shape_;
    nn::ParameterLayout layout_;
    Eigen::VectorXd values_;
    std::size_t embedding_ = 0;
    std::size_t node_hidden0_ = 0;
    std::size_t edge_hidden0_ = 0;
    std::vector<StepLayout> steps_;
    std::size_t output_re_ = 0;
    std::size_t output_im_ = 0;
    nn::Mlp jastrow_;
    std::optional<std::size_t> alpha_;
};

/// Node and edge arrays of the particle graph. Edge (i, j) lives in row i*N + j.
struct GraphState {
    nn::Matrix nodes;  ///< N x D1
    nn::Matrix edges;  ///< N^2 x D2
    int step = 0;
};

struct InitialFeatures {
    nn::Matrix nodes;  ///< N x (D1 - D1h), the broadcast embedding
    nn::Matrix edges;  ///< N^2 x 8: [sin, cos of 2 pi r_ij / L, |sin(pi r_ij / L)|, s_i s_j]
};

InitialFeatures initial_features(const ParticleConfiguration& config, const SimulationCell& cell,
                                 const NetworkParameters& params);

/// Graph at step 0: initial features concatenated with the learned initial hidden states.
GraphState initial_graph(const InitialFeatures& features, const NetworkParameters& params);

/// Messages m_ij = GELU(sum_l Q_il K_lj) * phi(g_ij), channel by channel.
nn::Matrix particle_attention(const nn::Matrix& edges, const Eigen::Ref<const nn::RowMatrix>& wq,
                              const Eigen::Ref<const nn::RowMatrix>& wk, const nn::Mlp& phi,
                              std::span<const double> params);

/// One message-passing update; the initial-feature prefix of nodes and edges is carried over.
GraphState mpnn_step(const GraphState& graph, const InitialFeatures& features, const NetworkParameters& params);

/// Complex backflow displacements delta r_i = W g_i^(T), N x 3.
ComplexPositions backflow_displacements(const ParticleConfiguration& config, const SimulationCell& cell,
                                        const NetworkParameters& params);

/// Cached activations of a forward pass, for reverse-mode parameter gradients.
struct BackflowCache {
    struct Step {
        nn::Matrix g_node, g_edge, q, k, s, v, m;
        nn::MlpCache phi, node, edge;
    };
    int n = 0;
    InitialFeatures features;
    std::vector<Step> steps;
    nn::Matrix g_final;
};

ComplexPositions backflow_forward(const ParticleConfiguration& config, const SimulationCell& cell,
                                  const NetworkParameters& params, BackflowCache* cache);

/// Accumulates d(out)/d(theta) into `grad`, where out has adjoints `seed_re`, `seed_im`
/// (N x 3 each) on the real and imaginary parts of delta r.
void backflow_backward(const NetworkParameters& params, const BackflowCache& cache, const nn::Matrix& seed_re,
                       const nn::Matrix& seed_im, std::span<double> grad);

/// Forward-mode value, gradient and Laplacian of delta r with respect to all 3N coordinates.
struct BackflowJet {
    nn::Jet re;  ///< N x 3
    nn::Jet im;  ///< N x 3
};

BackflowJet backflow_jet(const ParticleConfiguration& config, const SimulationCell& cell,
                         const NetworkParameters& params);

}  // namespace heg
