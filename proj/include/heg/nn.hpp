#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace heg::nn {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Named slice of the flat parameter vector.
struct ParamBlock {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Registry of named parameter blocks laid out contiguously.
class ParameterLayout {
public:
    std::size_t add(const std::string& name, std::vector<int> shape);
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::size_t size() const { return size_; }
    const ParamBlock& find(const std::string& name) const;
    bool contains(const std::string& name) const;

private:
    std::vector<ParamBlock> blocks_;
    std::size_t size_ = 0;
};

double gelu(double x);
double gelu_d1(double x);
double gelu_d2(double x);

/// Value, gradient with respect to `ncoord` real coordinates, and Laplacian
/// (sum of second derivatives over those coordinates) of a rows x cols array.
///
/// `grad` stacks one rows x cols block per coordinate: rows [k*rows, (k+1)*rows).
struct Jet {
    int ncoord = 0;
    Matrix val;
    Matrix grad;
    Matrix lap;

    int rows() const { return static_cast<int>(val.rows()); }
    int cols() const { return static_cast<int>(val.cols()); }
    auto block(int k) { return grad.middleRows(static_cast<Eigen::Index>(k) * rows(), rows()); }
    auto block(int k) const { return grad.middleRows(static_cast<Eigen::Index>(k) * rows(), rows()); }

    static Jet constant(const Matrix& value, int ncoord);
};

Jet hconcat(const Jet& a, const Jet& b);
/// Elementwise product.
Jet hadamard(const Jet& a, const Jet& b);
Jet gelu(const Jet& x);

/// Fully connected layer y = x W^T + b with W stored row-major (out x in).
struct DenseLayer {
    std::size_t weight = 0;
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
};

struct MlpCache {
    std::vector<Matrix> inputs;       // input of each layer
    std::vector<Matrix> preactivations;
};

/// Multilayer perceptron: GELU after every hidden layer, linear output.
class Mlp {
public:
    Mlp() = default;
    /// Registers layers sized by `widths` (input, hidden..., output) under `prefix`.
    Mlp(ParameterLayout& layout, const std::string& prefix, const std::vector<int>& widths);

    int in() const { return layers_.front().in; }
    int out() const { return layers_.back().out; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    Matrix forward(std::span<const double> params, const Matrix& x, MlpCache* cache = nullptr) const;
    /// Adds parameter gradients into `grad` and returns the input adjoint.
    Matrix backward(std::span<const double> params, const MlpCache& cache, const Matrix& dy,
                    std::span<double> grad) const;
    Jet forward(std::span<const double> params, const Jet& x) const;

    /// Fan-in scaled normal initialization; the output layer is scaled by `output_scale`.
    void initialize(std::span<double> params, std::mt19937_64& rng, double output_scale = 1.0) const;

private:
    std::vector<DenseLayer> layers_;
};

ConstMatrixMap weight_map(std::span<const double> params, const DenseLayer& layer);
Jet linear(const Jet& x, const Eigen::Ref<const RowMatrix>& w);
Jet linear(const Jet& x, const Eigen::Ref<const RowMatrix>& w, const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace heg::nn
