#include "heg/nn.hpp"

#include "heg/errors.hpp"

#include <cmath>
#include <numbers>

namespace heg::nn {

std::size_t ParameterLayout::add(const std::string& name, std::vector<int> shape) {
    if (contains(name)) throw InvalidInput("duplicate parameter block " + name);
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    blocks_.push_back({name, std::move(shape), size_, n});
    size_ += n;
    return blocks_.back().offset;
}

const ParamBlock& ParameterLayout::find(const std::string& name) const {
    for (const auto& b : blocks_)
        if (b.name == name) return b;
    throw InvalidInput("unknown parameter block " + name);
}

bool ParameterLayout::contains(const std::string& name) const {
    for (const auto& b : blocks_)
        if (b.name == name) return true;
    return false;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_d1(double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)) + x * pdf;
}

double gelu_d2(double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return pdf * (2.0 - x * x);
}

Jet Jet::constant(const Matrix& value, int ncoord) {
    Jet j;
    j.ncoord = ncoord;
    j.val = value;
    j.grad = Matrix::Zero(value.rows() * ncoord, value.cols());
    j.lap = Matrix::Zero(value.rows(), value.cols());
    return j;
}

Jet hconcat(const Jet& a, const Jet& b) {
    Jet j;
    j.ncoord = a.ncoord;
    j.val.resize(a.rows(), a.cols() + b.cols());
    j.val << a.val, b.val;
    j.grad.resize(a.grad.rows(), a.cols() + b.cols());
    j.grad << a.grad, b.grad;
    j.lap.resize(a.rows(), a.cols() + b.cols());
    j.lap << a.lap, b.lap;
    return j;
}

Jet hadamard(const Jet& a, const Jet& b) {
    Jet j;
    j.ncoord = a.ncoord;
    j.val = a.val.cwiseProduct(b.val);
    j.grad.resize(a.grad.rows(), a.cols());
    j.lap = a.val.cwiseProduct(b.lap) + b.val.cwiseProduct(a.lap);
    for (int k = 0; k < a.ncoord; ++k) {
        const auto ga = a.block(k);
        const auto gb = b.block(k);
        j.block(k) = a.val.cwiseProduct(gb) + b.val.cwiseProduct(ga);
        j.lap += 2.0 * ga.cwiseProduct(gb);
    }
    return j;
}

Jet gelu(const Jet& x) {
    const Matrix d1 = x.val.unaryExpr([](double v) { return gelu_d1(v); });
    const Matrix d2 = x.val.unaryExpr([](double v) { return gelu_d2(v); });
    Jet j;
    j.ncoord = x.ncoord;
    j.val = x.val.unaryExpr([](double v) { return gelu(v); });
    j.grad.resize(x.grad.rows(), x.cols());
    Matrix sq = Matrix::Zero(x.rows(), x.cols());
    for (int k = 0; k < x.ncoord; ++k) {
        const auto g = x.block(k);
        j.block(k) = d1.cwiseProduct(g);
        sq += g.cwiseAbs2();
    }
    j.lap = d1.cwiseProduct(x.lap) + d2.cwiseProduct(sq);
    return j;
}

ConstMatrixMap weight_map(std::span<const double> params, const DenseLayer& layer) {
    return {params.data() + layer.weight, layer.out, layer.in};
}

Jet linear(const Jet& x, const Eigen::Ref<const RowMatrix>& w) {
    Jet j;
    j.ncoord = x.ncoord;
    j.val.noalias() = x.val * w.transpose();
    j.grad.noalias() = x.grad * w.transpose();
    j.lap.noalias() = x.lap * w.transpose();
    return j;
}

Jet linear(const Jet& x, const Eigen::Ref<const RowMatrix>& w, const Eigen::Ref<const Eigen::VectorXd>& b) {
    Jet j = linear(x, w);
    j.val.rowwise() += b.transpose();
    return j;
}

Mlp::Mlp(ParameterLayout& layout, const std::string& prefix, const std::vector<int>& widths) {
    if (widths.size() < 2) throw InvalidInput("an MLP needs at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.in = widths[l];
        layer.out = widths[l + 1];
        const std::string base = prefix + ".l" + std::to_string(l);
        layer.weight = layout.add(base + ".w", {layer.out, layer.in});
        layer.bias = layout.add(base + ".b", {layer.out});
        layers_.push_back(layer);
    }
}

Matrix Mlp::forward(std::span<const double> params, const Matrix& x, MlpCache* cache) const {
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const auto w = weight_map(params, layer);
        const Eigen::Map<const Eigen::VectorXd> b(params.data() + layer.bias, layer.out);
        Matrix z = h * w.transpose();
        z.rowwise() += b.transpose();
        if (cache) cache->inputs.push_back(h);
        if (l + 1 < layers_.size()) {
            if (cache) cache->preactivations.push_back(z);
            h = z.unaryExpr([](double v) { return gelu(v); });
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Matrix Mlp::backward(std::span<const double> params, const MlpCache& cache, const Matrix& dy,
                     std::span<double> grad) const {
    Matrix d = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        if (l + 1 < layers_.size())
            d = d.cwiseProduct(cache.preactivations[l].unaryExpr([](double v) { return gelu_d1(v); }));
        Eigen::Map<RowMatrix> gw(grad.data() + layer.weight, layer.out, layer.in);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.bias, layer.out);
        gw.noalias() += d.transpose() * cache.inputs[l];
        gb += d.colwise().sum().transpose();
        d = d * weight_map(params, layer);
    }
    return d;
}

Jet Mlp::forward(std::span<const double> params, const Jet& x) const {
    Jet h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const Eigen::Map<const Eigen::VectorXd> b(params.data() + layer.bias, layer.out);
        h = linear(h, weight_map(params, layer), b);
        if (l + 1 < layers_.size()) h = gelu(h);
    }
    return h;
}

void Mlp::initialize(std::span<double> params, std::mt19937_64& rng, double output_scale) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        double stddev = 1.0 / std::sqrt(static_cast<double>(layer.in));
        if (l + 1 == layers_.size()) stddev *= output_scale;
        std::normal_distribution<double> dist(0.0, stddev);
        for (int i = 0; i < layer.out * layer.in; ++i) params[layer.weight + static_cast<std::size_t>(i)] = dist(rng);
        for (int i = 0; i < layer.out; ++i) params[layer.bias + static_cast<std::size_t>(i)] = 0.0;
    }
}

}  // namespace heg::nn
