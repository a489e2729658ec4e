#include "paint/nn.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "paint/error.hpp"

namespace paint::nn {

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
    case Activation::kTanh: z = z.array().tanh().matrix(); break;
  }
}

// d(out)/d(pre-activation) expressed through the post-activation output.
void apply_activation_grad(Activation act, const Matrix& out, Matrix& grad) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kRelu: grad = (out.array() > 0.0).select(grad, 0.0); break;
    case Activation::kTanh: grad = grad.cwiseProduct((1.0 - out.array().square()).matrix()); break;
  }
}

}  // namespace

void ParamSet::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

ParamSet& ParamSet::operator*=(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
  return *this;
}

double ParamSet::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weight) total += w.squaredNorm();
  for (const auto& b : bias) total += b.squaredNorm();
  return total;
}

Mlp::Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
         std::uint64_t seed, double output_scale)
    : seed_(seed) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw Error(ErrorCode::kDimensionMismatch, "need one activation per layer");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(in));
    if (l + 2 == dims.size()) bound *= output_scale;
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    // Row-major fill order so the draw sequence matches the file layout.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
    layer.activation = activations[l];
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers, std::uint64_t seed) : layers_(std::move(layers)), seed_(seed) {
  if (layers_.empty()) throw Error(ErrorCode::kDimensionMismatch, "network has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "bias does not match layer width");
    }
    if (l > 0 && layers_[l].in_dim() != layers_[l - 1].out_dim()) {
      throw Error(ErrorCode::kDimensionMismatch, "consecutive layer dimensions disagree");
    }
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix Mlp::forward(const Matrix& input) const {
  if (static_cast<std::size_t>(input.rows()) != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "input dimension mismatch");
  }
  Matrix x = input;
  for (const auto& layer : layers_) {
    Matrix z = layer.weight * x;
    z.colwise() += layer.bias;
    apply_activation(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

Matrix Mlp::forward(const Matrix& input, ForwardCache& cache) const {
  if (static_cast<std::size_t>(input.rows()) != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "input dimension mismatch");
  }
  cache.inputs.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  const Matrix* x = &input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    cache.inputs[l] = *x;
    Matrix z = layer.weight * (*x);
    z.colwise() += layer.bias;
    apply_activation(layer.activation, z);
    cache.outputs[l] = std::move(z);
    x = &cache.outputs[l];
  }
  return cache.outputs.back();
}

ParamSet Mlp::backward(const ForwardCache& cache, const Matrix& output_grad,
                       Matrix* input_grad) const {
  if (cache.outputs.size() != layers_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "backward called without a cached forward pass");
  }
  ParamSet grads = zeros_like();
  Matrix delta = output_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    apply_activation_grad(layer.activation, cache.outputs[l], delta);
    grads.weight[l].noalias() = delta * cache.inputs[l].transpose();
    grads.bias[l] = delta.rowwise().sum();
    if (l > 0 || input_grad) {
      Matrix next = layer.weight.transpose() * delta;
      delta = std::move(next);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return grads;
}

ParamSet Mlp::zeros_like() const {
  ParamSet p;
  for (const auto& l : layers_) {
    p.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    p.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return p;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

double& Mlp::parameter(std::size_t idx) {
  for (auto& l : layers_) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    if (idx < nw) return l.weight(static_cast<Eigen::Index>(idx / l.in_dim()),
                                  static_cast<Eigen::Index>(idx % l.in_dim()));
    idx -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (idx < nb) return l.bias(static_cast<Eigen::Index>(idx));
    idx -= nb;
  }
  throw Error(ErrorCode::kInvalidArgument, "parameter index out of range");
}

double Mlp::parameter(std::size_t idx) const { return const_cast<Mlp*>(this)->parameter(idx); }

double Mlp::flat(const ParamSet& params, std::size_t idx) {
  for (std::size_t l = 0; l < params.weight.size(); ++l) {
    const auto& w = params.weight[l];
    const auto nw = static_cast<std::size_t>(w.size());
    if (idx < nw) {
      const auto cols = static_cast<std::size_t>(w.cols());
      return w(static_cast<Eigen::Index>(idx / cols), static_cast<Eigen::Index>(idx % cols));
    }
    idx -= nw;
    const auto nb = static_cast<std::size_t>(params.bias[l].size());
    if (idx < nb) return params.bias[l](static_cast<Eigen::Index>(idx));
    idx -= nb;
  }
  throw Error(ErrorCode::kInvalidArgument, "parameter index out of range");
}

AdamState AdamState::for_network(const Mlp& net, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = net.zeros_like();
  s.v = net.zeros_like();
  return s;
}

void adam_step(Mlp& net, const ParamSet& grads, AdamState& state) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m.weight.size() != layers.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient shape does not match network");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double b1 = state.beta1, b2 = state.beta2;
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], state.m.weight[l], state.v.weight[l]);
    update(layers[l].bias, grads.bias[l], state.m.bias[l], state.v.bias[l]);
  }
}

void soft_update(Mlp& target, const Mlp& online, double rate) {
  auto& t = target.layers();
  const auto& o = online.layers();
  if (t.size() != o.size()) throw Error(ErrorCode::kDimensionMismatch, "network shapes differ");
  for (std::size_t l = 0; l < t.size(); ++l) {
    if (t[l].weight.rows() != o[l].weight.rows() || t[l].weight.cols() != o[l].weight.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "network shapes differ");
    }
    t[l].weight = (1.0 - rate) * t[l].weight + rate * o[l].weight;
    t[l].bias = (1.0 - rate) * t[l].bias + rate * o[l].bias;
  }
}

double mse_loss(const Matrix& prediction, const Matrix& target, Matrix* grad) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "prediction and target shapes differ");
  }
  const Matrix diff = prediction - target;
  const auto n = static_cast<double>(diff.size());
  if (grad) *grad = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

namespace {

constexpr char kMagic[8] = {'P', 'A', 'I', 'N', 'T', 'M', 'L', 'P'};

void write_params(std::ostream& out, const ParamSet& p) {
  for (std::size_t l = 0; l < p.weight.size(); ++l) {
    const auto& w = p.weight[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_f64(out, w(r, c));
    }
    for (Eigen::Index i = 0; i < p.bias[l].size(); ++i) detail::put_f64(out, p.bias[l](i));
  }
}

void read_params(std::istream& in, ParamSet& p) {
  for (std::size_t l = 0; l < p.weight.size(); ++l) {
    auto& w = p.weight[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = detail::get_f64(in);
    }
    for (Eigen::Index i = 0; i < p.bias[l].size(); ++i) p.bias[l](i) = detail::get_f64(in);
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& layers = ckpt.net.layers();
  out.write(kMagic, sizeof kMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, ckpt.net.seed());
  detail::put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(l.activation));
  }
  detail::put_u32(out, ckpt.normalizer ? 1u : 0u);
  if (ckpt.normalizer) {
    for (double v : ckpt.normalizer->mean) detail::put_f64(out, v);
    for (double v : ckpt.normalizer->scale) detail::put_f64(out, v);
  }
  detail::put_u32(out, ckpt.optimizer ? 1u : 0u);
  if (ckpt.optimizer) {
    const auto& a = *ckpt.optimizer;
    detail::put_f64(out, a.lr);
    detail::put_f64(out, a.beta1);
    detail::put_f64(out, a.beta2);
    detail::put_f64(out, a.eps);
    detail::put_u64(out, static_cast<std::uint64_t>(a.step));
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [key, value] : ckpt.metadata) {
    detail::put_string(out, key);
    detail::put_f64(out, value);
  }
  ParamSet weights;
  for (const auto& l : layers) {
    weights.weight.push_back(l.weight);
    weights.bias.push_back(l.bias);
  }
  write_params(out, weights);
  if (ckpt.optimizer) {
    write_params(out, ckpt.optimizer->m);
    write_params(out, ckpt.optimizer->v);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  detail::read_exact(in, magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw Error(ErrorCode::kIo, "not a network checkpoint");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t seed = detail::get_u64(in);
  const std::uint32_t n_layers = detail::get_u32(in);
  if (n_layers == 0 || n_layers > 64) throw Error(ErrorCode::kTruncated, "corrupt layer count");
  std::vector<DenseLayer> layers(n_layers);
  for (auto& l : layers) {
    const std::uint32_t in_dim = detail::get_u32(in);
    const std::uint32_t out_dim = detail::get_u32(in);
    const std::uint32_t act = detail::get_u32(in);
    if (in_dim == 0 || out_dim == 0 || in_dim > 1u << 16 || out_dim > 1u << 16 || act > 2) {
      throw Error(ErrorCode::kTruncated, "corrupt layer header");
    }
    l.weight = Matrix::Zero(out_dim, in_dim);
    l.bias = Vector::Zero(out_dim);
    l.activation = static_cast<Activation>(act);
  }
  Checkpoint ckpt;
  if (detail::get_u32(in) == 1u) {
    Normalizer n;
    for (double& v : n.mean) v = detail::get_f64(in);
    for (double& v : n.scale) v = detail::get_f64(in);
    ckpt.normalizer = n;
  }
  const bool has_optimizer = detail::get_u32(in) == 1u;
  AdamState adam;
  if (has_optimizer) {
    adam.lr = detail::get_f64(in);
    adam.beta1 = detail::get_f64(in);
    adam.beta2 = detail::get_f64(in);
    adam.eps = detail::get_f64(in);
    adam.step = static_cast<std::int64_t>(detail::get_u64(in));
  }
  const std::uint32_t n_meta = detail::get_u32(in);
  if (n_meta > 4096) throw Error(ErrorCode::kTruncated, "corrupt metadata count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string key = detail::get_string(in, 256);
    ckpt.metadata[std::move(key)] = detail::get_f64(in);
  }
  ParamSet weights;
  for (const auto& l : layers) {
    weights.weight.push_back(l.weight);
    weights.bias.push_back(l.bias);
  }
  read_params(in, weights);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight = std::move(weights.weight[l]);
    layers[l].bias = std::move(weights.bias[l]);
  }
  ckpt.net = Mlp(std::move(layers), seed);
  if (has_optimizer) {
    adam.m = ckpt.net.zeros_like();
    adam.v = ckpt.net.zeros_like();
    read_params(in, adam.m);
    read_params(in, adam.v);
    ckpt.optimizer = std::move(adam);
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace paint::nn
