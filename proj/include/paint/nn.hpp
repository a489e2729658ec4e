#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paint/features.hpp"

namespace paint::nn {

/// Batches are column-major: one column per sample.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kTanh = 2 };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

/// Activations kept from a forward pass for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> outputs; // post-activation output of each layer
};

/// Parameter-shaped buffer (gradients, Adam moments).
struct ParamSet {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void set_zero();
  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator*=(double s);
  double squared_norm() const;
};

class Mlp {
 public:
  Mlp() = default;

  /// `dims` = {in, hidden..., out}; one activation per layer. Weights are
  /// uniform with He fan-in bound; the last layer is additionally multiplied
  /// by `output_scale`. Biases start at zero.
  Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
      std::uint64_t seed, double output_scale = 1.0);

  explicit Mlp(std::vector<DenseLayer> layers, std::uint64_t seed = 0);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, ForwardCache& cache) const;

  /// Reverse-mode pass from d(loss)/d(output). Returns parameter gradients;
  /// writes d(loss)/d(input) when `input_grad` is given.
  ParamSet backward(const ForwardCache& cache, const Matrix& output_grad,
                    Matrix* input_grad = nullptr) const;

  ParamSet zeros_like() const;
  bool all_finite() const;

  /// Flat parameter access in layer order (weights row-major, then biases).
  double& parameter(std::size_t flat_index);
  double parameter(std::size_t flat_index) const;
  static double flat(const ParamSet& params, std::size_t flat_index);

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t seed_ = 0;
};

/// Adam with bias correction.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  ParamSet m;
  ParamSet v;

  static AdamState for_network(const Mlp& net, double lr);
};

void adam_step(Mlp& net, const ParamSet& grads, AdamState& state);

/// target <- (1 - rate) * target + rate * online.
void soft_update(Mlp& target, const Mlp& online, double rate);

/// Mean-squared error over all entries and its gradient w.r.t. predictions.
double mse_loss(const Matrix& prediction, const Matrix& target, Matrix* grad = nullptr);

/// On-disk network: header (magic, version, shapes, activation tags, seed,
/// optional normalizer, optimizer state and metadata) then little-endian float64 arrays.
struct Checkpoint {
  Mlp net;
  std::optional<Normalizer> normalizer;
  std::optional<AdamState> optimizer;
  /// Named scalars stored alongside the weights (action scale, losses).
  std::map<std::string, double> metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace paint::nn
