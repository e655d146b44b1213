#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "retarget/math.hpp"

namespace retarget {

/// Fully connected network: affine + tanh per hidden layer, affine output.
/// Parameters live in one flat vector (per layer: weights column-major
/// out x in, then biases), so optimizers and checkpoints see a single array.
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {input, hidden..., output}. Parameters start at zero.
  explicit Mlp(std::vector<int> sizes);

  /// Orthogonal init scaled by `hidden_gain` for hidden layers and
  /// `output_gain` for the last layer; zero biases.
  void init(std::mt19937_64& rng, double hidden_gain = 1.0, double output_gain = 0.01);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index num_params() const { return params_.size(); }

  VecX& params() { return params_; }
  const VecX& params() const { return params_; }

  Eigen::Map<const MatX> weight(int layer) const;
  Eigen::Map<const VecX> bias(int layer) const;
  Eigen::Map<MatX> weight(int layer);
  Eigen::Map<VecX> bias(int layer);

  /// Activations kept for backward: acts[0] is the input, acts[l] the output
  /// of layer l (after tanh for hidden layers).
  struct Cache {
    std::vector<MatX> acts;
  };

  VecX forward(const VecX& x) const;
  /// Column-per-sample batch.
  MatX forward_batch(const MatX& x, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grad` (same size as params) for the
  /// batch in `cache`, given d(loss)/d(output). Returns d(loss)/d(input),
  /// or an empty matrix when `input_grad` is false.
  MatX backward(const Cache& cache, const MatX& d_out, VecX& grad, bool input_grad = true) const;

  void write(std::ostream& os) const;
  static Mlp read(std::istream& is);

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  ///< start of each layer's weights
  VecX params_;
};

/// Diagonal Gaussian with state-independent, fixed standard deviation.
struct GaussianPolicy {
  Mlp mean;
  double sigma = 0.02;

  VecX sample(const VecX& mu, std::mt19937_64& rng) const;
  /// Sum of per-dimension log densities.
  double log_prob(const VecX& mu, const VecX& action) const;
  /// d log_prob / d mu = (a - mu) / sigma^2.
  VecX log_prob_grad(const VecX& mu, const VecX& action) const;
};

/// Scales `grad` down to at most `max_norm`; returns the norm before
/// clipping.
double clip_grad_norm(VecX& grad, double max_norm);

class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  explicit Adam(Eigen::Index n) : m_(VecX::Zero(n)), v_(VecX::Zero(n)) {}

  void step(VecX& params, const VecX& grad, double lr);
  std::int64_t steps() const { return t_; }

  void write(std::ostream& os) const;
  static Adam read(std::istream& is);

 private:
  VecX m_, v_;
  std::int64_t t_ = 0;
};

/// Binary helpers shared by checkpoint writers.
void write_vec(std::ostream& os, const VecX& v);
VecX read_vec(std::istream& is);
void write_i64(std::ostream& os, std::int64_t v);
std::int64_t read_i64(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);

}  // namespace retarget
