#include "retarget/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <Eigen/QR>

namespace retarget {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = VecX::Zero(total);
}

Eigen::Map<const MatX> Mlp::weight(int l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const VecX> Mlp::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}
Eigen::Map<MatX> Mlp::weight(int l) { return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]}; }
Eigen::Map<VecX> Mlp::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

void Mlp::init(std::mt19937_64& rng, double hidden_gain, double output_gain) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1], cols = sizes_[l];
    const int big = std::max(rows, cols), small = std::min(rows, cols);
    MatX a(big, small);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    Eigen::HouseholderQR<MatX> qr(a);
    MatX q = qr.householderQ() * MatX::Identity(big, small);
    // sign fix so the result is uniformly distributed
    const MatX r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int k = 0; k < small; ++k)
      if (r(k, k) < 0.0) q.col(k) = -q.col(k);
    const double gain = l + 1 == num_layers() ? output_gain : hidden_gain;
    if (rows >= cols)
      weight(l) = gain * q;
    else
      weight(l) = gain * q.transpose();
    bias(l).setZero();
  }
}

VecX Mlp::forward(const VecX& x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("Mlp input has the wrong length");
  VecX a = x;
  for (int l = 0; l < num_layers(); ++l) {
    VecX z = weight(l) * a + bias(l);
    if (l + 1 < num_layers()) z = z.array().tanh();
    a = std::move(z);
  }
  return a;
}

MatX Mlp::forward_batch(const MatX& x, Cache* cache) const {
  if (x.rows() != input_dim()) throw std::invalid_argument("Mlp input has the wrong length");
  if (cache) {
    cache->acts.resize(num_layers() + 1);
    cache->acts[0] = x;
  }
  MatX a = x;
  for (int l = 0; l < num_layers(); ++l) {
    MatX z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = z.array().tanh();
    if (cache) cache->acts[l + 1] = z;
    a = std::move(z);
  }
  return a;
}

MatX Mlp::backward(const Cache& cache, const MatX& d_out, VecX& grad, bool input_grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient size does not match the network");
  MatX delta = d_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    if (l + 1 < num_layers()) delta.array() *= 1.0 - cache.acts[l + 1].array().square();
    const Eigen::Index rows = sizes_[l + 1], cols = sizes_[l];
    Eigen::Map<MatX> gw(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<VecX> gb(grad.data() + offsets_[l] + rows * cols, rows);
    gw.noalias() += delta * cache.acts[l].transpose();
    gb += delta.rowwise().sum();
    if (l == 0 && !input_grad) return MatX();
    delta = weight(l).transpose() * delta;
  }
  return delta;
}

void write_vec(std::ostream& os, const VecX& v) {
  write_i64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

VecX read_vec(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0 || n > (std::int64_t(1) << 34)) throw std::runtime_error("corrupt vector length in checkpoint");
  VecX v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

void write_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

void Mlp::write(std::ostream& os) const {
  write_i64(os, static_cast<std::int64_t>(sizes_.size()));
  for (int s : sizes_) write_i64(os, s);
  write_vec(os, params_);
}

Mlp Mlp::read(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 2 || n > 64) throw std::runtime_error("corrupt layer count in checkpoint");
  std::vector<int> sizes(n);
  for (auto& s : sizes) s = static_cast<int>(read_i64(is));
  Mlp net(sizes);
  VecX p = read_vec(is);
  if (p.size() != net.num_params()) throw std::runtime_error("checkpoint parameters do not match the layer sizes");
  net.params_ = std::move(p);
  return net;
}

VecX GaussianPolicy::sample(const VecX& mu, std::mt19937_64& rng) const {
  std::normal_distribution<double> n(0.0, 1.0);
  VecX a(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) a[i] = mu[i] + sigma * n(rng);
  return a;
}

double GaussianPolicy::log_prob(const VecX& mu, const VecX& action) const {
  const double k = static_cast<double>(mu.size());
  return -0.5 * (action - mu).squaredNorm() / (sigma * sigma) - k * std::log(sigma * std::sqrt(2.0 * M_PI));
}

VecX GaussianPolicy::log_prob_grad(const VecX& mu, const VecX& action) const {
  return (action - mu) / (sigma * sigma);
}

double clip_grad_norm(VecX& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
  return n;
}

void Adam::step(VecX& params, const VecX& grad, double lr) {
  if (m_.size() != params.size()) {
    m_ = VecX::Zero(params.size());
    v_ = VecX::Zero(params.size());
  }
  ++t_;
  m_ = beta1 * m_ + (1.0 - beta1) * grad;
  v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
}

void Adam::write(std::ostream& os) const {
  write_i64(os, t_);
  write_vec(os, m_);
  write_vec(os, v_);
}

Adam Adam::read(std::istream& is) {
  Adam a;
  a.t_ = read_i64(is);
  a.m_ = read_vec(is);
  a.v_ = read_vec(is);
  return a;
}

}  // namespace retarget
