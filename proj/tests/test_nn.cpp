#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "retarget/nn.hpp"

using namespace retarget;

namespace {

// Loss = c . net(x) summed over a batch; returns the worst relative error of
// the analytic gradient against central differences.
double gradient_check(Mlp& net, std::mt19937_64& rng, int batch = 3) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatX x(net.input_dim(), batch), c(net.output_dim(), batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = n(rng);
  auto loss = [&]() { return (net.forward_batch(x).array() * c.array()).sum(); };
  Mlp::Cache cache;
  net.forward_batch(x, &cache);
  VecX grad = VecX::Zero(net.num_params());
  net.backward(cache, c, grad);
  const double h = 1e-4;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double lp = loss();
    net.params()[i] = keep - h;
    const double lm = loss();
    net.params()[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("forward basics") {
  Mlp zero({3, 5, 2});
  CHECK(zero.forward(VecX::Ones(3)).norm() == 0.0);
  Mlp lin({1, 1});
  lin.weight(0)(0, 0) = 2.5;
  VecX x(1);
  x << -1.5;
  CHECK(lin.forward(x)[0] == -3.75);
  CHECK_THROWS(lin.forward(VecX::Ones(2)));
  CHECK(Mlp({4, 8, 2}).num_params() == 4 * 8 + 8 + 8 * 2 + 2);
  CHECK_THROWS(Mlp({4}));
}

TEST_CASE("golden 4-8-2 forward") {
  std::mt19937_64 rng(1234);
  Mlp net({4, 8, 2});
  net.init(rng, 1.0, 1.0);
  VecX x(4);
  x << 0.5, -1.0, 0.25, 2.0;
  const VecX y = net.forward(x);
  CHECK(std::abs(y[0] - -0.10179495943110739) < 1e-12);
  CHECK(std::abs(y[1] - -0.72581131223671247) < 1e-12);
  // orthogonal init
  CHECK((net.weight(0).transpose() * net.weight(0) - MatX::Identity(4, 4)).norm() < 1e-12);
  CHECK((net.weight(1) * net.weight(1).transpose() - MatX::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("backward basics") {
  Mlp lin({1, 1});
  lin.weight(0)(0, 0) = 0.7;
  MatX x(1, 1);
  x << 1.3;
  Mlp::Cache cache;
  lin.forward_batch(x, &cache);
  VecX g = VecX::Zero(lin.num_params());
  lin.backward(cache, MatX::Ones(1, 1), g);
  CHECK(g[0] == doctest::Approx(1.3));
  CHECK(g[1] == doctest::Approx(1.0));

  std::mt19937_64 rng(3);
  Mlp net({3, 6, 2});
  net.init(rng);
  net.forward_batch(MatX::Ones(3, 4), &cache);
  VecX z = VecX::Zero(net.num_params());
  net.backward(cache, MatX::Zero(2, 4), z);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("gradient check on random small nets") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> width(1, 9), depth(0, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{width(rng)};
    const int hidden = depth(rng);
    for (int h = 0; h < hidden; ++h) sizes.push_back(width(rng));
    sizes.push_back(width(rng));
    Mlp net(sizes);
    net.init(rng, 1.0, 1.0);
    std::normal_distribution<double> n(0.0, 0.3);
    for (Eigen::Index i = 0; i < net.num_params(); ++i) net.params()[i] += n(rng);
    worst = std::max(worst, gradient_check(net, rng));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient check on the policy and value shapes at reduced width") {
  std::mt19937_64 rng(12);
  Mlp policy({12, 30, 20, 10, 4});
  Mlp value({16, 40, 40, 30, 20, 1});
  policy.init(rng, 1.0, 1.0);
  value.init(rng, 1.0, 1.0);
  CHECK(gradient_check(policy, rng) < 1e-4);
  CHECK(gradient_check(value, rng) < 1e-4);
}

TEST_CASE("input gradient") {
  std::mt19937_64 rng(13);
  Mlp net({5, 7, 3});
  net.init(rng, 1.0, 1.0);
  MatX x = MatX::Random(5, 1), c = MatX::Random(3, 1);
  Mlp::Cache cache;
  net.forward_batch(x, &cache);
  VecX g = VecX::Zero(net.num_params());
  const MatX dx = net.backward(cache, c, g);
  for (int i = 0; i < 5; ++i) {
    MatX xp = x, xm = x;
    xp(i, 0) += 1e-5;
    xm(i, 0) -= 1e-5;
    const double fd = ((net.forward_batch(xp) - net.forward_batch(xm)).array() * c.array()).sum() / 2e-5;
    CHECK(fd == doctest::Approx(dx(i, 0)).epsilon(1e-7));
  }
}

TEST_CASE("gaussian policy") {
  GaussianPolicy pi;
  const VecX mu = VecX::Constant(3, 0.4);
  CHECK(pi.log_prob(mu, mu) / 3 == doctest::Approx(-std::log(0.02 * std::sqrt(2 * M_PI))).epsilon(1e-14));
  CHECK(pi.log_prob(mu, mu) / 3 == doctest::Approx(2.9930844722234733).epsilon(1e-12));
  CHECK(pi.log_prob_grad(mu, mu).norm() == 0.0);
  VecX a = mu;
  a[1] += 0.01;
  CHECK(pi.log_prob_grad(mu, a)[1] == doctest::Approx(0.01 / 0.0004));
  CHECK(std::exp(pi.log_prob(mu, a) - pi.log_prob(mu, a)) == 1.0);

  std::mt19937_64 r1(5), r2(5);
  CHECK(pi.sample(mu, r1) == pi.sample(mu, r2));
  std::mt19937_64 rng(6);
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sq += (pi.sample(mu, rng) - mu).squaredNorm();
  CHECK(std::sqrt(sq / (3 * n)) == doctest::Approx(0.02).epsilon(0.02));
}

TEST_CASE("adam and clipping") {
  VecX p = VecX::LinSpaced(4, -1, 1);
  const VecX p0 = p;
  Adam zero(4);
  zero.step(p, VecX::Zero(4), 1e-3);
  CHECK(p == p0);

  Adam adam(4);
  VecX g(4);
  g << 3.0, -0.5, 1e-3, -20.0;
  adam.step(p, g, 1.2e-4);
  for (int i = 0; i < 4; ++i) CHECK((p[i] - p0[i]) == doctest::Approx(-1.2e-4 * (g[i] > 0 ? 1 : -1)).epsilon(1e-4));
  CHECK(adam.steps() == 1);

  VecX big(2);
  big << 3.0, 4.0;
  CHECK(clip_grad_norm(big, 1.0) == 5.0);
  CHECK(big.norm() == doctest::Approx(1.0));
  VecX small(2);
  small << 0.3, 0.4;
  clip_grad_norm(small, 1.0);
  CHECK(small[0] == 0.3);
}

TEST_CASE("serialization round trip") {
  std::mt19937_64 rng(21);
  Mlp net({6, 9, 3});
  net.init(rng);
  Adam adam(net.num_params());
  adam.step(net.params(), VecX::Ones(net.num_params()), 0.1);
  std::stringstream ss;
  net.write(ss);
  adam.write(ss);
  const Mlp back = Mlp::read(ss);
  const Adam a2 = Adam::read(ss);
  CHECK(back.sizes() == net.sizes());
  CHECK(back.params() == net.params());
  CHECK(a2.steps() == 1);
  std::stringstream bad("xx");
  CHECK_THROWS(Mlp::read(bad));
}

TEST_CASE("parameter gradient without the input gradient") {
  std::mt19937_64 rng(31);
  Mlp net({6, 5, 3});
  net.init(rng, 1.0, 1.0);
  const MatX x = MatX::Random(6, 4), d = MatX::Random(3, 4);
  Mlp::Cache cache;
  net.forward_batch(x, &cache);
  VecX g1 = VecX::Zero(net.num_params()), g2 = VecX::Zero(net.num_params());
  const MatX dx = net.backward(cache, d, g1);
  const MatX none = net.backward(cache, d, g2, false);
  CHECK(g1 == g2);
  CHECK(dx.rows() == 6);
  CHECK(none.size() == 0);
}
