#include <doctest.h>

#include "approx.hpp"

#include <random>

#include "qic/mlp.hpp"

using namespace qic;

namespace {

// Loss L = sum(g .* y) for a fixed random g, so dL/dy = g.
double loss(const Mlp<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g) {
  return (net.forward(x).array() * g.array()).sum();
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  Mlp<double> net({10, 7, 3});
  const Eigen::VectorXd x = Eigen::VectorXd::Random(10);
  CHECK(net.forward_one(x).isZero(0.0));
}

TEST_CASE("single linear layer is an affine map") {
  Mlp<double> net({3, 3});
  net.weight(0) = Eigen::Matrix3d::Identity();
  net.bias(0) << 1, 2, 3;
  const Eigen::Vector3d x(0.5, -1, 4);
  CHECK(net.forward_one(x).isApprox(Eigen::Vector3d(1.5, 1, 7)));
}

TEST_CASE("hidden layers apply tanh") {
  Mlp<double> net({1, 1, 1});
  net.weight(0)(0, 0) = 2.0;
  net.bias(0)(0) = 0.5;
  net.weight(1)(0, 0) = 3.0;
  net.bias(1)(0) = -1.0;
  Eigen::VectorXd x(1);
  x << 0.3;
  CHECK(net.forward_one(x)(0) == rel(3.0 * std::tanh(2.0 * 0.3 + 0.5) - 1.0));
}

TEST_CASE("parameter count and layout") {
  Mlp<double> net({4, 5, 2});
  CHECK(net.parameters().size() == 4 * 5 + 5 + 5 * 2 + 2);
  CHECK(net.layer_count() == 2);
  std::mt19937_64 rng(1);
  net.init_xavier(rng);
  const double limit = std::sqrt(6.0 / 9.0);
  CHECK(net.weight(0).cwiseAbs().maxCoeff() <= limit);
  CHECK(net.bias(0).isZero(0.0));
  CHECK_THROWS_AS(Mlp<double>({4}), std::invalid_argument);
  CHECK_THROWS_AS(Mlp<double>({4, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(net.forward_one(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("backprop matches central differences on random 10-dim inputs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp<double> net({10, 12, 9, 4});
    net.init_xavier(rng);
    net.parameters() += 0.1 * Eigen::VectorXd::Random(net.parameters().size());
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 3);
    const Eigen::MatrixXd g = Eigen::MatrixXd::Random(4, 3);
    Mlp<double>::Cache cache;
    net.forward(x, cache);
    const Eigen::VectorXd grad = net.backward(cache, g);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      Mlp<double> plus = net, minus = net;
      plus.parameters()(i) += h;
      minus.parameters()(i) -= h;
      const double fd = (loss(plus, x, g) - loss(minus, x, g)) / (2 * h);
      if (std::abs(fd) > 1e-6) CHECK(grad(i) == rel(fd).epsilon(1e-4));
      else CHECK(std::abs(grad(i) - fd) < 1e-8);
    }
  }
}

TEST_CASE("the network is templated on the scalar type") {
  Mlp<float> f({3, 4, 2});
  std::mt19937 rng(3);
  f.init_xavier(rng);
  Mlp<double> d({3, 4, 2});
  d.parameters() = f.parameters().cast<double>();
  const Eigen::Vector3f x(0.1f, -0.2f, 0.3f);
  const Eigen::VectorXf yf = f.forward_one(x);
  const Eigen::VectorXd yd = d.forward_one(x.cast<double>());
  CHECK(yf.cast<double>().isApprox(yd, 1e-5));
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Adam<double> opt;
  opt.learning_rate = 0.01;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 1e-3;
  opt.step(p, g);
  CHECK(p(0) == rel(-0.01).epsilon(1e-6));
  CHECK(p(1) == rel(0.01).epsilon(1e-6));
  CHECK(p(2) == rel(-0.01).epsilon(1e-4));
  CHECK(opt.steps == 1);
}

TEST_CASE("adam minimizes a quadratic") {
  Adam<double> opt;
  opt.learning_rate = 0.05;
  Eigen::VectorXd p(2);
  p << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * (p - Eigen::Vector2d(1, 1)));
  CHECK(p(0) == rel(1.0).epsilon(1e-3));
  CHECK(p(1) == rel(1.0).epsilon(1e-3));
}
