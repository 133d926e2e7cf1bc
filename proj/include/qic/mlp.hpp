#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace qic {

/// Fully connected network with tanh hidden layers and a linear output layer.
/// All weights and biases live in one flat parameter vector.
template <typename Scalar>
class Mlp {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  /// Per-layer activations of a batch (one column per sample).
  struct Cache {
    std::vector<Matrix> activations;
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs input and output sizes");
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("layer size must be > 0");
      count += Eigen::Index(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
    }
    params_ = Vector::Zero(count);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  /// Xavier-uniform weights, zero biases.
  template <typename Rng>
  void init_xavier(Rng& rng) {
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const double limit = std::sqrt(6.0 / double(sizes_[l] + sizes_[l + 1]));
      std::uniform_real_distribution<double> dist(-limit, limit);
      auto w = weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(dist(rng));
      bias(l).setZero();
    }
  }

  Eigen::Map<Matrix> weight(std::size_t l) {
    return Eigen::Map<Matrix>(params_.data() + offset(l), sizes_[l + 1], sizes_[l]);
  }
  Eigen::Map<const Matrix> weight(std::size_t l) const {
    return Eigen::Map<const Matrix>(params_.data() + offset(l), sizes_[l + 1], sizes_[l]);
  }
  Eigen::Map<Vector> bias(std::size_t l) {
    return Eigen::Map<Vector>(params_.data() + offset(l) + Eigen::Index(sizes_[l + 1]) * sizes_[l],
                              sizes_[l + 1]);
  }
  Eigen::Map<const Vector> bias(std::size_t l) const {
    return Eigen::Map<const Vector>(
        params_.data() + offset(l) + Eigen::Index(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]);
  }

  Matrix forward(const Matrix& x, Cache& cache) const {
    if (x.rows() != input_size())
      throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) + " rows, expected " +
                                  std::to_string(input_size()));
    cache.activations.clear();
    cache.activations.push_back(x);
    for (std::size_t l = 0; l < layer_count(); ++l) {
      Matrix z = weight(l) * cache.activations.back();
      z.colwise() += bias(l);
      if (l + 1 < layer_count()) z = z.array().tanh().matrix();
      cache.activations.push_back(std::move(z));
    }
    return cache.activations.back();
  }

  Matrix forward(const Matrix& x) const {
    Cache cache;
    return forward(x, cache);
  }

  Vector forward_one(const Vector& x) const { return forward(Matrix(x)).col(0); }

  /// Gradient of sum_i dy(:, i) . y(:, i) with respect to the parameters.
  Vector backward(const Cache& cache, const Matrix& dy) const {
    const auto L = layer_count();
    if (cache.activations.size() != L + 1) throw std::invalid_argument("stale MLP cache");
    if (dy.rows() != output_size() || dy.cols() != cache.activations.back().cols())
      throw std::invalid_argument("MLP output gradient has the wrong shape");
    Vector grad = Vector::Zero(params_.size());
    Matrix delta = dy;
    for (std::size_t l = L; l-- > 0;) {
      const Matrix& input = cache.activations[l];
      Eigen::Map<Matrix>(grad.data() + offset(l), sizes_[l + 1], sizes_[l]) =
          delta * input.transpose();
      Eigen::Map<Vector>(grad.data() + offset(l) + Eigen::Index(sizes_[l + 1]) * sizes_[l],
                         sizes_[l + 1]) = delta.rowwise().sum();
      if (l == 0) break;
      Matrix back = weight(l).transpose() * delta;
      // input = tanh(z): d tanh = 1 - tanh^2.
      delta = (back.array() * (Scalar(1) - input.array().square())).matrix();
    }
    return grad;
  }

 private:
  Eigen::Index offset(std::size_t l) const {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < l; ++k) o += Eigen::Index(sizes_[k + 1]) * sizes_[k] + sizes_[k + 1];
    return o;
  }

  std::vector<int> sizes_;
  Vector params_;
};

/// Adam on a flat parameter vector.
template <typename Scalar>
struct Adam {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  Vector m;
  Vector v;
  long steps = 0;

  /// Descent step on `params` along `grad` (pass -grad to ascend).
  void step(Vector& params, const Vector& grad) {
    if (m.size() != params.size()) {
      m = Vector::Zero(params.size());
      v = Vector::Zero(params.size());
    }
    ++steps;
    m = beta1 * m + (Scalar(1) - beta1) * grad;
    v = beta2 * v + (Scalar(1) - beta2) * grad.cwiseProduct(grad);
    const Scalar c1 = Scalar(1) - std::pow(beta1, Scalar(steps));
    const Scalar c2 = Scalar(1) - std::pow(beta2, Scalar(steps));
    params.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }
};

}  // namespace qic
