#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "binaural/error.hpp"

namespace binaural {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Fully connected network with a sigmoid after every layer. Inputs and
/// outputs are column-major batches: one example per column.
template <typename ScalarT>
class DenseNet {
 public:
  using Scalar = ScalarT;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Gradient {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
  };

  DenseNet() = default;
  explicit DenseNet(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw Error(Errc::invalid_argument, "network needs at least 2 layers");
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
      weights_.push_back(Matrix::Zero(sizes_[l], sizes_[l - 1]));
      biases_.push_back(Vector::Zero(sizes_[l]));
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t layers() const { return weights_.size(); }
  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Vector>& biases() const { return biases_; }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  void init_glorot(std::mt19937_64& rng) {
    for (auto& w : weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
      }
    }
    for (auto& b : biases_) b.setZero();
  }

  Matrix forward(const Matrix& input) const {
    check_input(input);
    Matrix a = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      a = sigmoid(z);
    }
    return a;
  }

  /// Loss summed over the batch, where each example contributes the mean
  /// squared error over its outputs.
  Scalar mse_loss(const Matrix& input, const Matrix& target) const {
    const Matrix y = forward(input);
    return (y - target).squaredNorm() / static_cast<Scalar>(y.rows());
  }

  /// Same loss as mse_loss; fills `grad` with its derivative.
  Scalar mse_gradient(const Matrix& input, const Matrix& target, Gradient& grad) const {
    check_input(input);
    std::vector<Matrix> acts;
    acts.reserve(weights_.size() + 1);
    acts.push_back(input);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * acts.back();
      z.colwise() += biases_[l];
      acts.push_back(sigmoid(z));
    }
    const Matrix& y = acts.back();
    if (y.rows() != target.rows() || y.cols() != target.cols()) {
      throw Error(Errc::shape_mismatch, "target shape does not match network output");
    }
    const Scalar outputs = static_cast<Scalar>(y.rows());
    const Matrix diff = y - target;
    const Scalar loss = diff.squaredNorm() / outputs;

    grad.weights.resize(weights_.size());
    grad.biases.resize(weights_.size());
    Matrix delta = (Scalar(2) / outputs) * diff.cwiseProduct(sigmoid_slope(y));
    for (std::size_t l = weights_.size(); l-- > 0;) {
      grad.weights[l].noalias() = delta * acts[l].transpose();
      grad.biases[l] = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weights_[l].transpose() * delta;
        delta = back.cwiseProduct(sigmoid_slope(acts[l]));
      }
    }
    return loss;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return n;
  }

  bool operator==(const DenseNet& other) const {
    if (sizes_ != other.sizes_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
    }
    return true;
  }

 private:
  static Matrix sigmoid(const Matrix& z) {
    return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
  }
  static Matrix sigmoid_slope(const Matrix& a) {
    return (a.array() * (Scalar(1) - a.array())).matrix();
  }
  void check_input(const Matrix& input) const {
    if (static_cast<std::size_t>(input.rows()) != sizes_.front()) {
      throw Error(Errc::shape_mismatch, "input size does not match network");
    }
    if (!input.allFinite()) throw Error(Errc::invalid_argument, "non-finite network input");
  }

  std::vector<std::size_t> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Adam with bias correction. Moments live alongside the network they update.
/// `Net` exposes layers(), weights(), biases() and a Gradient with matching
/// weights/biases vectors.
template <typename Net>
class AdamOptimizer {
 public:
  using Scalar = typename Net::Scalar;

  AdamOptimizer(const Net& net, AdamConfig config) : config_(config) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      m_w_.push_back(Net::Matrix::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
      v_w_.push_back(m_w_.back());
      m_b_.push_back(Net::Vector::Zero(net.biases()[l].size()));
      v_b_.push_back(m_b_.back());
    }
  }

  void step(Net& net, const typename Net::Gradient& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto rate = static_cast<Scalar>(config_.learning_rate / c1);
    const auto v_scale = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    for (std::size_t l = 0; l < net.layers(); ++l) {
      update(net.weights()[l].array(), grad.weights[l].array(), m_w_[l].array(),
             v_w_[l].array(), b1, b2, rate, v_scale, eps);
      update(net.biases()[l].array(), grad.biases[l].array(), m_b_[l].array(), v_b_[l].array(),
             b1, b2, rate, v_scale, eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  template <typename P, typename G, typename M>
  static void update(P&& p, const G& g, M&& m, M&& v, Scalar b1, Scalar b2, Scalar rate,
                     Scalar v_scale, Scalar eps) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p -= rate * m / ((v * v_scale).sqrt() + eps);
  }

  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<typename Net::Matrix> m_w_, v_w_;
  std::vector<typename Net::Vector> m_b_, v_b_;
};

template <typename Scalar>
using Adam = AdamOptimizer<DenseNet<Scalar>>;

}  // namespace binaural
