#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "binaural/dense.hpp"
#include "binaural/mel.hpp"
#include "binaural/random.hpp"

namespace binaural {

/// Two 5x5 valid convolutions (16 then 32 kernels), each followed by a
/// rectifier and 2x2 max-pooling, then a 128-unit rectified dense layer and
/// a sigmoid output per label. A 128x25 input leaves a 29x3x32 map before
/// the dense layers.
///
/// Layer l stores its weights as (outputs x inputs); a convolution's inputs
/// are im2col rows ordered (channel, kernel row, kernel column).
template <typename ScalarT>
class MelCnn {
 public:
  using Scalar = ScalarT;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr std::size_t kKernel = 5;
  static constexpr std::size_t kConv1 = 16;
  static constexpr std::size_t kConv2 = 32;
  static constexpr std::size_t kHidden = 128;

  struct Gradient {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
  };

  MelCnn() = default;
  MelCnn(std::size_t labels, std::size_t bands = kMelBands, std::size_t frames = kMelFrames);

  std::size_t labels() const { return labels_; }
  std::size_t bands() const { return bands_; }
  std::size_t frames() const { return frames_; }
  std::size_t layers() const { return weights_.size(); }
  std::size_t flat_size() const;

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Vector>& biases() const { return biases_; }

  void init_glorot(Rng& rng);

  /// Label probabilities for one bands x frames input.
  Vector forward(const Matrix& mel) const;

  /// Mean per-label binary cross-entropy of one example.
  Scalar loss(const Matrix& mel, const Vector& target) const;

  /// Adds `weight` times the loss gradient of one example to `grad` and
  /// returns the (unweighted) loss.
  Scalar accumulate_gradient(const Matrix& mel, const Vector& target, Gradient& grad,
                             Scalar weight = Scalar(1)) const;

  Gradient zero_gradient() const;
  std::size_t parameter_count() const;

  template <typename Other>
  MelCnn<Other> cast() const {
    MelCnn<Other> out(labels_, bands_, frames_);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.weights()[l] = weights_[l].template cast<Other>();
      out.biases()[l] = biases_[l].template cast<Other>();
    }
    return out;
  }

  bool operator==(const MelCnn& other) const;

 private:
  struct Pass;
  void check_input(const Matrix& mel) const;
  Pass run(const Matrix& mel) const;

  std::size_t labels_ = 0;
  std::size_t bands_ = 0;
  std::size_t frames_ = 0;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

extern template class MelCnn<float>;
extern template class MelCnn<double>;

/// Largest relative difference between analytic and central-difference
/// derivatives over `samples` randomly chosen parameters of every layer.
double melcnn_gradient_check(const MelCnn<double>& net, const Eigen::MatrixXd& mel,
                             const Eigen::VectorXd& target, Rng& rng, std::size_t samples = 40,
                             double step = 1e-6);

}  // namespace binaural
