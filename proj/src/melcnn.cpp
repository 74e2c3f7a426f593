#include "binaural/melcnn.hpp"

#include <algorithm>
#include <cmath>

#include "binaural/error.hpp"

namespace binaural {

namespace {

// Feature maps are (channels x positions) with position = row * width + col.
template <typename Matrix>
Matrix im2col(const Matrix& in, std::size_t height, std::size_t width, std::size_t k) {
  const std::size_t out_h = height - k + 1;
  const std::size_t out_w = width - k + 1;
  const auto channels = static_cast<std::size_t>(in.rows());
  Matrix col(static_cast<Eigen::Index>(channels * k * k), static_cast<Eigen::Index>(out_h * out_w));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t di = 0; di < k; ++di) {
      for (std::size_t dj = 0; dj < k; ++dj) {
        const auto row = static_cast<Eigen::Index>((c * k + di) * k + dj);
        for (std::size_t i = 0; i < out_h; ++i) {
          for (std::size_t j = 0; j < out_w; ++j) {
            col(row, static_cast<Eigen::Index>(i * out_w + j)) =
                in(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>((i + di) * width + j + dj));
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters column gradients back onto the input map.
template <typename Matrix>
Matrix col2im(const Matrix& col, std::size_t channels, std::size_t height, std::size_t width,
              std::size_t k) {
  const std::size_t out_h = height - k + 1;
  const std::size_t out_w = width - k + 1;
  Matrix in = Matrix::Zero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(height * width));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t di = 0; di < k; ++di) {
      for (std::size_t dj = 0; dj < k; ++dj) {
        const auto row = static_cast<Eigen::Index>((c * k + di) * k + dj);
        for (std::size_t i = 0; i < out_h; ++i) {
          for (std::size_t j = 0; j < out_w; ++j) {
            in(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>((i + di) * width + j + dj)) +=
                col(row, static_cast<Eigen::Index>(i * out_w + j));
          }
        }
      }
    }
  }
  return in;
}

// 2x2 max-pooling; an odd trailing row or column is dropped. `arg` receives
// the source position of every pooled value (first maximum wins).
template <typename Matrix>
Matrix max_pool(const Matrix& in, std::size_t height, std::size_t width,
                std::vector<Eigen::Index>& arg) {
  const std::size_t ph = height / 2;
  const std::size_t pw = width / 2;
  const auto channels = in.rows();
  Matrix out(channels, static_cast<Eigen::Index>(ph * pw));
  arg.resize(static_cast<std::size_t>(channels) * ph * pw);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < ph; ++i) {
      for (std::size_t j = 0; j < pw; ++j) {
        Eigen::Index best = static_cast<Eigen::Index>(2 * i * width + 2 * j);
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const auto p = static_cast<Eigen::Index>((2 * i + di) * width + 2 * j + dj);
            if (in(c, p) > in(c, best)) best = p;
          }
        }
        const auto q = static_cast<Eigen::Index>(i * pw + j);
        out(c, q) = in(c, best);
        arg[static_cast<std::size_t>(c * out.cols() + q)] = best;
      }
    }
  }
  return out;
}

template <typename Matrix>
Matrix unpool(const Matrix& grad, std::size_t positions, const std::vector<Eigen::Index>& arg) {
  Matrix out = Matrix::Zero(grad.rows(), static_cast<Eigen::Index>(positions));
  for (Eigen::Index c = 0; c < grad.rows(); ++c) {
    for (Eigen::Index q = 0; q < grad.cols(); ++q) {
      out(c, arg[static_cast<std::size_t>(c * grad.cols() + q)]) += grad(c, q);
    }
  }
  return out;
}

template <typename Scalar>
Scalar softplus(Scalar z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

template <typename Scalar>
struct MelCnn<Scalar>::Pass {
  Matrix col1, z1, p1, col2, z2;
  Vector flat, z3, a3, z4, y;
  std::vector<Eigen::Index> arg1, arg2;
};

template <typename Scalar>
MelCnn<Scalar>::MelCnn(std::size_t labels, std::size_t bands, std::size_t frames)
    : labels_(labels), bands_(bands), frames_(frames) {
  if (labels == 0) throw Error(Errc::invalid_argument, "MelCnn needs at least one label");
  if ((bands - kKernel + 1) / 2 < kKernel || (frames - kKernel + 1) / 2 < kKernel ||
      bands < kKernel || frames < kKernel) {
    throw Error(Errc::invalid_argument, "mel input too small for two 5x5 convolutions");
  }
  const auto k2 = static_cast<Eigen::Index>(kKernel * kKernel);
  weights_.push_back(Matrix::Zero(kConv1, k2));
  weights_.push_back(Matrix::Zero(kConv2, kConv1 * k2));
  weights_.push_back(Matrix::Zero(kHidden, static_cast<Eigen::Index>(flat_size())));
  weights_.push_back(Matrix::Zero(static_cast<Eigen::Index>(labels), kHidden));
  for (const auto& w : weights_) biases_.push_back(Vector::Zero(w.rows()));
}

template <typename Scalar>
std::size_t MelCnn<Scalar>::flat_size() const {
  const std::size_t h1 = (bands_ - kKernel + 1) / 2;
  const std::size_t w1 = (frames_ - kKernel + 1) / 2;
  const std::size_t h2 = (h1 - kKernel + 1) / 2;
  const std::size_t w2 = (w1 - kKernel + 1) / 2;
  return kConv2 * h2 * w2;
}

template <typename Scalar>
void MelCnn<Scalar>::init_glorot(Rng& rng) {
  // Convolution fans count the receptive field on both sides.
  const double k2 = static_cast<double>(kKernel * kKernel);
  const std::array<double, 4> fan_in{k2, kConv1 * k2, static_cast<double>(flat_size()),
                                     static_cast<double>(kHidden)};
  const std::array<double, 4> fan_out{kConv1 * k2, kConv2 * k2, static_cast<double>(kHidden),
                                      static_cast<double>(labels_)};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double limit = std::sqrt(6.0 / (fan_in[l] + fan_out[l]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& w = weights_[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
    }
    biases_[l].setZero();
  }
}

template <typename Scalar>
void MelCnn<Scalar>::check_input(const Matrix& mel) const {
  if (static_cast<std::size_t>(mel.rows()) != bands_ ||
      static_cast<std::size_t>(mel.cols()) != frames_) {
    throw Error(Errc::shape_mismatch, "MelCnn input must be " + std::to_string(bands_) + "x" +
                                          std::to_string(frames_));
  }
  if (!mel.allFinite()) throw Error(Errc::invalid_argument, "non-finite MelCnn input");
}

template <typename Scalar>
typename MelCnn<Scalar>::Pass MelCnn<Scalar>::run(const Matrix& mel) const {
  check_input(mel);
  Pass p;
  // Row-major flattening of the band x frame input into one channel.
  Matrix in(1, static_cast<Eigen::Index>(bands_ * frames_));
  for (std::size_t i = 0; i < bands_; ++i) {
    for (std::size_t j = 0; j < frames_; ++j) {
      in(0, static_cast<Eigen::Index>(i * frames_ + j)) =
          mel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  const std::size_t h0 = bands_ - kKernel + 1, w0 = frames_ - kKernel + 1;
  p.col1 = im2col(in, bands_, frames_, kKernel);
  p.z1.noalias() = weights_[0] * p.col1;
  p.z1.colwise() += biases_[0];
  p.p1 = max_pool(Matrix(p.z1.cwiseMax(Scalar(0))), h0, w0, p.arg1);

  const std::size_t h1 = h0 / 2, w1 = w0 / 2;
  const std::size_t h2 = h1 - kKernel + 1, w2 = w1 - kKernel + 1;
  p.col2 = im2col(p.p1, h1, w1, kKernel);
  p.z2.noalias() = weights_[1] * p.col2;
  p.z2.colwise() += biases_[1];
  const Matrix p2 = max_pool(Matrix(p.z2.cwiseMax(Scalar(0))), h2, w2, p.arg2);

  p.flat = Eigen::Map<const Vector>(p2.data(), p2.size());
  p.z3.noalias() = weights_[2] * p.flat;
  p.z3 += biases_[2];
  p.a3 = p.z3.cwiseMax(Scalar(0));
  p.z4.noalias() = weights_[3] * p.a3;
  p.z4 += biases_[3];
  p.y = (Scalar(1) + (-p.z4.array()).exp()).inverse().matrix();
  return p;
}

template <typename Scalar>
typename MelCnn<Scalar>::Vector MelCnn<Scalar>::forward(const Matrix& mel) const {
  return run(mel).y;
}

template <typename Scalar>
Scalar MelCnn<Scalar>::loss(const Matrix& mel, const Vector& target) const {
  if (static_cast<std::size_t>(target.size()) != labels_) {
    throw Error(Errc::shape_mismatch, "target length does not match label count");
  }
  const Pass p = run(mel);
  // From logits: -t log s(z) - (1 - t) log(1 - s(z)) = softplus(z) - t z.
  Scalar total = 0;
  for (Eigen::Index i = 0; i < p.z4.size(); ++i) total += softplus(p.z4(i)) - target(i) * p.z4(i);
  return total / static_cast<Scalar>(labels_);
}

template <typename Scalar>
Scalar MelCnn<Scalar>::accumulate_gradient(const Matrix& mel, const Vector& target,
                                           Gradient& grad, Scalar weight) const {
  if (static_cast<std::size_t>(target.size()) != labels_) {
    throw Error(Errc::shape_mismatch, "target length does not match label count");
  }
  if (grad.weights.size() != weights_.size()) grad = zero_gradient();
  const Pass p = run(mel);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < p.z4.size(); ++i) total += softplus(p.z4(i)) - target(i) * p.z4(i);
  const Scalar n = static_cast<Scalar>(labels_);

  const Vector d4 = (p.y - target) * (weight / n);
  grad.weights[3].noalias() += d4 * p.a3.transpose();
  grad.biases[3] += d4;

  const Vector d3 = (weights_[3].transpose() * d4).cwiseProduct(
      (p.z3.array() > Scalar(0)).template cast<Scalar>().matrix());
  grad.weights[2].noalias() += d3 * p.flat.transpose();
  grad.biases[2] += d3;

  const std::size_t h0 = bands_ - kKernel + 1, w0 = frames_ - kKernel + 1;
  const std::size_t h1 = h0 / 2, w1 = w0 / 2;
  const std::size_t h2 = h1 - kKernel + 1, w2 = w1 - kKernel + 1;

  const Vector dflat = weights_[2].transpose() * d3;
  const Matrix dp2 = Eigen::Map<const Matrix>(dflat.data(), kConv2,
                                              static_cast<Eigen::Index>((h2 / 2) * (w2 / 2)));
  const Matrix dz2 = unpool(dp2, h2 * w2, p.arg2)
                         .cwiseProduct((p.z2.array() > Scalar(0)).template cast<Scalar>().matrix());
  grad.weights[1].noalias() += dz2 * p.col2.transpose();
  grad.biases[1] += dz2.rowwise().sum();

  const Matrix dp1 = col2im(Matrix(weights_[1].transpose() * dz2), kConv1, h1, w1, kKernel);
  const Matrix dz1 = unpool(dp1, h0 * w0, p.arg1)
                         .cwiseProduct((p.z1.array() > Scalar(0)).template cast<Scalar>().matrix());
  grad.weights[0].noalias() += dz1 * p.col1.transpose();
  grad.biases[0] += dz1.rowwise().sum();
  return total / n;
}

template <typename Scalar>
typename MelCnn<Scalar>::Gradient MelCnn<Scalar>::zero_gradient() const {
  Gradient g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.push_back(Vector::Zero(biases_[l].size()));
  }
  return g;
}

template <typename Scalar>
std::size_t MelCnn<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

template <typename Scalar>
bool MelCnn<Scalar>::operator==(const MelCnn& other) const {
  if (labels_ != other.labels_ || bands_ != other.bands_ || frames_ != other.frames_) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
  }
  return true;
}

template class MelCnn<float>;
template class MelCnn<double>;

double melcnn_gradient_check(const MelCnn<double>& net, const Eigen::MatrixXd& mel,
                             const Eigen::VectorXd& target, Rng& rng, std::size_t samples,
                             double step) {
  auto grad = net.zero_gradient();
  net.accumulate_gradient(mel, target, grad);
  MelCnn<double> probe = net;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (std::size_t s = 0; s < samples; ++s) {
      const bool bias = s % 5 == 0;
      double* param;
      double analytic;
      if (bias) {
        auto& b = probe.biases()[l];
        const auto i = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(b.size()));
        param = &b(i);
        analytic = grad.biases[l](i);
      } else {
        auto& w = probe.weights()[l];
        const auto i = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(w.rows()));
        const auto j = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(w.cols()));
        param = &w(i, j);
        analytic = grad.weights[l](i, j);
      }
      const double saved = *param;
      *param = saved + step;
      const double up = probe.loss(mel, target);
      *param = saved - step;
      const double down = probe.loss(mel, target);
      *param = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace binaural
