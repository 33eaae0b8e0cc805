#pragma once

// Differentiable layers with hand-written backward passes.
//
// Every forward is a free function of (params, input). Backward functions take
// the same input again (callers keep it) plus the upstream gradient; they
// accumulate parameter gradients into the store and return the input gradient.
// Weights live in the store under "<name>.weight" and "<name>.bias".

#include <string>

#include "markovtype/tensor.hpp"

namespace markovtype {

inline constexpr double kLayerNormEpsilon = 1e-5;

namespace detail {

inline std::string weight_name(const std::string& name) { return name + ".weight"; }
inline std::string bias_name(const std::string& name) { return name + ".bias"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// linear: y = x W + b, W is [in, out], rows of x are independent samples.

template <typename Scalar>
void add_linear(ParamStore<Scalar>& ps, const std::string& name, Index in, Index out) {
  ps.add_uniform(detail::weight_name(name), {in, out}, in, out);
  ps.add(detail::bias_name(name), {out});
}

template <typename Scalar>
Matrix<Scalar> linear(const ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x) {
  const auto& w = ps.value(detail::weight_name(name));
  const auto& b = ps.value(detail::bias_name(name));
  if (w.rank() != 2 || b.size() != w.dim(1)) throw DimensionError("linear '" + name + "': malformed weights");
  if (x.cols() != w.dim(0)) {
    throw DimensionError("linear '" + name + "': input has " + std::to_string(x.cols()) + " features, weight expects " +
                         std::to_string(w.dim(0)));
  }
  Matrix<Scalar> y = x * w.matrix();
  y.rowwise() += b.values().transpose();
  return y;
}

template <typename Scalar>
Matrix<Scalar> linear_backward(ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x,
                               const MatrixIn<Scalar>& dy) {
  auto& w = ps.at(detail::weight_name(name));
  auto& b = ps.at(detail::bias_name(name));
  if (dy.cols() != w.value.dim(1) || dy.rows() != x.rows()) {
    throw DimensionError("linear '" + name + "': upstream gradient shape mismatch");
  }
  w.grad.matrix().noalias() += x.transpose() * dy;
  b.grad.values() += dy.colwise().sum().transpose();
  return dy * w.value.matrix().transpose();
}

// ---------------------------------------------------------------------------
// conv1d: valid cross-correlation along time. Input [ch_in, time], weight
// [ch_out, ch_in, kernel], output [ch_out, floor((time - kernel) / stride) + 1].

inline Index conv1d_output_length(Index time, Index kernel, Index stride) {
  if (stride < 1) throw DimensionError("conv1d: stride must be >= 1");
  if (time < kernel) {
    throw DimensionError("conv1d: input length " + std::to_string(time) + " is shorter than kernel " +
                         std::to_string(kernel));
  }
  return (time - kernel) / stride + 1;
}

template <typename Scalar>
void add_conv1d(ParamStore<Scalar>& ps, const std::string& name, Index in, Index out, Index kernel) {
  ps.add_uniform(detail::weight_name(name), {out, in, kernel}, in * kernel, out * kernel);
  ps.add(detail::bias_name(name), {out});
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& x, Index kernel, Index stride, Index out_len) {
  Matrix<Scalar> cols(x.rows() * kernel, out_len);
  for (Index c = 0; c < x.rows(); ++c) {
    for (Index j = 0; j < kernel; ++j) {
      for (Index t = 0; t < out_len; ++t) cols(c * kernel + j, t) = x(c, t * stride + j);
    }
  }
  return cols;
}

template <typename Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& cols, Index channels, Index time, Index kernel, Index stride) {
  Matrix<Scalar> x = Matrix<Scalar>::Zero(channels, time);
  for (Index c = 0; c < channels; ++c) {
    for (Index j = 0; j < kernel; ++j) {
      for (Index t = 0; t < cols.cols(); ++t) x(c, t * stride + j) += cols(c * kernel + j, t);
    }
  }
  return x;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> conv1d(const ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x, Index stride) {
  const auto& w = ps.value(detail::weight_name(name));
  const auto& b = ps.value(detail::bias_name(name));
  if (w.rank() != 3) throw DimensionError("conv1d '" + name + "': weight must be [out, in, kernel]");
  const Index kernel = w.dim(2);
  if (x.rows() != w.dim(1)) {
    throw DimensionError("conv1d '" + name + "': input has " + std::to_string(x.rows()) + " channels, weight expects " +
                         std::to_string(w.dim(1)));
  }
  const Index out_len = conv1d_output_length(x.cols(), kernel, stride);
  Matrix<Scalar> y = w.matrix() * detail::im2col(x, kernel, stride, out_len);
  y.colwise() += b.values();
  return y;
}

template <typename Scalar>
Matrix<Scalar> conv1d_backward(ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x,
                               Index stride, const MatrixIn<Scalar>& dy) {
  auto& w = ps.at(detail::weight_name(name));
  auto& b = ps.at(detail::bias_name(name));
  const Index kernel = w.value.dim(2);
  const Index out_len = conv1d_output_length(x.cols(), kernel, stride);
  if (dy.rows() != w.value.dim(0) || dy.cols() != out_len) {
    throw DimensionError("conv1d '" + name + "': upstream gradient shape mismatch");
  }
  const Matrix<Scalar> cols = detail::im2col(x, kernel, stride, out_len);
  w.grad.matrix().noalias() += dy * cols.transpose();
  b.grad.values() += dy.rowwise().sum();
  const Matrix<Scalar> dcols = w.value.matrix().transpose() * dy;
  return detail::col2im(dcols, x.rows(), x.cols(), kernel, stride);
}

// ---------------------------------------------------------------------------
// rect: elementwise max(x, 0).

template <typename Derived>
auto rect(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> rect_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  return (x.array() > Scalar(0)).select(dy, Matrix<Scalar>::Zero(dy.rows(), dy.cols()));
}

// ---------------------------------------------------------------------------
// layernorm over the last dimension with learned per-feature scale and shift.

template <typename Scalar>
void add_layernorm(ParamStore<Scalar>& ps, const std::string& name, Index features) {
  ps.add_constant(detail::weight_name(name), {features}, Scalar(1));
  ps.add(detail::bias_name(name), {features});
}

namespace detail {

template <typename Scalar>
void layernorm_stats(const Matrix<Scalar>& x, const std::string& name, Matrix<Scalar>& xhat, Vector<Scalar>& inv_std) {
  const Index d = x.cols();
  if (d < 2) throw DimensionError("layernorm '" + name + "': needs at least 2 features");
  const Vector<Scalar> mean = x.rowwise().mean();
  xhat = x.colwise() - mean;
  const Vector<Scalar> var = xhat.array().square().rowwise().sum() / Scalar(d);
  inv_std = (var.array() + Scalar(kLayerNormEpsilon)).rsqrt();
  xhat = inv_std.asDiagonal() * xhat;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> layernorm(const ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x) {
  const auto& gamma = ps.value(detail::weight_name(name));
  const auto& beta = ps.value(detail::bias_name(name));
  if (gamma.size() != x.cols()) throw DimensionError("layernorm '" + name + "': feature count mismatch");
  Matrix<Scalar> xhat;
  Vector<Scalar> inv_std;
  detail::layernorm_stats(x, name, xhat, inv_std);
  Matrix<Scalar> y = xhat * gamma.values().asDiagonal();
  y.rowwise() += beta.values().transpose();
  return y;
}

template <typename Scalar>
Matrix<Scalar> layernorm_backward(ParamStore<Scalar>& ps, const std::string& name, const MatrixIn<Scalar>& x,
                                  const MatrixIn<Scalar>& dy) {
  auto& gamma = ps.at(detail::weight_name(name));
  auto& beta = ps.at(detail::bias_name(name));
  Matrix<Scalar> xhat;
  Vector<Scalar> inv_std;
  detail::layernorm_stats(x, name, xhat, inv_std);
  gamma.grad.values() += (dy.array() * xhat.array()).colwise().sum().matrix().transpose();
  beta.grad.values() += dy.colwise().sum().transpose();

  const Scalar d = Scalar(x.cols());
  const Matrix<Scalar> dxhat = dy * gamma.value.values().asDiagonal();
  const Vector<Scalar> sum_dxhat = dxhat.rowwise().sum();
  const Vector<Scalar> sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
  Matrix<Scalar> dx = d * dxhat;
  dx.colwise() -= sum_dxhat;
  dx -= sum_dxhat_xhat.asDiagonal() * xhat;
  return (inv_std / d).asDiagonal() * dx;
}

// ---------------------------------------------------------------------------
// softmax over a vector, max-subtracted.

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& x) {
  Vector<Scalar> e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

// Given y = softmax(x) and dL/dy, returns dL/dx.
template <typename Scalar>
Vector<Scalar> softmax_backward(const Vector<Scalar>& y, const Vector<Scalar>& dy) {
  return y.cwiseProduct(dy.array().matrix() - Vector<Scalar>::Constant(y.size(), dy.dot(y)));
}

// ---------------------------------------------------------------------------
// Mean over the time axis: [ch, time] -> [1, ch].

template <typename Scalar>
Matrix<Scalar> mean_pool_time(const Matrix<Scalar>& x) {
  return x.rowwise().mean().transpose();
}

template <typename Scalar>
Matrix<Scalar> mean_pool_time_backward(Index time, const Matrix<Scalar>& dy) {
  return (dy.transpose() / Scalar(time)).replicate(1, time);
}

}  // namespace markovtype
