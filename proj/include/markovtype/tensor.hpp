#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "markovtype/errors.hpp"

namespace markovtype {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

// Matrix argument that does not take part in deduction, so Eigen expressions
// convert when the scalar is fixed by another argument.
template <typename Scalar>
using MatrixIn = std::type_identity_t<Matrix<Scalar>>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major tensor. Storage is a flat Eigen vector; `matrix()` views it
/// as a 2-D block for the math.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector<Scalar>::Zero(shape_size(shape_))) {}

  Tensor(Shape shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  Index size() const { return data_.size(); }

  Vector<Scalar>& values() { return data_; }
  const Vector<Scalar>& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  // View as [dim0, product of the remaining dims].
  MatrixMap<Scalar> matrix() { return MatrixMap<Scalar>(data_.data(), leading(), size() / leading()); }
  ConstMatrixMap<Scalar> matrix() const {
    return ConstMatrixMap<Scalar>(data_.data(), leading(), size() / leading());
  }

  // The i-th slice along axis 0, viewed as [dim1, product of the rest].
  ConstMatrixMap<Scalar> slice(Index i) const {
    const Index rows = rank() > 1 ? shape_[1] : 1;
    const Index stride = size() / leading();
    return ConstMatrixMap<Scalar>(data_.data() + i * stride, rows, stride / rows);
  }
  MatrixMap<Scalar> slice(Index i) {
    const Index rows = rank() > 1 ? shape_[1] : 1;
    const Index stride = size() / leading();
    return MatrixMap<Scalar>(data_.data() + i * stride, rows, stride / rows);
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Index leading() const { return shape_.empty() ? 1 : std::max<Index>(shape_[0], 1); }

  Shape shape_;
  Vector<Scalar> data_;
};

template <typename Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
};

/// Named parameters with paired gradient buffers. Iteration order is the
/// lexicographic name order, which fixes the order of optimizer updates and of
/// checkpoint layout.
template <typename Scalar>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), init_rng_(seed) {}

  Parameter<Scalar>& add(const std::string& name, Shape shape) {
    auto [it, inserted] = entries_.try_emplace(name, Parameter<Scalar>{Tensor<Scalar>(shape), Tensor<Scalar>(shape)});
    if (!inserted) throw ConfigError("parameter '" + name + "' already exists");
    return it->second;
  }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)).
  Parameter<Scalar>& add_uniform(const std::string& name, Shape shape, Index fan_in, Index fan_out) {
    auto& p = add(name, std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < p.value.size(); ++i) p.value.values()[i] = static_cast<Scalar>(dist(init_rng_));
    return p;
  }

  Parameter<Scalar>& add_constant(const std::string& name, Shape shape, Scalar value) {
    auto& p = add(name, std::move(shape));
    p.value.values().setConstant(value);
    return p;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Parameter<Scalar>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DimensionError("missing parameter '" + name + "'");
    return it->second;
  }
  const Parameter<Scalar>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DimensionError("missing parameter '" + name + "'");
    return it->second;
  }

  const Tensor<Scalar>& value(const std::string& name) const { return at(name).value; }
  Tensor<Scalar>& grad(const std::string& name) { return at(name).grad; }

  void zero_grads() {
    for (auto& [name, p] : entries_) p.grad.set_zero();
  }

  Index num_values() const {
    Index n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
  }

  std::uint64_t seed() const { return seed_; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out(seed_);
    for (const auto& [name, p] : entries_) {
      auto& q = out.add(name, p.value.shape());
      q.value = p.value.template cast<Other>();
      q.grad = p.grad.template cast<Other>();
    }
    return out;
  }

  // Adds every gradient of `other` into this store. Shapes must match.
  void accumulate_grads(const ParamStore& other) {
    for (auto& [name, p] : entries_) p.grad.values() += other.at(name).grad.values();
  }

 private:
  std::map<std::string, Parameter<Scalar>> entries_;
  std::uint64_t seed_;
  std::mt19937_64 init_rng_;
};

// Throws unless `actual` has exactly the names and shapes of `expected`.
template <typename Scalar>
void check_same_layout(const ParamStore<Scalar>& actual, const ParamStore<Scalar>& expected, const std::string& what) {
  for (const auto& [name, p] : expected) {
    if (!actual.contains(name)) throw DimensionError(what + ": missing parameter '" + name + "'");
    if (actual.at(name).value.shape() != p.value.shape()) {
      throw DimensionError(what + ": parameter '" + name + "' has shape " + shape_string(actual.at(name).value.shape()) +
                           ", expected " + shape_string(p.value.shape()));
    }
  }
  if (actual.size() != expected.size()) throw DimensionError(what + ": unexpected extra parameters");
}

}  // namespace markovtype
