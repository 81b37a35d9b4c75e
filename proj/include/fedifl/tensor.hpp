#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedifl {

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

inline Eigen::Index shape_count(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

/// Dense n-d array: row-major flat storage plus extents.
template <class Scalar>
struct Tensor {
  std::vector<int> shape;
  ArrayX<Scalar> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(ArrayX<Scalar>::Zero(shape_count(shape))) {}
  Tensor(std::vector<int> s, ArrayX<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_count(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor of(std::vector<int> s, std::initializer_list<Scalar> vals) {
    Tensor t(std::move(s));
    if (static_cast<Eigen::Index>(vals.size()) != t.data.size())
      throw ShapeError("initializer length does not match shape " + shape_str(t.shape));
    Eigen::Index i = 0;
    for (Scalar v : vals) t.data[i++] = v;
    return t;
  }

  Eigen::Index size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const { return data.isFinite().all(); }

  Scalar& operator[](Eigen::Index i) { return data[i]; }
  Scalar operator[](Eigen::Index i) const { return data[i]; }

  // rank-3 (batch, channel, length) accessors
  Scalar& at(int b, int c, int l) { return data[(static_cast<Eigen::Index>(b) * dim(1) + c) * dim(2) + l]; }
  Scalar at(int b, int c, int l) const { return data[(static_cast<Eigen::Index>(b) * dim(1) + c) * dim(2) + l]; }

  auto row(int b, int c) { return data.segment((static_cast<Eigen::Index>(b) * dim(1) + c) * dim(2), dim(2)); }
  auto row(int b, int c) const { return data.segment((static_cast<Eigen::Index>(b) * dim(1) + c) * dim(2), dim(2)); }

  Tensor reshaped(std::vector<int> s) const {
    if (shape_count(s) != data.size())
      throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s) + " changes element count");
    return Tensor(std::move(s), data);
  }

  /// View rank-2 data (rows, cols) as an Eigen matrix without copying.
  Eigen::Map<const RowMajorMatrix<Scalar>> matrix() const {
    if (rank() != 2) throw ShapeError("matrix view requires rank-2 tensor, got " + shape_str(shape));
    return {data.data(), dim(0), dim(1)};
  }
  Eigen::Map<RowMajorMatrix<Scalar>> matrix() {
    if (rank() != 2) throw ShapeError("matrix view requires rank-2 tensor, got " + shape_str(shape));
    return {data.data(), dim(0), dim(1)};
  }

  template <class Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, data.template cast<Other>());
  }
};

template <class Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const std::string& who) {
  if (!a.same_shape(b))
    throw ShapeError(who + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace fedifl
