#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "chartx/common.hpp"

namespace chartx::ad {

// Dense row-major multi-dimensional array over an Eigen buffer.
// Rank is dynamic; indexing follows C order: for shape [d0,d1,d2] the flat
// offset of (i,j,k) is (i*d1 + j)*d2 + k.
template <typename Scalar>
class TensorT {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap = Eigen::Map<
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(check_numel(shape_));
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, Scalar v) {
    TensorT t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static TensorT from(std::vector<int> shape, std::initializer_list<Scalar> vals) {
    TensorT t(std::move(shape));
    if (static_cast<Eigen::Index>(vals.size()) != t.data_.size())
      throw ShapeError("TensorT::from: value count does not match shape");
    Eigen::Index i = 0;
    for (Scalar v : vals) t.data_[i++] = v;
    return t;
  }

  static TensorT scalar(Scalar v) { return full({1}, v); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  Eigen::Index numel() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  Scalar& operator()(int i) { return data_[i]; }
  Scalar operator()(int i) const { return data_[i]; }
  Scalar& operator()(int i, int j) { return data_[static_cast<Eigen::Index>(i) * dim(1) + j]; }
  Scalar operator()(int i, int j) const {
    return data_[static_cast<Eigen::Index>(i) * dim(1) + j];
  }
  Scalar& operator()(int i, int j, int k) {
    return data_[(static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k];
  }
  Scalar operator()(int i, int j, int k) const {
    return data_[(static_cast<Eigen::Index>(i) * dim(1) + j) * dim(2) + k];
  }

  // 2-D matrix view; the tensor must have exactly rows*cols elements.
  MatrixMap mat(Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != data_.size()) throw ShapeError("TensorT::mat: size mismatch");
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap mat(Eigen::Index rows, Eigen::Index cols) const {
    if (rows * cols != data_.size()) throw ShapeError("TensorT::mat: size mismatch");
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  MatrixMap mat2d() {
    if (rank() != 2) throw ShapeError("TensorT::mat2d: rank != 2");
    return mat(dim(0), dim(1));
  }
  ConstMatrixMap mat2d() const {
    if (rank() != 2) throw ShapeError("TensorT::mat2d: rank != 2");
    return mat(dim(0), dim(1));
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }
  bool all_finite() const { return data_.isFinite().all(); }

  void set_zero() { data_.setZero(); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static Eigen::Index check_numel(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("TensorT: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  Storage data_;
};

using Tensor = TensorT<double>;

}  // namespace chartx::ad
