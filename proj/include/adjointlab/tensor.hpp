#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adjointlab {

/// Dense row-major array of 64-bit reals with an explicit shape.
/// All tape values and gradients are carried in this type.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Eigen::Index> dims)
      : dims_(std::move(dims)), data_(Eigen::VectorXd::Zero(count(dims_))) {}

  Tensor(std::vector<Eigen::Index> dims, Eigen::VectorXd data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != count(dims_)) {
      throw std::invalid_argument("Tensor: data size does not match shape");
    }
  }

  static Tensor scalar(double v) {
    Tensor t(std::vector<Eigen::Index>{1});
    t.data_(0) = v;
    return t;
  }

  static Tensor zeros(std::vector<Eigen::Index> dims) { return Tensor(std::move(dims)); }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  static Tensor from_vector(Eigen::VectorXd v) {
    const Eigen::Index n = v.size();
    return Tensor({n}, std::move(v));
  }

  /// Row-major flattening of a matrix into a rank-2 tensor.
  static Tensor from_matrix(const Eigen::MatrixXd& m) {
    Eigen::VectorXd flat(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat(r * m.cols() + c) = m(r, c);
    return Tensor({m.rows(), m.cols()}, std::move(flat));
  }

  bool empty() const { return data_.size() == 0; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(dims_.size()); }
  const std::vector<Eigen::Index>& dims() const { return dims_; }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool is_scalar() const { return data_.size() == 1; }

  double scalar_value() const {
    if (!is_scalar()) throw std::logic_error("Tensor: scalar_value on non-scalar");
    return data_(0);
  }

  Eigen::VectorXd& flat() { return data_; }
  const Eigen::VectorXd& flat() const { return data_; }

  double operator[](Eigen::Index i) const { return data_(i); }
  double& operator[](Eigen::Index i) { return data_(i); }

  /// Rank-2 view materialized as a matrix (row-major element order).
  Eigen::MatrixXd as_matrix() const {
    if (rank() != 2) throw std::logic_error("Tensor: as_matrix on rank != 2");
    Eigen::MatrixXd m(dims_[0], dims_[1]);
    for (Eigen::Index r = 0; r < dims_[0]; ++r)
      for (Eigen::Index c = 0; c < dims_[1]; ++c) m(r, c) = data_(r * dims_[1] + c);
    return m;
  }

  Tensor& operator+=(const Tensor& other) {
    if (!same_shape(other)) throw std::invalid_argument("Tensor: shape mismatch in +=");
    data_ += other.data_;
    return *this;
  }

  std::string shape_string() const {
    std::string s = "[";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  static Eigen::Index count(const std::vector<Eigen::Index>& dims) {
    Eigen::Index n = 1;
    for (Eigen::Index d : dims) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<Eigen::Index> dims_;
  Eigen::VectorXd data_;
};

}  // namespace adjointlab
