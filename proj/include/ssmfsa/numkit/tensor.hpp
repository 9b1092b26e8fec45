#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssmfsa::num {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Complex vector stored as paired real components.
struct ComplexVector {
  Vector re;
  Vector im;

  ComplexVector() = default;
  explicit ComplexVector(Eigen::Index n) : re(Vector::Zero(n)), im(Vector::Zero(n)) {}
  ComplexVector(Vector real, Vector imag);

  Eigen::Index size() const { return re.size(); }
  /// Elementwise product, this ⊙ other.
  ComplexVector hadamard(const ComplexVector& other) const;
  /// Elementwise modulus.
  Vector modulus() const;
  double max_abs_diff(const ComplexVector& other) const;
};

/// Throws NonFiniteError naming `what` if any entry is NaN or Inf.
void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what);
bool all_finite(const Eigen::Ref<const Matrix>& m);

/// Throws ShapeError unless a and b have identical shapes.
void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what);

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Ordered collection of named tensors. Used for parameters, for their
/// gradients (same names and shapes) and for optimizer moments. Vectors are
/// stored as single-column matrices.
class TensorStore {
 public:
  Matrix& add(std::string name, Matrix value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::size_t index) { return tensors_.at(index).value; }
  const Matrix& at(std::size_t index) const { return tensors_.at(index).value; }

  std::size_t size() const { return tensors_.size(); }
  std::span<NamedTensor> tensors() { return tensors_; }
  std::span<const NamedTensor> tensors() const { return tensors_; }
  std::size_t num_scalars() const;

  /// Same names and shapes, all zero.
  TensorStore zeros_like() const;
  bool same_layout(const TensorStore& other) const;
  void set_zero();
  /// this += scale * other; layouts must match.
  void add_scaled(const TensorStore& other, double scale);
  void scale(double factor);
  double max_abs() const;
  bool operator==(const TensorStore& other) const;

 private:
  std::vector<NamedTensor> tensors_;
};

using ParamStore = TensorStore;
using GradStore = TensorStore;

}  // namespace ssmfsa::num
