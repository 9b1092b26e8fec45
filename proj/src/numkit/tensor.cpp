#include "ssmfsa/numkit/tensor.hpp"

#include "ssmfsa/error.hpp"

#include <algorithm>
#include <cmath>

namespace ssmfsa::num {

ComplexVector::ComplexVector(Vector real, Vector imag) : re(std::move(real)), im(std::move(imag)) {
  if (re.size() != im.size()) throw ShapeError("ComplexVector: real and imaginary lengths differ");
}

ComplexVector ComplexVector::hadamard(const ComplexVector& o) const {
  if (size() != o.size()) throw ShapeError("ComplexVector::hadamard: length mismatch");
  ComplexVector out(size());
  out.re = re.cwiseProduct(o.re) - im.cwiseProduct(o.im);
  out.im = re.cwiseProduct(o.im) + im.cwiseProduct(o.re);
  return out;
}

Vector ComplexVector::modulus() const { return (re.array().square() + im.array().square()).sqrt(); }

double ComplexVector::max_abs_diff(const ComplexVector& o) const {
  if (size() != o.size()) throw ShapeError("ComplexVector::max_abs_diff: length mismatch");
  if (size() == 0) return 0.0;
  return std::max((re - o.re).cwiseAbs().maxCoeff(), (im - o.im).cwiseAbs().maxCoeff());
}

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

void require_finite(const Eigen::Ref<const Matrix>& m, std::string_view what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite value");
}

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Matrix& TensorStore::add(std::string name, Matrix value) {
  if (contains(name)) throw UsageError("TensorStore: duplicate tensor '" + name + "'");
  tensors_.push_back({std::move(name), std::move(value)});
  return tensors_.back().value;
}

bool TensorStore::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const NamedTensor& t) { return t.name == name; });
}

std::size_t TensorStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw UsageError("TensorStore: no tensor named '" + std::string(name) + "'");
}

Matrix& TensorStore::at(std::string_view name) { return tensors_[index_of(name)].value; }
const Matrix& TensorStore::at(std::string_view name) const { return tensors_[index_of(name)].value; }

std::size_t TensorStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

TensorStore TensorStore::zeros_like() const {
  TensorStore out;
  out.tensors_.reserve(tensors_.size());
  for (const auto& t : tensors_) out.tensors_.push_back({t.name, Matrix::Zero(t.value.rows(), t.value.cols())});
  return out;
}

bool TensorStore::same_layout(const TensorStore& o) const {
  if (o.tensors_.size() != tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = o.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
  }
  return true;
}

void TensorStore::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

void TensorStore::add_scaled(const TensorStore& o, double s) {
  if (!same_layout(o)) throw ShapeError("TensorStore::add_scaled: layout mismatch");
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].value += s * o.tensors_[i].value;
}

void TensorStore::scale(double factor) {
  for (auto& t : tensors_) t.value *= factor;
}

double TensorStore::max_abs() const {
  double m = 0.0;
  for (const auto& t : tensors_) {
    if (t.value.size() > 0) m = std::max(m, t.value.cwiseAbs().maxCoeff());
  }
  return m;
}

bool TensorStore::operator==(const TensorStore& o) const {
  if (!same_layout(o)) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].value != o.tensors_[i].value) return false;
  }
  return true;
}

}  // namespace ssmfsa::num
