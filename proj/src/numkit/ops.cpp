#include "ssmfsa/numkit/ops.hpp"

#include "ssmfsa/error.hpp"

#include <cmath>
#include <string>

namespace ssmfsa::num {

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: matrix cols != vector length");
  Vector y = a * x;
  require_finite(y, "matvec");
  return y;
}

void matvec_backward(const Matrix& a, const Vector& x, const Vector& gy, Matrix* da, Vector* dx) {
  if (a.cols() != x.size() || a.rows() != gy.size()) throw ShapeError("matvec_backward: shape mismatch");
  if (da) da->noalias() += gy * x.transpose();
  if (dx) dx->noalias() += a.transpose() * gy;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix c = a * b;
  require_finite(c, "matmul");
  return c;
}

Matrix outer(const Vector& a, const Vector& b) { return a * b.transpose(); }

Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

Vector relu_backward(const Vector& x, const Vector& gy) {
  if (x.size() != gy.size()) throw ShapeError("relu_backward: length mismatch");
  return (x.array() > 0.0).select(gy, 0.0);
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) return logits;
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

Vector softmax_backward(const Vector& y, const Vector& gy) {
  if (y.size() != gy.size()) throw ShapeError("softmax_backward: length mismatch");
  const double dot = y.dot(gy);
  return y.cwiseProduct((gy.array() - dot).matrix());
}

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, double eps, LayerNormCache* cache) {
  if (x.size() < 2) throw ShapeError("layer_norm: need at least two entries");
  if (gain.size() != x.size() || bias.size() != x.size()) throw ShapeError("layer_norm: gain/bias length");
  const double n = static_cast<double>(x.size());
  const double mean = x.sum() / n;
  const Vector centered = x.array() - mean;
  const double var = centered.squaredNorm() / n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  Vector normalized = centered * inv_std;
  Vector y = normalized.cwiseProduct(gain) + bias;
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

Vector layer_norm_backward(const LayerNormCache& cache, const Vector& gain, const Vector& gy, Vector* dgain,
                           Vector* dbias) {
  const auto& xhat = cache.normalized;
  if (gy.size() != xhat.size() || gain.size() != xhat.size()) throw ShapeError("layer_norm_backward: length");
  if (dgain) *dgain += gy.cwiseProduct(xhat);
  if (dbias) *dbias += gy;
  const Vector dxhat = gy.cwiseProduct(gain);
  const double n = static_cast<double>(xhat.size());
  const double mean_d = dxhat.sum() / n;
  const double mean_dx = dxhat.dot(xhat) / n;
  return cache.inv_std * (dxhat.array() - mean_d - xhat.array() * mean_dx).matrix();
}

namespace {

double lp_norm(const Eigen::Ref<const Vector>& col, double p) {
  if (p == 1.0) return col.lpNorm<1>();
  if (p == 2.0) return col.norm();
  double s = 0.0;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const double a = std::abs(col[i]);
    if (a > 0.0) s += std::pow(a, p);
  }
  return std::pow(s, 1.0 / p);
}

double denominator(double norm, double eps, ColumnNormKind kind) {
  return kind == ColumnNormKind::Unit ? norm + eps : std::max(1.0, norm);
}

}  // namespace

Vector column_lp_norms(const Matrix& a, double p) {
  if (p < 1.0) throw UsageError("column_lp_norm: p must be >= 1");
  Vector norms(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) norms[j] = lp_norm(a.col(j), p);
  return norms;
}

Matrix column_lp_norm(const Matrix& a, double p, double eps, ColumnNormKind kind, ColumnNormCache* cache) {
  Vector norms = column_lp_norms(a, p);
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) out.col(j) = a.col(j) / denominator(norms[j], eps, kind);
  require_finite(out, "column_lp_norm");
  if (cache) cache->norms = std::move(norms);
  return out;
}

Matrix column_lp_norm_backward(const Matrix& a, const ColumnNormCache& cache, double p, double eps,
                               ColumnNormKind kind, const Matrix& gy) {
  require_same_shape(a, gy, "column_lp_norm_backward");
  Matrix da(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double norm = cache.norms[j];
    const double denom = denominator(norm, eps, kind);
    da.col(j) = gy.col(j) / denom;
    const bool norm_active = norm > 0.0 && (kind == ColumnNormKind::Unit || norm > 1.0);
    if (!norm_active) continue;
    // d denom / d a_ij = sign(a_ij) |a_ij|^(p-1) norm^(1-p)
    const double coeff = gy.col(j).dot(a.col(j)) / (denom * denom);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double v = a(i, j);
      if (v == 0.0) continue;
      const double mag = std::abs(v);
      const double dnorm = (p == 1.0 ? 1.0 : std::pow(mag / norm, p - 1.0)) * (v > 0.0 ? 1.0 : -1.0);
      da(i, j) -= coeff * dnorm;
    }
  }
  return da;
}

CrossEntropy cross_entropy_from_logits(const Vector& logits, Eigen::Index target) {
  if (target < 0 || target >= logits.size()) {
    throw UsageError("cross_entropy: target " + std::to_string(target) + " outside [0, " +
                     std::to_string(logits.size()) + ")");
  }
  require_finite(logits, "cross_entropy logits");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  CrossEntropy out;
  out.loss = lse - logits[target];
  out.probs = (logits.array() - lse).exp();
  out.grad = out.probs;
  out.grad[target] -= 1.0;
  return out;
}

Eigen::Index argmax(const Vector& v) {
  if (v.size() == 0) throw ShapeError("argmax: empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace ssmfsa::num
