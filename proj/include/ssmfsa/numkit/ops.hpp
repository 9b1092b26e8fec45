#pragma once

#include "ssmfsa/numkit/tensor.hpp"

namespace ssmfsa::num {

// Forward/backward pairs for the handful of primitives the models use.
// Backward functions take the upstream gradient of the op's output and return
// or accumulate (+=) gradients of its inputs.

Vector matvec(const Matrix& a, const Vector& x);
/// For y = A x: dA += gy xᵀ (if dA), dx += Aᵀ gy (if dx).
void matvec_backward(const Matrix& a, const Vector& x, const Vector& gy, Matrix* da, Vector* dx);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix outer(const Vector& a, const Vector& b);

Vector relu(const Vector& x);
/// Gradient through ReLU given its input; zero at x <= 0.
Vector relu_backward(const Vector& x, const Vector& gy);

/// Max-subtracted softmax.
Vector softmax(const Vector& logits);
/// Vector-Jacobian product of softmax given its output y.
Vector softmax_backward(const Vector& y, const Vector& gy);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Vector normalized;  // (x - mean) / sqrt(var + eps)
  double inv_std = 0.0;
};

/// (x - mean) / sqrt(var + eps) * gain + bias with population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, double eps,
                  LayerNormCache* cache = nullptr);
/// Returns dx; accumulates into dgain / dbias when given.
Vector layer_norm_backward(const LayerNormCache& cache, const Vector& gain, const Vector& gy,
                           Vector* dgain, Vector* dbias);

inline constexpr double kColumnNormEps = 1e-8;

enum class ColumnNormKind {
  Unit,       // a_j / (lp(a_j) + eps)
  AtMostOne,  // a_j / max(1, lp(a_j))
};

struct ColumnNormCache {
  Vector norms;  // lp norm per column
};

/// Divides each column by its lp norm (p >= 1).
Matrix column_lp_norm(const Matrix& a, double p, double eps, ColumnNormKind kind = ColumnNormKind::Unit,
                      ColumnNormCache* cache = nullptr);
/// Gradient w.r.t. the unnormalized input. d|a|/da at a = 0 is taken as 0.
Matrix column_lp_norm_backward(const Matrix& a, const ColumnNormCache& cache, double p, double eps,
                               ColumnNormKind kind, const Matrix& gy);
/// Column lp norms without normalizing.
Vector column_lp_norms(const Matrix& a, double p);

struct CrossEntropy {
  double loss = 0.0;
  Vector grad;  // d loss / d logits = softmax(logits) - onehot(target)
  Vector probs;
};

/// -log softmax(logits)[target]. Throws UsageError on an invalid target.
CrossEntropy cross_entropy_from_logits(const Vector& logits, Eigen::Index target);

/// Index of the largest entry, lowest index on ties.
Eigen::Index argmax(const Vector& v);

}  // namespace ssmfsa::num
