#pragma once

#include "ssmfsa/numkit/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ssmfsa::scan {

using num::Matrix;
using num::Vector;

/// The affine map x ↦ A x + b.
struct AffineElement {
  Matrix A;
  Vector b;

  static AffineElement identity(Eigen::Index n);
  Vector apply(const Vector& x) const { return A * x + b; }
};

/// Non-owning view of an affine map, used so callers with shared or cached
/// matrices do not copy them per step. `b == nullptr` means b = 0 and
/// `transposed` means the map uses Aᵀ.
struct AffineRef {
  const Matrix* A = nullptr;
  const Vector* b = nullptr;
  bool transposed = false;

  Eigen::Index dim() const { return A->rows(); }
};

std::vector<AffineRef> refs_of(std::span<const AffineElement> elems);

/// later ∘ earlier = (later.A · earlier.A, later.A · earlier.b + later.b).
AffineElement combine(const AffineElement& later, const AffineElement& earlier);

enum class Mode { Sequential, Parallel };

struct ScanOptions {
  /// Chunk length of the two-pass scan. Fixed by the caller, never derived
  /// from the worker count, so results do not depend on `workers`.
  std::size_t chunk_size = 32;
  std::size_t workers = 1;
};

/// States x_1..x_T of x_t = A_t x_{t-1} + b_t by a left fold.
std::vector<Vector> sequential_scan(std::span<const AffineRef> elems, const Vector& x0);
std::vector<Vector> sequential_scan(std::span<const AffineElement> elems, const Vector& x0);

/// Same states via chunked two-pass scan: per-chunk summaries, exclusive
/// Blelloch scan over the summaries (padded with identities), then per-chunk
/// sequential sweeps from the resolved chunk start states.
std::vector<Vector> parallel_scan(std::span<const AffineRef> elems, const Vector& x0, const ScanOptions& options);
std::vector<Vector> parallel_scan(std::span<const AffineElement> elems, const Vector& x0,
                                  const ScanOptions& options);

std::vector<Vector> run_scan(std::span<const AffineRef> elems, const Vector& x0, Mode mode,
                             const ScanOptions& options);

/// Adjoint states λ_0..λ_T with λ_T = upstream (+ per_step[T-1]) and
/// λ_{t-1} = A_tᵀ λ_t (+ per_step[t-2]), i.e. dL/dx_t for t = 0..T.
/// `per_step`, when non-empty, holds direct gradients on x_1..x_T.
std::vector<Vector> adjoint_states(std::span<const AffineRef> elems, const Vector& upstream,
                                   std::span<const Vector> per_step, Mode mode, const ScanOptions& options);

struct AdjointGrads {
  std::vector<Matrix> dA;  // dL/dA_t = λ_t x_{t-1}ᵀ
  std::vector<Vector> db;  // dL/db_t = λ_t
  Vector dx0;              // A_1ᵀ λ_1
};

/// Gradients of a loss whose only dependence on the states is through x_T.
/// `states` holds x_0..x_T. Throws UsageError if the cache is missing or
/// has the wrong length.
AdjointGrads adjoint_scan(std::span<const AffineElement> elems, const Vector& upstream,
                          std::span<const Vector> states, Mode mode, const ScanOptions& options = {});

}  // namespace ssmfsa::scan
