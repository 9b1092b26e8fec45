#include "ssmfsa/scan.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/parallel.hpp"

#include <algorithm>
#include <bit>

namespace ssmfsa::scan {

AffineElement AffineElement::identity(Eigen::Index n) { return {Matrix::Identity(n, n), Vector::Zero(n)}; }

std::vector<AffineRef> refs_of(std::span<const AffineElement> elems) {
  std::vector<AffineRef> refs;
  refs.reserve(elems.size());
  for (const auto& e : elems) refs.push_back({&e.A, &e.b, false});
  return refs;
}

AffineElement combine(const AffineElement& later, const AffineElement& earlier) {
  if (later.A.cols() != earlier.A.rows() || later.A.rows() != later.b.size() ||
      earlier.A.rows() != earlier.b.size() || later.A.rows() != later.A.cols()) {
    throw ShapeError("combine: dimension mismatch");
  }
  return {later.A * earlier.A, later.A * earlier.b + later.b};
}

namespace {

void check_dims(std::span<const AffineRef> elems, const Vector& x0) {
  for (const auto& e : elems) {
    if (e.A == nullptr) throw ShapeError("scan: null transition matrix");
    if (e.A->rows() != x0.size() || e.A->cols() != x0.size()) throw ShapeError("scan: matrix/state size mismatch");
    if (e.b != nullptr && e.b->size() != x0.size()) throw ShapeError("scan: offset/state size mismatch");
  }
}

void step_into(const AffineRef& e, const Vector& x, Vector& out) {
  if (e.transposed) {
    out.noalias() = e.A->transpose() * x;
  } else {
    out.noalias() = (*e.A) * x;
  }
  if (e.b) out += *e.b;
}

// Running product of a chunk. `identity` marks padding so no n³ work is spent
// on it.
struct Summary {
  Matrix A;
  Vector b;
  bool identity = true;
};

Summary compose(const Summary& later, const Summary& earlier) {
  if (later.identity) return earlier;
  if (earlier.identity) return later;
  Summary out;
  out.A.noalias() = later.A * earlier.A;
  out.b.noalias() = later.A * earlier.b;
  out.b += later.b;
  out.identity = false;
  return out;
}

Summary summarize(std::span<const AffineRef> chunk, Eigen::Index n) {
  Summary s;
  s.identity = false;
  const AffineRef& first = chunk.front();
  s.A = first.transposed ? Matrix(first.A->transpose()) : *first.A;
  s.b = first.b ? *first.b : Vector::Zero(n);
  Matrix tmp(n, n);
  Vector vtmp(n);
  for (std::size_t i = 1; i < chunk.size(); ++i) {
    const AffineRef& e = chunk[i];
    if (e.transposed) {
      tmp.noalias() = e.A->transpose() * s.A;
    } else {
      tmp.noalias() = (*e.A) * s.A;
    }
    s.A.swap(tmp);
    step_into(e, s.b, vtmp);
    s.b.swap(vtmp);
  }
  return s;
}

}  // namespace

std::vector<Vector> sequential_scan(std::span<const AffineRef> elems, const Vector& x0) {
  check_dims(elems, x0);
  std::vector<Vector> states(elems.size(), Vector(x0.size()));
  const Vector* prev = &x0;
  for (std::size_t t = 0; t < elems.size(); ++t) {
    step_into(elems[t], *prev, states[t]);
    prev = &states[t];
  }
  return states;
}

std::vector<Vector> sequential_scan(std::span<const AffineElement> elems, const Vector& x0) {
  const auto refs = refs_of(elems);
  return sequential_scan(refs, x0);
}

std::vector<Vector> parallel_scan(std::span<const AffineRef> elems, const Vector& x0, const ScanOptions& options) {
  check_dims(elems, x0);
  const std::size_t total = elems.size();
  if (total == 0) return {};
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
  const std::size_t num_chunks = (total + chunk - 1) / chunk;
  const Eigen::Index n = x0.size();
  auto chunk_span = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    return elems.subspan(begin, std::min(chunk, total - begin));
  };

  // Pass 1: summaries of every chunk but the last (its summary is never used).
  const std::size_t width = std::bit_ceil(num_chunks);
  std::vector<Summary> tree(width);
  parallel_for(num_chunks - 1, options.workers, [&](std::size_t c) { tree[c] = summarize(chunk_span(c), n); });

  // Exclusive Blelloch scan over summaries. After the down-sweep tree[c]
  // holds the composition of chunks 0..c-1.
  for (std::size_t stride = 1; stride < width; stride *= 2) {
    const std::size_t pairs = width / (2 * stride);
    parallel_for(pairs, options.workers, [&](std::size_t p) {
      const std::size_t right = (2 * p + 2) * stride - 1;
      const std::size_t left = right - stride;
      tree[right] = compose(tree[right], tree[left]);
    });
  }
  tree[width - 1] = Summary{};
  for (std::size_t stride = width / 2; stride >= 1; stride /= 2) {
    const std::size_t pairs = width / (2 * stride);
    parallel_for(pairs, options.workers, [&](std::size_t p) {
      const std::size_t right = (2 * p + 2) * stride - 1;
      const std::size_t left = right - stride;
      Summary left_sum = std::move(tree[left]);
      tree[left] = tree[right];
      tree[right] = compose(left_sum, tree[right]);
    });
    if (stride == 1) break;
  }

  // Pass 2: sweep each chunk from its resolved start state.
  std::vector<Vector> states(total, Vector(n));
  parallel_for(num_chunks, options.workers, [&](std::size_t c) {
    Vector start = x0;
    if (!tree[c].identity) start = tree[c].A * x0 + tree[c].b;
    const auto span = chunk_span(c);
    const std::size_t begin = c * chunk;
    const Vector* prev = &start;
    for (std::size_t i = 0; i < span.size(); ++i) {
      step_into(span[i], *prev, states[begin + i]);
      prev = &states[begin + i];
    }
  });
  return states;
}

std::vector<Vector> parallel_scan(std::span<const AffineElement> elems, const Vector& x0,
                                  const ScanOptions& options) {
  const auto refs = refs_of(elems);
  return parallel_scan(refs, x0, options);
}

std::vector<Vector> run_scan(std::span<const AffineRef> elems, const Vector& x0, Mode mode,
                             const ScanOptions& options) {
  return mode == Mode::Sequential ? sequential_scan(elems, x0) : parallel_scan(elems, x0, options);
}

std::vector<Vector> adjoint_states(std::span<const AffineRef> elems, const Vector& upstream,
                                   std::span<const Vector> per_step, Mode mode, const ScanOptions& options) {
  const std::size_t total = elems.size();
  if (!per_step.empty() && per_step.size() != total) throw ShapeError("adjoint_states: per-step gradient count");
  Vector lambda_final = upstream;
  if (!per_step.empty() && total > 0) lambda_final += per_step[total - 1];

  // Reverse recurrence: y_0 = λ_T, y_j = A_{T-j+1}ᵀ y_{j-1} + g_{T-j}.
  std::vector<AffineRef> reversed(total);
  for (std::size_t j = 0; j < total; ++j) {
    const std::size_t t = total - j;  // 1-based index of A_t
    reversed[j] = {elems[t - 1].A, nullptr, !elems[t - 1].transposed};
    if (!per_step.empty() && t >= 2) reversed[j].b = &per_step[t - 2];
  }
  std::vector<Vector> ys = run_scan(reversed, lambda_final, mode, options);

  std::vector<Vector> lambdas(total + 1);
  lambdas[total] = std::move(lambda_final);
  for (std::size_t j = 0; j < total; ++j) lambdas[total - 1 - j] = std::move(ys[j]);
  return lambdas;
}

AdjointGrads adjoint_scan(std::span<const AffineElement> elems, const Vector& upstream,
                          std::span<const Vector> states, Mode mode, const ScanOptions& options) {
  if (states.size() != elems.size() + 1) {
    throw UsageError("adjoint_scan: forward cache must hold x_0..x_T (" + std::to_string(elems.size() + 1) +
                     " states), got " + std::to_string(states.size()));
  }
  const auto refs = refs_of(elems);
  check_dims(refs, states.front());
  const auto lambdas = adjoint_states(refs, upstream, {}, mode, options);
  AdjointGrads g;
  g.dA.resize(elems.size());
  g.db.resize(elems.size());
  parallel_for(elems.size(), mode == Mode::Parallel ? options.workers : 1, [&](std::size_t i) {
    g.dA[i] = lambdas[i + 1] * states[i].transpose();
    g.db[i] = lambdas[i + 1];
  });
  g.dx0 = lambdas[0];
  return g;
}

}  // namespace ssmfsa::scan
