#include "ssmfsa/diag_ssm.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/numkit/ops.hpp"
#include "ssmfsa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssmfsa::diag {

namespace {
constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();

void fill_gaussian(Matrix& m, double stddev, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, stddev);
  }
}
}  // namespace

void DiagSsmConfig::validate() const {
  if (alphabet_size < 1) throw UsageError("diag: alphabet_size must be >= 1");
  if (n < 1) throw UsageError("diag: state size n must be >= 1");
  if (d < 1) throw UsageError("diag: embedding size d must be >= 1");
  if (label_space < 1) throw UsageError("diag: label_space must be >= 1");
  if (max_train_len < 1) throw UsageError("diag: max_train_len must be >= 1");
}

DiagSsmParams::DiagSsmParams(const DiagSsmConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.n;
  const int d = config_.d;
  auto add = [&](std::size_t& slot, const char* name, Eigen::Index r, Eigen::Index c) {
    slot = store_.size();
    store_.add(name, Matrix::Zero(r, c));
  };
  add(slots_.embed, "embed", config_.alphabet_size, d);
  add(slots_.Wi_re, "Wi_re", n, d);
  add(slots_.Wi_im, "Wi_im", n, d);
  add(slots_.Wo_re, "Wo_re", n, n);
  add(slots_.Wo_im, "Wo_im", n, n);
  add(slots_.B_re, "B_re", n, d);
  add(slots_.B_im, "B_im", n, d);
  slots_.W_lin = slots_.Wy_i = slots_.Wy_o = kAbsent;
  if (config_.readout == ReadoutKind::Linear) {
    add(slots_.W_lin, "W_lin", config_.label_space, 2 * n);
  } else {
    add(slots_.Wy_i, "Wy_i", 2 * n, 2 * n);
    add(slots_.Wy_o, "Wy_o", config_.label_space, 2 * n);
  }
  add(slots_.x0_re, "x0_re", n, 1);
  add(slots_.x0_im, "x0_im", n, 1);
}

ComplexVector DiagSsmParams::x0() const { return {store_.at(slots_.x0_re), store_.at(slots_.x0_im)}; }

DiagSsmParams init(const DiagSsmConfig& config, Rng& rng) {
  DiagSsmParams params(config);
  auto& s = params.store();
  const auto& slot = params.slots();
  const double n = config.n;
  const double d = config.d;
  fill_gaussian(s.at(slot.embed), 1.0, rng);
  fill_gaussian(s.at(slot.Wi_re), 1.0 / std::sqrt(d), rng);
  fill_gaussian(s.at(slot.Wi_im), 1.0 / std::sqrt(d), rng);
  fill_gaussian(s.at(slot.Wo_re), 1.0 / std::sqrt(n), rng);
  fill_gaussian(s.at(slot.Wo_im), 1.0 / std::sqrt(n), rng);
  if (config.readout == ReadoutKind::Linear) {
    fill_gaussian(s.at(slot.W_lin), 1.0 / std::sqrt(2 * n), rng);
  } else {
    fill_gaussian(s.at(slot.Wy_i), 1.0 / std::sqrt(2 * n), rng);
    fill_gaussian(s.at(slot.Wy_o), 1.0 / std::sqrt(2 * n), rng);
  }
  fill_gaussian(s.at(slot.x0_re), 1.0 / std::sqrt(n), rng);
  fill_gaussian(s.at(slot.x0_im), 1.0 / std::sqrt(n), rng);
  return params;
}

ComplexVector normalize_modulus(const Vector& re, const Vector& im) {
  const Vector denom = (re.array().square() + im.array().square()).sqrt() + kModulusEps;
  return {re.cwiseQuotient(denom), im.cwiseQuotient(denom)};
}

GeneratedDiagonal generate_diagonal_detail(const DiagSsmParams& params, const Vector& u) {
  const auto& slot = params.slots();
  GeneratedDiagonal g;
  g.pre_re = params.at(slot.Wi_re) * u;
  g.pre_im = params.at(slot.Wi_im) * u;
  g.raw_re = params.at(slot.Wo_re) * num::relu(g.pre_re);
  g.raw_im = params.at(slot.Wo_im) * num::relu(g.pre_im);
  g.modulus = (g.raw_re.array().square() + g.raw_im.array().square()).sqrt();
  g.value = normalize_modulus(g.raw_re, g.raw_im);
  return g;
}

ComplexVector generate_diagonal(const DiagSsmParams& params, automata::Symbol sigma) {
  if (sigma < 0 || sigma >= params.config().alphabet_size) throw std::out_of_range("generate_diagonal: bad symbol");
  return generate_diagonal_detail(params, params.at(params.slots().embed).row(sigma).transpose()).value;
}

namespace {

// x ↦ a ⊙ x + b with optional conjugation of a.
void diag_step(const DiagElement& e, const ComplexVector& x, ComplexVector& out) {
  const Vector& ar = e.a->re;
  const Vector ai = e.conjugate ? Vector(-e.a->im) : e.a->im;
  out.re = ar.cwiseProduct(x.re) - ai.cwiseProduct(x.im);
  out.im = ar.cwiseProduct(x.im) + ai.cwiseProduct(x.re);
  if (e.b) {
    out.re += e.b->re;
    out.im += e.b->im;
  }
}

struct DiagSummary {
  ComplexVector a;
  ComplexVector b;
};

}  // namespace

std::vector<ComplexVector> diag_scan(std::span<const DiagElement> elems, const ComplexVector& x0, scan::Mode mode,
                                     const scan::ScanOptions& options) {
  for (const auto& e : elems) {
    if (e.a == nullptr || e.a->size() != x0.size() || (e.b && e.b->size() != x0.size())) {
      throw ShapeError("diag_scan: dimension mismatch");
    }
  }
  const std::size_t total = elems.size();
  std::vector<ComplexVector> states(total);
  auto sweep = [&](std::size_t begin, std::size_t end, const ComplexVector& start) {
    const ComplexVector* prev = &start;
    for (std::size_t t = begin; t < end; ++t) {
      diag_step(elems[t], *prev, states[t]);
      prev = &states[t];
    }
  };
  if (mode == scan::Mode::Sequential || total == 0) {
    sweep(0, total, x0);
    return states;
  }

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
  const std::size_t chunks = (total + chunk - 1) / chunk;
  const Eigen::Index n = x0.size();
  std::vector<DiagSummary> summary(chunks);
  parallel_for(chunks > 0 ? chunks - 1 : 0, options.workers, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(total, begin + chunk);
    DiagSummary s{ComplexVector(Vector::Ones(n), Vector::Zero(n)), ComplexVector(n)};
    ComplexVector tmp;
    for (std::size_t t = begin; t < end; ++t) {
      const DiagElement& e = elems[t];
      const ComplexVector a = e.conjugate ? ComplexVector(e.a->re, -e.a->im) : *e.a;
      s.a = a.hadamard(s.a);
      diag_step(e, s.b, tmp);
      s.b = tmp;
    }
    summary[c] = std::move(s);
  });
  // Chunk start states; O(chunks * n), negligible next to the sweeps.
  std::vector<ComplexVector> starts(chunks);
  starts[0] = x0;
  for (std::size_t c = 1; c < chunks; ++c) {
    ComplexVector next = summary[c - 1].a.hadamard(starts[c - 1]);
    next.re += summary[c - 1].b.re;
    next.im += summary[c - 1].b.im;
    starts[c] = std::move(next);
  }
  parallel_for(chunks, options.workers, [&](std::size_t c) {
    sweep(c * chunk, std::min(total, (c + 1) * chunk), starts[c]);
  });
  return states;
}

DiagForward forward(const DiagSsmParams& params, const automata::Sequence& tokens, const DiagRunOptions& options) {
  const auto& cfg = params.config();
  const auto& slot = params.slots();
  if (tokens.empty()) throw UsageError("diag::forward: empty input");
  DiagForward f;
  f.tokens = tokens;
  f.slot_of_token.resize(tokens.size());
  std::vector<std::size_t> slot_for(cfg.alphabet_size, kAbsent);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto s = tokens[t];
    if (s < 0 || s >= cfg.alphabet_size) throw std::out_of_range("diag::forward: bad symbol");
    if (slot_for[s] == kAbsent) {
      slot_for[s] = f.slot_symbol.size();
      f.slot_symbol.push_back(s);
    }
    f.slot_of_token[t] = slot_for[s];
  }
  for (auto sym : f.slot_symbol) {
    const Vector u = params.at(slot.embed).row(sym).transpose();
    f.diagonals.push_back(generate_diagonal_detail(params, u));
    if (cfg.use_B) f.b_terms.emplace_back(params.at(slot.B_re) * u, params.at(slot.B_im) * u);
  }
  std::vector<DiagElement> elems(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t s = f.slot_of_token[t];
    elems[t] = {&f.diagonals[s].value, cfg.use_B ? &f.b_terms[s] : nullptr, false};
  }
  const ComplexVector x0 = params.x0();
  auto states = diag_scan(elems, x0, options.mode, options.scan);
  f.states.reserve(tokens.size() + 1);
  f.states.push_back(x0);
  for (auto& x : states) f.states.push_back(std::move(x));
  const auto& xT = f.states.back();
  num::require_finite(xT.re, "diag state");
  num::require_finite(xT.im, "diag state");

  f.features.resize(2 * cfg.n);
  f.features << xT.re, xT.im;
  if (cfg.readout == ReadoutKind::Linear) {
    f.logits = params.at(slot.W_lin) * f.features;
  } else {
    f.hidden_pre = params.at(slot.Wy_i) * f.features;
    f.hidden = num::relu(f.hidden_pre);
    f.logits = params.at(slot.Wy_o) * f.hidden;
  }
  return f;
}

double backward(const DiagSsmParams& params, const DiagForward& f, int target, num::GradStore& grads,
                const DiagRunOptions& options) {
  const auto& cfg = params.config();
  const auto& slot = params.slots();
  if (f.states.size() != f.tokens.size() + 1) throw UsageError("diag::backward: missing forward cache");
  if (!grads.same_layout(params.store())) throw ShapeError("diag::backward: gradient layout mismatch");
  const Eigen::Index n = cfg.n;
  const auto ce = num::cross_entropy_from_logits(f.logits, target);

  Vector dfeat;
  if (cfg.readout == ReadoutKind::Linear) {
    grads.at(slot.W_lin).noalias() += ce.grad * f.features.transpose();
    dfeat = params.at(slot.W_lin).transpose() * ce.grad;
  } else {
    grads.at(slot.Wy_o).noalias() += ce.grad * f.hidden.transpose();
    const Vector dh = num::relu_backward(f.hidden_pre, params.at(slot.Wy_o).transpose() * ce.grad);
    grads.at(slot.Wy_i).noalias() += dh * f.features.transpose();
    dfeat = params.at(slot.Wy_i).transpose() * dh;
  }
  const ComplexVector lambda_T(dfeat.head(n), dfeat.tail(n));

  // Adjoint: λ_{t-1} = conj(a_t) ⊙ λ_t.
  const std::size_t T = f.tokens.size();
  std::vector<DiagElement> reversed(T);
  for (std::size_t j = 0; j < T; ++j) reversed[j] = {&f.diagonals[f.slot_of_token[T - 1 - j]].value, nullptr, true};
  const auto ys = diag_scan(reversed, lambda_T, options.mode, options.scan);
  auto lambda = [&](std::size_t t) -> const ComplexVector& { return t == T ? lambda_T : ys[T - 1 - t]; };

  const std::size_t slots = f.diagonals.size();
  std::vector<ComplexVector> da(slots, ComplexVector(n));
  std::vector<ComplexVector> db(slots, ComplexVector(n));
  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t s = f.slot_of_token[t - 1];
    const ComplexVector& lam = lambda(t);
    const ComplexVector& x = f.states[t - 1];
    // dL/da = λ · conj(x)
    da[s].re += lam.re.cwiseProduct(x.re) + lam.im.cwiseProduct(x.im);
    da[s].im += lam.im.cwiseProduct(x.re) - lam.re.cwiseProduct(x.im);
    if (cfg.use_B) {
      db[s].re += lam.re;
      db[s].im += lam.im;
    }
  }
  const ComplexVector& lambda0 = lambda(0);
  grads.at(slot.x0_re) += lambda0.re;
  grads.at(slot.x0_im) += lambda0.im;

  for (std::size_t s = 0; s < slots; ++s) {
    const auto& g = f.diagonals[s];
    const Vector u = params.at(slot.embed).row(f.slot_symbol[s]).transpose();
    // Backward through z / (|z| + eps).
    Vector dr(n), di(n);
    for (Eigen::Index m = 0; m < n; ++m) {
      const double r = g.raw_re[m];
      const double im = g.raw_im[m];
      const double mag = g.modulus[m];
      const double denom = mag + kModulusEps;
      const double gr = da[s].re[m];
      const double gi = da[s].im[m];
      dr[m] = gr / denom;
      di[m] = gi / denom;
      if (mag > 0.0) {
        const double proj = (gr * r + gi * im) / (denom * denom * mag);
        dr[m] -= proj * r;
        di[m] -= proj * im;
      }
    }
    const Vector h_re = num::relu(g.pre_re);
    const Vector h_im = num::relu(g.pre_im);
    grads.at(slot.Wo_re).noalias() += dr * h_re.transpose();
    grads.at(slot.Wo_im).noalias() += di * h_im.transpose();
    const Vector dpre_re = num::relu_backward(g.pre_re, params.at(slot.Wo_re).transpose() * dr);
    const Vector dpre_im = num::relu_backward(g.pre_im, params.at(slot.Wo_im).transpose() * di);
    grads.at(slot.Wi_re).noalias() += dpre_re * u.transpose();
    grads.at(slot.Wi_im).noalias() += dpre_im * u.transpose();
    Vector du = params.at(slot.Wi_re).transpose() * dpre_re + params.at(slot.Wi_im).transpose() * dpre_im;
    if (cfg.use_B) {
      grads.at(slot.B_re).noalias() += db[s].re * u.transpose();
      grads.at(slot.B_im).noalias() += db[s].im * u.transpose();
      du.noalias() += params.at(slot.B_re).transpose() * db[s].re + params.at(slot.B_im).transpose() * db[s].im;
    }
    grads.at(slot.embed).row(f.slot_symbol[s]) += du.transpose();
  }
  return ce.loss;
}

num::GradStore gradients(const DiagSsmParams& params, const automata::Sequence& tokens, int target,
                         const DiagRunOptions& options, double* loss_out) {
  num::GradStore grads = params.store().zeros_like();
  const auto f = forward(params, tokens, options);
  const double l = backward(params, f, target, grads, options);
  if (loss_out) *loss_out = l;
  return grads;
}

double loss(const DiagSsmParams& params, const automata::Sequence& tokens, int target) {
  return num::cross_entropy_from_logits(forward(params, tokens).logits, target).loss;
}

Eigen::Index predict(const DiagSsmParams& params, const automata::Sequence& tokens) {
  return num::argmax(forward(params, tokens).logits);
}

}  // namespace ssmfsa::diag
