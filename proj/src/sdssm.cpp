#include "ssmfsa/sdssm.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssmfsa::sdssm {

namespace {
constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
}

ReadoutKind parse_readout(std::string_view name) {
  if (name == "linear") return ReadoutKind::Linear;
  if (name == "mlp" || name == "nonlinear") return ReadoutKind::Mlp;
  throw UsageError("unknown readout '" + std::string(name) + "' (linear | mlp)");
}

std::string readout_name(ReadoutKind kind) { return kind == ReadoutKind::Linear ? "linear" : "mlp"; }

void SdSsmConfig::validate() const {
  if (alphabet_size < 1) throw UsageError("sdssm: alphabet_size must be >= 1");
  if (n < 2) throw UsageError("sdssm: state size n must be >= 2");
  if (d < 1) throw UsageError("sdssm: embedding size d must be >= 1");
  if (k < 1) throw UsageError("sdssm: dictionary size k must be >= 1");
  if (!(p >= 1.0 && p <= 1.5)) throw UsageError("sdssm: p must lie in [1.0, 1.5]");
  if (label_space < 1) throw UsageError("sdssm: label_space must be >= 1");
  if (max_train_len < 1) throw UsageError("sdssm: max_train_len must be >= 1");
  if (readout == ReadoutKind::Mlp && mlp_hidden != 0 && mlp_hidden != n) {
    throw UsageError("sdssm: the MLP readout hidden size must equal n");
  }
}

SdSsmParams::SdSsmParams(const SdSsmConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.n;
  const int d = config_.d;
  slots_.embed = store_.size();
  store_.add("embed", Matrix::Zero(config_.alphabet_size, d));
  slots_.selector = store_.size();
  store_.add("selector", Matrix::Zero(config_.k, d));
  slots_.dict0 = store_.size();
  for (int i = 0; i < config_.k; ++i) store_.add("dict." + std::to_string(i), Matrix::Zero(n, n));
  slots_.B = store_.size();
  store_.add("B", Matrix::Zero(n, d));
  slots_.ln_gain = store_.size();
  store_.add("ln_gain", Matrix::Ones(n, 1));
  slots_.ln_bias = store_.size();
  store_.add("ln_bias", Matrix::Zero(n, 1));
  slots_.C = slots_.W1 = slots_.b1 = slots_.W2 = slots_.b2 = kAbsent;
  if (config_.readout == ReadoutKind::Linear) {
    slots_.C = store_.size();
    store_.add("C", Matrix::Zero(config_.label_space, n));
  } else {
    const int h = config_.hidden();
    slots_.W1 = store_.size();
    store_.add("W1", Matrix::Zero(h, n));
    slots_.b1 = store_.size();
    store_.add("b1", Matrix::Zero(h, 1));
    slots_.W2 = store_.size();
    store_.add("W2", Matrix::Zero(config_.label_space, h));
    slots_.b2 = store_.size();
    store_.add("b2", Matrix::Zero(config_.label_space, 1));
  }
  slots_.x0 = store_.size();
  store_.add("x0", Matrix::Zero(n, 1));
}

namespace {

void fill_gaussian(Matrix& m, double stddev, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, stddev);
  }
}

}  // namespace

SdSsmParams init(const SdSsmConfig& config, Rng& rng) {
  SdSsmParams params(config);
  auto& s = params.store();
  const auto& slot = params.slots();
  const double n = config.n;
  fill_gaussian(s.at(slot.embed), 1.0, rng);
  fill_gaussian(s.at(slot.selector), 1.0 / std::sqrt(double(config.d)), rng);
  for (int i = 0; i < config.k; ++i) {
    Matrix& a = s.at(slot.dict0 + i);
    fill_gaussian(a, 0.1 / std::sqrt(n), rng);
    a += Matrix::Identity(config.n, config.n);
  }
  if (config.readout == ReadoutKind::Linear) {
    fill_gaussian(s.at(slot.C), 1.0 / std::sqrt(n), rng);
  } else {
    fill_gaussian(s.at(slot.W1), 1.0 / std::sqrt(n), rng);
    fill_gaussian(s.at(slot.W2), 1.0 / std::sqrt(double(config.hidden())), rng);
  }
  fill_gaussian(s.at(slot.x0), 1.0 / std::sqrt(n), rng);
  return params;
}

GeneratedTransition generate_transition(const SdSsmParams& params, const Vector& u) {
  const auto& cfg = params.config();
  GeneratedTransition g;
  g.weights = num::softmax(params.selector() * u);
  g.mixed = g.weights[0] * params.dict(0);
  for (int i = 1; i < cfg.k; ++i) g.mixed.noalias() += g.weights[i] * params.dict(i);
  g.A = num::column_lp_norm(g.mixed, cfg.p, num::kColumnNormEps, cfg.opnorm, &g.norm_cache);
  return g;
}

std::vector<Matrix> generate_transitions(const SdSsmParams& params, const automata::Sequence& tokens) {
  std::vector<Matrix> out;
  out.reserve(tokens.size());
  for (auto s : tokens) {
    if (s < 0 || s >= params.config().alphabet_size) throw std::out_of_range("generate_transitions: bad symbol");
    out.push_back(generate_transition(params, params.embed().row(s).transpose()).A);
  }
  return out;
}

RecurrenceTrace run_recurrence(const SdSsmParams& params, const automata::Sequence& tokens, const Vector& x0,
                               const RunOptions& options) {
  const auto& cfg = params.config();
  if (x0.size() != cfg.n) throw ShapeError("run_recurrence: x0 length != n");
  RecurrenceTrace tr;
  tr.tokens = tokens;
  tr.slot_of_token.resize(tokens.size());
  if (options.sharing == Sharing::PerSymbol) {
    std::vector<std::size_t> slot_for(cfg.alphabet_size, kAbsent);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const auto s = tokens[t];
      if (s < 0 || s >= cfg.alphabet_size) throw std::out_of_range("run_recurrence: bad symbol");
      if (slot_for[s] == kAbsent) {
        slot_for[s] = tr.slot_symbol.size();
        tr.slot_symbol.push_back(s);
      }
      tr.slot_of_token[t] = slot_for[s];
    }
  } else {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t] < 0 || tokens[t] >= cfg.alphabet_size) throw std::out_of_range("run_recurrence: bad symbol");
      tr.slot_of_token[t] = t;
    }
    tr.slot_symbol = tokens;
  }

  const std::size_t slots = tr.slot_symbol.size();
  tr.transitions.resize(slots);
  if (cfg.use_B) tr.b_terms.resize(slots);
  parallel_for(slots, options.workers(), [&](std::size_t i) {
    const Vector u = params.embed().row(tr.slot_symbol[i]).transpose();
    tr.transitions[i] = generate_transition(params, u);
    if (cfg.use_B) tr.b_terms[i] = params.B() * u;
  });

  std::vector<scan::AffineRef> refs(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t s = tr.slot_of_token[t];
    refs[t] = {&tr.transitions[s].A, cfg.use_B ? &tr.b_terms[s] : nullptr, false};
  }
  auto states = scan::run_scan(refs, x0, options.mode, options.scan);
  tr.states.reserve(tokens.size() + 1);
  tr.states.push_back(x0);
  for (auto& x : states) tr.states.push_back(std::move(x));
  num::require_finite(tr.states.back(), "sdssm state");
  return tr;
}

Vector backward_recurrence(const SdSsmParams& params, const RecurrenceTrace& trace, const Vector& dxT,
                           num::GradStore& grads, const RunOptions& options) {
  const auto& cfg = params.config();
  const auto& slot = params.slots();
  const std::size_t T = trace.tokens.size();
  if (trace.states.size() != T + 1) throw UsageError("backward_recurrence: missing forward cache");
  if (!grads.same_layout(params.store())) throw ShapeError("backward_recurrence: gradient layout mismatch");

  std::vector<scan::AffineRef> refs(T);
  for (std::size_t t = 0; t < T; ++t) refs[t] = {&trace.transitions[trace.slot_of_token[t]].A, nullptr, false};
  const auto lambdas = scan::adjoint_states(refs, dxT, {}, options.mode, options.scan);

  // Tokens grouped by slot, in time order, so each slot's dA is one product.
  const std::size_t slots = trace.transitions.size();
  std::vector<std::vector<std::size_t>> tokens_of(slots);
  for (std::size_t t = 0; t < T; ++t) tokens_of[trace.slot_of_token[t]].push_back(t);

  const Eigen::Index n = cfg.n;
  const int k = cfg.k;
  std::vector<Matrix> d_mixed(slots);
  std::vector<Vector> d_u(slots);
  std::vector<Vector> d_logits_sel(slots);
  std::vector<Vector> d_b(slots);
  parallel_for(slots, options.workers(), [&](std::size_t s) {
    const auto& ts = tokens_of[s];
    Matrix lam(n, static_cast<Eigen::Index>(ts.size()));
    Matrix prev(n, static_cast<Eigen::Index>(ts.size()));
    for (std::size_t j = 0; j < ts.size(); ++j) {
      lam.col(j) = lambdas[ts[j] + 1];
      prev.col(j) = trace.states[ts[j]];
    }
    const Matrix dA = lam * prev.transpose();  // Σ_t λ_t x_{t-1}ᵀ
    const auto& g = trace.transitions[s];
    d_mixed[s] = num::column_lp_norm_backward(g.mixed, g.norm_cache, cfg.p, num::kColumnNormEps, cfg.opnorm, dA);
    Vector dw(k);
    for (int i = 0; i < k; ++i) dw[i] = (params.dict(i).array() * d_mixed[s].array()).sum();
    d_logits_sel[s] = num::softmax_backward(g.weights, dw);
    d_u[s] = params.selector().transpose() * d_logits_sel[s];
    if (cfg.use_B) {
      d_b[s] = lam.rowwise().sum();
      d_u[s].noalias() += params.B().transpose() * d_b[s];
    }
  });

  // Dictionary gradients: each A_i sums over slots in slot order.
  parallel_for(static_cast<std::size_t>(k), options.workers(), [&](std::size_t i) {
    Matrix& acc = grads.at(slot.dict0 + i);
    for (std::size_t s = 0; s < slots; ++s) acc.noalias() += trace.transitions[s].weights[i] * d_mixed[s];
  });
  Matrix& d_embed = grads.at(slot.embed);
  Matrix& d_sel = grads.at(slot.selector);
  Matrix& d_B = grads.at(slot.B);
  for (std::size_t s = 0; s < slots; ++s) {
    const auto sym = trace.slot_symbol[s];
    const Vector u = params.embed().row(sym).transpose();
    d_sel.noalias() += d_logits_sel[s] * u.transpose();
    if (cfg.use_B) d_B.noalias() += d_b[s] * u.transpose();
    d_embed.row(sym) += d_u[s].transpose();
  }
  return lambdas[0];
}

Vector readout(const SdSsmParams& params, const Vector& xT, ReadoutCache* cache) {
  const auto& cfg = params.config();
  const auto& s = params.store();
  const auto& slot = params.slots();
  ReadoutCache local;
  ReadoutCache& c = cache ? *cache : local;
  c.normalized_out = num::layer_norm(xT, s.at(slot.ln_gain), s.at(slot.ln_bias), num::kLayerNormEps, &c.ln);
  if (cfg.readout == ReadoutKind::Linear) return s.at(slot.C) * c.normalized_out;
  c.hidden_pre = s.at(slot.W1) * c.normalized_out + s.at(slot.b1);
  c.hidden = num::relu(c.hidden_pre);
  return s.at(slot.W2) * c.hidden + s.at(slot.b2);
}

Vector backward_readout(const SdSsmParams& params, const ReadoutCache& cache, const Vector& dlogits,
                        num::GradStore& grads) {
  const auto& cfg = params.config();
  const auto& s = params.store();
  const auto& slot = params.slots();
  Vector dh;
  if (cfg.readout == ReadoutKind::Linear) {
    grads.at(slot.C).noalias() += dlogits * cache.normalized_out.transpose();
    dh = s.at(slot.C).transpose() * dlogits;
  } else {
    grads.at(slot.W2).noalias() += dlogits * cache.hidden.transpose();
    grads.at(slot.b2) += dlogits;
    const Vector dhidden = num::relu_backward(cache.hidden_pre, s.at(slot.W2).transpose() * dlogits);
    grads.at(slot.W1).noalias() += dhidden * cache.normalized_out.transpose();
    grads.at(slot.b1) += dhidden;
    dh = s.at(slot.W1).transpose() * dhidden;
  }
  Vector dgain = Vector::Zero(cfg.n);
  Vector dbias = Vector::Zero(cfg.n);
  Vector dx = num::layer_norm_backward(cache.ln, s.at(slot.ln_gain), dh, &dgain, &dbias);
  grads.at(slot.ln_gain) += dgain;
  grads.at(slot.ln_bias) += dbias;
  return dx;
}

ForwardResult forward(const SdSsmParams& params, const automata::Sequence& tokens, const RunOptions& options) {
  if (tokens.empty()) throw UsageError("sdssm::forward: empty input");
  ForwardResult r;
  r.trace = run_recurrence(params, tokens, params.x0(), options);
  r.logits = readout(params, r.trace.states.back(), &r.readout);
  return r;
}

LossResult backward(const SdSsmParams& params, const ForwardResult& fwd, int target, num::GradStore& grads,
                    const RunOptions& options) {
  const auto ce = num::cross_entropy_from_logits(fwd.logits, target);
  const Vector dxT = backward_readout(params, fwd.readout, ce.grad, grads);
  const Vector dx0 = backward_recurrence(params, fwd.trace, dxT, grads, options);
  grads.at(params.slots().x0) += dx0;
  return {ce.loss, num::argmax(fwd.logits)};
}

num::GradStore gradients(const SdSsmParams& params, const automata::Sequence& tokens, int target,
                         const RunOptions& options, LossResult* loss_out) {
  num::GradStore grads = params.store().zeros_like();
  const auto fwd = forward(params, tokens, options);
  const auto lr = backward(params, fwd, target, grads, options);
  if (loss_out) *loss_out = lr;
  return grads;
}

double loss(const SdSsmParams& params, const automata::Sequence& tokens, int target, const RunOptions& options) {
  return num::cross_entropy_from_logits(forward(params, tokens, options).logits, target).loss;
}

Eigen::Index predict(const SdSsmParams& params, const automata::Sequence& tokens) {
  return num::argmax(forward(params, tokens).logits);
}

}  // namespace ssmfsa::sdssm
