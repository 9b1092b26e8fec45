#include "ssmfsa/numkit/adam.hpp"

#include "ssmfsa/error.hpp"

#include <cmath>

namespace ssmfsa::num {

Adam::Adam(const ParamStore& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParamStore& params, const GradStore& grads) {
  if (!params.same_layout(m_) || !grads.same_layout(m_)) throw ShapeError("Adam::step: layout mismatch");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads.at(i);
    Matrix& m = m_.at(i);
    Matrix& v = v_.at(i);
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params.at(i).array() -= config_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace ssmfsa::num
