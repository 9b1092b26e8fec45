#pragma once

#include "ssmfsa/numkit/tensor.hpp"

#include <cstdint>

namespace ssmfsa::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments mirror the parameter layout and start
/// at zero.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig config);

  void step(ParamStore& params, const GradStore& grads);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const TensorStore& first_moment() const { return m_; }
  const TensorStore& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  TensorStore m_;
  TensorStore v_;
  std::uint64_t steps_ = 0;
};

}  // namespace ssmfsa::num
