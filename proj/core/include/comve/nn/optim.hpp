#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "comve/nn/tape.hpp"

namespace comve::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; only for Parameters with decay = true
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void zero_grad();
  void step(double learning_rate);
  std::int64_t steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
};

// Linear warmup to peak over warmup_steps, then linear decay to zero at
// total_steps.
class LinearWarmupSchedule {
 public:
  LinearWarmupSchedule(double peak, std::int64_t total_steps, std::int64_t warmup_steps);

  double at(std::int64_t step) const;  // step is 0-based

 private:
  double peak_;
  std::int64_t total_;
  std::int64_t warmup_;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

bool all_finite(std::span<Parameter* const> params);

}  // namespace comve::nn
