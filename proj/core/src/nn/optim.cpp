#include "comve/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace comve::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step(double learning_rate) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.size() == 0) continue;
    m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    if (p.decay && config_.weight_decay > 0.0) {
      p.value *= 1.0 - learning_rate * config_.weight_decay;
    }
    p.value.array() -= learning_rate * (m_[i].array() / c1) /
                       ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

LinearWarmupSchedule::LinearWarmupSchedule(double peak, std::int64_t total_steps,
                                           std::int64_t warmup_steps)
    : peak_(peak), total_(std::max<std::int64_t>(total_steps, 1)),
      warmup_(std::clamp<std::int64_t>(warmup_steps, 0, total_steps)) {}

double LinearWarmupSchedule::at(std::int64_t step) const {
  if (step < warmup_) return peak_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  const std::int64_t remaining = total_ - warmup_;
  if (remaining <= 0) return peak_;
  const double frac = static_cast<double>(total_ - step) / static_cast<double>(remaining);
  return peak_ * std::clamp(frac, 0.0, 1.0);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

bool all_finite(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

}  // namespace comve::nn
