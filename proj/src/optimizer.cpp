#include "patchmil/optimizer.hpp"

#include <cmath>

#include "patchmil/error.hpp"
#include "patchmil/simd/kernels.hpp"

namespace patchmil {

double scheduled_learning_rate(const OptimizerConfig& config, long iteration, int batch_size,
                               std::size_t train_size) {
  if (train_size == 0) throw ValidationError("learning rate schedule: empty training split");
  const double epoch = static_cast<double>(iteration) * batch_size / static_cast<double>(train_size);
  const double decays = std::floor(epoch / config.decay_interval_epochs);
  return config.learning_rate * std::pow(config.decay_factor, decays);
}

Adam::Adam(const OptimizerConfig& config, std::vector<Parameter*> params)
    : config_(config), params_(std::move(params)) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto step = static_cast<float>(lr * std::sqrt(c2) / c1);
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    k.adam_update(p.value.size(), p.value.data(), p.grad.data(), m_[i].data(), v_[i].data(), step,
                  static_cast<float>(config_.beta1), static_cast<float>(config_.beta2),
                  static_cast<float>(config_.epsilon));
  }
}

}  // namespace patchmil
