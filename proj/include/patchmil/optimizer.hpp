#pragma once

#include <vector>

#include "patchmil/config.hpp"
#include "patchmil/tensor.hpp"

namespace patchmil {

// Step-decayed rate: lr * decay_factor ^ floor(epoch / decay_interval_epochs),
// with epoch = iteration * batch_size / train_size.
double scheduled_learning_rate(const OptimizerConfig& config, long iteration, int batch_size,
                               std::size_t train_size);

class Adam {
 public:
  Adam(const OptimizerConfig& config, std::vector<Parameter*> params);
  // One update from the accumulated gradients at learning rate lr.
  void step(double lr);
  long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace patchmil
