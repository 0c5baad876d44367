#include "patchmil/tensor.hpp"

#include <algorithm>

#include "patchmil/error.hpp"

namespace patchmil {

Tensor::Tensor(int n, int c, int h, int w, float fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ValidationError("Tensor: negative dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
         std::to_string(w_) + "]";
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

}  // namespace patchmil
