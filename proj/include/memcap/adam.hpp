#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcap/tensor.hpp"

namespace memcap::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& what) : std::runtime_error(what) {}
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are laid
// out per tensor and must not be reused across different parameter sets.
template <typename T>
class AdamState {
 public:
  AdamState(const std::vector<TensorNode<T>*>& params, AdamOptions opts);

  // One update from the gradients currently stored in the parameter tensors.
  // Aborts with the offending tensor named if any gradient is non-finite.
  void step(const std::vector<TensorNode<T>*>& params);

  int64_t step_count() const { return step_count_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  int64_t step_count_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

extern template class AdamState<float>;
extern template class AdamState<double>;

}  // namespace memcap::nn
