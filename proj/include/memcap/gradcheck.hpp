#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memcap/tensor.hpp"

namespace memcap::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t n_checked = 0;
  bool passed(double tolerance) const { return max_rel_err <= tolerance; }
};

// Central finite differences against the gradients already stored in
// `params` (the caller runs its backward pass first). `loss_fn` must
// recompute the loss from the current parameter values and be deterministic.
// Step size is 1e-4 scaled by parameter magnitude.
template <typename T>
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<TensorNode<T>*>& params,
                                  int64_t max_entries_per_tensor = -1);

extern template GradCheckReport finite_diff_check<float>(
    const std::function<double()>&, const std::vector<TensorNode<float>*>&, int64_t);
extern template GradCheckReport finite_diff_check<double>(
    const std::function<double()>&, const std::vector<TensorNode<double>*>&, int64_t);

}  // namespace memcap::nn
