#include "memcap/gradcheck.hpp"

#include <cmath>

namespace memcap::nn {

template <typename T>
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<TensorNode<T>*>& params,
                                  int64_t max_entries_per_tensor) {
  GradCheckReport report;
  for (TensorNode<T>* p : params) {
    const int64_t n = p->numel();
    const int64_t limit = max_entries_per_tensor < 0 ? n : std::min(n, max_entries_per_tensor);
    for (int64_t j = 0; j < limit; ++j) {
      const T saved = p->value[j];
      const double h = 1e-4 * (1.0 + std::abs(static_cast<double>(saved)));
      p->value[j] = saved + static_cast<T>(h);
      const double up = loss_fn();
      p->value[j] = saved - static_cast<T>(h);
      const double down = loss_fn();
      p->value[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic =
          p->grad.empty() ? 0.0 : static_cast<double>(p->grad[j]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.n_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = p->name;
        report.worst_index = j;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template GradCheckReport finite_diff_check<float>(const std::function<double()>&,
                                                  const std::vector<TensorNode<float>*>&, int64_t);
template GradCheckReport finite_diff_check<double>(const std::function<double()>&,
                                                   const std::vector<TensorNode<double>*>&,
                                                   int64_t);

}  // namespace memcap::nn
