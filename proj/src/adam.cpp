#include "memcap/adam.hpp"

#include <cmath>

namespace memcap::nn {

template <typename T>
AdamState<T>::AdamState(const std::vector<TensorNode<T>*>& params, AdamOptions opts)
    : opts_(opts) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto* p : params) {
    m_.emplace_back(p->value.size(), T(0));
    v_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void AdamState<T>::step(const std::vector<TensorNode<T>*>& params) {
  if (params.size() != m_.size())
    throw std::invalid_argument("adam: parameter list does not match state");
  ++step_count_;
  const T b1 = static_cast<T>(opts_.beta1);
  const T b2 = static_cast<T>(opts_.beta2);
  const T corr1 = T(1) - static_cast<T>(std::pow(opts_.beta1, static_cast<double>(step_count_)));
  const T corr2 = T(1) - static_cast<T>(std::pow(opts_.beta2, static_cast<double>(step_count_)));
  const T lr = static_cast<T>(opts_.lr);
  const T eps = static_cast<T>(opts_.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    TensorNode<T>* p = params[i];
    if (p->grad.size() != p->value.size())
      throw std::invalid_argument("adam: tensor '" + p->name + "' has no gradient");
    std::vector<T>& m = m_[i];
    std::vector<T>& v = v_[i];
    const size_t n = p->value.size();
    for (size_t j = 0; j < n; ++j) {
      const T g = p->grad[j];
      if (!std::isfinite(g))
        throw NonFiniteGradient("adam: non-finite gradient in tensor '" + p->name +
                                "' at index " + std::to_string(j) + " (step " +
                                std::to_string(step_count_) + ")");
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T mhat = m[j] / corr1;
      const T vhat = v[j] / corr2;
      p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace memcap::nn
