#include "hmap/train/adam.hpp"

#include <cmath>

namespace hmap {

template <typename T>
void adam_update(Array<T>& param, const Array<T>& grad, AdamState<T>& state, double lr, const AdamOptions& opt) {
  require_same_shape(param.shape(), grad.shape(), "adam param vs grad");
  if (state.step == 0 && state.m.size() == 0) {
    state.m = Array<T>(param.shape());
    state.v = Array<T>(param.shape());
  }
  require_same_shape(param.shape(), state.m.shape(), "adam param vs first moment");
  require_same_shape(param.shape(), state.v.shape(), "adam param vs second moment");
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (Index i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = opt.beta1 * static_cast<double>(state.m[i]) + (1.0 - opt.beta1) * g;
    const double v = opt.beta2 * static_cast<double>(state.v[i]) + (1.0 - opt.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * m_hat / (std::sqrt(v_hat) + opt.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<NamedParameter<T>> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {}

template <typename T>
void Adam<T>::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    adam_update(p.mutable_value(), p.grad(), states_[i], lr, options_);
  }
  zero_grad();
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template void adam_update(Array<float>&, const Array<float>&, AdamState<float>&, double, const AdamOptions&);
template void adam_update(Array<double>&, const Array<double>&, AdamState<double>&, double, const AdamOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace hmap
