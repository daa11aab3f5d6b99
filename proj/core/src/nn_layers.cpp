#include "emgssi/nn_layers.hpp"

namespace emgssi::nn {

namespace {

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

}  // namespace

template <typename T>
Conv1d<T>::Conv1d(std::string name, const ConvSpec& spec, Rng& init_rng) : spec_(spec) {
  validate(spec);
  weight_ = Parameter<T>(name + ".weight",
                         he_normal<T>({spec.out_channels, spec.in_channels, spec.kernel},
                                      spec.in_channels * spec.kernel, init_rng));
  if (spec.bias) bias_ = Parameter<T>(name + ".bias", Tensor<T>(Shape{spec.out_channels}));
}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) {
  input_ = x;
  return conv1d(x, spec_, weight_.value, spec_.bias ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Conv1d<T>::infer(const Tensor<T>& x) const {
  return conv1d(x, spec_, weight_.value, spec_.bias ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& grad_out) {
  ConvGrads<T> g = conv1d_backward(input_, spec_, weight_.value, grad_out);
  accumulate(weight_.grad, g.weight);
  if (spec_.bias) accumulate(bias_.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void Conv1d<T>::collect(ParamSet<T>& out) {
  out.push_back(&weight_);
  if (spec_.bias) out.push_back(&bias_);
}

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::string name, std::size_t channels)
    : name_(std::move(name)),
      gamma_(name_ + ".gamma", Tensor<T>(Shape{channels}, T(1))),
      beta_(name_ + ".beta", Tensor<T>(Shape{channels})),
      running_mean_(Shape{channels}, T(0)),
      running_var_(Shape{channels}, T(1)) {}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, Mode mode) {
  return batchnorm1d(x, gamma_.value, beta_.value, running_mean_, running_var_, mode, kEps,
                     kMomentum, &cache_);
}

template <typename T>
Tensor<T> BatchNorm1d<T>::infer(const Tensor<T>& x) const {
  Tensor<T> mean = running_mean_;
  Tensor<T> var = running_var_;
  return batchnorm1d(x, gamma_.value, beta_.value, mean, var, Mode::eval, kEps, kMomentum);
}

template <typename T>
Tensor<T> BatchNorm1d<T>::backward(const Tensor<T>& grad_out) {
  BatchNormGrads<T> g = batchnorm1d_backward(grad_out, gamma_.value, cache_);
  accumulate(gamma_.grad, g.gamma);
  accumulate(beta_.grad, g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm1d<T>::collect(ParamSet<T>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm1d<T>::collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  out.emplace_back(name_ + ".running_mean", &running_mean_);
  out.emplace_back(name_ + ".running_var", &running_var_);
}

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in, std::size_t out, bool bias, Rng& init_rng)
    : has_bias_(bias) {
  weight_ = Parameter<T>(name + ".weight", he_normal<T>({out, in}, in, init_rng));
  if (bias) bias_ = Parameter<T>(name + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  input_ = x;
  return linear(x, weight_.value, has_bias_ ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& x) const {
  return linear(x, weight_.value, has_bias_ ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  LinearGrads<T> g = linear_backward(input_, weight_.value, grad_out, has_bias_);
  accumulate(weight_.grad, g.weight);
  if (has_bias_) accumulate(bias_.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void Linear<T>::collect(ParamSet<T>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

template class Conv1d<float>;
template class Conv1d<double>;
template class BatchNorm1d<float>;
template class BatchNorm1d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace emgssi::nn
