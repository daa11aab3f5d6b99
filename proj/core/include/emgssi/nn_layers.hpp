#pragma once

#include "emgssi/nn_ops.hpp"

namespace emgssi::nn {

// Stateful wrappers that keep what backward needs from the last forward
// call. Backward accumulates into Parameter::grad and returns the input
// gradient.

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, const ConvSpec& spec, Rng& init_rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamSet<T>& out);

  const ConvSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  const Parameter<T>& weight() const { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm1d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d() = default;
  BatchNorm1d(std::string name, std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  // Eval-mode normalization without touching cached state.
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamSet<T>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out);

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }

 private:
  std::string name_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    output_ = activation(x, Activation::relu);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    return activation_backward(output_, grad_out, Activation::relu);
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class MaxPool1d {
 public:
  MaxPool1d() = default;
  MaxPool1d(std::size_t kernel, std::size_t stride, std::size_t padding)
      : kernel_(kernel), stride_(stride), padding_(padding) {}

  Tensor<T> forward(const Tensor<T>& x) {
    input_shape_ = x.shape();
    return maxpool1d(x, kernel_, stride_, padding_, &argmax_);
  }
  Tensor<T> infer(const Tensor<T>& x) const { return maxpool1d(x, kernel_, stride_, padding_); }
  Tensor<T> backward(const Tensor<T>& grad_out) {
    return maxpool1d_backward(input_shape_, argmax_, grad_out);
  }

 private:
  std::size_t kernel_ = 1, stride_ = 1, padding_ = 0;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p) : p_(p) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) {
    return dropout(x, p_, mode, rng, &mask_);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) { return dropout_backward(grad_out, mask_); }
  double p() const { return p_; }

 private:
  double p_ = 0.0;
  Tensor<T> mask_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, bool bias, Rng& init_rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamSet<T>& out);

  Parameter<T>& weight() { return weight_; }
  const Parameter<T>& weight() const { return weight_; }
  Parameter<T>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  bool has_bias_ = false;
  Tensor<T> input_;
};

}  // namespace emgssi::nn
