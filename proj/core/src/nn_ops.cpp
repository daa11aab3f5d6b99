#include "emgssi/nn_ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace emgssi::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Views [C, T] as [1, C, T].
struct Dims3 {
  std::size_t n, c, t;
};

Dims3 dims3(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw std::invalid_argument(std::string(op) + ": expected rank 2 or 3, got " + shape_string(s));
}

// Reductions use eight fixed lanes so the rounding depends only on the
// element order, never on buffer alignment or batch position.
template <typename T>
double lane_sum(const T* p, std::size_t len) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += p[i + j];
  double s = 0.0;
  for (T a : acc) s += static_cast<double>(a);
  for (; i < len; ++i) s += static_cast<double>(p[i]);
  return s;
}

template <typename T>
double lane_dot(const T* a, const T* b, std::size_t len) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  double s = 0.0;
  for (T v : acc) s += static_cast<double>(v);
  for (; i < len; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

template <typename T>
double lane_centered_squares(const T* p, std::size_t len, T mean) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (std::size_t j = 0; j < 8; ++j) {
      const T v = p[i + j] - mean;
      acc[j] += v * v;
    }
  double s = 0.0;
  for (T a : acc) s += static_cast<double>(a);
  for (; i < len; ++i) {
    const double v = static_cast<double>(p[i] - mean);
    s += v * v;
  }
  return s;
}

inline std::size_t row_offset(std::size_t n, std::size_t c, const Dims3& d) {
  return (n * d.c + c) * d.t;
}

Shape with_dims(const Shape& like, std::size_t n, std::size_t c, std::size_t t) {
  if (like.size() == 2) return {c, t};
  return {n, c, t};
}

// cols[(i * k + j), o] = x[i, o * s + j - p], zero outside.
template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t len, std::size_t k, std::size_t s,
            std::size_t p, std::size_t lout, T* cols) {
  for (std::size_t i = 0; i < cin; ++i) {
    const T* xi = x + i * len;
    for (std::size_t j = 0; j < k; ++j) {
      T* row = cols + (i * k + j) * lout;
      for (std::size_t o = 0; o < lout; ++o) {
        const long src = static_cast<long>(o * s + j) - static_cast<long>(p);
        row[o] = (src >= 0 && src < static_cast<long>(len)) ? xi[src] : T(0);
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t cin, std::size_t len, std::size_t k, std::size_t s,
                std::size_t p, std::size_t lout, T* dx) {
  for (std::size_t i = 0; i < cin; ++i) {
    T* dxi = dx + i * len;
    for (std::size_t j = 0; j < k; ++j) {
      const T* row = cols + (i * k + j) * lout;
      for (std::size_t o = 0; o < lout; ++o) {
        const long src = static_cast<long>(o * s + j) - static_cast<long>(p);
        if (src >= 0 && src < static_cast<long>(len)) dxi[src] += row[o];
      }
    }
  }
}

void check_conv_shapes(const Dims3& d, const ConvSpec& spec, const Shape& wshape) {
  validate(spec);
  if (d.c != spec.in_channels) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(d.c) +
                                " channels, spec expects " + std::to_string(spec.in_channels));
  }
  const Shape expect{spec.out_channels, spec.in_channels, spec.kernel};
  if (wshape != expect) {
    throw std::invalid_argument("conv1d: weight shape " + shape_string(wshape) + ", expected " +
                                shape_string(expect));
  }
}

}  // namespace

void validate(const ConvSpec& spec) {
  if (spec.kernel < 1 || spec.stride < 1 || spec.in_channels < 1 || spec.out_channels < 1) {
    throw std::invalid_argument("ConvSpec requires k >= 1, s >= 1 and non-zero channel counts");
  }
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("kernel and stride must be >= 1");
  if (kernel > length + 2 * padding) {
    throw std::invalid_argument("kernel " + std::to_string(kernel) +
                                " exceeds padded length " + std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias) {
  const Dims3 d = dims3(x.shape(), "conv1d");
  check_conv_shapes(d, spec, weight.shape());
  if (spec.bias && (!bias || bias->shape() != Shape{spec.out_channels})) {
    throw std::invalid_argument("conv1d: bias missing or mis-shaped");
  }
  const std::size_t lout = conv_output_length(d.t, spec.kernel, spec.stride, spec.padding);
  const std::size_t ck = spec.in_channels * spec.kernel;
  Tensor<T> y(with_dims(x.shape(), d.n, spec.out_channels, lout));
  std::vector<T> cols(ck * lout);
  ConstMatMap<T> w(weight.data(), static_cast<Eigen::Index>(spec.out_channels),
                   static_cast<Eigen::Index>(ck));
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x.data() + n * d.c * d.t, d.c, d.t, spec.kernel, spec.stride, spec.padding, lout,
           cols.data());
    ConstMatMap<T> c(cols.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(lout));
    MatMap<T> out(y.data() + n * spec.out_channels * lout,
                  static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(lout));
    out.noalias() = w * c;
    if (spec.bias) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        out.row(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                             const Tensor<T>& grad_out) {
  const Dims3 d = dims3(x.shape(), "conv1d_backward");
  check_conv_shapes(d, spec, weight.shape());
  const std::size_t lout = conv_output_length(d.t, spec.kernel, spec.stride, spec.padding);
  if (grad_out.shape() != with_dims(x.shape(), d.n, spec.out_channels, lout)) {
    throw std::invalid_argument("conv1d_backward: grad_out shape " +
                                shape_string(grad_out.shape()) + " mismatches forward output");
  }
  const std::size_t ck = spec.in_channels * spec.kernel;
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()),
                 spec.bias ? Tensor<T>(Shape{spec.out_channels}) : Tensor<T>()};
  std::vector<T> cols(ck * lout), dcols(ck * lout);
  ConstMatMap<T> w(weight.data(), static_cast<Eigen::Index>(spec.out_channels),
                   static_cast<Eigen::Index>(ck));
  MatMap<T> dw(g.weight.data(), static_cast<Eigen::Index>(spec.out_channels),
               static_cast<Eigen::Index>(ck));
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x.data() + n * d.c * d.t, d.c, d.t, spec.kernel, spec.stride, spec.padding, lout,
           cols.data());
    ConstMatMap<T> c(cols.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(lout));
    ConstMatMap<T> dy(grad_out.data() + n * spec.out_channels * lout,
                      static_cast<Eigen::Index>(spec.out_channels),
                      static_cast<Eigen::Index>(lout));
    dw.noalias() += dy * c.transpose();
    MatMap<T> dc(dcols.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(lout));
    dc.noalias() = w.transpose() * dy;
    col2im_add(dcols.data(), d.c, d.t, spec.kernel, spec.stride, spec.padding, lout,
               g.input.data() + n * d.c * d.t);
    if (spec.bias) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        g.bias[o] += static_cast<T>(lane_sum(grad_out.data() + (n * spec.out_channels + o) * lout, lout));
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, double eps,
                      double momentum, BatchNormCache<T>* cache) {
  const Dims3 d = dims3(x.shape(), "batchnorm1d");
  const Shape cshape{d.c};
  if (gamma.shape() != cshape || beta.shape() != cshape || running_mean.shape() != cshape ||
      running_var.shape() != cshape) {
    throw std::invalid_argument("batchnorm1d: parameter shapes must be [" + std::to_string(d.c) +
                                "]");
  }
  const std::size_t m = d.n * d.t;
  if (mode == Mode::train && m < 2) {
    throw std::invalid_argument("batchnorm1d: train mode needs batch * time >= 2");
  }
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(d.c);
  for (std::size_t c = 0; c < d.c; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < d.n; ++n) sum += lane_sum(x.data() + row_offset(n, c, d), d.t);
      mean = sum / static_cast<double>(m);
      double ss = 0.0;
      const T mt = static_cast<T>(mean);
      for (std::size_t n = 0; n < d.n; ++n)
        ss += lane_centered_squares(x.data() + row_offset(n, c, d), d.t, mt);
      var = ss / static_cast<double>(m);
      const double unbiased = ss / static_cast<double>(m - 1);
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mean);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(istd);
    const T g = gamma[c], b = beta[c], mt = static_cast<T>(mean), it = static_cast<T>(istd);
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = row_offset(n, c, d);
      const T* in = x.data() + off;
      T* h = xhat.data() + off;
      T* out = y.data() + off;
      for (std::size_t t = 0; t < d.t; ++t) {
        h[t] = (in[t] - mt) * it;
        out[t] = g * h[t] + b;
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm1d_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                       const BatchNormCache<T>& cache) {
  const Dims3 d = dims3(grad_out.shape(), "batchnorm1d_backward");
  if (cache.normalized.shape() != grad_out.shape()) {
    throw std::invalid_argument("batchnorm1d_backward: cache does not match grad_out");
  }
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>(Shape{d.c}), Tensor<T>(Shape{d.c})};
  const double m = static_cast<double>(d.n * d.t);
  for (std::size_t c = 0; c < d.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = row_offset(n, c, d);
      sum_dy += lane_sum(grad_out.data() + off, d.t);
      sum_dy_xhat += lane_dot(grad_out.data() + off, cache.normalized.data() + off, d.t);
    }
    g.beta[c] = static_cast<T>(sum_dy);
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    const T scale = static_cast<T>(static_cast<double>(gamma[c]) * cache.inv_std[c]);
    const T mdy = static_cast<T>(sum_dy / m), mdx = static_cast<T>(sum_dy_xhat / m);
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = row_offset(n, c, d);
      const T* dy = grad_out.data() + off;
      const T* h = cache.normalized.data() + off;
      T* dx = g.input.data() + off;
      if (cache.mode == Mode::train) {
        for (std::size_t t = 0; t < d.t; ++t) dx[t] = scale * (dy[t] - mdy - h[t] * mdx);
      } else {
        for (std::size_t t = 0; t < d.t; ++t) dx[t] = scale * dy[t];
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  Tensor<T> y(x.shape());
  const std::size_t n = x.size();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      // Branches keep exp from overflowing for large |x|.
      const T v = x[i];
      if (v >= T(0)) {
        y[i] = T(1) / (T(1) + std::exp(-v));
      } else {
        const T e = std::exp(v);
        y[i] = e / (T(1) + e);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& y, const Tensor<T>& grad_out, Activation kind) {
  if (y.shape() != grad_out.shape()) {
    throw std::invalid_argument("activation_backward: shape mismatch");
  }
  Tensor<T> g(y.shape());
  const std::size_t n = y.size();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) g[i] = y[i] > T(0) ? grad_out[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) g[i] = grad_out[i] * y[i] * (T(1) - y[i]);
  }
  return g;
}

template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                    std::size_t padding, std::vector<std::size_t>* argmax) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("maxpool1d: kernel, stride >= 1");
  if (padding >= kernel) throw std::invalid_argument("maxpool1d: padding must be < kernel");
  const Dims3 d = dims3(x.shape(), "maxpool1d");
  const std::size_t lout = conv_output_length(d.t, kernel, stride, padding);
  Tensor<T> y(with_dims(x.shape(), d.n, d.c, lout));
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t r = 0; r < d.n * d.c; ++r) {
    const T* in = x.data() + r * d.t;
    for (std::size_t o = 0; o < lout; ++o) {
      const long start = static_cast<long>(o * stride) - static_cast<long>(padding);
      T best = -std::numeric_limits<T>::infinity();
      std::size_t best_i = 0;
      bool found = false;
      for (std::size_t j = 0; j < kernel; ++j) {
        const long i = start + static_cast<long>(j);
        if (i < 0 || i >= static_cast<long>(d.t)) continue;
        if (!found || in[i] > best) {
          best = in[i];
          best_i = static_cast<std::size_t>(i);
          found = true;
        }
      }
      y[r * lout + o] = best;
      if (argmax) (*argmax)[r * lout + o] = r * d.t + best_i;
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool1d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw std::invalid_argument("maxpool1d_backward: argmax does not match grad_out");
  }
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Dims3 d = dims3(x.shape(), "global_avg_pool");
  if (d.t < 1) throw std::invalid_argument("global_avg_pool: T must be >= 1");
  Tensor<T> z(x.rank() == 2 ? Shape{d.c} : Shape{d.n, d.c});
  for (std::size_t r = 0; r < d.n * d.c; ++r) {
    double s = 0.0;
    const T* row = x.data() + r * d.t;
    for (std::size_t t = 0; t < d.t; ++t) s += row[t];
    z[r] = static_cast<T>(s / static_cast<double>(d.t));
  }
  return z;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  const Dims3 d = dims3(input_shape, "global_avg_pool_backward");
  if (grad_out.size() != d.n * d.c) {
    throw std::invalid_argument("global_avg_pool_backward: grad_out size mismatch");
  }
  Tensor<T> g(input_shape);
  const T inv = T(1) / static_cast<T>(d.t);
  for (std::size_t r = 0; r < d.n * d.c; ++r) {
    const T v = grad_out[r] * inv;
    T* row = g.data() + r * d.t;
    for (std::size_t t = 0; t < d.t; ++t) row[t] = v;
  }
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (weight.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  const std::size_t n = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t xin = x.rank() == 1 ? x.dim(0) : x.dim(1);
  if ((x.rank() != 1 && x.rank() != 2) || xin != in) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) +
                                " incompatible with weight " + shape_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{out}) {
    throw std::invalid_argument("linear: bias shape must be [" + std::to_string(out) + "]");
  }
  Tensor<T> y(x.rank() == 1 ? Shape{out} : Shape{n, out});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      const double acc = lane_dot(x.data() + i * in, weight.data() + o * in, in);
      y[i * out + o] = static_cast<T>(acc) + (bias ? (*bias)[o] : T(0));
    }
  }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, bool has_bias) {
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  const std::size_t n = x.rank() == 1 ? 1 : x.dim(0);
  if (grad_out.size() != n * out) throw std::invalid_argument("linear_backward: shape mismatch");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()),
                   has_bias ? Tensor<T>(Shape{out}) : Tensor<T>()};
  ConstMatMap<T> xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstMatMap<T> wm(weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  ConstMatMap<T> dy(grad_out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  MatMap<T> dx(g.input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  MatMap<T> dw(g.weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  dx.noalias() = dy * wm;
  dw.noalias() = dy.transpose() * xm;
  if (has_bias) {
    for (std::size_t o = 0; o < out; ++o) g.bias[o] = dy.col(static_cast<Eigen::Index>(o)).sum();
  }
  return g;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng, Tensor<T>* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) {
    if (mask) *mask = Tensor<T>(x.shape(), T(1));
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> m(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Top 53 bits as a uniform double in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m[i] = u < p ? T(0) : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const Tensor<T>& mask) {
  if (grad_out.shape() != mask.shape()) throw std::invalid_argument("dropout_backward: shape");
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw std::invalid_argument("softmax: expected [K] or [N, K]");
  }
  const std::size_t k = logits.rank() == 1 ? logits.dim(0) : logits.dim(1);
  const std::size_t n = logits.size() / std::max<std::size_t>(k, 1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * k;
    double mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max<double>(mx, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(z[j] - mx) / sum);
  }
  return p;
}

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                      std::span<const std::size_t> targets) {
  const std::size_t k = logits.rank() == 1 ? logits.dim(0) : logits.dim(1);
  const std::size_t n = logits.rank() == 1 ? 1 : logits.dim(0);
  if (targets.size() != n) throw std::invalid_argument("softmax_cross_entropy: target count");
  CrossEntropy<T> out;
  out.probs = Tensor<T>(logits.shape());
  out.grad = Tensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= k) throw std::invalid_argument("softmax_cross_entropy: target out of range");
    const T* z = logits.data() + i * k;
    double mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max<double>(mx, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
    const double log_sum = std::log(sum);
    total += -(z[targets[i]] - mx - log_sum);
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = std::exp(z[j] - mx - log_sum);
      out.probs[i * k + j] = static_cast<T>(pj);
      out.grad[i * k + j] =
          static_cast<T>((pj - (j == targets[i] ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

template <typename T>
void adam_step(const ParamSet<T>& params, const AdamConfig& config, long t) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (Parameter<T>* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + p->name);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double m = config.beta1 * p->adam_m[i] + (1.0 - config.beta1) * g;
      const double v = config.beta2 * p->adam_v[i] + (1.0 - config.beta2) * g * g;
      p->adam_m[i] = static_cast<T>(m);
      p->adam_v[i] = static_cast<T>(v);
      const double step = config.lr * (m / c1) / (std::sqrt(v / c2) + config.eps);
      p->value[i] = static_cast<T>(p->value[i] - step);
    }
  }
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> w(std::move(shape));
  for (T& v : w.values()) v = static_cast<T>(dist(rng));
  return w;
}

#define EMGSSI_INSTANTIATE(T)                                                                  \
  template Tensor<T> conv1d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,              \
                            const Tensor<T>*);                                               \
  template ConvGrads<T> conv1d_backward(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,  \
                                        const Tensor<T>&);                                   \
  template Tensor<T> batchnorm1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                 Tensor<T>&, Tensor<T>&, Mode, double, double,                \
                                 BatchNormCache<T>*);                                         \
  template BatchNormGrads<T> batchnorm1d_backward(const Tensor<T>&, const Tensor<T>&,         \
                                                  const BatchNormCache<T>&);                  \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                \
  template Tensor<T> activation_backward(const Tensor<T>&, const Tensor<T>&, Activation);     \
  template Tensor<T> maxpool1d(const Tensor<T>&, std::size_t, std::size_t, std::size_t,       \
                               std::vector<std::size_t>*);                                    \
  template Tensor<T> maxpool1d_backward(const Shape&, const std::vector<std::size_t>&,        \
                                        const Tensor<T>&);                                   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                       \
  template Tensor<T> global_avg_pool_backward(const Shape&, const Tensor<T>&);                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);            \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                          const Tensor<T>&, bool);                            \
  template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&, Tensor<T>*);               \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> softmax(const Tensor<T>&);                                               \
  template CrossEntropy<T> softmax_cross_entropy(const Tensor<T>&,                            \
                                                 std::span<const std::size_t>);               \
  template void adam_step(const ParamSet<T>&, const AdamConfig&, long);                       \
  template Tensor<T> he_normal(Shape, std::size_t, Rng&);

EMGSSI_INSTANTIATE(float)
EMGSSI_INSTANTIATE(double)

#undef EMGSSI_INSTANTIATE

}  // namespace emgssi::nn
