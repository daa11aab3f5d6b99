#include "emgssi/model.hpp"

#include <cmath>
#include <cstring>

namespace emgssi::model {

namespace {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
void add_into(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

struct SeShapes {
  std::size_t n, c, t;
};

template <typename T>
SeShapes se_shapes(const Tensor<T>& f, const Tensor<T>& w1, const Tensor<T>& w2,
                   std::size_t reduction) {
  if (f.rank() != 2 && f.rank() != 3) throw std::invalid_argument("se_block: F must be rank 2/3");
  const std::size_t n = f.rank() == 3 ? f.dim(0) : 1;
  const std::size_t c = f.dim(f.rank() - 2);
  const std::size_t t = f.dim(f.rank() - 1);
  if (reduction < 1 || c / reduction < 1) {
    throw std::invalid_argument("se_block: C / r must be >= 1");
  }
  const std::size_t hidden = c / reduction;
  if (w1.shape() != Shape{hidden, c} || w2.shape() != Shape{c, hidden}) {
    throw std::invalid_argument("se_block: W1 must be " + nn::shape_string({hidden, c}) +
                                " and W2 " + nn::shape_string({c, hidden}) + ", got " +
                                nn::shape_string(w1.shape()) + " and " +
                                nn::shape_string(w2.shape()));
  }
  return {n, c, t};
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& f, const Tensor<T>& s, const SeShapes& d) {
  Tensor<T> out(f.shape());
  for (std::size_t r = 0; r < d.n * d.c; ++r) {
    const T w = s[r];
    const T* in = f.data() + r * d.t;
    T* o = out.data() + r * d.t;
    for (std::size_t t = 0; t < d.t; ++t) o[t] = in[t] * w;
  }
  return out;
}

std::string stage_name(std::size_t stage, std::size_t block) {
  return "stage" + std::to_string(stage + 1) + ".block" + std::to_string(block);
}

}  // namespace

SeResNet1dConfig SeResNet1dConfig::tiny() {
  SeResNet1dConfig c;
  c.seg_len = 64;
  c.stem_channels = 8;
  c.stages = {{2, 8, 1}, {2, 16, 2}, {2, 32, 2}};
  return c;
}

void validate(const SeResNet1dConfig& c) {
  if (c.in_channels < 1 || c.num_classes < 2 || c.stem_channels < 1) {
    throw ConfigError("config: channel and class counts must be positive (classes >= 2)");
  }
  if (c.stages.empty()) throw ConfigError("config: at least one stage is required");
  if (c.se_reduction < 1) throw ConfigError("config: se_reduction must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("config: dropout must be in [0,1)");
  if (c.pool_padding >= c.pool_kernel) throw ConfigError("config: pool padding must be < kernel");
  try {
    std::size_t len = nn::conv_output_length(c.seg_len, c.stem_kernel, c.stem_stride,
                                             c.stem_padding);
    len = nn::conv_output_length(len, c.pool_kernel, c.pool_stride, c.pool_padding);
    for (std::size_t s = 0; s < c.stages.size(); ++s) {
      const StageSpec& st = c.stages[s];
      if (st.blocks < 1 || st.out_channels < 1 || st.stride < 1) {
        throw ConfigError("config: stage " + std::to_string(s + 1) +
                          " needs blocks, channels and stride >= 1");
      }
      if (st.out_channels / c.se_reduction < 1) {
        throw ConfigError("config: stage " + std::to_string(s + 1) + " has " +
                          std::to_string(st.out_channels) + " channels, fewer than se_reduction " +
                          std::to_string(c.se_reduction));
      }
      len = nn::conv_output_length(len, c.block_kernel, st.stride, c.block_padding);
      len = nn::conv_output_length(len, c.block_kernel, 1, c.block_padding);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

template <typename T>
SeOutput<T> se_block(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2,
                     std::size_t reduction) {
  const SeShapes d = se_shapes(features, w1, w2, reduction);
  const Tensor<T> z = nn::global_avg_pool(features);
  const Tensor<T> h = nn::activation(nn::linear<T>(z, w1, nullptr), nn::Activation::relu);
  Tensor<T> s = nn::activation(nn::linear<T>(h, w2, nullptr), nn::Activation::sigmoid);
  return {scale_channels(features, s, d), std::move(s)};
}

template <typename T>
SeBlock<T>::SeBlock(std::string name, std::size_t channels, std::size_t reduction,
                    nn::Rng& init_rng)
    : reduction_(reduction) {
  if (reduction < 1 || channels / reduction < 1) {
    throw ConfigError("SE block " + name + ": C / r must be >= 1");
  }
  const std::size_t hidden = channels / reduction;
  w1_ = nn::Parameter<T>(name + ".se.w1", nn::he_normal<T>({hidden, channels}, channels, init_rng));
  w2_ = nn::Parameter<T>(name + ".se.w2", nn::he_normal<T>({channels, hidden}, hidden, init_rng));
}

template <typename T>
Tensor<T> SeBlock<T>::forward(const Tensor<T>& x) {
  const SeShapes d = se_shapes(x, w1_.value, w2_.value, reduction_);
  input_ = x;
  z_ = nn::global_avg_pool(x);
  hidden_ = nn::activation(nn::linear<T>(z_, w1_.value, nullptr), nn::Activation::relu);
  s_ = nn::activation(nn::linear<T>(hidden_, w2_.value, nullptr), nn::Activation::sigmoid);
  return scale_channels(x, s_, d);
}

template <typename T>
Tensor<T> SeBlock<T>::infer(const Tensor<T>& x, Tensor<T>* weights) const {
  SeOutput<T> out = se_block(x, w1_.value, w2_.value, reduction_);
  if (weights) *weights = std::move(out.weights);
  return std::move(out.output);
}

template <typename T>
Tensor<T> SeBlock<T>::backward(const Tensor<T>& grad_out) {
  const SeShapes d = se_shapes(input_, w1_.value, w2_.value, reduction_);
  Tensor<T> dx = scale_channels(grad_out, s_, d);
  Tensor<T> ds(s_.shape());
  for (std::size_t r = 0; r < d.n * d.c; ++r) {
    double acc = 0.0;
    const T* g = grad_out.data() + r * d.t;
    const T* f = input_.data() + r * d.t;
    for (std::size_t t = 0; t < d.t; ++t) acc += static_cast<double>(g[t]) * f[t];
    ds[r] = static_cast<T>(acc);
  }
  const Tensor<T> da = nn::activation_backward(s_, ds, nn::Activation::sigmoid);
  nn::LinearGrads<T> g2 = nn::linear_backward(hidden_, w2_.value, da, false);
  add_into(w2_.grad, g2.weight);
  const Tensor<T> dh = nn::activation_backward(hidden_, g2.input, nn::Activation::relu);
  nn::LinearGrads<T> g1 = nn::linear_backward(z_, w1_.value, dh, false);
  add_into(w1_.grad, g1.weight);
  add_into(dx, nn::global_avg_pool_backward(input_.shape(), g1.input));
  return dx;
}

template <typename T>
void SeBlock<T>::collect(ParamSet<T>& out) {
  out.push_back(&w1_);
  out.push_back(&w2_);
}

template <typename T>
ResBlock<T>::ResBlock(std::string name, const BlockSpec& spec, nn::Rng& init_rng)
    : spec_(spec),
      projection_(spec.in_channels != spec.out_channels || spec.stride != 1),
      conv1_(name + ".conv1",
             {spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, false},
             init_rng),
      conv2_(name + ".conv2",
             {spec.out_channels, spec.out_channels, spec.kernel, 1, spec.padding, false}, init_rng),
      bn1_(name + ".bn1", spec.out_channels),
      bn2_(name + ".bn2", spec.out_channels),
      se_(name, spec.out_channels, spec.se_reduction, init_rng),
      drop_(spec.dropout) {
  if (projection_) {
    short_conv_ = nn::Conv1d<T>(
        name + ".shortcut.conv", {spec.in_channels, spec.out_channels, 1, spec.stride, 0, false},
        init_rng);
    short_bn_ = nn::BatchNorm1d<T>(name + ".shortcut.bn", spec.out_channels);
  }
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, Mode mode, nn::Rng& dropout_rng) {
  Tensor<T> a = conv1_.forward(x);
  a = bn1_.forward(a, mode);
  a = relu1_.forward(a);
  a = conv2_.forward(a);
  a = bn2_.forward(a, mode);
  a = se_.forward(a);
  a = drop_.forward(a, mode, dropout_rng);
  const Tensor<T> sc = projection_ ? short_bn_.forward(short_conv_.forward(x), mode) : x;
  return relu_out_.forward(add(a, sc));
}

template <typename T>
Tensor<T> ResBlock<T>::infer(const Tensor<T>& x, Tensor<T>* se_weights) const {
  Tensor<T> a = conv1_.infer(x);
  a = bn1_.infer(a);
  a = nn::activation(a, nn::Activation::relu);
  a = conv2_.infer(a);
  a = bn2_.infer(a);
  a = se_.infer(a, se_weights);
  const Tensor<T> sc = projection_ ? short_bn_.infer(short_conv_.infer(x)) : x;
  return nn::activation(add(a, sc), nn::Activation::relu);
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = relu_out_.backward(grad_out);
  Tensor<T> m = drop_.backward(g);
  m = se_.backward(m);
  m = bn2_.backward(m);
  m = conv2_.backward(m);
  m = relu1_.backward(m);
  m = bn1_.backward(m);
  m = conv1_.backward(m);
  if (projection_) {
    add_into(m, short_conv_.backward(short_bn_.backward(g)));
  } else {
    add_into(m, g);
  }
  return m;
}

template <typename T>
void ResBlock<T>::collect(ParamSet<T>& out) {
  conv1_.collect(out);
  bn1_.collect(out);
  conv2_.collect(out);
  bn2_.collect(out);
  se_.collect(out);
  if (projection_) {
    short_conv_.collect(out);
    short_bn_.collect(out);
  }
}

template <typename T>
void ResBlock<T>::collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
  if (projection_) short_bn_.collect_buffers(out);
}

template <typename T>
SeResNet1d<T>::SeResNet1d(const SeResNet1dConfig& config, std::uint64_t seed)
    : config_(config) {
  validate(config);
  nn::Rng init(seed);
  stem_conv_ = nn::Conv1d<T>("stem.conv",
                             {config.in_channels, config.stem_channels, config.stem_kernel,
                              config.stem_stride, config.stem_padding, false},
                             init);
  stem_bn_ = nn::BatchNorm1d<T>("stem.bn", config.stem_channels);
  pool_ = nn::MaxPool1d<T>(config.pool_kernel, config.pool_stride, config.pool_padding);
  std::size_t in = config.stem_channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageSpec& st = config.stages[s];
    for (std::size_t b = 0; b < st.blocks; ++b) {
      BlockSpec spec{in,
                     st.out_channels,
                     b == 0 ? st.stride : 1,
                     config.block_kernel,
                     config.block_padding,
                     config.se_reduction,
                     config.dropout};
      blocks_.emplace_back(stage_name(s, b), spec, init);
      in = st.out_channels;
    }
  }
  head_drop_ = nn::Dropout<T>(config.dropout);
  fc_ = nn::Linear<T>("fc", in, config.num_classes, true, init);
  dropout_rng_.seed(seed ^ 0xD5A61266F0C9392Cull);
}

template <typename T>
Tensor<T> SeResNet1d<T>::prepare_input(const Tensor<T>& x) const {
  Tensor<T> x3 = x;
  if (x.rank() == 2) x3.reshape({1, x.dim(0), x.dim(1)});
  if (x3.rank() != 3 || x3.dim(1) != config_.in_channels || x3.dim(2) != config_.seg_len) {
    throw std::invalid_argument("model input must be [N, " + std::to_string(config_.in_channels) +
                                ", " + std::to_string(config_.seg_len) + "], got " +
                                nn::shape_string(x.shape()));
  }
  return x3;
}

template <typename T>
Tensor<T> SeResNet1d<T>::forward(const Tensor<T>& x, Mode mode) {
  unbatched_ = x.rank() == 2;
  Tensor<T> h = prepare_input(x);
  h = stem_conv_.forward(h);
  h = stem_bn_.forward(h, mode);
  h = stem_relu_.forward(h);
  h = pool_.forward(h);
  for (ResBlock<T>& b : blocks_) h = b.forward(h, mode, dropout_rng_);
  gap_input_shape_ = h.shape();
  features_ = nn::global_avg_pool(h);
  Tensor<T> logits = fc_.forward(head_drop_.forward(features_, mode, dropout_rng_));
  if (unbatched_) logits.reshape({config_.num_classes});
  return logits;
}

template <typename T>
void SeResNet1d<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = grad_logits;
  if (g.rank() == 1) g.reshape({1, g.dim(0)});
  g = head_drop_.backward(fc_.backward(g));
  g = nn::global_avg_pool_backward(gap_input_shape_, g);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  g = pool_.backward(g);
  g = stem_relu_.backward(g);
  g = stem_bn_.backward(g);
  stem_conv_.backward(g);
}

template <typename T>
Tensor<T> SeResNet1d<T>::infer(const Tensor<T>& x, AttentionTrace* trace, Tensor<T>* features,
                               ShapeTrace* shapes) const {
  Tensor<T> h = prepare_input(x);
  auto record = [&](const char* name, const Tensor<T>& t) {
    if (!shapes) return;
    Shape s = t.shape();
    if (x.rank() == 2) s.erase(s.begin());
    shapes->emplace_back(name, std::move(s));
  };
  h = stem_conv_.infer(h);
  h = stem_bn_.infer(h);
  h = nn::activation(h, nn::Activation::relu);
  record("stem", h);
  h = pool_.infer(h);
  record("pool", h);
  if (trace) trace->se_weights.clear();
  std::size_t index = 0;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    for (std::size_t b = 0; b < config_.stages[s].blocks; ++b, ++index) {
      Tensor<T> weights;
      h = blocks_[index].infer(h, trace ? &weights : nullptr);
      if (trace) {
        const std::size_t n = weights.rank() == 2 ? weights.dim(0) : 1;
        const std::size_t c = weights.size() / n;
        std::vector<double> mean(c, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) mean[j] += weights[i * c + j];
        }
        for (double& v : mean) v /= static_cast<double>(n);
        trace->se_weights.push_back(std::move(mean));
      }
    }
    static const char* names[] = {"stage1", "stage2", "stage3", "stage4", "stage5"};
    record(s < 5 ? names[s] : "stage", h);
  }
  Tensor<T> z = nn::global_avg_pool(h);
  record("gap", z);
  Tensor<T> logits = fc_.infer(z);
  record("fc", logits);
  if (x.rank() == 2) logits.reshape({config_.num_classes});
  if (features) {
    if (x.rank() == 2) z.reshape({z.size()});
    *features = std::move(z);
  }
  return logits;
}

template <typename T>
ParamSet<T> SeResNet1d<T>::parameters() {
  ParamSet<T> out;
  stem_conv_.collect(out);
  stem_bn_.collect(out);
  for (ResBlock<T>& b : blocks_) b.collect(out);
  fc_.collect(out);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> SeResNet1d<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  stem_bn_.collect_buffers(out);
  for (ResBlock<T>& b : blocks_) b.collect_buffers(out);
  return out;
}

template <typename T>
void SeResNet1d<T>::zero_grad() {
  for (nn::Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t SeResNet1d<T>::parameter_count() const {
  std::size_t n = 0;
  for (nn::Parameter<T>* p : const_cast<SeResNet1d<T>*>(this)->parameters()) n += p->value.size();
  return n;
}

Model build_model(const SeResNet1dConfig& config, std::uint64_t seed) {
  return Model(config, seed);
}

template <typename T>
ForwardResult<T> forward(SeResNet1d<T>& model, const Tensor<T>& x, Mode mode,
                         bool capture_attention) {
  ForwardResult<T> out;
  if (mode == Mode::eval) {
    AttentionTrace trace;
    out.logits = model.infer(x, capture_attention ? &trace : nullptr);
    if (capture_attention) out.attention = std::move(trace);
    return out;
  }
  out.logits = model.forward(x, mode);
  if (capture_attention) {
    AttentionTrace trace;
    for (ResBlock<T>& b : model.blocks()) {
      const Tensor<T>& s = b.se().last_weights();
      const std::size_t n = s.rank() == 2 ? s.dim(0) : 1;
      const std::size_t c = s.size() / n;
      std::vector<double> mean(c, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) mean[j] += s[i * c + j];
      }
      for (double& v : mean) v /= static_cast<double>(n);
      trace.se_weights.push_back(std::move(mean));
    }
    out.attention = std::move(trace);
  }
  return out;
}

InputAttribution input_attribution(const Model& model, const Tensor<float>& segment,
                                   std::size_t target) {
  const SeResNet1dConfig& cfg = model.config();
  if (segment.rank() != 2 || segment.dim(0) != 4 || cfg.in_channels != 4) {
    throw std::invalid_argument("input_attribution: expects a [4, T] segment and a 4-input model");
  }
  if (target >= cfg.num_classes) throw std::invalid_argument("input_attribution: bad target");
  InputAttribution out;

  AttentionTrace trace;
  const Tensor<float> base_probs = nn::softmax(model.infer(segment, &trace));
  const double base = base_probs[target];
  std::array<double, 4> drops{};
  double total = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    Tensor<float> occluded = segment;
    for (std::size_t t = 0; t < segment.dim(1); ++t) occluded.at(c, t) = 0.0f;
    const Tensor<float> p = nn::softmax(model.infer(occluded));
    drops[c] = std::max(0.0, base - static_cast<double>(p[target]));
    total += drops[c];
  }
  for (std::size_t c = 0; c < 4; ++c) out.occlusion[c] = total > 0.0 ? drops[c] / total : 0.25;

  // Stage-1 SE weights live on stage-1 channels; they map onto stem outputs
  // only when the counts agree, otherwise fall back to uniform weights.
  const std::size_t stem_out = cfg.stem_channels;
  std::vector<double> s(stem_out, 1.0);
  const std::size_t stage1_blocks = cfg.stages.front().blocks;
  if (cfg.stages.front().out_channels == stem_out) {
    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t b = 0; b < stage1_blocks; ++b) {
      for (std::size_t o = 0; o < stem_out; ++o) {
        s[o] += trace.se_weights[b][o] / static_cast<double>(stage1_blocks);
      }
    }
  }
  const Tensor<float>& w = model.stem_conv().weight().value;
  std::array<double, 4> mass{};
  double mass_total = 0.0;
  for (std::size_t o = 0; o < stem_out; ++o) {
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0.0;
      for (std::size_t k = 0; k < cfg.stem_kernel; ++k) m += std::abs(w.at(o, c, k));
      mass[c] += s[o] * m;
    }
  }
  for (double m : mass) mass_total += m;
  for (std::size_t c = 0; c < 4; ++c) {
    out.stem_projection[c] = mass_total > 0.0 ? mass[c] / mass_total : 0.25;
  }
  return out;
}

std::uint64_t count_flops(const SeResNet1dConfig& c) {
  validate(c);
  std::uint64_t flops = 0;
  auto conv = [&](std::size_t cin, std::size_t cout, std::size_t k, std::size_t lout) {
    flops += 2ull * cin * k * cout * lout;
  };
  auto bn = [&](std::size_t ch, std::size_t len) { flops += 2ull * ch * len; };

  std::size_t len = nn::conv_output_length(c.seg_len, c.stem_kernel, c.stem_stride, c.stem_padding);
  conv(c.in_channels, c.stem_channels, c.stem_kernel, len);
  bn(c.stem_channels, len);
  len = nn::conv_output_length(len, c.pool_kernel, c.pool_stride, c.pool_padding);
  std::size_t in = c.stem_channels;
  for (const StageSpec& st : c.stages) {
    for (std::size_t b = 0; b < st.blocks; ++b) {
      const std::size_t stride = b == 0 ? st.stride : 1;
      const std::size_t out = st.out_channels;
      const std::size_t l1 = nn::conv_output_length(len, c.block_kernel, stride, c.block_padding);
      conv(in, out, c.block_kernel, l1);
      bn(out, l1);
      conv(out, out, c.block_kernel, l1);
      bn(out, l1);
      const std::size_t hidden = out / c.se_reduction;
      flops += 1ull * out * l1;           // squeeze
      flops += 2ull * 2ull * out * hidden;  // excitation FCs
      flops += 1ull * out * l1;           // rescale
      if (in != out || stride != 1) {
        conv(in, out, 1, l1);
        bn(out, l1);
      }
      len = l1;
      in = out;
    }
  }
  flops += 1ull * in * len;  // GAP
  flops += 2ull * in * c.num_classes + c.num_classes;
  return flops;
}

std::uint64_t parameter_checksum(Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const Tensor<float>& t) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (nn::Parameter<float>* p : model.parameters()) mix(p->value);
  for (auto& [name, t] : model.buffers()) mix(*t);
  return h;
}

template SeOutput<float> se_block(const Tensor<float>&, const Tensor<float>&,
                                  const Tensor<float>&, std::size_t);
template SeOutput<double> se_block(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, std::size_t);
template class SeBlock<float>;
template class SeBlock<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class SeResNet1d<float>;
template class SeResNet1d<double>;
template ForwardResult<float> forward(SeResNet1d<float>&, const Tensor<float>&, Mode, bool);
template ForwardResult<double> forward(SeResNet1d<double>&, const Tensor<double>&, Mode, bool);

}  // namespace emgssi::model
