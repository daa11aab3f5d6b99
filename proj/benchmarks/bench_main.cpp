#include "emgssi/dsp.hpp"
#include "emgssi/model.hpp"
#include "emgssi/nn_ops.hpp"
#include "emgssi/stream.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace emgssi;

namespace {

nn::Tensor<float> random_tensor(const nn::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  nn::Tensor<float> t(shape);
  for (float& v : t.storage()) v = g(rng);
  return t;
}

ChannelMatrix random_segment(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.05f);
  ChannelMatrix m(kChannels, kSegmentLength);
  for (std::size_t c = 0; c < m.channels(); ++c)
    for (std::size_t t = 0; t < m.samples(); ++t) m.at(c, t) = g(rng);
  return m;
}

// Stage-2 style 3-tap conv on [32, 375] per sample.
void BM_Conv1d(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const nn::ConvSpec spec{32, 32, 3, 1, 1, false};
  const auto x = random_tensor({batch, 32, 375}, 1);
  const auto w = random_tensor({32, 32, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv1d<float>(x, spec, w, nullptr));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv1d)->Arg(1)->Arg(32);

void BM_ModelInfer(benchmark::State& state) {
  const model::Model m = model::build_model({}, 1);
  const auto x = random_tensor({4, 3000}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(m.infer(x));
  state.counters["FLOP/s"] = benchmark::Counter(static_cast<double>(model::count_flops({})),
                                                benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ModelInfer)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  model::Model m = model::build_model({}, 1);
  const auto x = random_tensor({batch, 4, 3000}, 4);
  std::vector<std::size_t> targets(batch);
  for (std::size_t i = 0; i < batch; ++i) targets[i] = i % kNumClasses;
  for (auto _ : state) {
    m.zero_grad();
    const auto logits = m.forward(x, nn::Mode::train);
    const auto ce = nn::softmax_cross_entropy(logits, std::span<const std::size_t>(targets));
    m.backward(ce.grad);
    benchmark::DoNotOptimize(ce.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BandpassZeroPhase(benchmark::State& state) {
  const auto cascade = dsp::design_bandpass({});
  const ChannelMatrix seg = random_segment(5);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::apply_iir(cascade, seg, dsp::FilterMode::zero_phase));
}
BENCHMARK(BM_BandpassZeroPhase);

void BM_Scalogram(benchmark::State& state) {
  const ChannelMatrix seg = random_segment(6);
  const auto row = seg.row(0);
  const std::vector<double> x(row.begin(), row.end());
  const auto freqs = dsp::log_spaced(5.0, 499.0, 64);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::cwt_scalogram(x, kSampleRateHz, freqs));
}
BENCHMARK(BM_Scalogram)->Unit(benchmark::kMillisecond);

void BM_FrameCodec(benchmark::State& state) {
  stream::Frame f;
  f.n_samples = 50;
  f.payload.assign(200, 123);
  for (auto _ : state) benchmark::DoNotOptimize(stream::decode_frame(stream::encode_frame(f)));
}
BENCHMARK(BM_FrameCodec);

}  // namespace
BENCHMARK_MAIN();
