#include "emgssi/stream.hpp"

#include "byte_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

namespace emgssi::stream {

float dequantize(std::int16_t count, float scale_uv_per_count) {
  return static_cast<float>(static_cast<double>(count) * static_cast<double>(scale_uv_per_count) / 1000.0);
}

std::int16_t quantize(float millivolts, float scale_uv_per_count) {
  if (!(scale_uv_per_count > 0.0f)) throw std::invalid_argument("scale must be positive");
  const double c = std::nearbyint(static_cast<double>(millivolts) * 1000.0 / scale_uv_per_count);
  return static_cast<std::int16_t>(std::clamp(c, -32768.0, 32767.0));
}

float Frame::millivolts(std::size_t channel, std::size_t i) const {
  return dequantize(count(channel, i), scale_uv_per_count);
}

std::vector<std::uint8_t> encode_frame(const Frame& f) {
  if (f.n_samples < 1 || f.n_samples > kMaxFrameSamples)
    throw std::invalid_argument("n_samples outside [1, 1000]");
  if (f.payload.size() != kChannels * static_cast<std::size_t>(f.n_samples))
    throw std::invalid_argument("payload size does not match 4 * n_samples");
  detail::ByteWriter w;
  w.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kFrameMagic.data()), 4));
  w.put<std::uint32_t>(f.seq);
  w.put<std::uint64_t>(f.timestamp_ms);
  w.put<std::uint16_t>(f.n_samples);
  w.put<float>(f.scale_uv_per_count);
  for (std::int16_t v : f.payload) w.put<std::int16_t>(v);
  return w.bytes();
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderBytes)
    throw FrameDecodeError(DecodeErrorKind::short_buffer, "short buffer: frame header needs 22 bytes");
  if (std::memcmp(bytes.data(), kFrameMagic.data(), 4) != 0)
    throw FrameDecodeError(DecodeErrorKind::bad_magic, "bad magic");
  Frame f;
  std::memcpy(&f.seq, bytes.data() + 4, 4);
  std::memcpy(&f.timestamp_ms, bytes.data() + 8, 8);
  std::memcpy(&f.n_samples, bytes.data() + 16, 2);
  std::memcpy(&f.scale_uv_per_count, bytes.data() + 18, 4);
  if (f.n_samples < 1 || f.n_samples > kMaxFrameSamples)
    throw FrameDecodeError(DecodeErrorKind::bad_sample_count,
                           "n_samples " + std::to_string(f.n_samples) + " outside [1, 1000]");
  const std::size_t need = kFrameHeaderBytes + 2 * kChannels * f.n_samples;
  if (bytes.size() < need) throw FrameDecodeError(DecodeErrorKind::short_buffer, "short buffer: payload truncated");
  if (bytes.size() > need) throw FrameDecodeError(DecodeErrorKind::trailing_bytes, "trailing bytes after payload");
  f.payload.resize(kChannels * f.n_samples);
  std::memcpy(f.payload.data(), bytes.data() + kFrameHeaderBytes, 2 * f.payload.size());
  return f;
}

std::vector<Frame> frames_from_samples(const ChannelMatrix& samples, std::size_t frame_samples,
                                       float scale_uv_per_count, std::uint32_t first_seq) {
  if (frame_samples < 1 || frame_samples > kMaxFrameSamples)
    throw std::invalid_argument("frame size outside [1, 1000]");
  if (samples.channels() != kChannels) throw std::invalid_argument("stream needs 4 channels");
  std::vector<Frame> out;
  const std::size_t n = samples.samples();
  for (std::size_t start = 0; start < n; start += frame_samples) {
    const std::size_t len = std::min(frame_samples, n - start);
    Frame f;
    f.seq = first_seq + static_cast<std::uint32_t>(out.size());
    f.timestamp_ms = static_cast<std::uint64_t>(std::llround(1000.0 * start / kSampleRateHz));
    f.n_samples = static_cast<std::uint16_t>(len);
    f.scale_uv_per_count = scale_uv_per_count;
    f.payload.resize(kChannels * len);
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t i = 0; i < len; ++i)
        f.payload[c * len + i] = quantize(samples.at(c, start + i), scale_uv_per_count);
    out.push_back(std::move(f));
  }
  return out;
}

ChannelMatrix concatenate(std::span<const synth::EmgSegment* const> segments) {
  std::size_t total = 0;
  for (const auto* s : segments) total += s->data.samples();
  ChannelMatrix out(kChannels, total);
  std::size_t off = 0;
  for (const auto* s : segments) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto row = s->data.row(c);
      std::copy(row.begin(), row.end(), out.row(c).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += s->data.samples();
  }
  return out;
}

std::array<double, kNumClasses> classify_window(const model::Model& model,
                                                const dsp::BiquadCascade* cascade,
                                                const ChannelMatrix& window) {
  const ChannelMatrix input = cascade ? dsp::apply_iir(*cascade, window, dsp::FilterMode::causal) : window;
  nn::Tensor<float> x(nn::Shape{1, input.channels(), input.samples()});
  std::copy(input.values().begin(), input.values().end(), x.data());
  const nn::Tensor<float> p = nn::softmax(model.infer(x));
  std::array<double, kNumClasses> out{};
  for (std::size_t k = 0; k < kNumClasses && k < p.size(); ++k) out[k] = p[k];
  return out;
}

LiveDecoder::LiveDecoder(const model::Model& model, const DecoderConfig& config)
    : model_(model), config_(config) {
  if (config_.window == 0 || config_.hop == 0 || config_.hop > config_.window)
    throw std::invalid_argument("decoder needs 0 < hop <= window");
  if (config_.filter_on) cascade_ = dsp::design_bandpass(config_.filter);
  for (auto& r : ring_) r.assign(config_.window, 0.0f);
}

std::vector<Prediction> LiveDecoder::append(const Frame* frame, std::size_t zeros) {
  std::vector<Prediction> out;
  const std::size_t n = frame ? frame->n_samples : zeros;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c)
      ring_[c][write_pos_] = frame ? frame->millivolts(c, i) : 0.0f;
    write_pos_ = (write_pos_ + 1) % config_.window;
    filled_ = std::min(filled_ + 1, config_.window);
    ++since_window_;
    ++total_samples_;
    if (filled_ < config_.window || since_window_ < config_.hop) continue;
    since_window_ = 0;

    const auto t0 = std::chrono::steady_clock::now();
    ChannelMatrix window(kChannels, config_.window);
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t k = 0; k < config_.window; ++k)
        window.at(c, k) = ring_[c][(write_pos_ + k) % config_.window];
    Prediction p;
    p.probabilities = classify_window(model_, config_.filter_on ? &cascade_ : nullptr, window);
    p.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    p.window_index = windows_++;
    p.window_end_s = static_cast<double>(total_samples_) / kSampleRateHz;
    p.class_id = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                  p.probabilities.begin()) + 1;
    p.word = std::string(word_for(p.class_id));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> LiveDecoder::push(const Frame& frame) {
  std::vector<Prediction> out;
  if (have_seq_ && frame.seq < next_seq_) {
    ++stats_.duplicate_frames;
    return out;
  }
  ++stats_.frames_received;
  if (have_seq_ && frame.seq > next_seq_) {
    // Assume missing frames carried as many samples as this one.
    const std::uint64_t missing = frame.seq - next_seq_;
    stats_.gaps_detected += missing;
    for (std::uint64_t m = 0; m < missing; ++m) {
      auto p = append(nullptr, frame.n_samples);
      stats_.zero_samples_inserted += frame.n_samples;
      out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    }
  }
  have_seq_ = true;
  next_seq_ = frame.seq + 1;
  auto p = append(&frame, 0);
  stats_.samples_delivered += frame.n_samples;
  out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  return out;
}

}  // namespace emgssi::stream
