#pragma once

#include "emgssi/dsp.hpp"
#include "emgssi/model.hpp"
#include "emgssi/synth.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emgssi::stream {

inline constexpr std::array<char, 4> kFrameMagic{'E', 'M', 'G', '1'};
inline constexpr std::size_t kFrameHeaderBytes = 22;
inline constexpr std::size_t kMaxFrameSamples = 1000;

struct Frame {
  std::uint32_t seq = 0;
  std::uint64_t timestamp_ms = 0;
  std::uint16_t n_samples = 0;
  float scale_uv_per_count = 1.0f;
  std::vector<std::int16_t> payload;  // channel-major, 4 * n_samples

  std::int16_t count(std::size_t channel, std::size_t i) const { return payload[channel * n_samples + i]; }
  float millivolts(std::size_t channel, std::size_t i) const;
  bool operator==(const Frame&) const = default;
};

enum class DecodeErrorKind { bad_magic, short_buffer, bad_sample_count, trailing_bytes };

class FrameDecodeError : public std::runtime_error {
 public:
  FrameDecodeError(DecodeErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

// count * scale / 1000, computed in double then rounded once to float.
float dequantize(std::int16_t count, float scale_uv_per_count);
// Round to nearest, saturating at the i16 range.
std::int16_t quantize(float millivolts, float scale_uv_per_count);

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Splits [4 x n] samples into consecutive frames, seq starting at first_seq.
// The final frame may be short.
std::vector<Frame> frames_from_samples(const ChannelMatrix& samples, std::size_t frame_samples,
                                       float scale_uv_per_count, std::uint32_t first_seq = 0);
// Concatenates segments in order, then frames them.
ChannelMatrix concatenate(std::span<const synth::EmgSegment* const> segments);

struct StreamStats {
  std::uint64_t frames_received = 0;
  std::uint64_t gaps_detected = 0;  // missing frames
  std::uint64_t duplicate_frames = 0;
  std::uint64_t samples_delivered = 0;
  std::uint64_t zero_samples_inserted = 0;
};

struct Prediction {
  std::uint64_t window_index = 0;
  double window_end_s = 0.0;  // samples consumed so far / fs
  int class_id = 1;
  std::string word;
  std::array<double, kNumClasses> probabilities{};
  double latency_ms = 0.0;  // filter + forward
};

// Class probabilities for one [4 x 3000] window: optional causal filter, then
// the model in eval mode. Shared by the live decoder and offline references.
std::array<double, kNumClasses> classify_window(const model::Model& model,
                                                const dsp::BiquadCascade* cascade,
                                                const ChannelMatrix& window);

struct DecoderConfig {
  std::size_t window = kSegmentLength;
  std::size_t hop = kSegmentLength;  // equal to window: non-overlapping
  bool filter_on = true;
  dsp::FilterSpec filter{};
};

class LiveDecoder {
 public:
  LiveDecoder(const model::Model& model, const DecoderConfig& config = {});

  // Feeds one frame in arrival order; returns predictions completed by it.
  std::vector<Prediction> push(const Frame& frame);
  const StreamStats& stats() const { return stats_; }

 private:
  std::vector<Prediction> append(const Frame* frame, std::size_t zeros);

  const model::Model& model_;
  DecoderConfig config_;
  dsp::BiquadCascade cascade_;
  std::array<std::vector<float>, kChannels> ring_;
  std::size_t write_pos_ = 0;
  std::size_t filled_ = 0;
  std::size_t since_window_ = 0;
  std::uint64_t total_samples_ = 0;
  std::uint64_t windows_ = 0;
  bool have_seq_ = false;
  std::uint32_t next_seq_ = 0;
  StreamStats stats_;
};

// Transport: u32 little-endian length prefix followed by frame bytes, over TCP.

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text);

struct ServeConfig {
  Endpoint endpoint;
  double frame_ms = 50.0;
  bool pacing = true;
  float scale_uv_per_count = 0.5f;
  std::set<std::uint32_t> drop_seqs;  // application-layer loss simulation
  const std::atomic<bool>* stop = nullptr;
  std::function<void(std::uint16_t)> on_listening;  // bound port
};

struct ServeStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t samples_sent = 0;
  bool client_disconnected = false;
};

// Serves one client, then returns.
ServeStats serve_replay(const ChannelMatrix& samples, const ServeConfig& config);

struct IngestConfig {
  Endpoint endpoint;
  DecoderConfig decoder{};
  int connect_attempts = 50;
  int retry_delay_ms = 100;
  std::size_t queue_capacity = 64;
  const std::atomic<bool>* stop = nullptr;
};

StreamStats ingest_decode(const model::Model& model, const IngestConfig& config,
                          const std::function<void(const Prediction&)>& on_prediction);

}  // namespace emgssi::stream
