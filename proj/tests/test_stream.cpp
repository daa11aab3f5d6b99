#include "doctest.h"

#include "emgssi/stream.hpp"

#include <chrono>
#include <cstring>
#include <future>
#include <random>
#include <thread>

using namespace emgssi;
using namespace emgssi::stream;

namespace {

Frame random_frame(std::mt19937_64& rng) {
  Frame f;
  f.seq = static_cast<std::uint32_t>(rng());
  f.timestamp_ms = rng();
  f.n_samples = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(1, 1000)(rng));
  f.scale_uv_per_count = std::uniform_real_distribution<float>(0.01f, 10.0f)(rng);
  f.payload.resize(4u * f.n_samples);
  std::uniform_int_distribution<int> c(-32768, 32767);
  for (auto& v : f.payload) v = static_cast<std::int16_t>(c(rng));
  return f;
}

DecodeErrorKind decode_kind(std::span<const std::uint8_t> bytes) {
  try {
    decode_frame(bytes);
  } catch (const FrameDecodeError& e) {
    return e.kind();
  }
  FAIL("decode unexpectedly succeeded");
  return DecodeErrorKind::bad_magic;
}

// Test segments of a small dataset laid end to end.
ChannelMatrix test_stream_samples(std::size_t n_segments, std::vector<int>* labels = nullptr) {
  synth::SynthConfig sc;
  sc.n_per_class = 2;
  const synth::Dataset ds = synth::synth_dataset(sc);
  std::vector<const synth::EmgSegment*> ptrs;
  for (std::size_t i = 0; i < n_segments; ++i) {
    ptrs.push_back(&ds.segments[(i * 7) % ds.segments.size()]);
    if (labels) labels->push_back(ptrs.back()->label);
  }
  return concatenate(ptrs);
}

// Offline reference: dequantize, cut into 3 s windows, filter causally per window.
std::vector<std::array<double, kNumClasses>> offline(const model::Model& m, const ChannelMatrix& samples,
                                                     float scale) {
  ChannelMatrix q(samples.channels(), samples.samples());
  for (std::size_t c = 0; c < samples.channels(); ++c)
    for (std::size_t t = 0; t < samples.samples(); ++t)
      q.at(c, t) = dequantize(quantize(samples.at(c, t), scale), scale);
  const dsp::BiquadCascade cascade = dsp::design_bandpass(dsp::FilterSpec{});
  std::vector<std::array<double, kNumClasses>> out;
  for (const ChannelMatrix& w : dsp::segment_stream(q, kSampleRateHz)) out.push_back(classify_window(m, &cascade, w));
  return out;
}

}  // namespace

TEST_CASE("frame layout") {
  Frame f;
  f.seq = 0x01020304;
  f.timestamp_ms = 0x1122334455667788ull;
  f.n_samples = 50;
  f.scale_uv_per_count = 0.5f;
  f.payload.assign(200, 0);
  f.payload[0] = -2;
  f.payload[199] = 0x1234;
  const auto bytes = encode_frame(f);
  CHECK(bytes.size() == 422);
  CHECK(kFrameHeaderBytes == 22);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EMG1");
  CHECK(bytes[4] == 0x04);
  CHECK(bytes[7] == 0x01);
  CHECK(bytes[8] == 0x88);
  CHECK(bytes[15] == 0x11);
  CHECK(bytes[16] == 50);
  CHECK(bytes[17] == 0);
  float scale = 0;
  std::memcpy(&scale, bytes.data() + 18, 4);
  CHECK(scale == 0.5f);
  CHECK(bytes[22] == 0xFE);
  CHECK(bytes[23] == 0xFF);
  CHECK(bytes[420] == 0x34);
  CHECK(bytes[421] == 0x12);
  CHECK(decode_frame(bytes) == f);
}

TEST_CASE("frame codec fuzz round trip") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const Frame f = random_frame(rng);
    const auto bytes = encode_frame(f);
    REQUIRE(bytes.size() == kFrameHeaderBytes + 8u * f.n_samples);
    const Frame g = decode_frame(bytes);
    REQUIRE(g == f);
    REQUIRE(encode_frame(g) == bytes);
  }
}

TEST_CASE("frame decode errors") {
  std::mt19937_64 rng(2);
  Frame f = random_frame(rng);
  f.n_samples = 10;
  f.payload.resize(40);
  const auto bytes = encode_frame(f);
  auto flipped = bytes;
  flipped[0] ^= 0xFF;
  CHECK(decode_kind(flipped) == DecodeErrorKind::bad_magic);
  CHECK_THROWS_WITH(decode_frame(flipped), doctest::Contains("magic"));
  CHECK(decode_kind(std::span(bytes).first(21)) == DecodeErrorKind::short_buffer);
  CHECK(decode_kind(std::span(bytes).first(bytes.size() - 1)) == DecodeErrorKind::short_buffer);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(decode_kind(longer) == DecodeErrorKind::trailing_bytes);
  for (std::uint16_t n : {std::uint16_t(0), std::uint16_t(1001)}) {
    auto b = bytes;
    std::memcpy(b.data() + 16, &n, 2);
    CHECK(decode_kind(b) == DecodeErrorKind::bad_sample_count);
  }
  Frame bad = f;
  bad.n_samples = 0;
  bad.payload.clear();
  CHECK_THROWS(encode_frame(bad));
  bad = f;
  bad.payload.pop_back();
  CHECK_THROWS(encode_frame(bad));
}

TEST_CASE("quantization") {
  CHECK(dequantize(100, 0.5f) == 0.05f);
  CHECK(quantize(0.05f, 0.5f) == 100);
  CHECK(quantize(1e6f, 0.5f) == 32767);
  CHECK(quantize(-1e6f, 0.5f) == -32768);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(-32768, 32767);
  for (int i = 0; i < 1000; ++i) {
    const auto v = static_cast<std::int16_t>(c(rng));
    CHECK(quantize(dequantize(v, 0.5f), 0.5f) == v);
  }
}

TEST_CASE("framing 3 s of samples") {
  const ChannelMatrix s = test_stream_samples(1);
  const auto frames = frames_from_samples(s, 50, 0.5f, 7);
  REQUIRE(frames.size() == 60);
  std::size_t total = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].seq == 7 + i);
    CHECK(frames[i].timestamp_ms == 50 * i);
    total += frames[i].n_samples;
  }
  CHECK(total == 3000);
  CHECK(frames_from_samples(s, 70, 0.5f).back().n_samples == 3000 % 70);
  CHECK_THROWS(frames_from_samples(s, 0, 0.5f));
}

TEST_CASE("live decoder bookkeeping") {
  const model::Model m = model::build_model({}, 1);
  const ChannelMatrix s = test_stream_samples(2);
  const auto frames = frames_from_samples(s, 50, 0.5f);

  SUBCASE("short streams emit nothing") {
    LiveDecoder dec(m);
    for (std::size_t i = 0; i < 59; ++i) CHECK(dec.push(frames[i]).empty());
    CHECK(dec.stats().samples_delivered == 2950);
  }
  SUBCASE("a one-frame gap is zero filled") {
    LiveDecoder dec(m);
    std::size_t preds = 0;
    for (std::size_t i = 0; i < frames.size(); ++i)
      if (i != 10) preds += dec.push(frames[i]).size();
    CHECK(dec.stats().gaps_detected == 1);
    CHECK(dec.stats().zero_samples_inserted == 50);
    CHECK(dec.stats().frames_received == 119);
    CHECK(dec.stats().samples_delivered + 50 * dec.stats().gaps_detected == 6000);
    CHECK(preds == 2);
  }
  SUBCASE("duplicates are counted and ignored") {
    LiveDecoder dec(m);
    dec.push(frames[0]);
    dec.push(frames[1]);
    dec.push(frames[1]);
    dec.push(frames[0]);
    CHECK(dec.stats().duplicate_frames == 2);
    CHECK(dec.stats().samples_delivered == 100);
  }
  SUBCASE("counters never decrease") {
    LiveDecoder dec(m);
    StreamStats prev;
    std::mt19937_64 rng(4);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (rng() % 7 == 0) continue;
      dec.push(frames[i]);
      const StreamStats& now = dec.stats();
      CHECK(now.frames_received >= prev.frames_received);
      CHECK(now.gaps_detected >= prev.gaps_detected);
      CHECK(now.samples_delivered >= prev.samples_delivered);
      prev = now;
    }
  }
}

TEST_CASE("online decoding equals offline inference") {
  const model::Model m = model::build_model({}, 2);
  const ChannelMatrix s = test_stream_samples(3);
  const auto want = offline(m, s, 0.5f);
  REQUIRE(want.size() == 3);
  LiveDecoder dec(m);
  std::vector<Prediction> got;
  for (const Frame& f : frames_from_samples(s, 50, 0.5f)) {
    auto p = dec.push(f);
    got.insert(got.end(), p.begin(), p.end());
  }
  REQUIRE(got.size() == 3);
  for (std::size_t w = 0; w < 3; ++w) {
    CHECK(got[w].probabilities == want[w]);
    CHECK(got[w].window_index == w);
    CHECK(got[w].window_end_s == doctest::Approx(3.0 * double(w + 1)));
    CHECK(got[w].word == word_for(got[w].class_id));
    CHECK(got[w].latency_ms < 100.0);
  }
}

TEST_CASE("endpoint parsing") {
  const Endpoint e = parse_endpoint("127.0.0.1:9100");
  CHECK(e.host == "127.0.0.1");
  CHECK(e.port == 9100);
  CHECK(parse_endpoint("localhost:0").port == 0);
  CHECK_THROWS(parse_endpoint("nohost"));
  CHECK_THROWS(parse_endpoint(":80"));
  CHECK_THROWS(parse_endpoint("h:99999"));
  CHECK_THROWS(parse_endpoint("h:12x"));
}

TEST_CASE("tcp replay end to end") {
  const model::Model m = model::build_model({}, 3);
  const ChannelMatrix s = test_stream_samples(2);
  const auto want = offline(m, s, 0.5f);

  for (const bool drop : {false, true}) {
    CAPTURE(drop);
    std::promise<std::uint16_t> port;
    ServeConfig sc;
    sc.pacing = false;
    if (drop) sc.drop_seqs = {12};
    sc.on_listening = [&](std::uint16_t p) { port.set_value(p); };
    auto server = std::async(std::launch::async, [&] { return serve_replay(s, sc); });
    IngestConfig ic;
    ic.endpoint.port = port.get_future().get();
    std::vector<Prediction> got;
    const StreamStats st = ingest_decode(m, ic, [&](const Prediction& p) { got.push_back(p); });
    const ServeStats ss = server.get();
    CHECK(ss.frames_sent + ss.frames_dropped == 120);
    CHECK(st.frames_received == ss.frames_sent);
    CHECK(st.samples_delivered + 50 * st.gaps_detected == 6000);
    REQUIRE(got.size() == 2);
    if (drop) {
      CHECK(st.gaps_detected == 1);
      CHECK(st.zero_samples_inserted == 50);
      CHECK(got[1].probabilities == want[1]);
    } else {
      CHECK(st.gaps_detected == 0);
      for (std::size_t w = 0; w < 2; ++w) CHECK(got[w].probabilities == want[w]);
    }
  }
}

TEST_CASE("ingest gives up after bounded retries") {
  const model::Model m = model::build_model({}, 4);
  IngestConfig ic;
  ic.endpoint.port = 1;  // nothing listens on a privileged port here
  ic.connect_attempts = 3;
  ic.retry_delay_ms = 10;
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(ingest_decode(m, ic, [](const Prediction&) {}), TransportError);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
}

TEST_CASE("paced replay keeps real time") {
  ChannelMatrix s(kChannels, 500);
  std::promise<std::uint16_t> port;
  ServeConfig sc;
  sc.frame_ms = 50;
  sc.on_listening = [&](std::uint16_t p) { port.set_value(p); };
  const auto t0 = std::chrono::steady_clock::now();
  auto server = std::async(std::launch::async, [&] { return serve_replay(s, sc); });
  const model::Model m = model::build_model({}, 5);
  IngestConfig ic;
  ic.endpoint.port = port.get_future().get();
  const StreamStats st = ingest_decode(m, ic, [](const Prediction&) {});
  server.get();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(st.frames_received == 10);
  CHECK(elapsed >= 0.40);
  CHECK(elapsed < 3.0);
}
