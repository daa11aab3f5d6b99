#include "byte_io.hpp"
#include "emgssi/synth.hpp"

#include <fstream>

namespace emgssi {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace detail

namespace synth {

namespace {
constexpr char kMagic[4] = {'E', 'M', 'G', 'D'};
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  detail::ByteWriter w;
  for (char c : kMagic) w.put(c);
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.segments.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(kChannels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kSegmentLength));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kSampleRateHz));
  for (const EmgSegment& s : dataset.segments) {
    validate(s);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.split));
    for (float c : s.coupling) w.put<float>(c);
    for (float v : s.data.values()) w.put<float>(v);
  }
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader<DatasetFormatError> r(bytes);
  for (char c : kMagic) {
    if (r.get<char>("magic") != c) throw DatasetFormatError("bad magic: not an EMGD file");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kDatasetVersion) {
    throw DatasetFormatError("unsupported EMGD version " + std::to_string(version));
  }
  const auto n = r.get<std::uint32_t>("n_segments");
  const auto channels = r.get<std::uint16_t>("n_channels");
  const auto seg_len = r.get<std::uint32_t>("seg_len");
  const auto fs = r.get<std::uint32_t>("fs");
  if (channels != kChannels) throw DatasetFormatError("n_channels must be 4");
  if (seg_len != kSegmentLength) throw DatasetFormatError("seg_len must be 3000");
  if (fs != static_cast<std::uint32_t>(kSampleRateHz)) throw DatasetFormatError("fs must be 1000");
  const std::size_t per_segment = 2 + 4 * kChannels + 4 * kChannels * kSegmentLength;
  if (r.remaining() != static_cast<std::size_t>(n) * per_segment) {
    throw DatasetFormatError("payload size does not match n_segments");
  }

  Dataset out;
  out.segments.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    EmgSegment s;
    s.label = r.get<std::uint8_t>("label");
    const auto tag = r.get<std::uint8_t>("split_tag");
    if (tag > static_cast<std::uint8_t>(SplitTag::test)) {
      throw DatasetFormatError("invalid split tag " + std::to_string(tag));
    }
    s.split = static_cast<SplitTag>(tag);
    for (float& c : s.coupling) c = r.get<float>("coupling");
    for (float& v : s.data.values()) v = r.get<float>("samples");
    try {
      validate(s);
    } catch (const std::exception& e) {
      throw DatasetFormatError("segment " + std::to_string(i) + ": " + e.what());
    }
    out.segments.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  detail::write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::string& path) { return decode_dataset(detail::read_file(path)); }

}  // namespace synth
}  // namespace emgssi
