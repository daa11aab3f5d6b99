#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace emgssi {

inline constexpr std::size_t kChannels = 4;
inline constexpr std::size_t kSegmentLength = 3000;
inline constexpr double kSampleRateHz = 1000.0;
inline constexpr std::size_t kNumClasses = 10;

// Vocabulary, indexed by class id 1..10.
inline constexpr std::array<std::string_view, kNumClasses> kWords = {
    "Open", "Close", "Start", "Stop", "Yes", "No", "Next", "Back", "Okay", "Cancel"};

// Throws std::out_of_range for ids outside 1..10.
std::string_view word_for(int class_id);

// Dense channel-major sample matrix [channels x samples].
class ChannelMatrix {
 public:
  ChannelMatrix() = default;
  ChannelMatrix(std::size_t channels, std::size_t samples, float fill = 0.0f)
      : channels_(channels), samples_(samples), values_(channels * samples, fill) {}

  std::size_t channels() const { return channels_; }
  std::size_t samples() const { return samples_; }

  float& at(std::size_t c, std::size_t t) { return values_[c * samples_ + t]; }
  float at(std::size_t c, std::size_t t) const { return values_[c * samples_ + t]; }

  std::span<float> row(std::size_t c) { return {values_.data() + c * samples_, samples_}; }
  std::span<const float> row(std::size_t c) const {
    return {values_.data() + c * samples_, samples_};
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  bool operator==(const ChannelMatrix&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t samples_ = 0;
  std::vector<float> values_;
};

}  // namespace emgssi
