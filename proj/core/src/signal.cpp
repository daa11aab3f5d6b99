#include "emgssi/signal.hpp"

#include <string>

namespace emgssi {

std::string_view word_for(int class_id) {
  if (class_id < 1 || class_id > static_cast<int>(kNumClasses)) {
    throw std::out_of_range("class id " + std::to_string(class_id) + " outside 1..10");
  }
  return kWords[static_cast<std::size_t>(class_id - 1)];
}

}  // namespace emgssi
