#include "doctest.h"

#include "emgssi/signal.hpp"

using namespace emgssi;

TEST_CASE("word list order") {
  const char* expected[] = {"Open", "Close", "Start", "Stop", "Yes", "No", "Next", "Back", "Okay", "Cancel"};
  for (int id = 1; id <= 10; ++id) CHECK(word_for(id) == expected[id - 1]);
  CHECK_THROWS_AS(word_for(0), std::out_of_range);
  CHECK_THROWS_AS(word_for(11), std::out_of_range);
}

TEST_CASE("channel matrix layout is channel-major") {
  ChannelMatrix m(4, 5);
  m.at(2, 3) = 7.0f;
  CHECK(m.values()[2 * 5 + 3] == 7.0f);
  CHECK(m.row(2)[3] == 7.0f);
  CHECK(m.row(1).size() == 5);
  ChannelMatrix n = m;
  CHECK(n == m);
  n.at(0, 0) = 1.0f;
  CHECK_FALSE(n == m);
}
