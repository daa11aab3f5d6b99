#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  const auto parsed = emgssi::cli::parse_args(argc, argv, std::cout, std::cerr);
  if (!parsed.command) return parsed.exit_code;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return emgssi::cli::execute(*parsed.command, std::cout, std::cerr, &g_stop);
}
