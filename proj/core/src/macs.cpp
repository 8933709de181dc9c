#include "ctxenc/macs.hpp"

namespace ctxenc::macs {

namespace {

thread_local bool g_enabled = false;
thread_local std::uint64_t g_count = 0;

}  // namespace

bool enabled() noexcept { return g_enabled; }

void add(std::uint64_t n) noexcept {
  if (g_enabled) {
    g_count += n;
  }
}

CountScope::CountScope() : previous_enabled_(g_enabled), count_at_open_(g_count) {
  g_enabled = true;
}

CountScope::~CountScope() { g_enabled = previous_enabled_; }

std::uint64_t CountScope::count() const noexcept { return g_count - count_at_open_; }

}  // namespace ctxenc::macs
