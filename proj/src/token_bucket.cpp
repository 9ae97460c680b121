#include "savprobe/token_bucket.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "savprobe/error.hpp"

namespace savprobe {

namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

} // namespace

SteadyClock::SteadyClock() : origin_(steady_seconds()) {}

double SteadyClock::now() const { return steady_seconds() - origin_; }

void SteadyClock::sleep_until(double t) {
  double delta = t - now();
  if (delta > 0)
    std::this_thread::sleep_for(std::chrono::duration<double>(delta));
}

double ManualClock::now() const {
  std::lock_guard lock(mutex_);
  return now_;
}

void ManualClock::sleep_until(double t) {
  std::lock_guard lock(mutex_);
  now_ = std::max(now_, t);
}

void ManualClock::advance(double seconds) {
  std::lock_guard lock(mutex_);
  now_ += seconds;
}

TokenBucket::TokenBucket(double rate, double burst, Clock& clock)
    : rate_(rate), burst_(burst), tokens_(burst), last_(clock.now()), clock_(clock) {
  if (!(rate > 0.0))
    throw InputError("rate must be positive");
  if (!(burst >= 1.0))
    throw InputError("burst must be at least one token");
}

void TokenBucket::refill() {
  double now = clock_.now();
  tokens_ = std::min(burst_, tokens_ + (now - last_) * rate_);
  last_ = now;
}

bool TokenBucket::try_acquire(double tokens) {
  refill();
  if (tokens_ < tokens)
    return false;
  tokens_ -= tokens;
  return true;
}

void TokenBucket::acquire(double tokens) {
  while (!try_acquire(tokens))
    clock_.sleep_until(clock_.now() + std::max((tokens - tokens_) / rate_, 1e-9));
}

} // namespace savprobe
