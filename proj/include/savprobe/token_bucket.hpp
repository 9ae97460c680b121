#pragma once

#include <mutex>

namespace savprobe {

/// Seconds on some monotonic timeline.
class Clock {
public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void sleep_until(double t) = 0;
  void sleep_for(double seconds) { sleep_until(now() + seconds); }
};

/// Wall time from std::chrono::steady_clock, zero at construction.
class SteadyClock final : public Clock {
public:
  SteadyClock();
  double now() const override;
  void sleep_until(double t) override;

private:
  double origin_;
};

/// Virtual time: sleeping just moves the clock forward.
class ManualClock final : public Clock {
public:
  explicit ManualClock(double start = 0.0) : now_(start) {}
  double now() const override;
  void sleep_until(double t) override;
  void advance(double seconds);

private:
  mutable std::mutex mutex_;
  double now_;
};

/// Classic token bucket: `rate` tokens per second, at most `burst` stored.
class TokenBucket {
public:
  /// Throws InputError unless rate > 0 and burst >= 1.
  TokenBucket(double rate, double burst, Clock& clock);

  bool try_acquire(double tokens = 1.0);
  /// Blocks on the clock until `tokens` are available, then takes them.
  void acquire(double tokens = 1.0);

  double rate() const { return rate_; }

private:
  void refill();

  double rate_;
  double burst_;
  double tokens_;
  double last_;
  Clock& clock_;
};

} // namespace savprobe
