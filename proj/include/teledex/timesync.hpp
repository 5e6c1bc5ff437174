#pragma once

// Per-frame multi-source timestamp validation and the episode-level
// synchronization metrics derived from it.

#include <atomic>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace teledex {

/// Global time base shared by every recorder. Reads never go backwards.
class ClockSource {
public:
  virtual ~ClockSource() = default;
  virtual double now() const = 0;
};

class MonotonicClock final : public ClockSource {
public:
  MonotonicClock();
  double now() const override;

private:
  double origin_;
};

/// Manually advanced clock. Single writer; readers may be on other threads.
class SimulatedClock final : public ClockSource {
public:
  explicit SimulatedClock(double start = 0.0) : now_(start) {}

  double now() const override { return now_.load(std::memory_order_acquire); }
  void advance(double dt);
  /// Moves to an absolute time; earlier times are rejected.
  void set(double t);

private:
  std::atomic<double> now_;
};

struct SyncPolicy {
  double freshness_window = 1.0;  // seconds
  double tolerance = 0.100;       // seconds

  void validate() const;
  friend bool operator==(const SyncPolicy&, const SyncPolicy&) = default;
};

/// source name -> timestamp (s). Ordered by name.
using TimestampSet = std::map<std::string, double>;

enum class SyncFailureKind { none, stale, inconsistent };

struct SyncFailure {
  SyncFailureKind kind = SyncFailureKind::none;
  std::string source;  // set for stale

  friend bool operator==(const SyncFailure&, const SyncFailure&) = default;
};

std::string to_string(const SyncFailure& failure);

struct SyncBundle {
  bool is_valid = false;
  double max_diff = 0.0;
  TimestampSet timestamps;
  double checked_at = 0.0;
  SyncFailure failure;

  friend bool operator==(const SyncBundle&, const SyncBundle&) = default;
};

/// Freshness is checked first (|now - t| against the window, first offender
/// in name order), then consistency (max - min against the tolerance).
SyncBundle validate(const SyncPolicy& policy, double now, const TimestampSet& set);

double sync_success_rate(std::span<const SyncBundle> bundles);
/// Mean max_diff over valid bundles, milliseconds.
double avg_sync_error_ms(std::span<const SyncBundle> bundles);
/// Nearest-rank percentile of max_diff over valid bundles, milliseconds.
double percentile_sync_error_ms(std::span<const SyncBundle> bundles, double percentile);

struct SyncSummary {
  std::size_t timesteps = 0;
  std::size_t valid = 0;
  double success_rate = 0.0;
  std::optional<double> avg_error_ms;
  std::optional<double> tp99_ms;
};

SyncSummary summarize(std::span<const SyncBundle> bundles);

}  // namespace teledex
