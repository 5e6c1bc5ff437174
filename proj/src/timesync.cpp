#include "teledex/timesync.hpp"

#include "teledex/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

namespace teledex {

namespace {

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::vector<double> valid_diffs(std::span<const SyncBundle> bundles) {
  std::vector<double> out;
  for (const auto& b : bundles) {
    if (b.is_valid) out.push_back(b.max_diff);
  }
  if (out.empty()) {
    throw ValidationError("no successfully synchronized timesteps");
  }
  return out;
}

}  // namespace

MonotonicClock::MonotonicClock() : origin_(steady_seconds()) {}

double MonotonicClock::now() const { return steady_seconds() - origin_; }

void SimulatedClock::advance(double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) {
    throw ValidationError("simulated clock cannot move backwards");
  }
  now_.store(now_.load(std::memory_order_relaxed) + dt, std::memory_order_release);
}

void SimulatedClock::set(double t) {
  if (!(t >= now_.load(std::memory_order_relaxed)) || !std::isfinite(t)) {
    throw ValidationError("simulated clock cannot move backwards");
  }
  now_.store(t, std::memory_order_release);
}

void SyncPolicy::validate() const {
  if (!(freshness_window > 0.0) || !(tolerance > 0.0) || !std::isfinite(freshness_window) ||
      !std::isfinite(tolerance)) {
    throw ValidationError("sync policy: freshness window and tolerance must be positive");
  }
  if (tolerance > freshness_window) {
    throw ValidationError("sync policy: tolerance exceeds the freshness window");
  }
}

std::string to_string(const SyncFailure& failure) {
  switch (failure.kind) {
    case SyncFailureKind::none: return "none";
    case SyncFailureKind::stale: return "stale(" + failure.source + ")";
    case SyncFailureKind::inconsistent: return "inconsistent";
  }
  return "none";
}

SyncBundle validate(const SyncPolicy& policy, double now, const TimestampSet& set) {
  if (set.empty()) {
    throw ValidationError("timestamp set is empty");
  }
  SyncBundle bundle;
  bundle.timestamps = set;
  bundle.checked_at = now;

  double lo = set.begin()->second;
  double hi = lo;
  for (const auto& [name, t] : set) {
    if (!std::isfinite(t)) {
      throw ValidationError("timestamp for '" + name + "' is not finite");
    }
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  bundle.max_diff = hi - lo;

  for (const auto& [name, t] : set) {
    if (std::abs(now - t) > policy.freshness_window) {
      bundle.failure = {SyncFailureKind::stale, name};
      return bundle;
    }
  }
  if (bundle.max_diff > policy.tolerance) {
    bundle.failure = {SyncFailureKind::inconsistent, {}};
    return bundle;
  }
  bundle.is_valid = true;
  return bundle;
}

double sync_success_rate(std::span<const SyncBundle> bundles) {
  if (bundles.empty()) {
    throw ValidationError("sync success rate of an empty episode");
  }
  const auto valid = std::count_if(bundles.begin(), bundles.end(),
                                   [](const SyncBundle& b) { return b.is_valid; });
  return 100.0 * static_cast<double>(valid) / static_cast<double>(bundles.size());
}

double avg_sync_error_ms(std::span<const SyncBundle> bundles) {
  const auto diffs = valid_diffs(bundles);
  double sum = 0.0;
  for (double d : diffs) sum += d;
  return 1000.0 * sum / static_cast<double>(diffs.size());
}

double percentile_sync_error_ms(std::span<const SyncBundle> bundles, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ValidationError("percentile must lie in (0, 100]");
  }
  auto diffs = valid_diffs(bundles);
  std::sort(diffs.begin(), diffs.end());
  const auto n = static_cast<double>(diffs.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, diffs.size());
  return 1000.0 * diffs[rank - 1];
}

SyncSummary summarize(std::span<const SyncBundle> bundles) {
  SyncSummary s;
  s.timesteps = bundles.size();
  s.valid = static_cast<std::size_t>(std::count_if(
      bundles.begin(), bundles.end(), [](const SyncBundle& b) { return b.is_valid; }));
  if (!bundles.empty()) s.success_rate = sync_success_rate(bundles);
  if (s.valid > 0) {
    s.avg_error_ms = avg_sync_error_ms(bundles);
    s.tp99_ms = percentile_sync_error_ms(bundles, 99.0);
  }
  return s;
}

}  // namespace teledex
