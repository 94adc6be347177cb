#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "borekf/errors.hpp"

namespace borekf {

/// One original reading epoch: timestamp plus the stacked A,B observation
/// vector. Entries may be NaN when a depth was not surveyed at that epoch.
struct TimedReading {
  double time_days = 0.0;
  Eigen::VectorXd values;
};

/// Two readings mapped to the same grid slot; the earlier one was dropped.
struct CollisionRecord {
  long grid_index = 0;
  double dropped_time = 0.0;
  double kept_time = 0.0;
};

/// Observations remapped onto a regular dt grid. Unfilled slots are gaps; the
/// filter runs predict-only steps through them. Values are never interpolated
/// or altered, only re-timed ("upscaling").
struct GriddedObservations {
  double dt = 0.0;
  double origin_time = 0.0;  // timestamp of grid index 0, days since epoch
  long index_offset = 0;     // absolute grid index of slot 0 (nonzero for tail slices)
  std::vector<std::optional<Eigen::VectorXd>> slots;
  std::vector<double> source_times;  // NaN at gap slots
  std::vector<CollisionRecord> collisions;

  long n_slots() const { return static_cast<long>(slots.size()); }
  long n_filled() const {
    long c = 0;
    for (const auto& s : slots) c += s.has_value() ? 1 : 0;
    return c;
  }
  double time_at(long j) const { return origin_time + static_cast<double>(j) * dt; }
  double span_days() const { return n_slots() > 1 ? static_cast<double>(n_slots() - 1) * dt : 0.0; }

  /// Tail slice starting at local index `from` (keeps absolute indexing).
  GriddedObservations tail(long from) const {
    GriddedObservations out;
    out.dt = dt;
    out.origin_time = time_at(from);
    out.index_offset = index_offset + from;
    out.slots.assign(slots.begin() + from, slots.end());
    out.source_times.assign(source_times.begin() + from, source_times.end());
    return out;
  }
};

/// Grid spacing: the minimum positive gap between consecutive timestamps,
/// clamped to [floor_days, ceil_days]. Needs at least two distinct timestamps.
inline double select_dt(std::span<const double> timestamps, double floor_days = 1.0 / 24.0,
                        double ceil_days = 7.0) {
  if (!(floor_days > 0.0) || !(ceil_days >= floor_days)) {
    throw_config("dt clamp bounds must satisfy 0 < floor <= ceiling");
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    const double gap = timestamps[i] - timestamps[i - 1];
    if (gap < 0.0) throw_config("timestamps must be sorted");
    if (gap > 0.0 && gap < min_gap) min_gap = gap;
  }
  if (!std::isfinite(min_gap)) {
    throw_insufficient("need at least two distinct timestamps to choose a grid spacing");
  }
  return std::min(std::max(min_gap, floor_days), ceil_days);
}

/// Assign each reading to its nearest grid index. Collisions keep the later
/// reading and are recorded; intermediate unfilled indices become gaps.
inline GriddedObservations remap(std::span<const TimedReading> readings, double dt) {
  if (readings.empty()) throw_insufficient("no readings to grid");
  if (!std::isfinite(dt) || dt <= 0.0) throw_config("grid spacing must be finite and > 0");
  for (std::size_t i = 1; i < readings.size(); ++i) {
    if (readings[i].time_days < readings[i - 1].time_days) {
      throw_config("readings must be sorted by timestamp");
    }
  }

  const double t0 = readings.front().time_days;
  const long last = std::lround((readings.back().time_days - t0) / dt);

  GriddedObservations grid;
  grid.dt = dt;
  grid.origin_time = t0;
  grid.slots.resize(static_cast<std::size_t>(last) + 1);
  grid.source_times.assign(static_cast<std::size_t>(last) + 1,
                           std::numeric_limits<double>::quiet_NaN());

  for (const auto& r : readings) {
    const long j = std::lround((r.time_days - t0) / dt);
    auto& slot = grid.slots[static_cast<std::size_t>(j)];
    if (slot.has_value()) {
      grid.collisions.push_back({j, grid.source_times[static_cast<std::size_t>(j)], r.time_days});
    }
    slot = r.values;
    grid.source_times[static_cast<std::size_t>(j)] = r.time_days;
  }
  return grid;
}

}  // namespace borekf
