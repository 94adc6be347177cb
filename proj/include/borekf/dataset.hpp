#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "borekf/errors.hpp"
#include "borekf/model.hpp"
#include "borekf/time_grid.hpp"
#include "borekf/timeparse.hpp"

namespace borekf {

enum class InstrumentKind { manual_probe, in_place };

inline const char* instrument_name(InstrumentKind k) {
  return k == InstrumentKind::manual_probe ? "manual" : "in_place";
}

struct Reading {
  double time_days = 0.0;
  double depth_m = 0.0;
  double a_mm = 0.0;
  double b_mm = 0.0;
};

/// All accepted readings for one borehole. The depth set is fixed by the
/// earliest survey; readings are sorted by (time, depth) and values are kept
/// bit-identical to the parsed input.
struct BoreholeSeries {
  std::string borehole_id;
  InstrumentKind instrument_kind = InstrumentKind::manual_probe;
  double eps_m = 0.0;  // instrument error coefficient, mm per metre; set from config
  std::vector<double> depths;
  std::vector<Reading> readings;

  StateLayout layout() const { return make_layout(depths); }

  /// Group readings into per-timestamp observation vectors. Depths missing at
  /// an epoch stay NaN and become per-depth gaps downstream.
  std::vector<TimedReading> observation_epochs() const {
    const int dim = 2 * static_cast<int>(depths.size());
    std::vector<TimedReading> epochs;
    for (const auto& r : readings) {
      if (epochs.empty() || epochs.back().time_days != r.time_days) {
        TimedReading e;
        e.time_days = r.time_days;
        e.values = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::quiet_NaN());
        epochs.push_back(std::move(e));
      }
      const auto it = std::lower_bound(depths.begin(), depths.end(), r.depth_m);
      const int d = static_cast<int>(it - depths.begin());
      epochs.back().values[2 * d] = r.a_mm;
      epochs.back().values[2 * d + 1] = r.b_mm;
    }
    return epochs;
  }
};

struct RejectedRow {
  long line_number = 0;
  std::string reason;
  std::string raw;
};

struct ParseResult {
  std::vector<BoreholeSeries> series;  // in order of first appearance
  std::vector<RejectedRow> rejected;
  long total_rows = 0;  // data rows seen (header excluded)
  long accepted_rows() const { return total_rows - static_cast<long>(rejected.size()); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline int split_fields(std::string_view line, std::string_view* out, int max_fields) {
  int n = 0;
  std::size_t start = 0;
  while (n < max_fields) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out[n++] = line.substr(start);
      break;
    }
    out[n++] = line.substr(start, comma - start);
    start = comma + 1;
  }
  return n;
}

}  // namespace detail

inline constexpr const char* kReadingsCsvHeader = "borehole_id,timestamp,depth_m,a_mm,b_mm";

/// Parse the borehole readings CSV. Malformed rows are collected into the
/// rejection report; only a header mismatch or a majority of bad rows aborts
/// the parse.
inline ParseResult parse_readings_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw_parse("empty input: missing header");

  {
    static constexpr const char* kColumns[5] = {"borehole_id", "timestamp", "depth_m", "a_mm",
                                                "b_mm"};
    std::string_view fields[6];
    const int n = detail::split_fields(detail::trim(line), fields, 6);
    if (n != 5) throw_parse("header must have 5 columns, found " + std::to_string(n));
    for (int i = 0; i < 5; ++i) {
      if (detail::trim(fields[i]) != kColumns[i]) {
        throw_parse(std::string("header column ") + std::to_string(i + 1) + " must be '" +
                    kColumns[i] + "', found '" + std::string(detail::trim(fields[i])) + "'");
      }
    }
  }

  struct Row {
    long line_no;
    double time;
    double depth;
    double a;
    double b;
  };
  std::map<std::string, std::vector<Row>, std::less<>> rows_by_borehole;
  std::vector<std::string> order;

  ParseResult result;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    ++result.total_rows;

    const auto reject = [&](const char* reason) {
      result.rejected.push_back({line_no, reason, std::string(sv)});
    };

    std::string_view f[6];
    if (detail::split_fields(sv, f, 6) != 5) {
      reject("bad-field-count");
      continue;
    }
    const std::string id{detail::trim(f[0])};
    if (id.empty()) {
      reject("empty-borehole-id");
      continue;
    }
    Row row{};
    row.line_no = line_no;
    try {
      row.time = parse_rfc3339(detail::trim(f[1]));
    } catch (const Error&) {
      reject("bad-timestamp");
      continue;
    }
    if (!detail::parse_number(f[2], row.depth) || !std::isfinite(row.depth) || row.depth <= 0.0) {
      reject("bad-depth");
      continue;
    }
    if (!detail::parse_number(f[3], row.a) || !detail::parse_number(f[4], row.b)) {
      reject("non-numeric-displacement");
      continue;
    }
    if (!std::isfinite(row.a) || !std::isfinite(row.b)) {
      reject("non-finite-displacement");
      continue;
    }
    auto [it, inserted] = rows_by_borehole.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(row);
  }

  if (result.total_rows > 0 &&
      2 * static_cast<long>(result.rejected.size()) > result.total_rows) {
    throw_parse("more than half of the data rows are malformed (" +
                std::to_string(result.rejected.size()) + " of " +
                std::to_string(result.total_rows) + ")");
  }

  for (const auto& id : order) {
    auto& rows = rows_by_borehole[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
      if (x.time != y.time) return x.time < y.time;
      if (x.depth != y.depth) return x.depth < y.depth;
      return x.line_no < y.line_no;
    });

    // The earliest survey fixes the depth set for the whole series.
    std::set<double> first_epoch_depths;
    const double t0 = rows.front().time;
    for (const auto& r : rows) {
      if (r.time != t0) break;
      first_epoch_depths.insert(r.depth);
    }

    BoreholeSeries series;
    series.borehole_id = id;
    series.depths.assign(first_epoch_depths.begin(), first_epoch_depths.end());

    std::set<std::pair<double, double>> seen;  // (time, depth)
    for (const auto& r : rows) {
      const auto reject = [&](const char* reason) {
        result.rejected.push_back({r.line_no, reason, ""});
      };
      if (!first_epoch_depths.count(r.depth)) {
        reject("unknown-depth");
        continue;
      }
      if (!seen.insert({r.time, r.depth}).second) {
        reject("duplicate-key");
        continue;
      }
      series.readings.push_back({r.time, r.depth, r.a, r.b});
    }
    result.series.push_back(std::move(series));
  }
  std::stable_sort(result.rejected.begin(), result.rejected.end(),
                   [](const RejectedRow& x, const RejectedRow& y) {
                     return x.line_number < y.line_number;
                   });
  return result;
}

inline ParseResult parse_readings_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open readings file: " + path);
  return parse_readings_csv(in);
}

}  // namespace borekf
