#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "borekf/errors.hpp"

namespace borekf {

// Timestamps are carried internally as fractional days since the Unix epoch
// (1970-01-01T00:00:00Z). All timestep arithmetic happens in days.

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

inline bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return res.ec == std::errc() && res.ptr == s.data() + pos + len;
}

}  // namespace detail

/// Parse an RFC 3339 timestamp ("2020-03-01T12:30:00Z", fractional seconds and
/// numeric offsets accepted) into fractional days since the Unix epoch.
inline double parse_rfc3339(std::string_view s) {
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  const bool ok = detail::parse_fixed_int(s, 0, 4, y) && s.size() > 4 && s[4] == '-' &&
                  detail::parse_fixed_int(s, 5, 2, mo) && s.size() > 7 && s[7] == '-' &&
                  detail::parse_fixed_int(s, 8, 2, d) && s.size() > 10 &&
                  (s[10] == 'T' || s[10] == 't' || s[10] == ' ') &&
                  detail::parse_fixed_int(s, 11, 2, hh) && s.size() > 13 && s[13] == ':' &&
                  detail::parse_fixed_int(s, 14, 2, mi) && s.size() > 16 && s[16] == ':' &&
                  detail::parse_fixed_int(s, 17, 2, ss);
  if (!ok) throw_parse("bad timestamp: '" + std::string(s) + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mi > 59 || ss > 60) {
    throw_parse("timestamp field out of range: '" + std::string(s) + "'");
  }

  std::size_t pos = 19;
  double frac = 0.0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    double scale = 0.1;
    std::size_t digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      frac += scale * (s[pos] - '0');
      scale *= 0.1;
      ++pos;
      ++digits;
    }
    if (digits == 0) throw_parse("empty fractional seconds: '" + std::string(s) + "'");
  }

  int offset_minutes = 0;
  if (pos >= s.size()) throw_parse("missing UTC offset: '" + std::string(s) + "'");
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    int oh = 0, om = 0;
    if (!detail::parse_fixed_int(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !detail::parse_fixed_int(s, pos + 4, 2, om)) {
      throw_parse("bad UTC offset: '" + std::string(s) + "'");
    }
    offset_minutes = sign * (oh * 60 + om);
    pos += 6;
  } else {
    throw_parse("bad UTC offset: '" + std::string(s) + "'");
  }
  if (pos != s.size()) throw_parse("trailing characters in timestamp: '" + std::string(s) + "'");

  const double seconds = static_cast<double>(detail::days_from_civil(y, mo, d)) * 86400.0 +
                         hh * 3600.0 + mi * 60.0 + ss + frac - offset_minutes * 60.0;
  return seconds / 86400.0;
}

/// Format fractional days since epoch as RFC 3339 UTC, millisecond precision.
/// The ".mmm" part is omitted when zero so whole-second stamps stay compact.
inline std::string format_rfc3339(double days) {
  const double total_ms = std::round(days * 86400.0 * 1000.0);
  std::int64_t ms = static_cast<std::int64_t>(total_ms);
  std::int64_t day = ms >= 0 ? ms / 86400000 : (ms - 86399999) / 86400000;
  std::int64_t rem = ms - day * 86400000;
  int y, mo, d;
  detail::civil_from_days(day, y, mo, d);
  const int hh = static_cast<int>(rem / 3600000);
  rem %= 3600000;
  const int mi = static_cast<int>(rem / 60000);
  rem %= 60000;
  const int ss = static_cast<int>(rem / 1000);
  const int frac_ms = static_cast<int>(rem % 1000);

  char buf[40];
  if (frac_ms == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", y, mo, d, hh, mi, ss);
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", y, mo, d, hh, mi, ss,
                  frac_ms);
  }
  return buf;
}

/// Shortest decimal representation that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace borekf
