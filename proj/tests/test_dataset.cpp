#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>

#include "borekf/dataset.hpp"
#include "borekf/errors.hpp"
#include "borekf/timeparse.hpp"

using namespace borekf;

namespace {

ParseResult parse(const std::string& text) {
  std::istringstream in(text);
  return parse_readings_csv(in);
}

const std::string kHeader = "borehole_id,timestamp,depth_m,a_mm,b_mm\n";

}  // namespace

TEST_CASE("rfc3339 round trip") {
  const double t = parse_rfc3339("2020-03-01T12:30:15Z");
  CHECK(format_rfc3339(t) == "2020-03-01T12:30:15Z");

  const double epoch = parse_rfc3339("1970-01-01T00:00:00Z");
  CHECK(epoch == 0.0);
  CHECK(parse_rfc3339("2020-01-01T00:00:00Z") == 18262.0);

  // Offsets shift to UTC; fractional seconds survive at ms precision.
  CHECK(parse_rfc3339("2020-03-01T13:30:15+01:00") == t);
  CHECK(format_rfc3339(parse_rfc3339("2021-06-01T00:00:00.250Z")) ==
        "2021-06-01T00:00:00.250Z");

  CHECK_THROWS_AS(parse_rfc3339("2020-03-01"), Error);
  CHECK_THROWS_AS(parse_rfc3339("2020-13-01T00:00:00Z"), Error);
  CHECK_THROWS_AS(parse_rfc3339("not a time"), Error);
  CHECK_THROWS_AS(parse_rfc3339("2020-03-01T12:30:15"), Error);
}

TEST_CASE("well-formed file parses completely") {
  const auto result = parse(kHeader +
                            "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"
                            "BH1,2020-01-02T00:00:00Z,1.5,0.15,0.25\n"
                            "BH1,2020-01-03T00:00:00Z,1.5,0.2,0.3\n");
  REQUIRE(result.series.size() == 1);
  CHECK(result.rejected.empty());
  CHECK(result.total_rows == 3);
  const auto& s = result.series[0];
  CHECK(s.borehole_id == "BH1");
  CHECK(s.depths == std::vector<double>{1.5});
  REQUIRE(s.readings.size() == 3);
  CHECK(s.readings[0].a_mm == 0.1);
  CHECK(s.readings[2].b_mm == 0.3);
}

TEST_CASE("values survive parsing bit-exactly") {
  const auto result = parse(kHeader + "BH1,2020-01-01T00:00:00Z,2.25,0.30000000000000004,-1e-17\n"
                                      "BH1,2020-01-02T00:00:00Z,2.25,1.7976931348623157e308,0\n");
  REQUIRE(result.series.size() == 1);
  CHECK(result.series[0].readings[0].a_mm == 0.30000000000000004);
  CHECK(result.series[0].readings[0].b_mm == -1e-17);
  CHECK(result.series[0].readings[1].a_mm == 1.7976931348623157e308);
}

TEST_CASE("malformed rows are rejected with reasons, the rest ingested") {
  const auto result = parse(kHeader +
                            "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"
                            "BH1,2020-01-02T00:00:00Z,1.5,abc,0.2\n"
                            "BH1,not-a-time,1.5,0.1,0.2\n"
                            "BH1,2020-01-04T00:00:00Z,-3,0.1,0.2\n"
                            "BH1,2020-01-05T00:00:00Z,1.5,nan,0.2\n"
                            "BH1,2020-01-06T00:00:00Z,1.5,0.4,0.5\n"
                            "BH1,2020-01-07T00:00:00Z,1.5,0.1\n"
                            "BH1,2020-01-08T00:00:00Z,1.5,0.5,0.6\n"
                            "BH1,2020-01-09T00:00:00Z,1.5,0.6,0.7\n"
                            "BH1,2020-01-10T00:00:00Z,1.5,0.7,0.8\n");
  REQUIRE(result.series.size() == 1);
  CHECK(result.series[0].readings.size() == 5);
  REQUIRE(result.rejected.size() == 5);
  CHECK(result.rejected[0].reason == "non-numeric-displacement");
  CHECK(result.rejected[0].line_number == 3);
  CHECK(result.rejected[1].reason == "bad-timestamp");
  CHECK(result.rejected[2].reason == "bad-depth");
  CHECK(result.rejected[3].reason == "non-finite-displacement");
  CHECK(result.rejected[4].reason == "bad-field-count");
  // Row accounting: accepted + rejected = total.
  CHECK(result.accepted_rows() + static_cast<long>(result.rejected.size()) == result.total_rows);
}

TEST_CASE("duplicate (timestamp, depth) keeps the first row") {
  const auto result = parse(kHeader +
                            "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"
                            "BH1,2020-01-01T00:00:00Z,1.5,9.9,9.9\n"
                            "BH1,2020-01-02T00:00:00Z,1.5,0.3,0.4\n");
  REQUIRE(result.rejected.size() == 1);
  CHECK(result.rejected[0].reason == "duplicate-key");
  CHECK(result.rejected[0].line_number == 3);
  CHECK(result.series[0].readings.size() == 2);
  CHECK(result.series[0].readings[0].a_mm == 0.1);
}

TEST_CASE("depths not present in the first survey are rejected") {
  const auto result = parse(kHeader +
                            "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"
                            "BH1,2020-01-01T00:00:00Z,3.0,0.1,0.2\n"
                            "BH1,2020-01-02T00:00:00Z,1.5,0.2,0.3\n"
                            "BH1,2020-01-02T00:00:00Z,4.5,0.2,0.3\n");
  REQUIRE(result.series.size() == 1);
  CHECK(result.series[0].depths == std::vector<double>{1.5, 3.0});
  REQUIRE(result.rejected.size() == 1);
  CHECK(result.rejected[0].reason == "unknown-depth");
}

TEST_CASE("header mismatch names the offending column") {
  try {
    parse("borehole_id,timestamp,depth,a_mm,b_mm\nBH1,2020-01-01T00:00:00Z,1.5,0,0\n");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::parse);
    CHECK(std::string(e.what()).find("depth_m") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("a,b\n"), Error);
  CHECK_THROWS_AS(parse(""), Error);
}

TEST_CASE("a majority of malformed rows aborts the parse") {
  CHECK_THROWS_AS(parse(kHeader +
                        "BH1,xx,1.5,0.1,0.2\n"
                        "BH1,yy,1.5,0.1,0.2\n"
                        "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"),
                  Error);
}

TEST_CASE("multiple boreholes keep input order") {
  const auto result = parse(kHeader +
                            "BHB,2020-01-01T00:00:00Z,1.0,0,0\n"
                            "BHA,2020-01-01T00:00:00Z,2.0,0,0\n"
                            "BHB,2020-01-02T00:00:00Z,1.0,1,1\n");
  REQUIRE(result.series.size() == 2);
  CHECK(result.series[0].borehole_id == "BHB");
  CHECK(result.series[1].borehole_id == "BHA");
}

TEST_CASE("observation epochs mark missing depths as NaN") {
  const auto result = parse(kHeader +
                            "BH1,2020-01-01T00:00:00Z,1.5,0.1,0.2\n"
                            "BH1,2020-01-01T00:00:00Z,3.0,0.3,0.4\n"
                            "BH1,2020-01-02T00:00:00Z,1.5,0.5,0.6\n");
  const auto epochs = result.series[0].observation_epochs();
  REQUIRE(epochs.size() == 2);
  CHECK(epochs[0].values[0] == 0.1);
  CHECK(epochs[0].values[3] == 0.4);
  CHECK(epochs[1].values[0] == 0.5);
  CHECK(std::isnan(epochs[1].values[2]));  // depth 3.0 unsurveyed on day 2
  CHECK(std::isnan(epochs[1].values[3]));
}
