#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "borekf/artifacts.hpp"
#include "borekf/forecast.hpp"
#include "borekf/model.hpp"
#include "borekf/synthetic.hpp"
#include "test_support.hpp"

using namespace borekf;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path temp_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "borekf_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ForecastBundle sample_bundle(const StateLayout& layout, const ModelMatrices& model,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  StateGaussian last;
  last.mean = Eigen::VectorXd(layout.dim_state());
  for (int i = 0; i < layout.dim_state(); ++i) last.mean[i] = dist(rng);
  Eigen::MatrixXd a(layout.dim_state(), layout.dim_state());
  for (int i = 0; i < a.size(); ++i) a(i / a.cols(), i % a.cols()) = dist(rng);
  last.cov = a * a.transpose();
  last.grid_index = 11;

  KinematicNoiseFit fit;
  fit.sigma_alpha = 0.123456789;
  return forecast_states(last, layout, fit, 1.0, 5.0, model);
}

}  // namespace

TEST_CASE("packed covariance round trip") {
  std::mt19937 rng(5);
  std::normal_distribution<double> dist;
  Eigen::MatrixXd a(5, 5);
  for (int i = 0; i < 25; ++i) a(i / 5, i % 5) = dist(rng);
  const Eigen::MatrixXd m = a * a.transpose();
  const auto packed = pack_lower_triangular(m);
  CHECK(packed.size() == 15);
  CHECK(unpack_lower_triangular(packed, 5) == m);
}

TEST_CASE("forecast artifact round trips bit-exactly") {
  const auto dir = temp_dir("forecast_rt");
  const StateLayout layout = make_layout({1.5, 3.0});
  const ModelMatrices model = make_model(layout, 1.0, 0.05, {});

  BoreholeSeries series;
  series.borehole_id = "BH7";
  series.depths = layout.depths;
  series.eps_m = 0.05;

  const ForecastBundle bundle = sample_bundle(layout, model, 99);
  KinematicNoiseFit fit;
  fit.sigma_alpha = 0.123456789;
  const auto files = write_forecast(dir, series, bundle, fit, 18300.0);
  REQUIRE(files.size() == 2);

  const ForecastBundle loaded = read_forecast_json(files[0]);
  REQUIRE(loaded.steps.size() == bundle.steps.size());
  CHECK(loaded.horizon == bundle.horizon);
  for (std::size_t j = 0; j < bundle.steps.size(); ++j) {
    CHECK(loaded.steps[j].state.mean == bundle.steps[j].state.mean);  // bit-exact
    CHECK(loaded.steps[j].state.cov == bundle.steps[j].state.cov);
    CHECK(loaded.steps[j].obs_mean == bundle.steps[j].obs_mean);
    CHECK(loaded.steps[j].obs_cov == bundle.steps[j].obs_cov);
  }
}

TEST_CASE("identical inputs produce byte-identical artifacts") {
  const auto dir_a = temp_dir("det_a");
  const auto dir_b = temp_dir("det_b");
  const StateLayout layout = make_layout({2.0});
  const ModelMatrices model = make_model(layout, 1.0, 0.1, {});

  BoreholeSeries series;
  series.borehole_id = "BH1";
  series.depths = layout.depths;
  series.eps_m = 0.1;

  const ForecastBundle bundle = sample_bundle(layout, model, 7);
  KinematicNoiseFit fit;
  fit.sigma_alpha = 1.0 / 3.0;
  const auto fa = write_forecast(dir_a, series, bundle, fit, 18262.0);
  const auto fb = write_forecast(dir_b, series, bundle, fit, 18262.0);
  CHECK(slurp(fa[0]) == slurp(fb[0]));
  CHECK(slurp(fa[1]) == slurp(fb[1]));
}

TEST_CASE("forecast csv has one row per step and depth") {
  const auto dir = temp_dir("forecast_csv");
  const StateLayout layout = make_layout({1.0, 2.0, 3.0});
  const ModelMatrices model = make_model(layout, 1.0, 0.05, {});

  BoreholeSeries series;
  series.borehole_id = "BH2";
  series.depths = layout.depths;
  series.eps_m = 0.05;

  const ForecastBundle bundle = sample_bundle(layout, model, 3);
  KinematicNoiseFit fit;
  const auto files = write_forecast(dir, series, bundle, fit, 18262.0);

  const std::string csv = slurp(files[1]);
  const long lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + static_cast<long>(bundle.steps.size()) * layout.n_depths());
}

TEST_CASE("empty gate decision list still writes a valid file") {
  const auto dir = temp_dir("empty_gate");
  const StateLayout layout = make_layout({1.0});

  BoreholeSeries series;
  series.borehole_id = "BH3";
  series.depths = layout.depths;
  series.eps_m = 0.1;

  GriddedObservations grid;
  grid.dt = 1.0;
  grid.origin_time = 18262.0;
  grid.slots.resize(3);
  grid.source_times.assign(3, 0.0);

  const auto files = write_anomalies(dir, series, {}, grid, 5.0);
  REQUIRE(files.size() == 1);
  const json j = read_json_artifact(files[0]);
  CHECK(j.at("decisions").is_array());
  CHECK(j.at("decisions").empty());
  CHECK(j.at("rejected_count") == 0);
}

TEST_CASE("gate decisions serialize NaN observations as null") {
  const auto dir = temp_dir("nan_gate");
  const StateLayout layout = make_layout({1.0});

  BoreholeSeries series;
  series.borehole_id = "BH4";
  series.depths = layout.depths;
  series.eps_m = 0.1;

  GriddedObservations grid;
  grid.dt = 1.0;
  grid.origin_time = 18262.0;
  grid.slots.resize(2);
  grid.source_times.assign(2, 0.0);

  GateDecision d;
  d.grid_index = 1;
  d.distance = 7.5;
  d.threshold = 5.0;
  d.accepted = false;
  d.observation = Eigen::VectorXd(2);
  d.observation << 1.25, std::numeric_limits<double>::quiet_NaN();

  const auto files = write_anomalies(dir, series, {d}, grid, 5.0);
  const json j = read_json_artifact(files[0]);
  const auto& obs = j.at("decisions")[0].at("observation");
  CHECK(obs[0] == 1.25);
  CHECK(obs[1].is_null());
  CHECK(j.at("rejected_count") == 1);
}

TEST_CASE("atomic writes leave no temp file behind") {
  const auto dir = temp_dir("atomic");
  artifact::atomic_write_text(dir / "x.json", "{}\n");
  CHECK(std::filesystem::exists(dir / "x.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "x.json.tmp"));
}
