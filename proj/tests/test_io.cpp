#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pegamm/errors.hpp"
#include "pegamm/io.hpp"

using namespace pegamm;
using nlohmann::json;

namespace {

RawSeries make_series(std::vector<double> ts, std::vector<double> px, std::string label = "x") {
  RawSeries s;
  s.timestamps = std::move(ts);
  s.prices = std::move(px);
  s.label = std::move(label);
  return s;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

json base_config() {
  std::ifstream in(std::filesystem::path(PEGAMM_CONFIG_DIR) / "usdc_usdt.json");
  return json::parse(in);
}

}  // namespace

TEST_CASE("resampling an already uniform series is the identity") {
  const auto s = make_series({0, 10, 20, 30}, {1.0, 1.1, 0.9, 1.2});
  const auto r = resample_ffill(s, 10.0);
  CHECK(r.timestamps == s.timestamps);
  CHECK(r.prices == s.prices);
}

TEST_CASE("gaps are forward filled") {
  const auto s = make_series({0, 3, 7}, {1.0, 2.0, 3.0});
  const auto r = resample_ffill(s, 1.0);
  CHECK(r.timestamps.size() == 8);
  const std::vector<double> expected{1, 1, 1, 2, 2, 2, 2, 3};
  CHECK(r.prices == expected);
  CHECK_THROWS_AS(resample_ffill(s, 1.0, -1.0, 5.0), ValidationError);
  CHECK_THROWS_AS(resample_ffill(s, 0.0), ValidationError);
}

TEST_CASE("fine fill then coarse fill equals a direct coarse fill") {
  std::vector<double> ts, px;
  double t = 0.0;
  unsigned state = 12345;
  for (int i = 0; i < 2000; ++i) {
    state = state * 1103515245u + 12345u;
    t += 1 + (state >> 16) % 37;
    ts.push_back(t);
    px.push_back(1.0 + 1e-4 * static_cast<double>((state >> 8) % 100));
  }
  const auto s = make_series(ts, px);
  const auto fine = resample_ffill(s, 1.0);
  const double start = ts.front();
  const double end = ts.back();
  const auto two_step = resample_ffill(fine, 900.0, start, end);
  const auto direct = resample_ffill(s, 900.0, start, end);
  CHECK(two_step.timestamps == direct.timestamps);
  CHECK(two_step.prices == direct.prices);
}

TEST_CASE("cross rates") {
  const auto num = make_series({0, 1, 2}, {1.0001, 1.0001, 1.0001}, "usdc");
  const auto den = make_series({0, 1, 2}, {0.9999, 0.9999, 0.9999}, "usdt");
  const auto r = cross_rate(num, den);
  for (double p : r.prices) CHECK(p == doctest::Approx(1.0001 / 0.9999).epsilon(1e-15));
  CHECK(r.label == "usdc/usdt");

  const auto same = cross_rate(num, num);
  for (double p : same.prices) CHECK(p == 1.0);

  // (a/c) / (b/c) recovers a/b
  const auto a = make_series({0, 1, 2, 3}, {1.2, 1.3, 1.1, 1.25}, "a");
  const auto b = make_series({0, 1, 2, 3}, {0.7, 0.8, 0.75, 0.9}, "b");
  const auto c = make_series({0, 1, 2, 3}, {2000, 2100, 1900, 2050}, "c");
  const auto ab = cross_rate(a, b);
  const auto via = cross_rate(cross_rate(a, c), cross_rate(b, c));
  for (std::size_t i = 0; i < ab.size(); ++i) {
    CHECK(via.prices[i] == doctest::Approx(ab.prices[i]).epsilon(1e-14));
  }

  // only common timestamps survive
  const auto partial = cross_rate(make_series({0, 1, 2, 5}, {1, 2, 3, 4}),
                                  make_series({1, 3, 5}, {1, 1, 2}));
  CHECK(partial.timestamps == std::vector<double>{1, 5});
  CHECK(partial.prices == std::vector<double>{2, 2});

  CHECK(error_of([&] { cross_rate(make_series({0, 1}, {1, 1}, "p"), make_series({2, 3}, {1, 1}, "q")); })
            .find("no common timestamps") != std::string::npos);
  CHECK_THROWS_AS(cross_rate(num, make_series({0}, {0.0})), ValidationError);
}

TEST_CASE("CSV parsing errors name the file, line and field") {
  std::istringstream bad_price("timestamp,price\n0,1.0\n10,abc\n");
  const auto msg = error_of([&] { read_raw_series_csv(bad_price, "feed.csv"); });
  CHECK(msg.find("feed.csv:3") != std::string::npos);
  CHECK(msg.find("price") != std::string::npos);

  std::istringstream negative("timestamp,price\n0,-1\n");
  CHECK(error_of([&] { read_raw_series_csv(negative, "n.csv"); }).find("n.csv:2: field 'price'") !=
        std::string::npos);

  std::istringstream backwards("timestamp,price\n10,1\n5,1\n");
  CHECK(error_of([&] { read_raw_series_csv(backwards, "b.csv"); }).find("b.csv:3: field 'timestamp'") !=
        std::string::npos);

  std::istringstream header("time,price\n0,1\n");
  CHECK(error_of([&] { read_raw_series_csv(header, "h.csv"); }).find("h.csv:1") != std::string::npos);

  std::istringstream fields("timestamp,price\n0,1,2\n");
  CHECK(error_of([&] { read_raw_series_csv(fields, "f.csv"); }).find("f.csv:2") != std::string::npos);

  CHECK_THROWS_AS(read_raw_series_csv(std::filesystem::path("/nonexistent/file.csv")), ValidationError);
}

TEST_CASE("CSV round trip") {
  const auto s = make_series({1700000000, 1700000001.5, 1700000900}, {1.00012345678912, 0.99987, 1.0});
  std::ostringstream out;
  write_raw_series_csv(out, s);
  std::istringstream in(out.str());
  const auto back = read_raw_series_csv(in, "rt");
  CHECK(back.timestamps == s.timestamps);
  CHECK(back.prices == s.prices);
}

TEST_CASE("sample conversion uses days since the first timestamp") {
  const auto smp = to_sample(make_series({1000, 1000 + 86400, 1000 + 2 * 86400}, {1, 2, 3}));
  CHECK(smp.times == std::vector<double>{0, 1, 2});
  CHECK(smp.values == std::vector<double>{1, 2, 3});
}

TEST_CASE("durations") {
  CHECK(parse_duration_seconds("900") == 900);
  CHECK(parse_duration_seconds("900s") == 900);
  CHECK(parse_duration_seconds("15m") == 900);
  CHECK(parse_duration_seconds("1h") == 3600);
  CHECK(parse_duration_seconds("1d") == 86400);
  CHECK_THROWS_AS(parse_duration_seconds(""), ValidationError);
  CHECK_THROWS_AS(parse_duration_seconds("-5m"), ValidationError);
  CHECK_THROWS_AS(parse_duration_seconds("5x"), ValidationError);
}

TEST_CASE("shipped configurations load") {
  for (const char* name : {"usdc_usdt.json", "wsteth_weth.json"}) {
    const auto cfg = load_run_config(std::filesystem::path(PEGAMM_CONFIG_DIR) / name);
    CHECK(cfg.gammas.size() == 6);
    CHECK(cfg.simulation.n_paths == 300);
    const auto ps = cfg.path_setup();
    CHECK(ps.dt == doctest::Approx(10.0 / 86400.0));
    CHECK(ps.dt <= max_thinning_dt(ps.liquidity));
  }
  const auto cfg = load_run_config(std::filesystem::path(PEGAMM_CONFIG_DIR) / "usdc_usdt.json");
  REQUIRE(cfg.liquidity.sizes.atoms.size() == 1);
  CHECK(cfg.liquidity.sizes.atoms[0].z == 100000);
  CHECK(cfg.liquidity.sizes.atoms[0].w == 1);
  CHECK(cfg.replay.resample_seconds == 900);
}

TEST_CASE("configuration validation") {
  auto j = base_config();
  j["extra"] = 1;
  CHECK(error_of([&] { run_config_from_json(j, "c.json"); }).find("unknown field 'extra'") !=
        std::string::npos);

  j = base_config();
  j["simulation"]["dt_seconds"] = -1;
  CHECK(error_of([&] { run_config_from_json(j, "c.json"); }).find("dt_seconds") != std::string::npos);

  j = base_config();
  j["simulation"]["dt_seconds"] = 3600;
  CHECK_THROWS_AS(run_config_from_json(j), ValidationError);

  j = base_config();
  j["simulation"]["start"] = "sideways";
  CHECK(error_of([&] { run_config_from_json(j); }).find("start") != std::string::npos);

  j = base_config();
  j["strategy"] = {{"type", "constant"}};
  CHECK(error_of([&] { run_config_from_json(j); }).find("delta") != std::string::npos);

  j = base_config();
  j["gammas"] = {1.0, -1.0};
  CHECK_THROWS_AS(run_config_from_json(j), ValidationError);

  j = base_config();
  j["simulation"]["horizon_days"] = 2;
  CHECK(error_of([&] { run_config_from_json(j); }).find("horizon") != std::string::npos);

  j = base_config();
  j["model"] = "no_such_pair";
  CHECK_THROWS_AS(run_config_from_json(j), ValidationError);

  j = base_config();
  j.erase("liquidity");
  CHECK(error_of([&] { run_config_from_json(j); }).find("liquidity") != std::string::npos);

  j = base_config();
  j["control"]["gammma"] = 1;
  CHECK(error_of([&] { run_config_from_json(j); }).find("gammma") != std::string::npos);
}

TEST_CASE("JSON syntax errors report the line") {
  const auto path = std::filesystem::temp_directory_path() / "pegamm_test_io_bad.json";
  write_text_file(path, "{\n  \"a\": 1,\n  \"b\": ]\n}\n");
  const auto msg = error_of([&] { read_json_file(path); });
  CHECK(msg.find(path.string() + ":3") != std::string::npos);
  std::filesystem::remove(path);
}
