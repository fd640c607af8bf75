#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aitraffic/config.hpp"

using namespace aitraffic;

namespace {

int count_lines(const std::string& text, const std::string& line) {
  std::istringstream is(text);
  std::string l;
  int n = 0;
  while (std::getline(is, l)) n += l == line;
  return n;
}

}  // namespace

TEST_CASE("resolved defaults list the published parameters once") {
  const std::string ini = serialize_config(ScenarioConfig{});
  for (const char* line : {"g_S = -10000", "g_gamma = -0.125", "g_W = -10000", "log10_lambda = -5.9",
                           "sigma_gamma = 0.001", "sigma_gamma_0 = 0.005", "sigma_v = 0.2", "sigma_a = 0.2"}) {
    CAPTURE(line);
    CHECK(count_lines(ini, line) == 1);
  }
  for (const auto& e : config_registry()) {
    const auto name = e.key.substr(e.key.find('.') + 1);
    CAPTURE(e.key);
    CHECK(ini.find("\n" + name + " = ") != std::string::npos);
  }
}

TEST_CASE("config round trip") {
  ScenarioConfig c;
  apply_overrides(c, {"scenario.seed=77", "scenario.regime=norms+communication", "noise.sigma_u_ov_a=0.45",
                      "cem.samples=32", "scenario.stop_at_first_crossing=false", "preference.sigma_v=0.123456789"});
  const std::string text = serialize_config(c);
  const ScenarioConfig back = parse_config(text);
  validate(back);
  CHECK(serialize_config(back) == text);
  CHECK(back.seed == 77);
  CHECK(back.regime == Regime::NormsCommunication);
  CHECK(back.model.params.noise.sigma_u_ov.a == 0.45);
  CHECK(back.model.pref.sigma_v == 0.123456789);
  CHECK_FALSE(back.stop_at_first_crossing);
  for (const auto& k : config_keys()) CHECK(get_value(back, k) == get_value(c, k));
}

TEST_CASE("validation failures") {
  ScenarioConfig c;
  SUBCASE("non-positive time step") {
    set_value(c, "scenario.dt", "0");
    CHECK_THROWS_AS(validate(c), ConfigError);
    set_value(c, "scenario.dt", "-0.2");
    CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("dt"), ConfigError);
  }
  SUBCASE("unknown key lists the valid keys") {
    CHECK_THROWS_WITH_AS(apply_overrides(c, {"scenario.bogus=1"}), doctest::Contains("scenario.d_a0"), ConfigError);
    CHECK_THROWS_WITH_AS(set_value(c, "nope", "1"), doctest::Contains("cem.samples"), ConfigError);
  }
  SUBCASE("unparsable values") {
    CHECK_THROWS_AS(set_value(c, "scenario.dt", "fast"), ConfigError);
    CHECK_THROWS_AS(set_value(c, "scenario.regime", "chaos"), ConfigError);
    CHECK_THROWS_AS(set_value(c, "belief.particles", "1.5"), ConfigError);
    CHECK_THROWS_AS(apply_overrides(c, {"no_equals_sign"}), ConfigError);
  }
  SUBCASE("bad INI") {
    CHECK_THROWS_AS(parse_config("[scenario\nseed = 1\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
  }
  SUBCASE("start positions must lie before the crossing") {
    set_value(c, "scenario.d_a0", "5");
    CHECK_THROWS_AS(validate(c), ConfigError);
  }
}

TEST_CASE("load from file") {
  const auto p = std::filesystem::temp_directory_path() / "aitraffic_cfg_test.ini";
  {
    std::ofstream f(p);
    f << "[scenario]\nseed = 5\nregime = adversarial\n[cem]\niterations = 2\n";
  }
  const ScenarioConfig c = load_config(p);
  CHECK(c.seed == 5);
  CHECK(c.regime == Regime::Adversarial);
  CHECK(c.model.planner.cem.iterations == 2);
  CHECK(c.model.pref.sigma_v == ScenarioConfig{}.model.pref.sigma_v);
  std::filesystem::remove(p);
}
