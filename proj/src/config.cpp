#include "aitraffic/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace aitraffic {

namespace {

ConfigEntry entry(std::string key, std::function<ConfigRef(ScenarioConfig&)> ref, std::string doc, bool local = false) {
  return ConfigEntry{std::move(key), std::move(ref), std::move(doc), local};
}

void add_kinematic_std(std::vector<ConfigEntry>& out, const std::string& prefix,
                       std::function<KinematicStd&(ScenarioConfig&)> get, const std::string& what) {
  out.push_back(entry(prefix + "_x", [get](ScenarioConfig& c) -> ConfigRef { return &get(c).x; }, what + " std of x [m]", true));
  out.push_back(entry(prefix + "_y", [get](ScenarioConfig& c) -> ConfigRef { return &get(c).y; }, what + " std of y [m]", true));
  out.push_back(entry(prefix + "_theta", [get](ScenarioConfig& c) -> ConfigRef { return &get(c).theta; },
                      what + " std of heading [rad]", true));
  out.push_back(entry(prefix + "_delta", [get](ScenarioConfig& c) -> ConfigRef { return &get(c).delta; },
                      what + " std of steering angle [rad]", true));
  out.push_back(entry(prefix + "_v", [get](ScenarioConfig& c) -> ConfigRef { return &get(c).v; },
                      what + " std of speed [m/s]", true));
}

std::vector<ConfigEntry> build_registry() {
  std::vector<ConfigEntry> r;
  using C = ScenarioConfig;
  // scenario
  r.push_back(entry("scenario.regime", [](C& c) -> ConfigRef { return &c.regime; },
                    "baseline | norms | communication | norms+communication | adversarial"));
  r.push_back(entry("scenario.d_a0", [](C& c) -> ConfigRef { return &c.d_a0; }, "initial centre distance of A to the crossing centre [m]"));
  r.push_back(entry("scenario.d_b0", [](C& c) -> ConfigRef { return &c.d_b0; }, "initial centre distance of B [m]"));
  r.push_back(entry("scenario.v0", [](C& c) -> ConfigRef { return &c.v0; }, "initial speed of both vehicles [m/s]"));
  r.push_back(entry("scenario.dt", [](C& c) -> ConfigRef { return &c.model.params.scene.dt; }, "time step [s]"));
  r.push_back(entry("scenario.max_time", [](C& c) -> ConfigRef { return &c.max_time; }, "run time limit [s]", true));
  r.push_back(entry("scenario.seed", [](C& c) -> ConfigRef { return &c.seed; }, "base random seed"));
  r.push_back(entry("scenario.deadlock_speed", [](C& c) -> ConfigRef { return &c.deadlock_speed; },
                    "both below this speed counts as standing [m/s]", true));
  r.push_back(entry("scenario.deadlock_time", [](C& c) -> ConfigRef { return &c.deadlock_time; },
                    "standing time that ends a run as deadlock [s]", true));
  r.push_back(entry("scenario.standstill_speed", [](C& c) -> ConfigRef { return &c.standstill_speed; },
                    "speed below which an agent counts as standing still [m/s]", true));
  r.push_back(entry("scenario.standstill_replan_time", [](C& c) -> ConfigRef { return &c.standstill_replan_time; },
                    "standing time that forces a re-plan [s]", true));
  r.push_back(entry("scenario.stop_at_first_crossing", [](C& c) -> ConfigRef { return &c.stop_at_first_crossing; },
                    "end the run once the first vehicle has cleared the crossing", true));
  r.push_back(entry("scenario.swap_agent_streams", [](C& c) -> ConfigRef { return &c.swap_agent_streams; },
                    "exchange the random streams of A and B", true));
  // geometry and limits
  r.push_back(entry("vehicle.length", [](C& c) -> ConfigRef { return &c.model.params.scene.geometry.length; }, "vehicle length [m]"));
  r.push_back(entry("vehicle.width", [](C& c) -> ConfigRef { return &c.model.params.scene.geometry.width; }, "vehicle width [m]"));
  r.push_back(entry("vehicle.wheelbase", [](C& c) -> ConfigRef { return &c.model.params.scene.geometry.wheelbase; }, "wheelbase [m]"));
  r.push_back(entry("vehicle.lane_width", [](C& c) -> ConfigRef { return &c.model.params.scene.geometry.lane_width; }, "lane width [m]"));
  r.push_back(entry("vehicle.delta_max", [](C& c) -> ConfigRef { return &c.model.params.scene.limits.delta_max; }, "steering angle limit [rad]"));
  r.push_back(entry("vehicle.a_max", [](C& c) -> ConfigRef { return &c.model.params.scene.limits.a_max; }, "acceleration limit [m/s^2]"));
  r.push_back(entry("vehicle.omega_max", [](C& c) -> ConfigRef { return &c.model.params.scene.limits.omega_max; }, "steering rate limit [rad/s]"));
  // noise
  add_kinematic_std(r, "noise.sigma_x_ego", [](C& c) -> KinematicStd& { return c.model.params.noise.sigma_x_ego; }, "ego transition noise,");
  add_kinematic_std(r, "noise.sigma_x_ov", [](C& c) -> KinematicStd& { return c.model.params.noise.sigma_x_ov; }, "other-vehicle transition noise,");
  r.push_back(entry("noise.sigma_u_ov_a", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_u_ov.a; }, "other-vehicle control random walk, acceleration [m/s^2]", true));
  r.push_back(entry("noise.sigma_u_ov_omega", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_u_ov.omega; }, "other-vehicle control random walk, steering rate [rad/s]", true));
  add_kinematic_std(r, "noise.sigma_x_o", [](C& c) -> KinematicStd& { return c.model.params.noise.sigma_x_o; }, "observation noise,");
  r.push_back(entry("noise.sigma_u_o_a", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_u_o.a; }, "observation noise, acceleration [m/s^2]", true));
  r.push_back(entry("noise.sigma_u_o_omega", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_u_o.omega; }, "observation noise, steering rate [rad/s]", true));
  r.push_back(entry("noise.sigma_gamma", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_gamma; }, "signal noise during behaviour prediction"));
  r.push_back(entry("noise.sigma_gamma_0", [](C& c) -> ConfigRef { return &c.model.params.noise.sigma_gamma_0; }, "signal noise during belief update"));
  // norms
  r.push_back(entry("norms.speed_limit", [](C& c) -> ConfigRef { return &c.model.params.norms.speed_limit; }, "speed above which the other vehicle is taken to speed [m/s]"));
  r.push_back(entry("norms.stop_region_begin", [](C& c) -> ConfigRef { return &c.model.params.norms.stop_region_begin; }, "start of the stopping region [m]"));
  r.push_back(entry("norms.intersection_entry", [](C& c) -> ConfigRef { return &c.model.params.norms.intersection_entry; }, "stop line / crossing entry [m]"));
  r.push_back(entry("norms.stop_speed", [](C& c) -> ConfigRef { return &c.model.params.norms.stop_speed; }, "speed that counts as a stop [m/s]"));
  r.push_back(entry("norms.trail_margin", [](C& c) -> ConfigRef { return &c.model.params.norms.trail_margin; }, "trailing margin of the conflict test [m]"));
  r.push_back(entry("norms.priority_handover", [](C& c) -> ConfigRef { return &c.model.params.norms.priority_handover; }, "distance at which priority is assigned without stop signs [m]"));
  r.push_back(entry("norms.violation_prob", [](C& c) -> ConfigRef { return &c.model.params.norms.violation_prob; }, "normative probability of a violating state"));
  r.push_back(entry("norms.coop_slope", [](C& c) -> ConfigRef { return &c.model.params.norms.coop_slope; }, "slope of the yield-signal trust term"));
  r.push_back(entry("norms.coop_offset", [](C& c) -> ConfigRef { return &c.model.params.norms.coop_offset; }, "yield-signal level where trust starts"));
  r.push_back(entry("norms.coop_floor", [](C& c) -> ConfigRef { return &c.model.params.norms.coop_floor; }, "floor of the yield-signal trust term", true));
  r.push_back(entry("norms.lane_heading_tolerance", [](C& c) -> ConfigRef { return &c.model.params.norms.lane_heading_tolerance; }, "heading deviation that counts as leaving the lane [rad]", true));
  r.push_back(entry("norms.projection_steps", [](C& c) -> ConfigRef { return &c.model.params.norms.projection_steps; }, "norm projection horizon [steps]"));
  // belief
  r.push_back(entry("belief.particles", [](C& c) -> ConfigRef { return &c.belief.particles; }, "particles per belief", true));
  r.push_back(entry("belief.resample_fraction", [](C& c) -> ConfigRef { return &c.belief.resample_fraction; }, "resample when ESS falls below this fraction of N", true));
  r.push_back(entry("belief.positive_count", [](C& c) -> ConfigRef { return &c.belief.counts.positive; }, "Beta pseudo-count added for an observed signal"));
  r.push_back(entry("belief.negative_count", [](C& c) -> ConfigRef { return &c.belief.counts.negative; }, "Beta pseudo-count added for an absent signal"));
  // preference
  r.push_back(entry("preference.mu_v", [](C& c) -> ConfigRef { return &c.model.pref.mu_v; }, "preferred speed [m/s]"));
  r.push_back(entry("preference.sigma_v", [](C& c) -> ConfigRef { return &c.model.pref.sigma_v; }, "speed preference std [m/s]"));
  r.push_back(entry("preference.sigma_a", [](C& c) -> ConfigRef { return &c.model.pref.sigma_a; }, "acceleration preference std [m/s^2]"));
  r.push_back(entry("preference.sigma_omega", [](C& c) -> ConfigRef { return &c.model.pref.sigma_omega; }, "steering-rate preference std [rad/s]", true));
  r.push_back(entry("preference.g_S", [](C& c) -> ConfigRef { return &c.model.pref.g_S; }, "log value of a norm violation"));
  r.push_back(entry("preference.g_gamma", [](C& c) -> ConfigRef { return &c.model.pref.g_gamma; }, "log value of an active signal"));
  r.push_back(entry("preference.g_W", [](C& c) -> ConfigRef { return &c.model.pref.g_W; }, "log value of uncooperative signalling"));
  r.push_back(entry("preference.g_C", [](C& c) -> ConfigRef { return &c.model.pref.g_C; }, "log value of an overlap", true));
  r.push_back(entry("preference.g_safe", [](C& c) -> ConfigRef { return &c.model.pref.g_safe; }, "log value scale of the near-miss term", true));
  r.push_back(entry("preference.safety_distance", [](C& c) -> ConfigRef { return &c.model.pref.safety_distance; }, "clearance below which the near-miss term applies [m]", true));
  r.push_back(entry("preference.lat_std", [](C& c) -> ConfigRef { return &c.model.pref.lat_std; }, "lateral lane preference std [m]", true));
  r.push_back(entry("preference.lat_floor", [](C& c) -> ConfigRef { return &c.model.pref.lat_floor; }, "floor of the lateral log preference", true));
  r.push_back(entry("preference.speed_limit_threshold", [](C& c) -> ConfigRef { return &c.model.pref.speed_limit_threshold; }, "speed-limit preference threshold [m/s]"));
  r.push_back(entry("preference.speed_limit_offset", [](C& c) -> ConfigRef { return &c.model.pref.speed_limit_offset; }, "speed-limit preference offset [m/s]"));
  r.push_back(entry("preference.speed_limit_scale", [](C& c) -> ConfigRef { return &c.model.pref.speed_limit_scale; }, "speed-limit preference scale [m/s]"));
  r.push_back(entry("preference.prestop_signal_multiplier", [](C& c) -> ConfigRef { return &c.model.pref.prestop_signal_multiplier; }, "signal cost multiplier before stopping at a stop sign"));
  r.push_back(entry("preference.arrival_sigmoid_gain", [](C& c) -> ConfigRef { return &c.model.pref.arrival_sigmoid_gain; }, "gain of the arrival-order sigmoid"));
  // planner
  r.push_back(entry("planner.horizon", [](C& c) -> ConfigRef { return &c.model.planner.horizon; }, "policy horizon [steps]", true));
  r.push_back(entry("planner.log10_lambda", [](C& c) -> ConfigRef { return &c.model.planner.log10_lambda; }, "evidence accumulation drift rate, lambda = 10^value"));
  r.push_back(entry("planner.replan_threshold", [](C& c) -> ConfigRef { return &c.model.planner.replan_threshold; }, "accumulated evidence that triggers a re-plan"));
  r.push_back(entry("planner.epistemic_obs_samples", [](C& c) -> ConfigRef { return &c.model.planner.epistemic_obs_samples; }, "observation samples for the kinematic epistemic estimate", true));
  r.push_back(entry("cem.samples", [](C& c) -> ConfigRef { return &c.model.planner.cem.samples; }, "candidates per iteration", true));
  r.push_back(entry("cem.iterations", [](C& c) -> ConfigRef { return &c.model.planner.cem.iterations; }, "iterations", true));
  r.push_back(entry("cem.elite_fraction", [](C& c) -> ConfigRef { return &c.model.planner.cem.elite_fraction; }, "elite fraction", true));
  r.push_back(entry("cem.init_accel_std", [](C& c) -> ConfigRef { return &c.model.planner.cem.init_accel_std; }, "first-iteration acceleration std [m/s^2]", true));
  r.push_back(entry("cem.init_omega_std", [](C& c) -> ConfigRef { return &c.model.planner.cem.init_omega_std; }, "first-iteration steering-rate std [rad/s]"));
  r.push_back(entry("cem.min_accel_std", [](C& c) -> ConfigRef { return &c.model.planner.cem.min_accel_std; }, "lower bound of the refitted acceleration std [m/s^2]", true));
  r.push_back(entry("cem.common_noise", [](C& c) -> ConfigRef { return &c.model.planner.cem.common_noise; }, "score the candidates of one iteration on a shared noise stream", true));
  r.push_back(entry("cem.smoothing", [](C& c) -> ConfigRef { return &c.model.planner.cem.smoothing; }, "AR(1) coefficient of per-step sampling noise", true));
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const ConfigEntry* find_entry(const std::string& key) {
  for (const auto& e : config_registry()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::string valid_key_list() {
  std::string out;
  for (const auto& k : config_keys()) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

}  // namespace

const std::vector<ConfigEntry>& config_registry() {
  static const std::vector<ConfigEntry> registry = build_registry();
  return registry;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : config_registry()) keys.push_back(e.key);
  return keys;
}

std::string get_value(const ScenarioConfig& cfg, const std::string& key) {
  const ConfigEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_key_list());
  ScenarioConfig& c = const_cast<ScenarioConfig&>(cfg);
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, Regime>) {
          return regime_name(*p);
        } else {
          return std::to_string(*p);
        }
      },
      e->ref(c));
}

void set_value(ScenarioConfig& cfg, const std::string& key, const std::string& raw) {
  const ConfigEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_key_list());
  const std::string value = trim(raw);
  const auto bad = [&]() { return ConfigError("invalid value '" + value + "' for key '" + key + "'"); };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") {
            *p = true;
          } else if (value == "false" || value == "0") {
            *p = false;
          } else {
            throw bad();
          }
        } else if constexpr (std::is_same_v<T, Regime>) {
          const auto r = parse_regime(value);
          if (!r) throw bad();
          *p = *r;
        } else {
          T v{};
          if (!parse_number(value, v)) throw bad();
          *p = v;
        }
      },
      e->ref(cfg));
}

void apply_overrides(ScenarioConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form key=value");
    set_value(cfg, trim(o.substr(0, eq)), o.substr(eq + 1));
  }
}

ScenarioConfig parse_config(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream is(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ScenarioConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("key '" + section + "' outside a section; valid keys: " + valid_key_list());
    }
    for (const auto& [name, value] : body) set_value(cfg, section + "." + name, value.data());
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ScenarioConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const auto& e : config_registry()) {
    const auto dot = e.key.find('.');
    const std::string section = e.key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << "; " << e.doc << (e.local_choice ? " (local choice)" : "") << '\n';
    os << e.key.substr(dot + 1) << " = " << get_value(cfg, e.key) << '\n';
  }
  return os.str();
}

void validate(const ScenarioConfig& cfg) {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  const auto& m = cfg.model;
  const auto& nz = m.params.noise;
  const auto& nm = m.params.norms;
  const auto& pr = m.pref;
  check(cfg.dt() > 0.0, "scenario.dt must be positive");
  check(cfg.d_a0 < 0.0 && cfg.d_b0 < 0.0, "initial distances must be negative");
  check(cfg.v0 >= 0.0, "scenario.v0 must be non-negative");
  check(cfg.max_time > 0.0, "scenario.max_time must be positive");
  check(cfg.deadlock_time > 0.0 && cfg.deadlock_speed > 0.0, "deadlock thresholds must be positive");
  check(cfg.standstill_replan_time > 0.0, "scenario.standstill_replan_time must be positive");
  const auto& g = m.params.scene.geometry;
  check(g.length > 0.0 && g.width > 0.0 && g.wheelbase > 0.0 && g.lane_width > 0.0, "vehicle dimensions must be positive");
  const auto& lim = m.params.scene.limits;
  check(lim.delta_max > 0.0 && lim.a_max > 0.0 && lim.omega_max > 0.0, "vehicle limits must be positive");
  for (const KinematicStd* k : {&nz.sigma_x_ego, &nz.sigma_x_ov, &nz.sigma_x_o}) {
    check(k->x >= 0.0 && k->y >= 0.0 && k->theta >= 0.0 && k->delta >= 0.0 && k->v >= 0.0,
          "noise standard deviations must be non-negative");
  }
  check(nz.sigma_u_ov.a >= 0.0 && nz.sigma_u_ov.omega >= 0.0 && nz.sigma_u_o.a >= 0.0 && nz.sigma_u_o.omega >= 0.0,
        "noise standard deviations must be non-negative");
  check(nz.sigma_gamma >= 0.0 && nz.sigma_gamma_0 >= 0.0, "signal noise must be non-negative");
  check(nm.violation_prob > 0.0 && nm.violation_prob <= 1.0, "norms.violation_prob must lie in (0, 1]");
  check(nm.coop_floor > 0.0 && nm.coop_floor <= 1.0, "norms.coop_floor must lie in (0, 1]");
  check(nm.projection_steps >= 1, "norms.projection_steps must be at least 1");
  check(nm.stop_region_begin < nm.intersection_entry, "stop region must begin before the crossing entry");
  check(nm.priority_handover < nm.intersection_entry, "priority handover must lie before the crossing entry");
  check(cfg.belief.particles >= 1, "belief.particles must be at least 1");
  check(cfg.belief.resample_fraction >= 0.0 && cfg.belief.resample_fraction <= 1.0,
        "belief.resample_fraction must lie in [0, 1]");
  check(cfg.belief.counts.positive > 0.0 && cfg.belief.counts.negative > 0.0, "pseudo-counts must be positive");
  check(pr.sigma_v > 0.0 && pr.sigma_a > 0.0 && pr.sigma_omega > 0.0 && pr.lat_std > 0.0,
        "preference standard deviations must be positive");
  check(pr.g_S <= 0.0 && pr.g_gamma <= 0.0 && pr.g_W <= 0.0 && pr.g_C <= 0.0 && pr.g_safe <= 0.0,
        "preference log values must be non-positive");
  check(pr.lat_floor <= 0.0, "preference.lat_floor must be non-positive");
  check(pr.safety_distance > 0.0 && pr.speed_limit_scale > 0.0, "preference scales must be positive");
  check(m.planner.horizon >= 2, "planner.horizon must be at least 2");
  check(m.planner.replan_threshold > 0.0, "planner.replan_threshold must be positive");
  check(m.planner.epistemic_obs_samples >= 0, "planner.epistemic_obs_samples must be non-negative");
  const auto& cem = m.planner.cem;
  check(cem.samples >= 1 && cem.iterations >= 1, "cem.samples and cem.iterations must be at least 1");
  check(cem.elite_fraction > 0.0 && cem.elite_fraction <= 1.0, "cem.elite_fraction must lie in (0, 1]");
  check(cem.init_accel_std >= 0.0 && cem.init_omega_std >= 0.0 && cem.min_accel_std >= 0.0,
        "cem standard deviations must be non-negative");
  check(cem.smoothing >= 0.0 && cem.smoothing < 1.0, "cem.smoothing must lie in [0, 1)");
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

}  // namespace aitraffic
