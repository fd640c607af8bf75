#include "aitraffic/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

namespace aitraffic {

namespace {

using nlohmann::json;

json kin_json(const VehicleState& k) {
  return json{{"x", k.x}, {"y", k.y}, {"theta", k.theta}, {"delta", k.delta}, {"v", k.v}};
}

json pref_json(const PreferenceBreakdown& b) {
  return json{{"speed", b.speed},   {"accel", b.accel},     {"steer", b.steer},       {"lateral", b.lateral},
              {"collision", b.collision}, {"safety", b.safety}, {"speed_limit", b.speed_limit},
              {"stop", b.stop},     {"priority", b.priority}, {"comm", b.comm},       {"coop", b.coop}};
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

ParticleSet reset_belief(const ParticleSet& old, const WorldState& o, AgentId id, const ScenarioConfig& cfg, Rng& rng) {
  ParticleSet fresh = ParticleSet::around(o, id, cfg.belief.particles, cfg.model.params.noise, rng);
  fresh.signals() = old.signals();
  const AgentId w = other_agent(id);
  for (auto& p : fresh.particles()) {
    p.state[w].signal = {old.signals().prompting.mean(), old.signals().yielding.mean()};
    if (!old.particles().empty()) {
      p.state[id].has_stopped = old[0].state[id].has_stopped;
      p.state[id].has_priority = old[0].state[id].has_priority;
      p.state[w].has_stopped = old[0].state[w].has_stopped;
      p.state[w].has_priority = old[0].state[w].has_priority;
    }
  }
  return fresh;
}

}  // namespace

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Baseline: return "baseline";
    case Regime::Norms: return "norms";
    case Regime::Communication: return "communication";
    case Regime::NormsCommunication: return "norms+communication";
    case Regime::Adversarial: return "adversarial";
  }
  return "?";
}

std::optional<Regime> parse_regime(const std::string& s) {
  for (Regime r : {Regime::Baseline, Regime::Norms, Regime::Communication, Regime::NormsCommunication,
                   Regime::Adversarial}) {
    if (s == regime_name(r)) return r;
  }
  return std::nullopt;
}

void apply_regime(Regime r, NormConfig& norms) {
  norms.general_enabled = true;
  norms.stop_signs_enabled = r == Regime::Norms || r == Regime::NormsCommunication;
  norms.priority_enabled = norms.stop_signs_enabled;
  norms.communication_enabled = r == Regime::Communication || r == Regime::NormsCommunication || r == Regime::Adversarial;
}

const char* outcome_name(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::AFirst: return "AFirst";
    case OutcomeKind::BFirst: return "BFirst";
    case OutcomeKind::Deadlock: return "Deadlock";
    case OutcomeKind::Collision: return "Collision";
  }
  return "?";
}

std::optional<OutcomeKind> parse_outcome(const std::string& s) {
  for (OutcomeKind k : {OutcomeKind::AFirst, OutcomeKind::BFirst, OutcomeKind::Deadlock, OutcomeKind::Collision}) {
    if (s == outcome_name(k)) return k;
  }
  return std::nullopt;
}

OutcomeTracker::OutcomeTracker(const Scene& scene, double deadlock_speed, double deadlock_time, double dt)
    : scene_(scene),
      deadlock_speed_(deadlock_speed),
      deadlock_time_(deadlock_time),
      dt_(dt),
      cross_d_(0.5 * scene.geometry.lane_width + scene.geometry.half_width() + scene.geometry.half_length()) {
  out_.min_gap = std::numeric_limits<double>::infinity();
}

void OutcomeTracker::observe(const WorldState& w, double t) {
  const auto& a = w[AgentId::A].kin;
  const auto& b = w[AgentId::B].kin;
  const double gap = rect_clearance(a, b, scene_.geometry, scene_.geometry);
  out_.min_gap = std::min(out_.min_gap, gap);
  if (!collided_ && rect_overlap(a, b, scene_.geometry, scene_.geometry)) {
    collided_ = true;
    const double rvx = a.v * std::cos(a.theta) - b.v * std::cos(b.theta);
    const double rvy = a.v * std::sin(a.theta) - b.v * std::sin(b.theta);
    out_.impact_speed = std::hypot(rvx, rvy);
  }
  if (!out_.t_cross_a && scene_.d_long(AgentId::A, a) > cross_d_) out_.t_cross_a = t;
  if (!out_.t_cross_b && scene_.d_long(AgentId::B, b) > cross_d_) out_.t_cross_b = t;

  if (a.v < deadlock_speed_ && b.v < deadlock_speed_) {
    if (still_since_ < 0.0) still_since_ = t;
    if (!out_.t_cross_a && !out_.t_cross_b && t - still_since_ >= deadlock_time_ - 1e-9) deadlocked_ = true;
  } else {
    still_since_ = -1.0;
  }
}

bool OutcomeTracker::decided(bool stop_at_first_crossing) const {
  if (collided_ || deadlocked_) return true;
  if (out_.t_cross_a && out_.t_cross_b) return true;
  return stop_at_first_crossing && (out_.t_cross_a || out_.t_cross_b);
}

Outcome OutcomeTracker::result(double t_end) const {
  Outcome o = out_;
  o.duration = t_end;
  if (collided_) {
    o.kind = OutcomeKind::Collision;
  } else if (o.t_cross_a && (!o.t_cross_b || *o.t_cross_a <= *o.t_cross_b)) {
    o.kind = OutcomeKind::AFirst;
  } else if (o.t_cross_b) {
    o.kind = OutcomeKind::BFirst;
  } else {
    o.kind = OutcomeKind::Deadlock;
  }
  if (!std::isfinite(o.min_gap)) o.min_gap = 0.0;
  return o;
}

Outcome classify_outcome(const std::vector<WorldState>& trajectory, const ScenarioConfig& cfg) {
  OutcomeTracker tr(cfg.model.params.scene, cfg.deadlock_speed, cfg.deadlock_time, cfg.dt());
  double t = 0.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    t = static_cast<double>(i) * cfg.dt();
    tr.observe(trajectory[i], t);
  }
  return tr.result(t);
}

AgentAction adversarial_action() { return AgentAction{ControlInput{0.0, 0.0}, SignalPairBinary{false, true}}; }

WorldState initial_world(const ScenarioConfig& cfg) {
  if (!(cfg.d_a0 < 0.0) || !(cfg.d_b0 < 0.0)) throw std::invalid_argument("initial distances must be negative");
  WorldState w;
  const Scene& sc = cfg.model.params.scene;
  for (AgentId id : {AgentId::A, AgentId::B}) {
    const RoadFrame& f = sc.frame(id);
    const double d = id == AgentId::A ? cfg.d_a0 : cfg.d_b0;
    w[id].kin = VehicleState{d * f.cos_theta(), d * f.sin_theta(), f.theta(), 0.0, cfg.v0};
  }
  return w;
}

std::map<AgentId, AgentRuntime> make_agents(const WorldState& world, const ScenarioConfig& cfg) {
  std::map<AgentId, AgentRuntime> agents;
  for (AgentId id : {AgentId::A, AgentId::B}) {
    AgentRuntime rt;
    rt.id = id;
    const std::uint64_t stream = static_cast<std::uint64_t>(index(id)) ^ (cfg.swap_agent_streams ? 1u : 0u);
    rt.rng = Rng(derive_seed(cfg.seed, stream));
    rt.surprise = initial_surprise(cfg.model.planner);
    if (!(cfg.adversarial_b() && id == AgentId::B)) {
      rt.belief = ParticleSet::around(world, id, cfg.belief.particles, cfg.model.params.noise, rt.rng);
      rt.prev_yield_mean = rt.belief.signals().yielding.mean();
    }
    agents.emplace(id, std::move(rt));
  }
  return agents;
}

WorldState run_step(const WorldState& world, std::map<AgentId, AgentRuntime>& agents, const ScenarioConfig& cfg,
                    double t, std::vector<TickRecord>* log) {
  const WorldState o = process_observe(world);
  const AgentModel& model = cfg.model;
  const double dt = cfg.dt();
  std::map<AgentId, AgentAction> actions;

  for (AgentId id : {AgentId::A, AgentId::B}) {
    AgentRuntime& rt = agents.at(id);
    TickRecord rec;
    rec.t = t;
    rec.agent = id;
    rec.kin = world[id].kin;

    if (cfg.adversarial_b() && id == AgentId::B) {
      actions[id] = adversarial_action();
      rec.control = actions[id].control;
      rec.signals = actions[id].signal;
      rec.scripted = true;
      if (log) log->push_back(std::move(rec));
      continue;
    }

    if (rt.started) {
      const std::span<const ControlInput> tail =
          std::span<const ControlInput>(rt.policy.controls).subspan(std::min<std::size_t>(1, rt.policy.controls.size()));
      try {
        rt.belief = predict(rt.belief, rt.last_action, model.params, tail, rt.rng);
      } catch (const DegenerateBeliefError&) {
        rt.belief = reset_belief(rt.belief, o, id, cfg, rt.rng);
        ++rt.degenerate_resets;
      }
    }
    try {
      rt.belief = update(rt.belief, o, model.params.noise, cfg.belief, rt.rng);
    } catch (const DegenerateBeliefError&) {
      rt.belief = reset_belief(rt.belief, o, id, cfg, rt.rng);
      ++rt.degenerate_resets;
    }

    SignalContext ctx;
    ctx.priority_prob = priority_probability(rt.belief, rt.last_efe, model);
    ctx.ego_stopped_prob = estimate(rt.belief, [id](const BeliefState& s) { return s[id].has_stopped ? 1.0 : 0.0; });
    const SignalPairBinary signals = select_signals(rt.belief, model, ctx);

    const double yield_mean = rt.belief.signals().yielding.mean();
    const bool yield_perceived = rt.prev_yield_mean < 0.5 && yield_mean >= 0.5;
    rt.prev_yield_mean = yield_mean;
    rt.standstill_time = o[id].kin.v < cfg.standstill_speed ? rt.standstill_time + dt : 0.0;
    const bool force = !rt.started || yield_perceived || rt.standstill_time >= cfg.standstill_replan_time - 1e-9;

    SelectionResult sel = accumulate_and_select(rt.surprise, rt.belief, rt.policy, SignalPlan{signals}, model, force, rt.rng);
    if (sel.replanned) {
      rt.standstill_time = 0.0;
      if (!force) rt.replan_times.push_back(t);
    }
    rt.policy = std::move(sel.policy);
    rt.surprise = sel.surprise;
    rt.last_efe = sel.efe;
    rt.signals_out = signals;
    rt.last_action = AgentAction{rt.policy.controls.front(), signals};
    rt.started = true;
    actions[id] = rt.last_action;

    if (log) {
      rec.control = rt.last_action.control;
      rec.signals = signals;
      rec.other_mean = summarize(rt.belief).other_mean;
      rec.yield_belief = yield_mean;
      rec.prompt_belief = rt.belief.signals().prompting.mean();
      rec.E = rt.surprise.E;
      rec.epsilon = sel.epsilon;
      rec.replanned = sel.replanned;
      rec.priority_prob = ctx.priority_prob;
      rec.g_prompt = g_prompt(yield_mean, model.pref);
      rec.pragmatic = sel.efe.components;
      rec.g_epist = sel.efe.g_epist;
      if (cfg.debug_particles) {
        for (const auto& p : rt.belief.particles()) rec.particles.push_back(p.state);
      }
      log->push_back(std::move(rec));
    }
  }
  return process_step(world, actions, model.params);
}

SimulationResult run_simulation(const ScenarioConfig& scenario) {
  ScenarioConfig cfg = scenario;
  apply_regime(cfg.regime, cfg.model.params.norms);
  if (!(cfg.dt() > 0.0)) throw std::invalid_argument("dt must be positive");
  SimulationResult res;
  WorldState world = initial_world(cfg);
  auto agents = make_agents(world, cfg);
  OutcomeTracker tracker(cfg.model.params.scene, cfg.deadlock_speed, cfg.deadlock_time, cfg.dt());
  res.trajectory.push_back(world);
  tracker.observe(world, 0.0);

  const auto steps = static_cast<long>(std::llround(cfg.max_time / cfg.dt()));
  double t = 0.0;
  for (long k = 0; k < steps; ++k) {
    world = run_step(world, agents, cfg, t, &res.log);
    t = static_cast<double>(k + 1) * cfg.dt();
    res.trajectory.push_back(world);
    tracker.observe(world, t);
    if (tracker.decided(cfg.stop_at_first_crossing)) break;
  }
  res.outcome = tracker.result(t);
  for (auto& [id, rt] : agents) res.replan_times[id] = rt.replan_times;
  return res;
}

void write_trajectory_jsonl(std::ostream& os, const SimulationResult& r) {
  for (const auto& rec : r.log) {
    json j{{"t", rec.t},
           {"agent", agent_name(rec.agent)},
           {"x", rec.kin.x},
           {"y", rec.kin.y},
           {"theta", rec.kin.theta},
           {"v", rec.kin.v},
           {"a", rec.control.a},
           {"omega", rec.control.omega},
           {"gamma_A", rec.signals.prompting},
           {"gamma_Y", rec.signals.yielding},
           {"scripted", rec.scripted}};
    if (!rec.scripted) {
      j["belief_other"] = kin_json(rec.other_mean);
      j["belief_yield"] = rec.yield_belief;
      j["belief_prompt"] = rec.prompt_belief;
      j["E"] = rec.E;
      j["epsilon"] = rec.epsilon;
      j["replanned"] = rec.replanned;
      j["priority_prob"] = rec.priority_prob;
      j["g_prompt"] = rec.g_prompt;
      j["pragmatic"] = pref_json(rec.pragmatic);
      j["g_epist"] = rec.g_epist;
      if (!rec.particles.empty()) {
        json ps = json::array();
        const AgentId w = other_agent(rec.agent);
        for (const auto& s : rec.particles) {
          ps.push_back(json{{"self", kin_json(s[rec.agent].kin)},
                            {"other", kin_json(s[w].kin)},
                            {"other_gamma_Y", s[w].signal.yielding}});
        }
        j["particles"] = std::move(ps);
      }
    }
    os << j.dump() << '\n';
  }
  const Outcome& o = r.outcome;
  json out{{"outcome", outcome_name(o.kind)},
           {"t_cross_A", optional_json(o.t_cross_a)},
           {"t_cross_B", optional_json(o.t_cross_b)},
           {"min_gap", o.min_gap},
           {"impact_speed", optional_json(o.impact_speed)},
           {"duration", o.duration}};
  os << out.dump() << '\n';
}

}  // namespace aitraffic
