#include "aitraffic/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

namespace aitraffic {

namespace {

constexpr int kEpistDims = 12;

struct Rollout {
  std::vector<BeliefState> s;
  std::vector<double> w;
  int step = 0;
};

struct StepResult {
  PreferenceBreakdown pref;
  double epist_kin = 0.0;
  double epist_signal = 0.0;
  double priority_prob = 0.5;

  double expected_log_pref() const { return pref.total(); }
  double value() const { return pref.total() + epist_kin + epist_signal; }
};

double pow10(double g) {
  const double g2 = g * g;
  const double g4 = g2 * g2;
  return g4 * g4 * g2;
}

Rollout make_rollout(const ParticleSet& bel) {
  Rollout r;
  r.s.reserve(bel.size());
  r.w.reserve(bel.size());
  for (const auto& p : bel.particles()) {
    r.s.push_back(p.state);
    r.w.push_back(p.weight);
  }
  return r;
}

void normalize_or_reset(std::vector<double>& w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum > 0.0 && std::isfinite(sum)) {
    for (double& x : w) x /= sum;
  } else {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
  }
}

std::vector<std::size_t> systematic_subset(const std::vector<double>& w, int count, Rng& rng) {
  std::vector<std::size_t> idx;
  if (count <= 0 || w.empty()) return idx;
  idx.reserve(static_cast<std::size_t>(count));
  const double step = 1.0 / count;
  double u = rng.uniform() * step;
  double cum = w[0];
  std::size_t j = 0;
  for (int i = 0; i < count; ++i) {
    while (u > cum && j + 1 < w.size()) cum += w[++j];
    idx.push_back(j);
    u += step;
  }
  return idx;
}

void pack_epist(const BeliefState& s, AgentId ego, const double* inv_sd, double* out) {
  const AgentId w = other_agent(ego);
  const auto& e = s[ego].kin;
  const auto& o = s[w].kin;
  const double v[kEpistDims] = {e.x, e.y, e.theta, e.delta, e.v, o.x, o.y, o.theta, o.delta, o.v,
                                s[w].control.a, s[w].control.omega};
  for (int d = 0; d < kEpistDims; ++d) out[d] = v[d] * inv_sd[d];
}

/// Mixture estimate of predictive entropy minus expected ambiguity for the
/// Gaussian observation dimensions. Dimensions with zero noise are skipped.
double kinematic_epistemic(const Rollout& r, const std::vector<BeliefState>& obs_states,
                           const std::vector<std::size_t>& obs_idx, AgentId ego, const NoiseConfig& noise) {
  const auto& sx = noise.sigma_x_o;
  const double sd[kEpistDims] = {sx.x, sx.y, sx.theta, sx.delta, sx.v, sx.x, sx.y, sx.theta, sx.delta, sx.v,
                                 noise.sigma_u_o.a, noise.sigma_u_o.omega};
  double inv_sd[kEpistDims];
  int active = 0;
  for (int d = 0; d < kEpistDims; ++d) {
    inv_sd[d] = sd[d] > 0.0 ? 1.0 / sd[d] : 0.0;
    if (sd[d] > 0.0) ++active;
  }
  if (active == 0 || obs_idx.empty()) return 0.0;

  const auto n = static_cast<Eigen::Index>(r.s.size());
  const auto m = static_cast<Eigen::Index>(obs_idx.size());
  Eigen::Matrix<double, Eigen::Dynamic, kEpistDims, Eigen::RowMajor> P(n, kEpistDims), O(m, kEpistDims);
  for (Eigen::Index i = 0; i < n; ++i) pack_epist(r.s[static_cast<std::size_t>(i)], ego, inv_sd, P.row(i).data());
  for (Eigen::Index j = 0; j < m; ++j) pack_epist(obs_states[obs_idx[static_cast<std::size_t>(j)]], ego, inv_sd, O.row(j).data());

  const Eigen::VectorXd pn = P.rowwise().squaredNorm();
  const Eigen::VectorXd on = O.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * O * P.transpose();
  d2.colwise() += on;
  d2.rowwise() += pn.transpose();

  Eigen::VectorXd logw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = r.w[static_cast<std::size_t>(i)];
    logw(i) = wi > 0.0 ? std::log(wi) : -std::numeric_limits<double>::infinity();
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::RowVectorXd t = logw.transpose() - 0.5 * d2.row(j);
    const double mx = t.maxCoeff();
    total += mx + std::log((t.array() - mx).exp().sum());
  }
  return -total / static_cast<double>(m) - 0.5 * active;
}

/// Analytic signal epistemic value of one step: predictive entropy of the
/// observed bits minus their expected entropy, taken over the transition.
double signal_epistemic(const Rollout& r, AgentId ego, bool prompting) {
  const AgentId w = other_agent(ego);
  double mean_y = 0.0, amb_y = 0.0, mean_a = 0.0, amb_a = 0.0;
  for (std::size_t i = 0; i < r.s.size(); ++i) {
    const double wi = r.w[i];
    const auto& sig = r.s[i][w].signal;
    const double qa = pow10(sig.prompting);
    mean_a += wi * qa;
    amb_a += wi * bernoulli_entropy(qa);
    if (prompting) {
      mean_y += wi * sig.yielding;
    } else {
      const double qy = pow10(sig.yielding);
      mean_y += wi * qy;
      amb_y += wi * bernoulli_entropy(qy);
    }
  }
  return (bernoulli_entropy(mean_y) - amb_y) + (bernoulli_entropy(mean_a) - amb_a);
}

StepResult rollout_step(Rollout& r, const AgentAction& act, std::span<const ControlInput> tail,
                        const AgentModel& model, AgentId ego, bool final_step, Rng& rng) {
  const ModelParams& params = model.params;
  const NoiseConfig& nz = params.noise;
  const AgentId w = other_agent(ego);
  StepResult out;
  out.epist_signal = signal_epistemic(r, ego, act.signal.prompting);

  const TransitionOptions opts{nz.sigma_gamma, true};
  for (std::size_t i = 0; i < r.s.size(); ++i) {
    TransitionSample ts = model_transition_sample(r.s[i], act, ego, params, tail, opts, rng);
    r.s[i] = ts.next;
    r.w[i] *= ts.weight;
  }
  normalize_or_reset(r.w);

  const auto& sx = nz.sigma_x_o;
  const auto& su = nz.sigma_u_o;
  std::vector<BeliefState> obs(r.s.size());
  for (std::size_t i = 0; i < r.s.size(); ++i) {
    BeliefState o = r.s[i];
    for (AgentId id : {ego, w}) {
      auto& k = o[id].kin;
      k.x = rng.normal(k.x, sx.x);
      k.y = rng.normal(k.y, sx.y);
      k.theta = rng.normal(k.theta, sx.theta);
      k.delta = rng.normal(k.delta, sx.delta);
      k.v = rng.normal(k.v, sx.v);
      o[id].control = {rng.normal(o[id].control.a, su.a), rng.normal(o[id].control.omega, su.omega)};
    }
    o[w].signal = {pow10(o[w].signal.prompting), pow10(o[w].signal.yielding)};
    PreferenceBreakdown b = preference_components(o, ego, model.pref, params.norms, params.scene);
    if (r.step > 0) b.comm = b.coop = 0.0;
    b *= r.w[i];
    out.pref += b;
    obs[i] = std::move(o);
  }

  const auto idx = systematic_subset(r.w, std::min<int>(model.planner.epistemic_obs_samples, static_cast<int>(r.s.size())), rng);
  out.epist_kin = kinematic_epistemic(r, obs, idx, ego, nz);

  if (final_step) {
    double p = 0.0;
    for (std::size_t i = 0; i < r.s.size(); ++i) {
      const auto& s = r.s[i];
      const double pe = params.norms.priority_enabled
                            ? (s[ego].has_priority ? 1.0 : 0.0)
                            : arrival_priority_prob(s[ego].kin, s[w].kin, ego, params.scene, model.pref.arrival_sigmoid_gain);
      p += r.w[i] * pe;
    }
    out.priority_prob = p;
  }

  double s2 = 0.0;
  for (double x : r.w) s2 += x * x;
  if (s2 > 0.0 && 1.0 / s2 < 0.5 * static_cast<double>(r.w.size())) {
    const auto res = systematic_indices(r.w, rng);
    std::vector<BeliefState> ns(r.s.size());
    for (std::size_t i = 0; i < res.size(); ++i) ns[i] = r.s[res[i]];
    r.s = std::move(ns);
    std::fill(r.w.begin(), r.w.end(), 1.0 / static_cast<double>(r.w.size()));
  }
  ++r.step;
  return out;
}

void accumulate(EfeBreakdown& e, const StepResult& st) {
  e.g_prag += st.pref.total();
  e.g_epist += st.epist_kin + st.epist_signal;
  e.g_epist_signal += st.epist_signal;
  e.components += st.pref;
  e.expected_log_pref.push_back(st.pref.total());
}

std::span<const ControlInput> tail_after(const std::vector<ControlInput>& u, std::size_t step) {
  return std::span<const ControlInput>(u).subspan(std::min(step + 1, u.size()));
}

}  // namespace

SurpriseState initial_surprise(const PlannerConfig& cfg) {
  SurpriseState s;
  s.lambda = std::pow(10.0, cfg.log10_lambda);
  s.threshold = cfg.replan_threshold;
  return s;
}

double bernoulli_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

double g_prompt(double yield_belief_mean, const PreferenceConfig& cfg) {
  return bernoulli_entropy(yield_belief_mean) - std::abs(cfg.g_gamma);
}

EfeBreakdown evaluate_efe(const ParticleSet& bel, const Policy& pi, const SignalPlan& signals, const AgentModel& model,
                          Rng& rng) {
  EfeBreakdown e;
  Rollout r = make_rollout(bel);
  const int h = pi.horizon();
  e.expected_log_pref.reserve(static_cast<std::size_t>(h));
  for (int t = 0; t < h; ++t) {
    const AgentAction act{pi.controls[static_cast<std::size_t>(t)], signals.at(t)};
    const StepResult st = rollout_step(r, act, tail_after(pi.controls, static_cast<std::size_t>(t)), model, bel.ego(),
                                       t == h - 1, rng);
    accumulate(e, st);
    if (t == h - 1) e.final_priority_prob = st.priority_prob;
  }
  return e;
}

CemResult cem_minimize(const CemObjective& objective, int horizon, const CemConfig& cfg, const KinematicLimits& limits,
                       std::uint64_t seed, const std::vector<ControlInput>* warm_start) {
  const auto h = static_cast<std::size_t>(horizon);
  const int m = std::max(1, cfg.samples);
  const int n_elite = std::max(1, static_cast<int>(std::lround(cfg.elite_fraction * m)));
  std::vector<double> mean_a(h, 0.0), sd_a(h, cfg.init_accel_std), mean_w(h, 0.0), sd_w(h, cfg.init_omega_std);
  const double rho = std::clamp(cfg.smoothing, 0.0, 0.999);
  const double innov = std::sqrt(1.0 - rho * rho);

  CemResult result;
  result.best_value = std::numeric_limits<double>::infinity();
  std::vector<std::vector<ControlInput>> cand(static_cast<std::size_t>(m), std::vector<ControlInput>(h));
  std::vector<double> value(static_cast<std::size_t>(m));
  std::vector<int> order(static_cast<std::size_t>(m));

  for (int k = 0; k < cfg.iterations; ++k) {
    for (int c = 0; c < m; ++c) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(c)));
      auto& u = cand[static_cast<std::size_t>(c)];
      if (k == 0 && c == 0 && warm_start != nullptr && warm_start->size() == h) {
        u = *warm_start;
      } else if (k == 0) {
        const double a = rng.normal(0.0, cfg.init_accel_std);
        for (std::size_t t = 0; t < h; ++t) u[t] = {a, rng.normal(0.0, cfg.init_omega_std)};
      } else {
        double za = rng.normal(), zw = rng.normal();
        for (std::size_t t = 0; t < h; ++t) {
          if (t > 0) {
            za = rho * za + innov * rng.normal();
            zw = rho * zw + innov * rng.normal();
          }
          u[t] = {mean_a[t] + sd_a[t] * za, mean_w[t] + sd_w[t] * zw};
        }
      }
      for (auto& x : u) x = clamp_control(x, limits);
      if (cfg.common_noise) {
        Rng shared(derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(m)));
        value[static_cast<std::size_t>(c)] = objective(u, shared);
      } else {
        value[static_cast<std::size_t>(c)] = objective(u, rng);
      }
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return value[static_cast<std::size_t>(a)] < value[static_cast<std::size_t>(b)];
    });
    const auto& top = cand[static_cast<std::size_t>(order[0])];
    if (value[static_cast<std::size_t>(order[0])] < result.best_value) {
      result.best_value = value[static_cast<std::size_t>(order[0])];
      result.best = top;
    }
    result.best_per_iteration.push_back(result.best_value);

    for (std::size_t t = 0; t < h; ++t) {
      double sa = 0.0, sw = 0.0;
      for (int e = 0; e < n_elite; ++e) {
        const auto& x = cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][t];
        sa += x.a;
        sw += x.omega;
      }
      mean_a[t] = sa / n_elite;
      mean_w[t] = sw / n_elite;
      double va = 0.0, vw = 0.0;
      for (int e = 0; e < n_elite; ++e) {
        const auto& x = cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][t];
        va += (x.a - mean_a[t]) * (x.a - mean_a[t]);
        vw += (x.omega - mean_w[t]) * (x.omega - mean_w[t]);
      }
      sd_a[t] = std::max(std::sqrt(va / n_elite), cfg.min_accel_std);
      sd_w[t] = std::max(std::sqrt(vw / n_elite), cfg.init_omega_std);
    }
  }
  if (result.best.empty()) result.best.assign(h, ControlInput{});
  return result;
}

Policy cem_optimize(const ParticleSet& bel, const SignalPlan& signals, const AgentModel& model, Rng& rng,
                    const Policy* warm_start) {
  const int h = model.planner.horizon;
  const CemObjective objective = [&](const std::vector<ControlInput>& u, Rng& r) {
    return evaluate_efe(bel, Policy{u}, signals, model, r).G();
  };
  const std::uint64_t seed = rng.next_u64();
  const std::vector<ControlInput>* warm = warm_start != nullptr ? &warm_start->controls : nullptr;
  CemResult res = cem_minimize(objective, h, model.planner.cem, model.params.scene.limits, seed, warm);
  return Policy{std::move(res.best)};
}

SelectionResult accumulate_and_select(const SurpriseState& sur, const ParticleSet& bel, const Policy& current_pi,
                                      const SignalPlan& signals, const AgentModel& model, bool force_replan, Rng& rng) {
  const int h = model.planner.horizon;
  const double max_lp = max_log_preference(model.pref);
  SelectionResult out;
  out.surprise = sur;

  const bool usable = current_pi.horizon() == h && h >= 2;
  if (force_replan || !usable) {
    Policy warm;
    if (usable) {
      warm.controls.assign(current_pi.controls.begin() + 1, current_pi.controls.end());
      warm.controls.push_back(warm.controls.back());
    }
    out.policy = cem_optimize(bel, signals, model, rng, usable ? &warm : nullptr);
    out.efe = evaluate_efe(bel, out.policy, signals, model, rng);
    out.surprise.E = 0.0;
    out.replanned = true;
    return out;
  }

  std::vector<ControlInput> prefix(current_pi.controls.begin() + 1, current_pi.controls.end());
  Rollout r = make_rollout(bel);
  EfeBreakdown pre;
  for (std::size_t t = 0; t < prefix.size(); ++t) {
    const AgentAction act{prefix[t], signals.at(static_cast<int>(t))};
    accumulate(pre, rollout_step(r, act, tail_after(prefix, t), model, bel.ego(), false, rng));
  }

  const ControlInput last = prefix.back();
  const std::uint64_t seed = rng.next_u64();
  double best_g = std::numeric_limits<double>::infinity();
  StepResult best_step;
  ControlInput best_u = last;
  const auto& offsets = model.planner.extension_offsets;
  for (std::size_t c = 0; c < offsets.size(); ++c) {
    const ControlInput u = clamp_control({last.a + offsets[c], last.omega}, model.params.scene.limits);
    Rollout rc = r;
    Rng cr(derive_seed(seed, model.planner.cem.common_noise ? 0 : c));
    const std::vector<ControlInput> hold{u};
    const StepResult st = rollout_step(rc, {u, signals.at(h - 1)}, hold, model, bel.ego(), true, cr);
    const double g = -st.value();
    if (g < best_g) {
      best_g = g;
      best_step = st;
      best_u = u;
    }
  }

  out.efe = pre;
  accumulate(out.efe, best_step);
  out.efe.final_priority_prob = best_step.priority_prob;
  out.policy.controls = prefix;
  out.policy.controls.push_back(best_u);

  double sum = 0.0;
  for (double x : out.efe.expected_log_pref) sum += x;
  out.epsilon = h * max_lp - sum;
  out.surprise.E += out.surprise.lambda * out.epsilon;
  if (out.surprise.E >= out.surprise.threshold) {
    out.policy = cem_optimize(bel, signals, model, rng, &out.policy);
    out.surprise.E = 0.0;
    out.replanned = true;
  }
  return out;
}

double priority_probability(const ParticleSet& bel, const EfeBreakdown& predicted, const AgentModel& model) {
  if (!model.params.norms.priority_enabled) return predicted.final_priority_prob;
  const AgentId ego = bel.ego();
  return estimate(bel, [ego](const BeliefState& s) { return s[ego].has_priority ? 1.0 : 0.0; });
}

SignalPairBinary select_signals(const ParticleSet& bel, const AgentModel& model, const SignalContext& ctx) {
  const NormConfig& norms = model.params.norms;
  if (!norms.communication_enabled) return {};
  const PreferenceConfig& cfg = model.pref;
  const double multiplier = (norms.stop_signs_enabled && ctx.ego_stopped_prob < 0.5) ? cfg.prestop_signal_multiplier : 1.0;
  const double yield_mean = bel.signals().yielding.mean();
  const double other_prompting = bel.signals().prompting.mean() > 0.5 ? 1.0 : 0.0;
  const double p = ctx.priority_prob;

  SignalPairBinary best{};
  double best_g = std::numeric_limits<double>::infinity();
  for (int combo = 0; combo < 4; ++combo) {
    const bool prompt = (combo & 1) != 0;
    const bool yield = (combo & 2) != 0;
    const double comm = cfg.g_gamma * ((prompt ? 1.0 : 0.0) + (yield ? 1.0 : 0.0)) * multiplier;
    const double coop = cfg.g_W * ((yield ? p : 0.0) + (yield ? 0.0 : other_prompting * (1.0 - p)));
    const double epist = prompt ? bernoulli_entropy(yield_mean) : 0.0;
    const double g = -(comm + coop) - epist;
    if (g < best_g) {
      best_g = g;
      best = {prompt, yield};
    }
  }
  return best;
}

}  // namespace aitraffic
