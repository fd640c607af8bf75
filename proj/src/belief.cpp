#include "aitraffic/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace aitraffic {

namespace {

constexpr int kDimsPerAgent = 7;

void pack(const AgentBeliefState& a, double* row) {
  row[0] = a.kin.x;
  row[1] = a.kin.y;
  row[2] = a.kin.theta;
  row[3] = a.kin.delta;
  row[4] = a.kin.v;
  row[5] = a.control.a;
  row[6] = a.control.omega;
}

void unpack(const double* row, AgentBeliefState& a) {
  a.kin = {row[0], row[1], row[2], row[3], row[4]};
  a.control = {row[5], row[6]};
}

void pack_std(const KinematicStd& k, const ControlStd& c, double* out) {
  out[0] = k.x;
  out[1] = k.y;
  out[2] = k.theta;
  out[3] = k.delta;
  out[4] = k.v;
  out[5] = c.a;
  out[6] = c.omega;
}

}  // namespace

ParticleSet::ParticleSet(std::vector<Particle> particles, AgentId ego) : particles_(std::move(particles)), ego_(ego) {
  normalize();
}

ParticleSet ParticleSet::around(const WorldState& truth, AgentId ego, int n, const NoiseConfig& noise, Rng& rng) {
  if (n < 1) throw std::invalid_argument("particle count must be positive");
  const BeliefState base = to_belief_state(truth);
  std::vector<Particle> ps(static_cast<std::size_t>(n));
  const auto& sx = noise.sigma_x_o;
  const auto& su = noise.sigma_u_o;
  for (auto& p : ps) {
    p.state = base;
    p.weight = 1.0 / n;
    for (AgentId id : {ego, other_agent(ego)}) {
      auto& a = p.state[id];
      a.kin.x = rng.normal(a.kin.x, sx.x);
      a.kin.y = rng.normal(a.kin.y, sx.y);
      a.kin.theta = rng.normal(a.kin.theta, sx.theta);
      a.kin.delta = rng.normal(a.kin.delta, sx.delta);
      a.kin.v = std::max(0.0, rng.normal(a.kin.v, sx.v));
      if (id != ego) a.control = {rng.normal(a.control.a, su.a), rng.normal(a.control.omega, su.omega)};
    }
  }
  ParticleSet out(std::move(ps), ego);
  const double m = out.signals_.yielding.mean();
  for (auto& p : out.particles_) p.state[other_agent(ego)].signal = {out.signals_.prompting.mean(), m};
  return out;
}

double ParticleSet::weight_sum() const {
  double s = 0.0;
  for (const auto& p : particles_) s += p.weight;
  return s;
}

void ParticleSet::normalize() {
  const double s = weight_sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateBeliefError("particle weights are degenerate");
  for (auto& p : particles_) p.weight /= s;
}

double ParticleSet::effective_size() const {
  double s2 = 0.0;
  for (const auto& p : particles_) s2 += p.weight * p.weight;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

SignalBelief signal_posterior_update(const SignalBelief& sb, bool observed, const PseudoCounts& counts) {
  SignalBelief out = sb;
  if (observed) {
    out.alpha += counts.positive;
  } else {
    out.beta += counts.negative;
  }
  return out;
}

ParticleSet predict(const ParticleSet& bel, const AgentAction& ego_action, const ModelParams& params,
                    std::span<const ControlInput> ego_tail, Rng& rng) {
  ParticleSet out = bel;
  const TransitionOptions opts{params.noise.sigma_gamma_0, true};
  for (auto& p : out.particles()) {
    TransitionSample ts = model_transition_sample(p.state, ego_action, bel.ego(), params, ego_tail, opts, rng);
    p.state = ts.next;
    p.weight *= ts.weight;
  }
  out.normalize();
  return out;
}

void kernel_update(Eigen::Ref<Eigen::MatrixXd> x, Eigen::Ref<Eigen::VectorXd> log_w,
                   const Eigen::Ref<const Eigen::VectorXd>& weights, const Eigen::Ref<const Eigen::VectorXd>& obs,
                   const Eigen::Ref<const Eigen::VectorXd>& obs_std, const Eigen::Ref<const Eigen::VectorXd>& floor_std,
                   Rng& rng) {
  const Eigen::Index n = x.rows();
  const double silverman = 1.06 * std::pow(static_cast<double>(n), -0.2);
  const Eigen::RowVectorXd mean = weights.transpose() * x;
  const Eigen::MatrixXd centred = x.rowwise() - mean;
  const Eigen::RowVectorXd var = weights.transpose() * centred.cwiseAbs2();
  const double log2pi = std::log(2.0 * std::numbers::pi);

  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(std::max(var(j), 0.0));
    const double h = std::min(std::max(silverman * sd, floor_std(j)), sd);
    const double h2 = h * h;
    const double shrink = var(j) > 0.0 ? std::sqrt(std::max(0.0, 1.0 - h2 / var(j))) : 1.0;
    const double r2 = obs_std(j) * obs_std(j);
    const double s = h2 + r2;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = shrink * x(i, j) + (1.0 - shrink) * mean(j);
      const double innov = obs(j) - m;
      if (s <= 0.0) {
        if (innov != 0.0) log_w(i) = -std::numeric_limits<double>::infinity();
        x(i, j) = m;
        continue;
      }
      log_w(i) += -0.5 * (innov * innov / s + std::log(s) + log2pi);
      const double gain = h2 / s;
      x(i, j) = rng.normal(m + gain * innov, std::sqrt(h2 * r2 / s));
    }
  }
}

ParticleSet update(const ParticleSet& bel, const WorldState& o, const NoiseConfig& noise, const BeliefConfig& cfg,
                   Rng& rng) {
  const AgentId ego = bel.ego();
  const AgentId w = other_agent(ego);
  const auto n = static_cast<Eigen::Index>(bel.size());
  constexpr int d = 2 * kDimsPerAgent;

  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd weights(n), log_w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = bel[static_cast<std::size_t>(i)];
    Eigen::Matrix<double, 1, d> row;
    pack(p.state[ego], row.data());
    pack(p.state[w], row.data() + kDimsPerAgent);
    x.row(i) = row;
    weights(i) = p.weight;
    log_w(i) = p.weight > 0.0 ? std::log(p.weight) : -std::numeric_limits<double>::infinity();
  }

  Eigen::Matrix<double, d, 1> obs, obs_std, floor_std;
  BeliefState ob = to_belief_state(o);
  pack(ob[ego], obs.data());
  pack(ob[w], obs.data() + kDimsPerAgent);
  pack_std(noise.sigma_x_o, noise.sigma_u_o, obs_std.data());
  pack_std(noise.sigma_x_o, noise.sigma_u_o, obs_std.data() + kDimsPerAgent);
  pack_std(noise.sigma_x_ego, ControlStd{0.0, 0.0}, floor_std.data());
  pack_std(noise.sigma_x_ov, noise.sigma_u_ov, floor_std.data() + kDimsPerAgent);

  kernel_update(x, log_w, weights, obs, obs_std, floor_std, rng);

  ParticleSet out = bel;
  auto& sig = out.signals();
  sig.prompting = signal_posterior_update(sig.prompting, o[w].signal.prompting, cfg.counts);
  sig.yielding = signal_posterior_update(sig.yielding, o[w].signal.yielding, cfg.counts);
  const SignalPairBelief other_sig{sig.prompting.mean(), sig.yielding.mean()};
  const SignalPairBelief ego_sig{o[ego].signal.prompting ? 1.0 : 0.0, o[ego].signal.yielding ? 1.0 : 0.0};

  const double max_lw = log_w.maxCoeff();
  if (!std::isfinite(max_lw)) throw DegenerateBeliefError("all particles have zero likelihood");
  const KinematicLimits limits;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& p = out.particles()[static_cast<std::size_t>(i)];
    const Eigen::Matrix<double, 1, d> row = x.row(i);
    unpack(row.data(), p.state[ego]);
    unpack(row.data() + kDimsPerAgent, p.state[w]);
    for (AgentId id : {ego, w}) clamp_state(p.state[id].kin, limits);
    p.state[w].control = clamp_control(p.state[w].control, limits);
    p.state[w].signal = other_sig;
    p.state[ego].signal = ego_sig;
    p.weight = std::exp(log_w(i) - max_lw);
  }
  out.normalize();
  if (out.effective_size() < cfg.resample_fraction * static_cast<double>(out.size())) out = resample(out, rng);
  return out;
}

double estimate(const ParticleSet& bel, const std::function<double(const BeliefState&)>& f) {
  double s = 0.0;
  for (const auto& p : bel.particles()) s += p.weight * f(p.state);
  return s;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, Rng& rng) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  if (n == 0) return idx;
  const double step = 1.0 / static_cast<double>(n);
  double u = rng.uniform() * step;
  double cum = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (u > cum && j + 1 < n) cum += weights[++j];
    idx[i] = j;
    u += step;
  }
  return idx;
}

ParticleSet resample(const ParticleSet& bel, Rng& rng) {
  std::vector<double> w(bel.size());
  for (std::size_t i = 0; i < bel.size(); ++i) w[i] = bel[i].weight;
  const auto idx = systematic_indices(w, rng);
  ParticleSet out = bel;
  const double uniform = 1.0 / static_cast<double>(bel.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.particles()[i] = bel[idx[i]];
    out.particles()[i].weight = uniform;
  }
  return out;
}

BeliefSummary summarize(const ParticleSet& bel) {
  BeliefSummary s;
  const AgentId w = other_agent(bel.ego());
  VehicleState m, m2;
  for (const auto& p : bel.particles()) {
    const auto& k = p.state[w].kin;
    const double wt = p.weight;
    m.x += wt * k.x;
    m.y += wt * k.y;
    m.theta += wt * k.theta;
    m.delta += wt * k.delta;
    m.v += wt * k.v;
    m2.x += wt * k.x * k.x;
    m2.y += wt * k.y * k.y;
    m2.theta += wt * k.theta * k.theta;
    m2.delta += wt * k.delta * k.delta;
    m2.v += wt * k.v * k.v;
    s.other_control_mean.a += wt * p.state[w].control.a;
    s.other_control_mean.omega += wt * p.state[w].control.omega;
    if (p.state[w].has_priority) s.p_other_priority += wt;
    if (p.state[bel.ego()].has_priority) s.p_ego_priority += wt;
  }
  auto sd = [](double mean, double sq) { return std::sqrt(std::max(0.0, sq - mean * mean)); };
  s.other_mean = m;
  s.other_std = {sd(m.x, m2.x), sd(m.y, m2.y), sd(m.theta, m2.theta), sd(m.delta, m2.delta), sd(m.v, m2.v)};
  s.signals = bel.signals();
  s.ess = bel.effective_size();
  return s;
}

}  // namespace aitraffic
