#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aitraffic/model.hpp"
#include "aitraffic/rng.hpp"

namespace aitraffic {

struct Particle {
  BeliefState state;
  double weight = 1.0;
};

/// Beta pseudo-counts for one binary signal of the other agent.
struct SignalBelief {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
};

struct SignalBeliefPair {
  SignalBelief prompting;
  SignalBelief yielding;
};

struct PseudoCounts {
  double positive = 8.0;
  double negative = 0.15;  // M_B
};

class DegenerateBeliefError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BeliefConfig {
  int particles = 100;
  double resample_fraction = 0.5;  // resample when ESS < fraction * N
  PseudoCounts counts;
};

class ParticleSet {
 public:
  ParticleSet() = default;
  ParticleSet(std::vector<Particle> particles, AgentId ego);

  /// Particles around `truth` with observation-noise spread; other's signals
  /// start at Beta(1,1).
  static ParticleSet around(const WorldState& truth, AgentId ego, int n, const NoiseConfig& noise, Rng& rng);

  std::size_t size() const { return particles_.size(); }
  AgentId ego() const { return ego_; }
  std::vector<Particle>& particles() { return particles_; }
  const std::vector<Particle>& particles() const { return particles_; }
  const Particle& operator[](std::size_t i) const { return particles_[i]; }

  SignalBeliefPair& signals() { return signals_; }
  const SignalBeliefPair& signals() const { return signals_; }

  /// Divides by the weight sum; throws DegenerateBeliefError when it is not positive.
  void normalize();
  double effective_size() const;
  double weight_sum() const;

 private:
  std::vector<Particle> particles_;
  SignalBeliefPair signals_;
  AgentId ego_ = AgentId::A;
};

SignalBelief signal_posterior_update(const SignalBelief& sb, bool observed, const PseudoCounts& counts = {});

/// Advances every particle through the agent's transition model and applies the
/// projected-normative weight.
ParticleSet predict(const ParticleSet& bel, const AgentAction& ego_action, const ModelParams& params,
                    std::span<const ControlInput> ego_tail, Rng& rng);

ParticleSet update(const ParticleSet& bel, const WorldState& o, const NoiseConfig& noise, const BeliefConfig& cfg,
                   Rng& rng);

double estimate(const ParticleSet& bel, const std::function<double(const BeliefState&)>& f);

/// Systematic resampling; output weights are uniform.
ParticleSet resample(const ParticleSet& bel, Rng& rng);

/// Systematic resampling indices for normalized weights.
std::vector<std::size_t> systematic_indices(std::span<const double> weights, Rng& rng);

/// Conjugate Gaussian-kernel update of a particle cloud (rows are particles).
/// Kernels are centred with Liu-West shrinkage, bandwidth per column follows
/// Silverman's rule floored at `floor_std` and capped at the cloud std. Rows are
/// replaced by draws from their kernel posterior; log_w accumulates the
/// kernel marginal likelihood of `obs`.
void kernel_update(Eigen::Ref<Eigen::MatrixXd> x, Eigen::Ref<Eigen::VectorXd> log_w,
                   const Eigen::Ref<const Eigen::VectorXd>& weights, const Eigen::Ref<const Eigen::VectorXd>& obs,
                   const Eigen::Ref<const Eigen::VectorXd>& obs_std, const Eigen::Ref<const Eigen::VectorXd>& floor_std,
                   Rng& rng);

struct BeliefSummary {
  VehicleState other_mean;
  VehicleState other_std;
  ControlInput other_control_mean;
  SignalBeliefPair signals;
  double ess = 0.0;
  double p_other_priority = 0.0;
  double p_ego_priority = 0.0;
};

BeliefSummary summarize(const ParticleSet& bel);

}  // namespace aitraffic
