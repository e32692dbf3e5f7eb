#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace diffant {

// Latent future-action block: M action slots x D' embedding dims, tagged with
// the diffusion step it lives at (0 = clean).
struct LatentSeq {
  Eigen::MatrixXd z;
  int step = 0;
};

enum class ScheduleKind { linear, sqrt_alpha_bar };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

// Precomputed beta/alpha/alpha_bar tables, 1-based step indexing.
class NoiseSchedule {
public:
  NoiseSchedule(ScheduleKind kind, std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }
  double beta(int s) const;       // s in [1, S]
  double alpha(int s) const;      // 1 - beta(s)
  double alpha_bar(int s) const;  // s in [0, S], alpha_bar(0) == 1

private:
  ScheduleKind kind_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // index 0..S
};

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_min, double beta_max);

// q(z_s | z_0) = N(sqrt(abar_s) z0, (1 - abar_s) I) via reparameterization.
LatentSeq forward_marginal(const NoiseSchedule& sched, const LatentSeq& z0, int s,
                           const Eigen::MatrixXd& noise);

// One forward transition q(z_s | z_{s-1}); z_prev must sit at step s-1.
LatentSeq forward_step(const NoiseSchedule& sched, const LatentSeq& z_prev, int s,
                       const Eigen::MatrixXd& noise);

// Reverse move: re-noise a predicted clean latent down to step s_prev.
// Stochastic mode draws the forward marginal with the supplied noise;
// deterministic mode is the eta=0 skip-step update computed from the current
// latent (noise argument ignored).
LatentSeq renoise_from_z0hat(const NoiseSchedule& sched, const LatentSeq& z0_hat,
                             const LatentSeq& current, int s_prev, const Eigen::MatrixXd& noise,
                             bool deterministic);

// Skip-step inference schedule: num_steps indices, evenly strided, strictly
// decreasing, always ending at 1; any remainder sits at the high end.
std::vector<int> make_trajectory(int steps, int num_steps);

}  // namespace diffant
