#include "diffant/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace diffant {
namespace {

void check_latent(const LatentSeq& z, const Eigen::MatrixXd& noise, const char* op) {
  if (noise.rows() != z.z.rows() || noise.cols() != z.z.cols())
    throw std::invalid_argument(std::string(op) + ": noise shape mismatch");
}

}  // namespace

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "sqrt") return ScheduleKind::sqrt_alpha_bar;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "sqrt";
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<double> betas)
    : kind_(kind), betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("schedule: S must be >= 1");
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0))
      throw std::invalid_argument("schedule: beta out of (0,1)");
    alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - betas_[i]);
  }
}

double NoiseSchedule::beta(int s) const {
  if (s < 1 || s > steps()) throw std::invalid_argument("schedule: step out of range");
  return betas_[static_cast<std::size_t>(s - 1)];
}

double NoiseSchedule::alpha(int s) const { return 1.0 - beta(s); }

double NoiseSchedule::alpha_bar(int s) const {
  if (s < 0 || s > steps()) throw std::invalid_argument("schedule: step out of range");
  return alpha_bars_[static_cast<std::size_t>(s)];
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_min, double beta_max) {
  if (steps < 1) throw std::invalid_argument("make_schedule: S must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");

  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (kind == ScheduleKind::linear) {
    if (steps == 1) {
      betas[0] = beta_min;
    } else {
      for (int s = 0; s < steps; ++s)
        betas[static_cast<std::size_t>(s)] =
            beta_min + (beta_max - beta_min) * static_cast<double>(s) / (steps - 1);
    }
  } else {
    // sqrt alpha_bar profile from text diffusion: abar(u) = 1 - sqrt(u + 1e-4)
    // on u in [0, 1], discretized into per-step betas (capped at 0.999).
    auto abar = [](double u) { return 1.0 - std::sqrt(u + 1e-4); };
    for (int s = 1; s <= steps; ++s) {
      const double prev = abar(static_cast<double>(s - 1) / steps);
      const double cur = abar(static_cast<double>(s) / steps);
      betas[static_cast<std::size_t>(s - 1)] = std::min(1.0 - cur / prev, 0.999);
    }
  }
  return NoiseSchedule(kind, std::move(betas));
}

LatentSeq forward_marginal(const NoiseSchedule& sched, const LatentSeq& z0, int s,
                           const Eigen::MatrixXd& noise) {
  if (s < 1 || s > sched.steps()) throw std::invalid_argument("forward_marginal: step out of range");
  check_latent(z0, noise, "forward_marginal");
  const double ab = sched.alpha_bar(s);
  LatentSeq out;
  out.z = std::sqrt(ab) * z0.z + std::sqrt(1.0 - ab) * noise;
  out.step = s;
  return out;
}

LatentSeq forward_step(const NoiseSchedule& sched, const LatentSeq& z_prev, int s,
                       const Eigen::MatrixXd& noise) {
  if (s < 1 || s > sched.steps()) throw std::invalid_argument("forward_step: step out of range");
  if (z_prev.step != s - 1) throw std::invalid_argument("forward_step: z_prev not at step s-1");
  check_latent(z_prev, noise, "forward_step");
  const double b = sched.beta(s);
  LatentSeq out;
  out.z = std::sqrt(1.0 - b) * z_prev.z + std::sqrt(b) * noise;
  out.step = s;
  return out;
}

LatentSeq renoise_from_z0hat(const NoiseSchedule& sched, const LatentSeq& z0_hat,
                             const LatentSeq& current, int s_prev, const Eigen::MatrixXd& noise,
                             bool deterministic) {
  if (s_prev < 1 || s_prev >= current.step)
    throw std::invalid_argument("renoise_from_z0hat: need 1 <= s_prev < current step");
  if (!deterministic) return forward_marginal(sched, z0_hat, s_prev, noise);

  const double ab_s = sched.alpha_bar(current.step);
  const double ab_prev = sched.alpha_bar(s_prev);
  const Eigen::MatrixXd eps_hat =
      (current.z - std::sqrt(ab_s) * z0_hat.z) / std::sqrt(1.0 - ab_s);
  LatentSeq out;
  out.z = std::sqrt(ab_prev) * z0_hat.z + std::sqrt(1.0 - ab_prev) * eps_hat;
  out.step = s_prev;
  return out;
}

std::vector<int> make_trajectory(int steps, int num_steps) {
  if (num_steps < 1 || num_steps > steps)
    throw std::invalid_argument("make_trajectory: need 1 <= num_steps <= S");
  const int stride = steps / num_steps;
  std::vector<int> traj(static_cast<std::size_t>(num_steps));
  for (int k = 0; k < num_steps; ++k)
    traj[static_cast<std::size_t>(num_steps - 1 - k)] = 1 + k * stride;
  return traj;
}

}  // namespace diffant
