#include "diffant/train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "diffant/errors.hpp"

namespace diffant {

StepSampler::StepSampler(int steps, int history) : steps_(steps), history_(history) {
  if (steps < 1 || history < 1) throw std::invalid_argument("StepSampler: bad sizes");
  losses_.assign(static_cast<std::size_t>(steps), {});
  for (auto& l : losses_) l.assign(static_cast<std::size_t>(history), 0.0);
  next_.assign(static_cast<std::size_t>(steps), 0);
  filled_.assign(static_cast<std::size_t>(steps), 0);
}

bool StepSampler::warmed_up() const {
  for (std::size_t s = 0; s < filled_.size(); ++s)
    if (filled_[s] < static_cast<std::size_t>(history_)) return false;
  return true;
}

std::vector<double> StepSampler::probabilities() const {
  std::vector<double> p(static_cast<std::size_t>(steps_), 1.0 / steps_);
  if (!warmed_up()) return p;
  double total = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    double sq = 0.0;
    for (double l : losses_[s]) sq += l * l;
    p[s] = std::max(std::sqrt(sq / history_), 1e-12);
    total += p[s];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::pair<int, double> StepSampler::sample(RngStream& rng) {
  if (!warmed_up()) return {rng.uniform_int(1, steps_), 1.0};
  const std::vector<double> p = probabilities();
  const int s = rng.categorical(p) + 1;
  return {s, 1.0 / (steps_ * p[static_cast<std::size_t>(s - 1)])};
}

void StepSampler::record(int s, double loss) {
  if (s < 1 || s > steps_) throw std::invalid_argument("StepSampler: step out of range");
  const std::size_t i = static_cast<std::size_t>(s - 1);
  losses_[i][next_[i]] = loss;
  next_[i] = (next_[i] + 1) % static_cast<std::size_t>(history_);
  if (filled_[i] < static_cast<std::size_t>(history_)) ++filled_[i];
}

void AdamW::step(ParamStore& params, double lr, double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& p : params.entries()) {
    p.adam_m = beta1_ * p.adam_m + (1.0 - beta1_) * p.grad;
    p.adam_v = beta2_ * p.adam_v.array() + (1.0 - beta2_) * p.grad.array().square();
    const Eigen::ArrayXXd mhat = p.adam_m.array() / bc1;
    const Eigen::ArrayXXd vhat = p.adam_v.array() / bc2;
    p.value.array() -= lr * mhat / (vhat.sqrt() + eps_);
    if (p.decay && weight_decay > 0.0) p.value *= 1.0 - lr * weight_decay;
  }
}

LossGraph build_loss_graph(const Model& model, Tape& t, const TrainSample& sample,
                           const NoiseSchedule& sched, int s, double weight,
                           const TrainOptions& opts, RngStream& noise_rng,
                           const ForwardOptions& fwd) {
  const ModelConfig& cfg = model.config();
  LossGraph g;
  g.step = s;

  Var frame_logits;
  Var enc = model.build_encoder(t, sample.features, &frame_logits, fwd);
  g.l_seg = t.cross_entropy_rows(frame_logits, sample.frame_labels);
  g.l_smooth = t.clipped_delta_sq(t.log_softmax_rows(frame_logits), opts.tau);

  Var emb = model.build_embed_actions(t, sample.future);
  const Eigen::Index m = t.value(emb).rows();
  const Eigen::Index dp = t.value(emb).cols();

  const double beta0 = opts.beta0 >= 0.0 ? opts.beta0 : sched.beta(1);
  Var z0 = t.add(emb, t.constant(std::sqrt(beta0) * noise_rng.gaussian_matrix(m, dp)));
  const double ab = sched.alpha_bar(s);
  Var z_s = t.add(t.scale(z0, std::sqrt(ab)),
                  t.constant(std::sqrt(1.0 - ab) * noise_rng.gaussian_matrix(m, dp)));
  Var z0_hat = model.build_denoiser(t, z_s, s, enc, fwd);

  // targets z0 for s >= 2, the noise-free embedding for s == 1
  Var l_emb_raw = (s >= 2) ? t.mse(z0_hat, z0) : t.mse(z0_hat, emb);
  g.raw_emb = t.scalar(l_emb_raw);
  g.l_emb = t.scale(l_emb_raw, weight);

  auto [logits, dur] = model.build_predict(t, z0);
  if (cfg.multilabel) {
    Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(1, cfg.classes);
    for (int c : sample.future_set) targets(0, c) = 1.0;
    g.l_pred_class = t.binary_ce_logits(logits, targets);
    g.l_pred_dur = t.constant(Eigen::MatrixXd::Zero(1, 1));
  } else {
    g.l_pred_class = t.cross_entropy_rows(logits, sample.future.classes);
    Eigen::MatrixXd dur_target(m, 1);
    Eigen::VectorXd dur_weight(m);
    const int eos = cfg.resolved_eos();
    for (Eigen::Index i = 0; i < m; ++i) {
      dur_target(i, 0) = sample.future.durations[static_cast<std::size_t>(i)];
      dur_weight(i) = sample.future.classes[static_cast<std::size_t>(i)] == eos ? 0.0 : 1.0;
    }
    g.l_pred_dur = t.weighted_row_mse(dur, dur_target, dur_weight);
  }

  g.total = t.weighted_sum({g.l_emb, g.l_pred_class, g.l_pred_dur, g.l_seg, g.l_smooth},
                           {1.0, 1.0, 1.0, 1.0, opts.lambda_smooth});
  return g;
}

LossBreakdown breakdown_of(const Tape& t, const LossGraph& g, double lambda_smooth) {
  LossBreakdown b;
  b.l_emb = t.scalar(g.l_emb);
  b.l_pred_class = t.scalar(g.l_pred_class);
  b.l_pred_dur = t.scalar(g.l_pred_dur);
  b.l_seg = t.scalar(g.l_seg);
  b.l_smooth = t.scalar(g.l_smooth);
  b.total = t.scalar(g.total);
  (void)lambda_smooth;
  return b;
}

Trainer::Trainer(Model& model, const NoiseSchedule& sched, TrainOptions opts)
    : model_(model),
      sched_(sched),
      opts_(std::move(opts)),
      sampler_(sched.steps()),
      beta0_(opts_.beta0 >= 0.0 ? opts_.beta0 : sched.beta(1)) {
  if (opts_.batch < 1 || opts_.epochs < 1) throw ConfigError("train: batch/epochs must be >= 1");
  if (opts_.warmup_epochs < 0 || opts_.warmup_epochs > opts_.epochs)
    throw ConfigError("train: warmup_epochs out of range");
}

double Trainer::lr_for_epoch(int epoch) const {
  const int w = opts_.warmup_epochs;
  if (w > 0 && epoch < w) return opts_.lr * static_cast<double>(epoch + 1) / w;
  const int span = std::max(opts_.epochs - w, 1);
  const double progress = static_cast<double>(epoch - w) / span;
  return opts_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

LossBreakdown Trainer::train_step(const std::vector<TrainSample>& batch, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  model_.params().zero_grads();

  LossBreakdown sum;
  for (const TrainSample& sample : batch) {
    const auto [s, weight] = sampler_.sample(rng);
    Tape tape(model_.params());
    ForwardOptions fwd;
    fwd.training = true;
    fwd.rng = &rng;
    LossGraph g = build_loss_graph(model_, tape, sample, sched_, s, weight, opts_, rng, fwd);

    const LossBreakdown b = breakdown_of(tape, g, opts_.lambda_smooth);
    if (!std::isfinite(b.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at diffusion step " << s << ": emb=" << b.l_emb
          << " cls=" << b.l_pred_class << " dur=" << b.l_pred_dur << " seg=" << b.l_seg
          << " smooth=" << b.l_smooth;
      throw NumericError(msg.str());
    }
    tape.backward(g.total);
    sampler_.record(s, g.raw_emb);

    sum.l_emb += b.l_emb;
    sum.l_pred_class += b.l_pred_class;
    sum.l_pred_dur += b.l_pred_dur;
    sum.l_seg += b.l_seg;
    sum.l_smooth += b.l_smooth;
    sum.total += b.total;
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  model_.params().scale_grads(inv);
  const double norm = model_.params().grad_norm();
  if (opts_.grad_clip > 0.0 && norm > opts_.grad_clip)
    model_.params().scale_grads(opts_.grad_clip / norm);
  adam_.step(model_.params(), lr_for_epoch(epoch_), opts_.weight_decay);

  sum.l_emb *= inv;
  sum.l_pred_class *= inv;
  sum.l_pred_dur *= inv;
  sum.l_seg *= inv;
  sum.l_smooth *= inv;
  sum.total *= inv;
  return sum;
}

}  // namespace diffant
