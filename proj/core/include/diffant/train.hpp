#pragma once

#include <cstdint>
#include <vector>

#include "diffant/net.hpp"
#include "diffant/schedule.hpp"

namespace diffant {

struct LossBreakdown {
  double l_emb = 0.0;        // importance-weighted embedding reconstruction
  double l_pred_class = 0.0;
  double l_pred_dur = 0.0;
  double l_seg = 0.0;
  double l_smooth = 0.0;     // unweighted; total applies lambda_smooth
  double total = 0.0;
};

// Loss-aware diffusion-step sampling: p_s proportional to sqrt of the mean of
// the last `history` squared losses at step s; uniform with weight 1 until
// every step has a full history. Returned weight is 1/(S * p_s).
class StepSampler {
public:
  explicit StepSampler(int steps, int history = 10);

  std::pair<int, double> sample(RngStream& rng);
  void record(int s, double loss);
  bool warmed_up() const;
  std::vector<double> probabilities() const;  // length S, sums to 1

private:
  int steps_;
  int history_;
  std::vector<std::vector<double>> losses_;  // ring per step, capped at history_
  std::vector<std::size_t> next_;            // ring cursors
  std::vector<std::size_t> filled_;
};

class AdamW {
public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // decoupled weight decay; only applied to tensors flagged for decay
  void step(ParamStore& params, double lr, double weight_decay);
  long steps_taken() const { return t_; }

private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainOptions {
  int epochs = 60;
  int batch = 16;
  double lr = 1e-3;
  int warmup_epochs = 10;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  double lambda_smooth = 0.15;
  double tau = 4.0;
  double beta0 = -1.0;  // < 0: use the schedule's first beta
  std::vector<double> alphas = {0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 1;
};

struct TrainSample {
  Eigen::MatrixXd features;      // L x K observed frames
  std::vector<int> frame_labels; // length L
  ActionSequence future;         // fitted to M slots (EOS padded)
  std::vector<int> future_set;   // multilabel targets (class ids)
};

// One training graph: all loss terms as tape nodes so tests can backprop each
// term in isolation.
struct LossGraph {
  Var l_emb, l_pred_class, l_pred_dur, l_seg, l_smooth, total;
  double raw_emb = 0.0;  // unweighted embedding loss, feeds the step sampler
  int step = 0;
};

LossGraph build_loss_graph(const Model& model, Tape& tape, const TrainSample& sample,
                           const NoiseSchedule& sched, int s, double weight,
                           const TrainOptions& opts, RngStream& noise_rng,
                           const ForwardOptions& fwd = {});

LossBreakdown breakdown_of(const Tape& tape, const LossGraph& g, double lambda_smooth);

class Trainer {
public:
  Trainer(Model& model, const NoiseSchedule& sched, TrainOptions opts);

  // linear warm-up then cosine annealing
  double lr_for_epoch(int epoch) const;
  void set_epoch(int epoch) { epoch_ = epoch; }

  LossBreakdown train_step(const std::vector<TrainSample>& batch, RngStream& rng);

  StepSampler& sampler() { return sampler_; }
  double beta0() const { return beta0_; }

private:
  Model& model_;
  const NoiseSchedule& sched_;
  TrainOptions opts_;
  StepSampler sampler_;
  AdamW adam_;
  double beta0_;
  int epoch_ = 0;
};

}  // namespace diffant
