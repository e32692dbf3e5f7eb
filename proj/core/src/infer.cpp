#include "diffant/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffant/errors.hpp"

namespace diffant {

std::vector<int> to_framewise(const ActionSequence& actions, int horizon_frames) {
  if (horizon_frames < 1) throw std::invalid_argument("to_framewise: horizon must be >= 1");
  if (actions.classes.empty()) throw std::invalid_argument("to_framewise: empty actions");
  const double total = std::accumulate(actions.durations.begin(), actions.durations.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("to_framewise: durations must be normalized");

  const int n = actions.slots();
  std::vector<int> counts(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> remainders;  // (-fraction, index) for stable sort
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double exact = actions.durations[static_cast<std::size_t>(i)] * horizon_frames;
    counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
    assigned += counts[static_cast<std::size_t>(i)];
    remainders.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(remainders.begin(), remainders.end());  // largest fraction first, ties to earlier slot
  for (int k = 0; k < horizon_frames - assigned; ++k)
    ++counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k) % remainders.size()].second)];

  std::vector<int> frames;
  frames.reserve(static_cast<std::size_t>(horizon_frames));
  for (int i = 0; i < n; ++i)
    frames.insert(frames.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]),
                  actions.classes[static_cast<std::size_t>(i)]);
  return frames;
}

namespace {

AnticipationResult decode_result(const LatentSeq& z0_hat, const CodecParams& codec, int eos_id,
                                 int horizon_frames, int fallback_label, int sample_id) {
  AnticipationResult r;
  r.sample_id = sample_id;
  r.fallback_label = fallback_label;
  const ActionPrediction pred = predict_actions(z0_hat, codec);

  if (codec.multilabel) {
    r.class_scores = (1.0 / (1.0 + (-pred.class_logits.row(0).array()).exp())).matrix();
    Eigen::Index best;
    pred.class_logits.row(0).maxCoeff(&best);
    r.actions.classes = {static_cast<int>(best)};
    r.actions.durations = {1.0};
    return r;
  }

  r.actions = decode_prediction(pred, eos_id);
  if (r.actions.classes.empty()) {
    r.empty_future = true;
    r.frame_labels.assign(static_cast<std::size_t>(horizon_frames), fallback_label);
  } else {
    r.frame_labels = to_framewise(r.actions, horizon_frames);
  }
  return r;
}

}  // namespace

std::vector<AnticipationResult> anticipate(const Model& model, const NoiseSchedule& sched,
                                           const ObservedFeatures& observed, int horizon_frames,
                                           const InferenceOptions& opts) {
  if (opts.samples < 1) throw std::invalid_argument("anticipate: samples must be >= 1");
  if (opts.num_steps < 1 || opts.num_steps > sched.steps())
    throw std::invalid_argument("anticipate: num_steps out of range");
  const ModelConfig& cfg = model.config();
  if (cfg.schedule_steps != sched.steps())
    throw std::invalid_argument("anticipate: schedule length mismatch with model");

  const EncodedObservation enc = model.encode(observed);
  Eigen::Index fallback;
  enc.frame_logits.row(enc.frame_logits.rows() - 1).maxCoeff(&fallback);

  const CodecParams codec = model.codec();
  const std::vector<int> traj = make_trajectory(sched.steps(), opts.num_steps);
  const int m = cfg.queries;
  const int dp = cfg.dec_dim;
  const int n_samples = opts.deterministic ? 1 : opts.samples;

  std::vector<AnticipationResult> results;
  results.reserve(static_cast<std::size_t>(n_samples));
  for (int sample_id = 0; sample_id < n_samples; ++sample_id) {
    RngStream rng = RngStream(opts.seed).derive(static_cast<std::uint64_t>(sample_id));

    LatentSeq z;
    z.z = opts.deterministic ? Eigen::MatrixXd::Zero(m, dp) : rng.gaussian_matrix(m, dp);
    z.step = traj.front();

    LatentSeq z0_hat;
    std::vector<std::pair<int, ActionSequence>> intermediate;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      z.step = traj[k];
      if (opts.keep_intermediate) {
        // snapshot of the latent as it stands on arrival at this step
        const ActionPrediction pred = predict_actions(z, codec);
        intermediate.emplace_back(traj[k], decode_prediction(pred, cfg.resolved_eos()));
      }
      z0_hat = model.denoise(z, enc);
      if (k + 1 < traj.size()) {
        const int s_next = traj[k + 1];
        const Eigen::MatrixXd noise =
            opts.deterministic ? Eigen::MatrixXd() : rng.gaussian_matrix(m, dp);
        z = renoise_from_z0hat(sched, z0_hat, z, s_next, noise, opts.deterministic);
      }
    }

    AnticipationResult r = decode_result(z0_hat, codec, cfg.resolved_eos(), horizon_frames,
                                         static_cast<int>(fallback), sample_id);
    r.intermediate = std::move(intermediate);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace diffant
