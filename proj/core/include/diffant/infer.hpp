#pragma once

#include <cstdint>
#include <vector>

#include "diffant/codec.hpp"
#include "diffant/net.hpp"
#include "diffant/schedule.hpp"

namespace diffant {

struct AnticipationResult {
  ActionSequence actions;        // truncated at EOS, durations normalized
  std::vector<int> frame_labels; // length horizon_frames
  int sample_id = 0;
  bool empty_future = false;     // first slot decoded to EOS; fallback label used
  int fallback_label = -1;       // argmax class of the last observed frame
  // decoded sequence per visited inference step, in trajectory order
  std::vector<std::pair<int, ActionSequence>> intermediate;
  Eigen::VectorXd class_scores;  // multilabel: per-class probabilities
};

struct InferenceOptions {
  bool deterministic = true;
  int num_steps = 25;
  int samples = 1;           // ignored in deterministic mode
  bool keep_intermediate = false;
  std::uint64_t seed = 0;
};

// Largest-remainder expansion of normalized durations into exactly
// `horizon_frames` labels.
std::vector<int> to_framewise(const ActionSequence& actions, int horizon_frames);

// Runs the reverse trajectory: init z (zeros or Gaussian), repeatedly predict
// the clean latent and re-noise to the next step, then decode.
std::vector<AnticipationResult> anticipate(const Model& model, const NoiseSchedule& sched,
                                           const ObservedFeatures& observed, int horizon_frames,
                                           const InferenceOptions& opts);

}  // namespace diffant
