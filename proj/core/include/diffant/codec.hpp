#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "diffant/schedule.hpp"

namespace diffant {

// Class labels plus the reserved end-of-sequence class.
class ActionVocabulary {
public:
  ActionVocabulary() = default;
  ActionVocabulary(std::vector<std::string> names, int eos_id);

  int size() const { return static_cast<int>(names_.size()); }
  int eos_id() const { return eos_id_; }
  const std::string& name(int id) const;
  int id(const std::string& name) const;  // throws on unknown label
  const std::vector<std::string>& names() const { return names_; }

  static ActionVocabulary with_eos(std::vector<std::string> action_names);  // appends "EOS"

private:
  std::vector<std::string> names_;
  int eos_id_ = -1;
};

// `id name` lines, EOS listed explicitly.
void save_vocabulary(const std::filesystem::path& path, const ActionVocabulary& vocab);
ActionVocabulary load_vocabulary(const std::filesystem::path& path);

// Future action slots: class ids plus durations as fractions of the horizon.
struct ActionSequence {
  std::vector<int> classes;
  std::vector<double> durations;

  int slots() const { return static_cast<int>(classes.size()); }
  int count_non_eos(int eos_id) const;
  bool operator==(const ActionSequence&) const = default;
};

// Everything after the first EOS is dropped; the result never contains EOS.
ActionSequence truncate_at_eos(const ActionSequence& seq, int eos_id);

// Scale positive durations to sum to 1. Empty input is the caller's
// empty-future signal and is rejected here.
std::vector<double> normalize_durations(const std::vector<double>& durations);

// Pads with (EOS, 0) slots up to M, or truncates to the first M actions and
// renormalizes durations.
ActionSequence fit_to_slots(const ActionSequence& seq, int slots, int eos_id);

// Plain (tape-free) codec parameters; the trainable copies live in the model's
// parameter store and are mirrored here for inference-time decoding.
struct CodecParams {
  Eigen::MatrixXd emb_class;     // C x d_c
  Eigen::MatrixXd emb_dur_w;     // 1 x d_t
  Eigen::MatrixXd emb_dur_b;     // 1 x d_t
  Eigen::MatrixXd merge_w;       // (d_c + d_t) x D'
  Eigen::MatrixXd merge_b;       // 1 x D'
  Eigen::MatrixXd head_class_w;  // D' x C
  Eigen::MatrixXd head_class_b;  // 1 x C
  Eigen::MatrixXd head_dur_w;    // D' x 1
  Eigen::MatrixXd head_dur_b;    // 1 x 1
  bool multilabel = false;       // class-only mode: multi-hot x emb_class, no f_a, no durations
};

struct ActionPrediction {
  Eigen::MatrixXd class_logits;  // M x C
  Eigen::MatrixXd durations;     // M x 1, strictly positive (exp head)
};

// Emb((a_c, a_t)) = f_a([Emb_c(a_c), Emb_t(a_t)]); class-only mode returns
// multihot x emb_class directly.
LatentSeq embed_actions(const ActionSequence& a, const CodecParams& p);
LatentSeq embed_action_set(const std::vector<int>& class_set, int num_classes,
                           const CodecParams& p);

// q_phi(z0 | a) = N(Emb(a), beta0 I) via reparameterization.
LatentSeq sample_z0(const ActionSequence& a, const CodecParams& p, double beta0,
                    const Eigen::MatrixXd& noise);

ActionPrediction predict_actions(const LatentSeq& z0_tilde, const CodecParams& p);

// argmax classes + normalized durations of the non-EOS prefix; empty when the
// first slot already decodes to EOS.
ActionSequence decode_prediction(const ActionPrediction& pred, int eos_id);

}  // namespace diffant
