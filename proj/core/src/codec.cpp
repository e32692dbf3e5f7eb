#include "diffant/codec.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "diffant/errors.hpp"
#include "diffant/io.hpp"

namespace diffant {

ActionVocabulary::ActionVocabulary(std::vector<std::string> names, int eos_id)
    : names_(std::move(names)), eos_id_(eos_id) {
  if (names_.size() < 2) throw std::invalid_argument("vocabulary needs >= 2 classes");
  if (eos_id_ < 0 || eos_id_ >= size()) throw std::invalid_argument("eos_id out of range");
  std::set<std::string> uniq(names_.begin(), names_.end());
  if (uniq.size() != names_.size()) throw std::invalid_argument("duplicate class names");
}

const std::string& ActionVocabulary::name(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("class id out of range");
  return names_[static_cast<std::size_t>(id)];
}

int ActionVocabulary::id(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  throw DataError("unknown label: " + name);
}

ActionVocabulary ActionVocabulary::with_eos(std::vector<std::string> action_names) {
  action_names.push_back("EOS");
  const int eos = static_cast<int>(action_names.size()) - 1;
  return ActionVocabulary(std::move(action_names), eos);
}

void save_vocabulary(const std::filesystem::path& path, const ActionVocabulary& vocab) {
  std::ostringstream out;
  for (int i = 0; i < vocab.size(); ++i) out << i << " " << vocab.name(i) << "\n";
  atomic_write(path, out.str());
}

ActionVocabulary load_vocabulary(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> names;
  int id;
  std::string name;
  while (in >> id >> name) {
    if (id != static_cast<int>(names.size()))
      throw DataError("vocabulary ids must be dense and ordered: " + path.string());
    names.push_back(name);
  }
  int eos = -1;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == "EOS") eos = static_cast<int>(i);
  if (eos < 0) throw DataError("vocabulary missing EOS: " + path.string());
  return ActionVocabulary(std::move(names), eos);
}

int ActionSequence::count_non_eos(int eos_id) const {
  int n = 0;
  for (int c : classes) {
    if (c == eos_id) break;
    ++n;
  }
  return n;
}

ActionSequence truncate_at_eos(const ActionSequence& seq, int eos_id) {
  ActionSequence out;
  for (std::size_t i = 0; i < seq.classes.size(); ++i) {
    if (seq.classes[i] == eos_id) break;
    out.classes.push_back(seq.classes[i]);
    out.durations.push_back(i < seq.durations.size() ? seq.durations[i] : 0.0);
  }
  return out;
}

std::vector<double> normalize_durations(const std::vector<double>& durations) {
  if (durations.empty()) throw DataError("normalize_durations: empty future");
  double sum = 0.0;
  for (double d : durations) {
    if (!(d > 0.0)) throw std::invalid_argument("normalize_durations: entries must be > 0");
    sum += d;
  }
  std::vector<double> out(durations.size());
  for (std::size_t i = 0; i < durations.size(); ++i) out[i] = durations[i] / sum;
  return out;
}

ActionSequence fit_to_slots(const ActionSequence& seq, int slots, int eos_id) {
  ActionSequence out = seq;
  if (out.slots() > slots) {
    out.classes.resize(static_cast<std::size_t>(slots));
    out.durations.resize(static_cast<std::size_t>(slots));
    out.durations = normalize_durations(out.durations);
  }
  while (out.slots() < slots) {
    out.classes.push_back(eos_id);
    out.durations.push_back(0.0);
  }
  return out;
}

LatentSeq embed_actions(const ActionSequence& a, const CodecParams& p) {
  const int c = static_cast<int>(p.emb_class.rows());
  for (int id : a.classes)
    if (id < 0 || id >= c) throw std::invalid_argument("embed_actions: class id out of range");
  const int m = a.slots();

  if (p.multilabel) {
    // class-only mode: multi-hot row times the class embedding table
    Eigen::RowVectorXd hot = Eigen::RowVectorXd::Zero(c);
    for (int id : a.classes) hot(id) = 1.0;
    LatentSeq out;
    out.z = hot * p.emb_class;
    out.step = 0;
    return out;
  }

  if (static_cast<int>(a.durations.size()) != m)
    throw std::invalid_argument("embed_actions: classes/durations length mismatch");
  const Eigen::Index d_c = p.emb_class.cols();
  const Eigen::Index d_t = p.emb_dur_w.cols();
  Eigen::MatrixXd cat(m, d_c + d_t);
  for (int i = 0; i < m; ++i) {
    cat.row(i).head(d_c) = p.emb_class.row(a.classes[static_cast<std::size_t>(i)]);
    cat.row(i).tail(d_t) =
        a.durations[static_cast<std::size_t>(i)] * p.emb_dur_w.row(0) + p.emb_dur_b.row(0);
  }
  LatentSeq out;
  out.z = (cat * p.merge_w).rowwise() + p.merge_b.row(0);
  out.step = 0;
  return out;
}

LatentSeq embed_action_set(const std::vector<int>& class_set, int num_classes,
                           const CodecParams& p) {
  ActionSequence a;
  a.classes = class_set;
  a.durations.assign(class_set.size(), 0.0);
  (void)num_classes;
  return embed_actions(a, p);
}

LatentSeq sample_z0(const ActionSequence& a, const CodecParams& p, double beta0,
                    const Eigen::MatrixXd& noise) {
  if (beta0 < 0.0) throw std::invalid_argument("sample_z0: beta0 must be >= 0");
  LatentSeq z = embed_actions(a, p);
  if (noise.rows() != z.z.rows() || noise.cols() != z.z.cols())
    throw std::invalid_argument("sample_z0: noise shape mismatch");
  z.z += std::sqrt(beta0) * noise;
  return z;
}

ActionPrediction predict_actions(const LatentSeq& z0_tilde, const CodecParams& p) {
  if (!z0_tilde.z.allFinite()) throw NumericError("predict_actions: non-finite latent");
  ActionPrediction pred;
  pred.class_logits = (z0_tilde.z * p.head_class_w).rowwise() + p.head_class_b.row(0);
  if (p.multilabel) {
    pred.durations.resize(z0_tilde.z.rows(), 1);
    pred.durations.setZero();
  } else {
    pred.durations =
        ((z0_tilde.z * p.head_dur_w).rowwise() + p.head_dur_b.row(0)).array().exp().matrix();
  }
  return pred;
}

ActionSequence decode_prediction(const ActionPrediction& pred, int eos_id) {
  ActionSequence raw;
  for (Eigen::Index i = 0; i < pred.class_logits.rows(); ++i) {
    Eigen::Index best;
    pred.class_logits.row(i).maxCoeff(&best);
    raw.classes.push_back(static_cast<int>(best));
    raw.durations.push_back(pred.durations(i, 0));
  }
  ActionSequence kept = truncate_at_eos(raw, eos_id);
  if (!kept.classes.empty()) kept.durations = normalize_durations(kept.durations);
  return kept;
}

}  // namespace diffant
