#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diffant/codec.hpp"
#include "diffant/net.hpp"

namespace diffant {

struct DurationLaw {
  int min_frames = 20;
  int max_frames = 60;
};

struct BranchRule {
  std::vector<int> actions;
  double prob = 1.0;
};

// One activity: a shared prefix, then (optionally) a weighted branch choice.
struct ActivityRule {
  std::string name;
  std::vector<int> prefix;
  std::vector<BranchRule> branches;  // empty: the prefix is the whole video
};

struct GrammarSpec {
  ActionVocabulary vocab;
  std::vector<ActivityRule> activities;
  std::vector<DurationLaw> durations;  // indexed by class id
  int feature_dim = 32;
  double noise_sigma = 0.5;
  std::uint64_t proto_seed = 42;  // class prototype vectors; shared across splits

  void validate() const;
};

// Built-in grammars for the synthetic benchmark. `ambiguity` is the
// probability of the first branch at each two-way choice point; 0 collapses
// every activity to a single fixed continuation.
GrammarSpec deterministic_grammar(int feature_dim = 32, double noise_sigma = 0.5);
GrammarSpec ambiguous_grammar(double ambiguity = 0.5, int feature_dim = 32,
                              double noise_sigma = 0.5);

struct VideoRecord {
  std::string video_id;
  std::vector<int> frame_labels;  // length T
  Eigen::MatrixXd features;       // T x K
  std::string split;
};

// Unit-norm class prototype vectors, keyed by spec.proto_seed.
std::vector<Eigen::VectorXd> class_prototypes(const GrammarSpec& spec);

std::vector<VideoRecord> generate_dataset(const GrammarSpec& spec, int n_videos,
                                          std::uint64_t seed, const std::string& split = "train");

// Exact continuation distribution given an observed label prefix: each entry
// is (future class sequence from the cut point, probability). The first entry
// of a sequence is the observed segment's remainder class when the cut lands
// inside a segment.
struct Continuation {
  std::vector<int> classes;
  double prob = 0.0;
};
std::vector<Continuation> continuations(const GrammarSpec& spec,
                                        std::span<const int> observed_labels);

struct SegmentSpan {
  int class_id;
  int begin;
  int end;  // exclusive
};
std::vector<SegmentSpan> run_length_segments(std::span<const int> frame_labels);

// First floor(alpha*T) frames as input; the rest run-length encoded into an
// M-slot future with horizon-relative durations.
struct ObservationSplit {
  ObservedFeatures observed;
  ActionSequence future;          // fitted to M slots
  std::vector<int> future_set;    // distinct non-EOS classes in the horizon
  int horizon_frames = 0;
};
ObservationSplit split_observation(const VideoRecord& video, double alpha, int slots, int eos_id);

// stride subsampling keeps frames 0, stride, 2*stride, ...
VideoRecord stride_sample(const VideoRecord& video, int stride);

// ---- on-disk dataset ----
// Layout: <dir>/vocab.txt, <dir>/manifest.tsv, labels/<id>.txt, features/<id>.feat
struct DatasetOnDisk {
  ActionVocabulary vocab;
  std::vector<VideoRecord> videos;
};

void save_dataset(const std::filesystem::path& dir, const ActionVocabulary& vocab,
                  const std::vector<VideoRecord>& videos,
                  const std::vector<std::pair<std::string, std::string>>& echo = {});
DatasetOnDisk load_dataset(const std::filesystem::path& dir, int stride = 1,
                           const std::string& split_filter = "");

// Breakfast-style directory pair: per-frame label files + feature files with
// matching stems.
std::vector<VideoRecord> load_breakfast_style(const std::filesystem::path& label_dir,
                                              const std::filesystem::path& feature_dir,
                                              const ActionVocabulary& vocab, int stride);

// `video_id<TAB>space-separated class ids` future sets for multilabel tasks.
std::vector<std::pair<std::string, std::vector<int>>> load_multilabel_manifest(
    const std::filesystem::path& path);

}  // namespace diffant
