#include "diffant/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "diffant/errors.hpp"
#include "diffant/io.hpp"

namespace diffant {

namespace fs = std::filesystem;

void GrammarSpec::validate() const {
  if (feature_dim < 1) throw ConfigError("grammar: feature_dim must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("grammar: noise_sigma must be >= 0");
  if (activities.empty()) throw ConfigError("grammar: no activities");
  if (static_cast<int>(durations.size()) < vocab.size() - 1)
    throw ConfigError("grammar: duration law missing for some class");
  for (const auto& law : durations)
    if (law.min_frames < 1 || law.max_frames < law.min_frames)
      throw ConfigError("grammar: bad duration law");
  for (const auto& act : activities) {
    for (int c : act.prefix)
      if (c < 0 || c >= vocab.size() || c == vocab.eos_id())
        throw ConfigError("grammar: bad class in activity " + act.name);
    if (!act.branches.empty()) {
      double total = 0.0;
      for (const auto& b : act.branches) {
        if (b.actions.empty()) throw ConfigError("grammar: empty branch in " + act.name);
        if (b.prob < 0.0) throw ConfigError("grammar: negative branch prob");
        total += b.prob;
        for (int c : b.actions)
          if (c < 0 || c >= vocab.size() || c == vocab.eos_id())
            throw ConfigError("grammar: bad class in branch of " + act.name);
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("grammar: branch probs must sum to 1 in " + act.name);
    } else if (act.prefix.empty()) {
      throw ConfigError("grammar: activity " + act.name + " produces nothing");
    }
  }
}

namespace {

std::vector<std::string> numbered_names(int n) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "act%02d", i);
    names.emplace_back(buf);
  }
  return names;
}

}  // namespace

GrammarSpec deterministic_grammar(int feature_dim, double noise_sigma) {
  GrammarSpec spec;
  spec.vocab = ActionVocabulary::with_eos(numbered_names(12));
  spec.activities = {
      {"routine_a", {0, 4, 5, 6, 7, 8, 9, 10}, {}},
      {"routine_b", {1, 5, 4, 7, 6, 9, 8, 11}, {}},
      {"routine_c", {2, 6, 7, 4, 5, 10, 11, 8}, {}},
      {"routine_d", {3, 7, 6, 5, 4, 11, 10, 9}, {}},
  };
  // tight duration law: the future is (near) deterministic given the activity
  spec.durations.assign(12, DurationLaw{38, 42});
  spec.feature_dim = feature_dim;
  spec.noise_sigma = noise_sigma;
  spec.validate();
  return spec;
}

GrammarSpec ambiguous_grammar(double ambiguity, int feature_dim, double noise_sigma) {
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0))
    throw ConfigError("grammar: ambiguity must be in [0, 1]");
  GrammarSpec spec;
  spec.vocab = ActionVocabulary::with_eos(numbered_names(10));
  // Branches are class-disjoint and length-asymmetric (four short actions vs
  // two long ones) so a blended decode cannot match either branch.
  spec.activities = {
      {"fork_a",
       {0, 2, 3},
       {{{4, 5, 6, 7}, ambiguity}, {{8, 9}, 1.0 - ambiguity}}},
      {"fork_b",
       {1, 3, 2},
       {{{5, 4, 7, 6}, ambiguity}, {{9, 8}, 1.0 - ambiguity}}},
  };
  spec.durations.assign(10, DurationLaw{38, 42});
  spec.durations[8] = DurationLaw{78, 82};
  spec.durations[9] = DurationLaw{78, 82};
  spec.feature_dim = feature_dim;
  spec.noise_sigma = noise_sigma;
  spec.validate();
  return spec;
}

std::vector<Eigen::VectorXd> class_prototypes(const GrammarSpec& spec) {
  RngStream root(spec.proto_seed);
  std::vector<Eigen::VectorXd> protos;
  protos.reserve(static_cast<std::size_t>(spec.vocab.size()));
  for (int c = 0; c < spec.vocab.size(); ++c) {
    RngStream s = root.derive(static_cast<std::uint64_t>(c));
    Eigen::VectorXd v = s.gaussian_vector(spec.feature_dim);
    protos.push_back(v.normalized());
  }
  return protos;
}

std::vector<VideoRecord> generate_dataset(const GrammarSpec& spec, int n_videos,
                                          std::uint64_t seed, const std::string& split) {
  spec.validate();
  const auto protos = class_prototypes(spec);
  RngStream root(seed);

  std::vector<VideoRecord> videos;
  videos.reserve(static_cast<std::size_t>(n_videos));
  for (int i = 0; i < n_videos; ++i) {
    RngStream rng = root.derive(static_cast<std::uint64_t>(i));
    const auto& act =
        spec.activities[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(spec.activities.size()) - 1))];

    std::vector<int> actions = act.prefix;
    if (!act.branches.empty()) {
      std::vector<double> probs;
      for (const auto& b : act.branches) probs.push_back(b.prob);
      const auto& branch = act.branches[static_cast<std::size_t>(rng.categorical(probs))];
      actions.insert(actions.end(), branch.actions.begin(), branch.actions.end());
    }

    VideoRecord v;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), i);
    v.video_id = buf;
    v.split = split;
    for (int c : actions) {
      const auto& law = spec.durations[static_cast<std::size_t>(c)];
      const int frames = rng.uniform_int(law.min_frames, law.max_frames);
      v.frame_labels.insert(v.frame_labels.end(), static_cast<std::size_t>(frames), c);
    }
    const int t = static_cast<int>(v.frame_labels.size());
    v.features.resize(t, spec.feature_dim);
    for (int f = 0; f < t; ++f) {
      const auto& proto = protos[static_cast<std::size_t>(v.frame_labels[static_cast<std::size_t>(f)])];
      for (int k = 0; k < spec.feature_dim; ++k)
        v.features(f, k) = proto(k) + spec.noise_sigma * rng.gaussian();
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

std::vector<SegmentSpan> run_length_segments(std::span<const int> frame_labels) {
  std::vector<SegmentSpan> segs;
  for (int i = 0; i < static_cast<int>(frame_labels.size());) {
    int j = i;
    while (j < static_cast<int>(frame_labels.size()) && frame_labels[j] == frame_labels[i]) ++j;
    segs.push_back({frame_labels[static_cast<std::size_t>(i)], i, j});
    i = j;
  }
  return segs;
}

std::vector<Continuation> continuations(const GrammarSpec& spec,
                                        std::span<const int> observed_labels) {
  const auto segs = run_length_segments(observed_labels);
  if (segs.empty()) throw std::invalid_argument("continuations: empty observation");

  // candidate full class sequences with prior probabilities
  std::vector<std::pair<std::vector<int>, double>> candidates;
  const double act_prior = 1.0 / static_cast<double>(spec.activities.size());
  for (const auto& act : spec.activities) {
    if (act.branches.empty()) {
      candidates.emplace_back(act.prefix, act_prior);
      continue;
    }
    for (const auto& b : act.branches) {
      std::vector<int> full = act.prefix;
      full.insert(full.end(), b.actions.begin(), b.actions.end());
      candidates.emplace_back(std::move(full), act_prior * b.prob);
    }
  }

  std::map<std::vector<int>, double> suffixes;
  double total = 0.0;
  for (const auto& [full, prob] : candidates) {
    if (prob <= 0.0) continue;
    if (segs.size() > full.size()) continue;
    bool match = true;
    for (std::size_t j = 0; j < segs.size(); ++j)
      if (segs[j].class_id != full[j]) {
        match = false;
        break;
      }
    if (!match) continue;
    // partial-segment convention: the observed cut leaves the remainder of the
    // current segment as the first future action
    std::vector<int> suffix(full.begin() + static_cast<std::ptrdiff_t>(segs.size() - 1),
                            full.end());
    suffixes[suffix] += prob;
    total += prob;
  }

  std::vector<Continuation> out;
  for (const auto& [classes, prob] : suffixes) out.push_back({classes, prob / total});
  return out;
}

ObservationSplit split_observation(const VideoRecord& video, double alpha, int slots,
                                   int eos_id) {
  const int t = static_cast<int>(video.frame_labels.size());
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("split_observation: alpha in (0,1)");
  const int l = static_cast<int>(std::floor(alpha * t));
  if (l < 1) throw DataError("split_observation: no observed frames at alpha for " + video.video_id);

  ObservationSplit out;
  out.observed.F = video.features.topRows(l);
  out.observed.frame_labels.assign(video.frame_labels.begin(), video.frame_labels.begin() + l);
  out.horizon_frames = t - l;

  const std::span<const int> future_labels(video.frame_labels.data() + l,
                                           static_cast<std::size_t>(t - l));
  ActionSequence future;
  std::set<int> seen;
  for (const auto& seg : run_length_segments(future_labels)) {
    future.classes.push_back(seg.class_id);
    future.durations.push_back(static_cast<double>(seg.end - seg.begin) / (t - l));
    seen.insert(seg.class_id);
  }
  out.future = fit_to_slots(future, slots, eos_id);
  out.future_set.assign(seen.begin(), seen.end());
  return out;
}

VideoRecord stride_sample(const VideoRecord& video, int stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (stride == 1) return video;
  VideoRecord out;
  out.video_id = video.video_id;
  out.split = video.split;
  const int t = static_cast<int>(video.frame_labels.size());
  const int n = (t + stride - 1) / stride;
  out.features.resize(n, video.features.cols());
  for (int i = 0, f = 0; f < t; f += stride, ++i) {
    out.frame_labels.push_back(video.frame_labels[static_cast<std::size_t>(f)]);
    out.features.row(i) = video.features.row(f);
  }
  return out;
}

void save_dataset(const fs::path& dir, const ActionVocabulary& vocab,
                  const std::vector<VideoRecord>& videos,
                  const std::vector<std::pair<std::string, std::string>>& echo) {
  fs::create_directories(dir / "labels");
  fs::create_directories(dir / "features");
  save_vocabulary(dir / "vocab.txt", vocab);

  std::ostringstream manifest;
  manifest << config_echo_header(echo);
  for (const auto& v : videos) {
    const std::string label_rel = "labels/" + v.video_id + ".txt";
    const std::string feat_rel = "features/" + v.video_id + ".feat";
    std::vector<std::string> names;
    names.reserve(v.frame_labels.size());
    for (int c : v.frame_labels) names.push_back(vocab.name(c));
    write_frame_labels(dir / label_rel, names);
    write_features(dir / feat_rel, v.features);
    manifest << v.video_id << "\t" << label_rel << "\t" << feat_rel << "\t" << v.split << "\n";
  }
  atomic_write(dir / "manifest.tsv", manifest.str());
}

namespace {

VideoRecord load_record(const fs::path& label_path, const fs::path& feature_path,
                        const ActionVocabulary& vocab, int stride, const std::string& id,
                        const std::string& split) {
  const auto names = read_frame_labels(label_path);
  Eigen::MatrixXd feats = read_features(feature_path);
  const int lt = static_cast<int>(names.size());
  const int ft = static_cast<int>(feats.rows());
  if (std::abs(lt - ft) > stride)
    throw DataError("label/feature length mismatch beyond stride tolerance: " +
                    label_path.string());
  const int t = std::min(lt, ft);

  VideoRecord v;
  v.video_id = id;
  v.split = split;
  v.frame_labels.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) v.frame_labels.push_back(vocab.id(names[static_cast<std::size_t>(i)]));
  v.features = feats.topRows(t);
  return stride_sample(v, stride);
}

}  // namespace

DatasetOnDisk load_dataset(const fs::path& dir, int stride, const std::string& split_filter) {
  DatasetOnDisk ds;
  ds.vocab = load_vocabulary(dir / "vocab.txt");
  std::istringstream manifest(read_file(dir / "manifest.tsv"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string id, label_rel, feat_rel, split;
    if (!(std::getline(row, id, '\t') && std::getline(row, label_rel, '\t') &&
          std::getline(row, feat_rel, '\t') && std::getline(row, split)))
      throw DataError("bad manifest row: " + line);
    if (!split_filter.empty() && split != split_filter) continue;
    ds.videos.push_back(load_record(dir / label_rel, dir / feat_rel, ds.vocab, stride, id, split));
  }
  if (ds.videos.empty()) throw DataError("no videos loaded from " + dir.string());
  return ds;
}

std::vector<VideoRecord> load_breakfast_style(const fs::path& label_dir,
                                              const fs::path& feature_dir,
                                              const ActionVocabulary& vocab, int stride) {
  std::vector<fs::path> label_files;
  for (const auto& entry : fs::directory_iterator(label_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      label_files.push_back(entry.path());
  std::sort(label_files.begin(), label_files.end());
  if (label_files.empty()) throw DataError("no label files in " + label_dir.string());

  std::vector<VideoRecord> videos;
  for (const auto& lp : label_files) {
    const std::string stem = lp.stem().string();
    fs::path fp = feature_dir / (stem + ".feat");
    if (!fs::exists(fp)) fp = feature_dir / (stem + ".txt");
    if (!fs::exists(fp)) throw DataError("no features for " + stem);
    videos.push_back(load_record(lp, fp, vocab, stride, stem, ""));
  }
  return videos;
}

std::vector<std::pair<std::string, std::vector<int>>> load_multilabel_manifest(
    const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("bad multilabel row: " + line);
    std::istringstream ids(line.substr(tab + 1));
    std::vector<int> classes;
    int c;
    while (ids >> c) classes.push_back(c);
    out.emplace_back(line.substr(0, tab), std::move(classes));
  }
  return out;
}

}  // namespace diffant
