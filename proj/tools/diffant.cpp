// Command-line front end: synth / train / anticipate / eval / plot.
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffant/config.hpp"
#include "diffant/data.hpp"
#include "diffant/errors.hpp"
#include "diffant/eval.hpp"
#include "diffant/infer.hpp"
#include "diffant/io.hpp"
#include "diffant/net.hpp"
#include "diffant/train.hpp"

namespace fs = std::filesystem;
using namespace diffant;

namespace {

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<int> parse_frames(const std::string& field) {
  std::vector<int> out;
  std::stringstream ss(field);
  int x;
  while (ss >> x) out.push_back(x);
  return out;
}

// ---- shared option plumbing ----

struct CommonOpts {
  std::string profile = "synthetic-deterministic";
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string data_dir, out_dir, checkpoint;
  CLI::App* sub = nullptr;
};

void add_common(CLI::App* sub, CommonOpts& c) {
  c.sub = sub;
  sub->add_option("--profile", c.profile, "named configuration preset")
      ->check(CLI::IsMember(profile_names()));
  sub->add_option("--config", c.config_file, "key=value config file");
  sub->add_option("--set", c.overrides, "inline override, key=value (repeatable)");
  sub->add_option("--seed", c.seed, "root RNG seed (overrides run.seed)");
  sub->add_option("--data", c.data_dir, "dataset directory");
  sub->add_option("--out", c.out_dir, "output directory");
  sub->add_option("--ckpt", c.checkpoint, "checkpoint path");
}

RunConfig materialize(const CommonOpts& c) {
  RunConfig cfg = make_profile(c.profile);
  if (!c.config_file.empty()) load_config_file(cfg, c.config_file);
  for (const auto& kv : c.overrides) apply_override(cfg, kv);
  if (c.sub->count("--seed")) cfg.seed = c.seed;
  if (!c.data_dir.empty()) cfg.paths.data_dir = c.data_dir;
  if (!c.out_dir.empty()) cfg.paths.out_dir = c.out_dir;
  if (!c.checkpoint.empty()) cfg.paths.checkpoint = c.checkpoint;
  cfg.validate();
  return cfg;
}

GrammarSpec grammar_for(const RunConfig& cfg) {
  return cfg.data.ambiguity == 0.0
             ? deterministic_grammar(cfg.model.input_dim, cfg.data.noise_sigma)
             : ambiguous_grammar(cfg.data.ambiguity, cfg.model.input_dim, cfg.data.noise_sigma);
}

// ---- prediction dump I/O ----
// preds.tsv row: video_id <TAB> sample_id <TAB> alpha <TAB> frame ids ("-" if none)
// siblings: .segs.tsv (class:duration list), .scores.tsv (multilabel),
//           .steps.tsv (video_id, sample_id, step, frame ids), .obs.tsv (observed frames)

struct DumpRow {
  std::string video_id;
  int sample_id = 0;
  double alpha = 0.0;
  std::vector<int> frames;
};

std::vector<DumpRow> read_dump(const fs::path& path, bool third_col_is_step = false) {
  const std::string content = read_file(path);
  std::vector<DumpRow> rows;
  std::stringstream ss(content);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 4) throw DataError(path.string() + ": expected 4 tab-separated columns");
    DumpRow r;
    r.video_id = cols[0];
    r.sample_id = std::stoi(cols[1]);
    r.alpha = third_col_is_step ? std::stoi(cols[2]) : std::stod(cols[2]);
    if (cols[3] != "-") r.frames = parse_frames(cols[3]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(path.string() + ": no prediction rows");
  return rows;
}

std::string frames_field(const std::vector<int>& frames) {
  if (frames.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(frames[i]);
  }
  return out;
}

fs::path sibling(const fs::path& dump, const std::string& tag) {
  fs::path p = dump;
  p.replace_extension();
  p += "." + tag + ".tsv";
  return p;
}

// ---- subcommands ----

int cmd_synth(const RunConfig& cfg) {
  const GrammarSpec spec = grammar_for(cfg);
  std::vector<VideoRecord> videos =
      generate_dataset(spec, cfg.data.n_train, hash_combine(cfg.seed, 1), "train");
  if (cfg.data.n_test > 0) {
    auto test = generate_dataset(spec, cfg.data.n_test, hash_combine(cfg.seed, 2), "test");
    videos.insert(videos.end(), test.begin(), test.end());
  }
  save_dataset(cfg.paths.out_dir, spec.vocab, videos, cfg.echo());
  std::cout << "wrote " << videos.size() << " videos (" << cfg.data.n_train << " train, "
            << cfg.data.n_test << " test) to " << cfg.paths.out_dir << "\n";
  return 0;
}

TrainSample make_sample(const VideoRecord& video, double alpha, int slots, int eos_id) {
  ObservationSplit split = split_observation(video, alpha, slots, eos_id);
  TrainSample s;
  s.features = std::move(split.observed.F);
  s.frame_labels = std::move(split.observed.frame_labels);
  s.future = std::move(split.future);
  s.future_set = std::move(split.future_set);
  return s;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.paths.data_dir.empty()) throw ConfigError("config: paths.data_dir: required for train");
  DatasetOnDisk ds = load_dataset(cfg.paths.data_dir, cfg.data.stride, "train");
  if (ds.videos.front().features.cols() != cfg.model.input_dim)
    throw DataError("feature dim " + std::to_string(ds.videos.front().features.cols()) +
                    " does not match model.input_dim " + std::to_string(cfg.model.input_dim));

  Model model(cfg.to_model_config(ds.vocab.size(), ds.vocab.eos_id()),
              hash_combine(cfg.seed, 3));
  const NoiseSchedule sched = cfg.to_schedule();
  Trainer trainer(model, sched, cfg.to_train_options());

  const int slots = cfg.model.queries;
  const int eos = ds.vocab.eos_id();
  const int n = static_cast<int>(ds.videos.size());
  const RngStream loop_root = RngStream(cfg.seed).derive(4);

  std::ostringstream log;
  log << config_echo_header(cfg.echo());
  log << "epoch\tstep\tl_emb\tl_pred_class\tl_pred_dur\tl_seg\tl_smooth\ttotal\n";

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    RngStream rng = loop_root.derive(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());

    double epoch_total = 0.0;
    int steps = 0;
    for (int begin = 0; begin < n; begin += cfg.train.batch) {
      const int end = std::min(n, begin + cfg.train.batch);
      std::vector<TrainSample> batch;
      batch.reserve(static_cast<std::size_t>(end - begin));
      for (int i = begin; i < end; ++i) {
        const double alpha =
            cfg.train.alphas[static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<int>(cfg.train.alphas.size()) - 1))];
        batch.push_back(make_sample(ds.videos[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])],
                                    alpha, slots, eos));
      }
      const LossBreakdown bd = trainer.train_step(batch, rng);
      log << epoch << '\t' << steps << '\t' << fmt(bd.l_emb) << '\t' << fmt(bd.l_pred_class)
          << '\t' << fmt(bd.l_pred_dur) << '\t' << fmt(bd.l_seg) << '\t' << fmt(bd.l_smooth)
          << '\t' << fmt(bd.total) << '\n';
      epoch_total += bd.total;
      ++steps;
    }
    const auto now = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(now - t0).count();
    std::cout << "epoch " << epoch << "  loss " << epoch_total / std::max(1, steps) << "  lr "
              << trainer.lr_for_epoch(epoch) << "  elapsed " << static_cast<int>(secs) << "s\n"
              << std::flush;
  }

  const fs::path out_dir = cfg.paths.out_dir;
  const fs::path ckpt =
      cfg.paths.checkpoint.empty() ? out_dir / "model.ckpt" : fs::path(cfg.paths.checkpoint);
  save_checkpoint(ckpt, model, cfg.echo());
  atomic_write(out_dir / "train_log.tsv", log.str());
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  return 0;
}

NoiseSchedule schedule_from_echo(const std::vector<std::pair<std::string, std::string>>& echo) {
  std::map<std::string, std::string> kv(echo.begin(), echo.end());
  for (const char* key : {"schedule.steps", "schedule.kind", "schedule.beta_min",
                          "schedule.beta_max"})
    if (!kv.count(key)) throw DataError(std::string("checkpoint echo missing ") + key);
  return make_schedule(std::stoi(kv.at("schedule.steps")),
                       schedule_kind_from_string(kv.at("schedule.kind")),
                       std::stod(kv.at("schedule.beta_min")), std::stod(kv.at("schedule.beta_max")));
}

int cmd_anticipate(const RunConfig& cfg, const std::string& split, const std::string& name,
                   bool dump_observed, bool timing) {
  if (cfg.paths.checkpoint.empty())
    throw ConfigError("config: paths.checkpoint: required for anticipate");
  if (cfg.paths.data_dir.empty())
    throw ConfigError("config: paths.data_dir: required for anticipate");

  Checkpoint ck = load_checkpoint(cfg.paths.checkpoint);
  const NoiseSchedule sched = schedule_from_echo(ck.echo);
  const ModelConfig& mc = ck.model.config();
  DatasetOnDisk ds = load_dataset(cfg.paths.data_dir, cfg.data.stride, split);

  InferenceOptions opts;
  opts.deterministic = cfg.infer.mode == "deterministic";
  opts.num_steps = cfg.infer.steps;
  opts.samples = cfg.infer.samples;
  opts.keep_intermediate = cfg.infer.keep_intermediate;

  std::ostringstream main_out, segs_out, scores_out, steps_out, obs_out;
  const std::string header = config_echo_header(cfg.echo());
  main_out << header;
  segs_out << header;
  scores_out << header;
  steps_out << header;
  obs_out << header;

  const std::string alpha_str = fmt(cfg.infer.alpha);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t v = 0; v < ds.videos.size(); ++v) {
    const VideoRecord& video = ds.videos[v];
    ObservationSplit split_v =
        split_observation(video, cfg.infer.alpha, mc.queries, mc.resolved_eos());
    opts.seed = hash_combine(cfg.seed, hash_combine(5, v));

    const auto results = anticipate(ck.model, sched, split_v.observed, split_v.horizon_frames, opts);
    for (const auto& r : results) {
      main_out << video.video_id << '\t' << r.sample_id << '\t' << alpha_str << '\t'
               << frames_field(r.frame_labels) << '\n';
      segs_out << video.video_id << '\t' << r.sample_id << '\t' << alpha_str << '\t';
      if (r.actions.classes.empty()) {
        segs_out << '-';
      } else {
        for (int i = 0; i < r.actions.slots(); ++i)
          segs_out << (i ? " " : "") << r.actions.classes[static_cast<std::size_t>(i)] << ':'
                   << fmt(r.actions.durations[static_cast<std::size_t>(i)]);
      }
      segs_out << '\n';
      if (mc.multilabel) {
        scores_out << video.video_id << '\t' << r.sample_id << '\t' << alpha_str << '\t';
        for (Eigen::Index c = 0; c < r.class_scores.size(); ++c)
          scores_out << (c ? " " : "") << fmt(r.class_scores(c));
        scores_out << '\n';
      }
      for (const auto& [step, seq] : r.intermediate) {
        std::vector<int> frames =
            seq.classes.empty()
                ? std::vector<int>(static_cast<std::size_t>(split_v.horizon_frames),
                                   r.fallback_label)
                : to_framewise(seq, split_v.horizon_frames);
        steps_out << video.video_id << '\t' << r.sample_id << '\t' << step << '\t'
                  << frames_field(frames) << '\n';
      }
    }
    if (dump_observed) {
      const EncodedObservation enc = ck.model.encode(split_v.observed);
      std::vector<int> frames(static_cast<std::size_t>(enc.frame_logits.rows()));
      for (Eigen::Index i = 0; i < enc.frame_logits.rows(); ++i) {
        Eigen::Index best;
        enc.frame_logits.row(i).maxCoeff(&best);
        frames[static_cast<std::size_t>(i)] = static_cast<int>(best);
      }
      obs_out << video.video_id << "\t0\t" << alpha_str << '\t' << frames_field(frames) << '\n';
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dump = fs::path(cfg.paths.out_dir) / name;
  atomic_write(dump, main_out.str());
  atomic_write(sibling(dump, "segs"), segs_out.str());
  if (mc.multilabel) atomic_write(sibling(dump, "scores"), scores_out.str());
  if (opts.keep_intermediate) atomic_write(sibling(dump, "steps"), steps_out.str());
  if (dump_observed) atomic_write(sibling(dump, "obs"), obs_out.str());

  std::cout << "wrote " << dump.string() << " (" << ds.videos.size() << " videos)";
  if (timing)
    std::cout << "  [" << fmt(secs) << "s total, "
              << fmt(secs / std::max<std::size_t>(1, ds.videos.size())) << "s/video]";
  std::cout << "\n";
  return 0;
}

struct EvalArgs {
  std::string preds;
  std::string protocol = "moc";
  std::string split = "test";
  double beta = 0.5;
  int m = 0;  // 0: all samples present
  std::string report_name = "report";
};

// occurrence counts over the train split decide the frequent/rare partition
std::pair<std::vector<int>, std::vector<int>> freq_rare_split(const fs::path& data_dir,
                                                              int stride, int classes,
                                                              int eos_id) {
  DatasetOnDisk train = load_dataset(data_dir, stride, "train");
  std::vector<int> count(static_cast<std::size_t>(classes), 0);
  for (const auto& v : train.videos) {
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    for (int c : v.frame_labels) seen[static_cast<std::size_t>(c)] = true;
    for (int c = 0; c < classes; ++c)
      if (seen[static_cast<std::size_t>(c)]) ++count[static_cast<std::size_t>(c)];
  }
  std::vector<int> occ;
  for (int c = 0; c < classes; ++c)
    if (c != eos_id) occ.push_back(count[static_cast<std::size_t>(c)]);
  std::sort(occ.begin(), occ.end());
  const int median = occ[occ.size() / 2];
  std::vector<int> freq, rare;
  for (int c = 0; c < classes; ++c) {
    if (c == eos_id) continue;
    (count[static_cast<std::size_t>(c)] >= median ? freq : rare).push_back(c);
  }
  return {freq, rare};
}

int cmd_eval(const RunConfig& cfg, const EvalArgs& args) {
  if (cfg.paths.data_dir.empty()) throw ConfigError("config: paths.data_dir: required for eval");
  if (args.preds.empty()) throw ConfigError("config: --preds: required for eval");
  const EvalWindow window{cfg.infer.alpha, args.beta};
  window.validate();

  DatasetOnDisk ds = load_dataset(cfg.paths.data_dir, cfg.data.stride, args.split);
  std::map<std::string, const VideoRecord*> gt;
  std::vector<std::string> order;
  for (const auto& v : ds.videos) {
    gt[v.video_id] = &v;
    order.push_back(v.video_id);
  }
  const int classes = ds.vocab.size();

  auto gt_of = [&](const DumpRow& r) -> const VideoRecord& {
    auto it = gt.find(r.video_id);
    if (it == gt.end()) throw DataError("prediction for unknown video " + r.video_id);
    return *it->second;
  };
  auto check_alpha = [&](const DumpRow& r) {
    if (std::abs(r.alpha - cfg.infer.alpha) > 1e-9)
      throw DataError("dump row for " + r.video_id + " was made at alpha=" + fmt(r.alpha) +
                      ", eval requested " + fmt(cfg.infer.alpha));
  };

  MetricReport report;
  report.add("window.alpha", cfg.infer.alpha);
  report.add("window.beta", args.beta);

  if (args.protocol == "moc") {
    std::vector<WindowFrames> frames;
    for (const auto& r : read_dump(args.preds)) {
      if (r.sample_id != 0) continue;
      check_alpha(r);
      frames.push_back(window_frames(gt_of(r).frame_labels, r.frames, window));
    }
    if (frames.empty()) throw DataError("no sample-0 rows in " + args.preds);
    report.add("moc.value", moc(frames, classes));
  } else if (args.protocol == "div-avg" || args.protocol == "div-top1") {
    std::map<std::string, std::map<int, WindowFrames>> by_video;
    for (const auto& r : read_dump(args.preds)) {
      check_alpha(r);
      by_video[r.video_id][r.sample_id] =
          window_frames(gt_of(r).frame_labels, r.frames, window);
    }
    std::vector<std::vector<WindowFrames>> samples;
    for (const auto& id : order) {
      auto it = by_video.find(id);
      if (it == by_video.end()) continue;
      const int m = args.m > 0 ? args.m : static_cast<int>(it->second.size());
      std::vector<WindowFrames> row;
      for (int j = 0; j < m; ++j) {
        auto jt = it->second.find(j);
        if (jt == it->second.end())
          throw DataError("video " + id + " is missing sample " + std::to_string(j));
        row.push_back(jt->second);
      }
      samples.push_back(std::move(row));
    }
    if (samples.empty()) throw DataError("no evaluable videos in " + args.preds);
    const auto protocol =
        args.protocol == "div-avg" ? DiverseProtocol::averaged : DiverseProtocol::top1;
    report.add(args.protocol == "div-avg" ? "div.avg" : "div.top1",
               diverse_eval(samples, classes, protocol));
    report.add("div.m", samples.front().size());
  } else if (args.protocol == "map") {
    std::vector<Eigen::VectorXd> scores;
    std::vector<std::vector<int>> gt_sets;
    const std::string content = read_file(sibling(args.preds, "scores"));
    std::stringstream ss(content);
    std::string line;
    while (std::getline(ss, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto cols = split_on(line, '\t');
      if (cols.size() != 4) throw DataError("scores dump: expected 4 columns");
      if (std::stoi(cols[1]) != 0) continue;
      const VideoRecord& video = *gt.at(cols[0]);
      std::stringstream vals(cols[3]);
      std::vector<double> s;
      double x;
      while (vals >> x) s.push_back(x);
      if (static_cast<int>(s.size()) != classes)
        throw DataError("scores dump: wrong class count for " + cols[0]);
      scores.push_back(Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
      const auto [begin, end] = window.frame_range(static_cast<int>(video.frame_labels.size()));
      std::vector<bool> seen(static_cast<std::size_t>(classes), false);
      std::vector<int> set;
      for (int i = begin; i < end && i < static_cast<int>(video.frame_labels.size()); ++i) {
        const int c = video.frame_labels[static_cast<std::size_t>(i)];
        if (!seen[static_cast<std::size_t>(c)]) {
          seen[static_cast<std::size_t>(c)] = true;
          set.push_back(c);
        }
      }
      gt_sets.push_back(std::move(set));
    }
    const auto [freq, rare] =
        freq_rare_split(cfg.paths.data_dir, cfg.data.stride, classes, ds.vocab.eos_id());
    const MapResult res = map_multilabel(scores, gt_sets, freq, rare);
    report.add("map.all", res.all);
    report.add("map.freq", res.freq);
    report.add("map.rare", res.rare);
  } else if (args.protocol == "steps") {
    std::map<int, std::vector<WindowFrames>> by_step;
    for (const auto& r : read_dump(sibling(args.preds, "steps"), true)) {
      by_step[static_cast<int>(r.alpha)].push_back(
          window_frames(gt_of(r).frame_labels, r.frames, window));
    }
    for (auto it = by_step.rbegin(); it != by_step.rend(); ++it)
      report.add("steps." + std::to_string(it->first), moc(it->second, classes));
  } else if (args.protocol == "seg") {
    std::vector<std::vector<int>> preds, gts;
    for (const auto& r : read_dump(sibling(args.preds, "obs"))) {
      const VideoRecord& video = gt_of(r);
      if (r.frames.size() > video.frame_labels.size())
        throw DataError("observed dump longer than video " + r.video_id);
      preds.push_back(r.frames);
      gts.emplace_back(video.frame_labels.begin(),
                       video.frame_labels.begin() + static_cast<long>(r.frames.size()));
    }
    const SegMetrics sm = seg_metrics(preds, gts);
    report.add("seg.acc", sm.acc);
    report.add("seg.edit", sm.edit);
    report.add("seg.f1_10", sm.f1_10);
    report.add("seg.f1_25", sm.f1_25);
    report.add("seg.f1_50", sm.f1_50);
  } else {
    throw ConfigError("config: --protocol: unknown protocol '" + args.protocol + "'");
  }

  const std::string header = config_echo_header(cfg.echo());
  const fs::path out_dir = cfg.paths.out_dir;
  atomic_write(out_dir / (args.report_name + ".txt"), header + report.to_text());
  atomic_write(out_dir / (args.report_name + ".csv"), header + report.to_csv());
  std::cout << report.to_text();
  return 0;
}

// ---- plotting ----

std::string svg_color(int class_id) {
  // golden-angle hue walk keeps neighboring ids distinguishable
  const double h = std::fmod(class_id * 137.508, 360.0);
  const double s = 0.62, v = 0.88;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>((r + m) * 255),
                static_cast<int>((g + m) * 255), static_cast<int>((b + m) * 255));
  return buf;
}

int cmd_plot_curve(const std::string& csv_path, const fs::path& out,
                   const std::string& xlabel, const std::string& ylabel) {
  std::vector<std::pair<std::string, double>> points;
  std::stringstream ss(read_file(csv_path));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#' || line == "key,value") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const double value = std::stod(line.substr(comma + 1));
    // numeric tail of the key labels the x axis ("steps.991" -> 991)
    std::size_t digits = key.size();
    while (digits > 0 && std::isdigit(static_cast<unsigned char>(key[digits - 1]))) --digits;
    if (digits == key.size()) continue;
    points.emplace_back(key.substr(digits), value);
  }
  if (points.empty()) throw DataError(csv_path + ": no plottable key,value rows");

  const int w = 640, h = 400, ml = 60, mr = 20, mt = 20, mb = 50;
  double lo = points.front().second, hi = lo;
  for (const auto& [k, v] : points) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-9) { hi = lo + 1.0; }
  const double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto px = [&](std::size_t i) {
    return ml + (w - ml - mr) * (points.size() == 1 ? 0.5
                                                    : static_cast<double>(i) /
                                                          static_cast<double>(points.size() - 1));
  };
  auto py = [&](double v) { return mt + (h - mt - mb) * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = lo + (hi - lo) * g / 4.0;
    const double y = py(v);
    svg << "<line x1='" << ml << "' y1='" << y << "' x2='" << w - mr << "' y2='" << y
        << "' stroke='#dddddd'/>\n";
    svg << "<text x='" << ml - 6 << "' y='" << y + 4
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fmt(std::round(v * 1000) / 1000)
        << "</text>\n";
  }
  svg << "<polyline fill='none' stroke='#1f77b4' stroke-width='2' points='";
  for (std::size_t i = 0; i < points.size(); ++i)
    svg << px(i) << ',' << py(points[i].second) << ' ';
  svg << "'/>\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    svg << "<circle cx='" << px(i) << "' cy='" << py(points[i].second)
        << "' r='3' fill='#1f77b4'/>\n";
    svg << "<text x='" << px(i) << "' y='" << h - mb + 16
        << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << points[i].first
        << "</text>\n";
  }
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  svg << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  svg << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
      << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << xlabel
      << "</text>\n";
  svg << "<text x='16' y='" << (mt + h - mb) / 2
      << "' text-anchor='middle' font-size='13' font-family='sans-serif' transform='rotate(-90 16 "
      << (mt + h - mb) / 2 << ")'>" << ylabel << "</text>\n";
  svg << "</svg>\n";
  atomic_write(out, svg.str());
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

void timeline_strip(std::ostringstream& svg, const std::vector<int>& frames, int total,
                    int offset, double x0, double y, double width, double height) {
  std::vector<int> padded(static_cast<std::size_t>(offset), -1);
  padded.insert(padded.end(), frames.begin(), frames.end());
  for (const auto& seg : run_length_segments(padded)) {
    const double x = x0 + width * seg.begin / total;
    const double wseg = width * (seg.end - seg.begin) / total;
    const std::string fill = seg.class_id < 0 ? "#c8c8c8" : svg_color(seg.class_id);
    svg << "<rect x='" << x << "' y='" << y << "' width='" << wseg << "' height='" << height
        << "' fill='" << fill << "'/>\n";
  }
}

int cmd_plot_timeline(const RunConfig& cfg, const std::string& preds, const std::string& video_id,
                      const std::string& split, const fs::path& out) {
  DatasetOnDisk ds = load_dataset(cfg.paths.data_dir, cfg.data.stride, split);
  const VideoRecord* video = nullptr;
  for (const auto& v : ds.videos)
    if (v.video_id == video_id) video = &v;
  if (!video) throw DataError("video " + video_id + " not in split " + split);

  std::vector<DumpRow> rows;
  for (auto& r : read_dump(preds))
    if (r.video_id == video_id) rows.push_back(std::move(r));
  if (rows.empty()) throw DataError("no rows for video " + video_id + " in " + preds);
  std::sort(rows.begin(), rows.end(),
            [](const DumpRow& a, const DumpRow& b) { return a.sample_id < b.sample_id; });

  const int total = static_cast<int>(video->frame_labels.size());
  const double x0 = 90, width = 700, strip_h = 22, gap = 6;
  const double height = 40 + (rows.size() + 1) * (strip_h + gap) + 30;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << x0 + width + 20 << "' height='"
      << height << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << x0 << "' y='20' font-size='13' font-family='sans-serif'>" << video_id
      << " (" << total << " frames, grey = observed span)</text>\n";

  double y = 40;
  svg << "<text x='" << x0 - 8 << "' y='" << y + strip_h - 6
      << "' text-anchor='end' font-size='11' font-family='sans-serif'>GT</text>\n";
  timeline_strip(svg, video->frame_labels, total, 0, x0, y, width, strip_h);
  for (const auto& r : rows) {
    y += strip_h + gap;
    const int offset = total - static_cast<int>(r.frames.size());
    svg << "<text x='" << x0 - 8 << "' y='" << y + strip_h - 6
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>s" << r.sample_id
        << "</text>\n";
    timeline_strip(svg, r.frames, total, offset, x0, y, width, strip_h);
  }

  y += strip_h + gap + 8;
  std::vector<bool> used(static_cast<std::size_t>(ds.vocab.size()), false);
  for (int c : video->frame_labels) used[static_cast<std::size_t>(c)] = true;
  for (const auto& r : rows)
    for (int c : r.frames) used[static_cast<std::size_t>(c)] = true;
  double lx = x0;
  for (int c = 0; c < ds.vocab.size(); ++c) {
    if (!used[static_cast<std::size_t>(c)]) continue;
    svg << "<rect x='" << lx << "' y='" << y << "' width='12' height='12' fill='" << svg_color(c)
        << "'/>\n";
    svg << "<text x='" << lx + 16 << "' y='" << y + 10
        << "' font-size='11' font-family='sans-serif'>" << ds.vocab.name(c) << "</text>\n";
    lx += 16.0 + 8.0 * ds.vocab.name(c).size() + 14.0;
  }
  svg << "</svg>\n";
  atomic_write(out, svg.str());
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-based long-term action anticipation"};
  app.set_version_flag("--version", "0.1.0");
  app.require_subcommand(1);

  CommonOpts synth_c, train_c, ant_c, eval_c, plot_c;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic grammar dataset");
  add_common(synth, synth_c);

  CLI::App* train = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(train, train_c);

  CLI::App* ant = app.add_subcommand("anticipate", "run inference and write prediction dumps");
  add_common(ant, ant_c);
  std::string ant_mode, ant_split = "test", ant_name = "preds.tsv";
  int ant_steps = 0, ant_samples = 0;
  bool ant_keep = false, ant_obs = false, ant_time = false;
  double ant_alpha = 0.0;
  ant->add_option("--mode", ant_mode, "deterministic | stochastic")
      ->check(CLI::IsMember({"deterministic", "stochastic"}));
  ant->add_option("--steps", ant_steps, "inference steps along the skip trajectory");
  ant->add_option("--samples", ant_samples, "samples per video (stochastic mode)");
  ant->add_option("--alpha", ant_alpha, "observed fraction");
  ant->add_flag("--keep-intermediate", ant_keep, "also dump every visited step");
  ant->add_flag("--dump-observed", ant_obs, "also dump observed-frame class predictions");
  ant->add_flag("--time", ant_time, "report wall-clock inference time");
  ant->add_option("--split", ant_split, "dataset split to run on");
  ant->add_option("--name", ant_name, "dump file name inside --out");

  CLI::App* eval = app.add_subcommand("eval", "score a prediction dump against ground truth");
  add_common(eval, eval_c);
  EvalArgs eval_args;
  double eval_alpha = 0.0;
  eval->add_option("--preds", eval_args.preds, "prediction dump (from anticipate)")->required();
  eval->add_option("--protocol", eval_args.protocol, "moc | map | div-avg | div-top1 | steps | seg")
      ->check(CLI::IsMember({"moc", "map", "div-avg", "div-top1", "steps", "seg"}));
  eval->add_option("--alpha", eval_alpha, "observed fraction");
  eval->add_option("--beta", eval_args.beta, "prediction-window fraction");
  eval->add_option("--m", eval_args.m, "samples per video for diversity protocols");
  eval->add_option("--split", eval_args.split, "dataset split holding ground truth");
  eval->add_option("--report", eval_args.report_name, "report base name inside --out");

  CLI::App* plot = app.add_subcommand("plot", "render SVG figures from eval/anticipate output");
  add_common(plot, plot_c);
  std::string plot_curve, plot_timeline, plot_video, plot_split = "test";
  std::string plot_out = "plot.svg", plot_x = "inference step", plot_y = "MoC";
  plot->add_option("--curve", plot_curve, "metric CSV to render as a line chart");
  plot->add_option("--timeline", plot_timeline, "prediction dump to render as label strips");
  plot->add_option("--video", plot_video, "video id for --timeline");
  plot->add_option("--split", plot_split, "dataset split for --timeline ground truth");
  plot->add_option("--svg", plot_out, "output SVG path");
  plot->add_option("--xlabel", plot_x, "x-axis label for --curve");
  plot->add_option("--ylabel", plot_y, "y-axis label for --curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(materialize(synth_c));
    if (train->parsed()) return cmd_train(materialize(train_c));
    if (ant->parsed()) {
      RunConfig cfg = materialize(ant_c);
      if (!ant_mode.empty()) cfg.infer.mode = ant_mode;
      if (ant_steps > 0) cfg.infer.steps = ant_steps;
      if (ant_samples > 0) cfg.infer.samples = ant_samples;
      if (ant_alpha > 0.0) cfg.infer.alpha = ant_alpha;
      if (ant_keep) cfg.infer.keep_intermediate = true;
      cfg.validate();
      return cmd_anticipate(cfg, ant_split, ant_name, ant_obs, ant_time);
    }
    if (eval->parsed()) {
      RunConfig cfg = materialize(eval_c);
      if (eval_alpha > 0.0) cfg.infer.alpha = eval_alpha;
      cfg.validate();
      return cmd_eval(cfg, eval_args);
    }
    if (plot->parsed()) {
      if (!plot_curve.empty())
        return cmd_plot_curve(plot_curve, plot_out, plot_x, plot_y);
      if (plot_timeline.empty() || plot_video.empty())
        throw ConfigError("config: plot needs --curve, or --timeline with --video");
      return cmd_plot_timeline(materialize(plot_c), plot_timeline, plot_video, plot_split,
                               plot_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
