// Drives the installed CLI end to end on the tiny profile.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffant/data.hpp"
#include "diffant/io.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace diffant;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "diffant_pipeline_test";

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int run(const std::string& args) {
  const std::string cmd = std::string("'") + DIFFANT_BIN + "' " + args + " >> " +
                          q(kRoot / "cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

void ok(const std::string& args) {
  const int code = run(args);
  REQUIRE_MESSAGE(code == 0, "exit " << code << " from: " << args);
}

struct Row {
  std::string video_id;
  int sample_id = 0;
  double alpha = 0.0;
  std::vector<int> frames;
};

std::vector<Row> parse_dump(const fs::path& path) {
  std::istringstream ss(read_file(path));
  std::vector<Row> rows;
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream cols(line);
    Row r;
    std::string field;
    REQUIRE(static_cast<bool>(std::getline(cols, r.video_id, '\t')));
    REQUIRE(static_cast<bool>(std::getline(cols, field, '\t')));
    r.sample_id = std::stoi(field);
    REQUIRE(static_cast<bool>(std::getline(cols, field, '\t')));
    r.alpha = std::stod(field);
    REQUIRE(static_cast<bool>(std::getline(cols, field)));
    if (field != "-") {
      std::istringstream fs_(field);
      int x;
      while (fs_ >> x) r.frames.push_back(x);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

double csv_value(const fs::path& csv, const std::string& key) {
  std::istringstream ss(read_file(csv));
  std::string line;
  while (std::getline(ss, line))
    if (line.rfind(key + ",", 0) == 0) return std::stod(line.substr(key.size() + 1));
  FAIL("key " << key << " not in " << csv.string());
  return 0.0;
}

}  // namespace

TEST_CASE("broken invocations exit with distinct codes") {
  fs::create_directories(kRoot);
  const fs::path scratch = kRoot / "err";
  fs::create_directories(scratch);

  CHECK(run("--version") == 0);
  CHECK(run("") == 2);                                    // a subcommand is required
  CHECK(run("synth --profile no-such-profile") == 2);
  CHECK(run("synth --no-such-flag") == 2);
  CHECK(run("synth --set nope=1 --out " + q(scratch)) == 2);
  CHECK(run("train --profile tiny --data /no/such/dataset --out " + q(scratch)) == 3);
  CHECK(run("anticipate --profile tiny --data " + q(scratch) + " --out " + q(scratch)) == 2);
  CHECK(run("eval --profile tiny --data " + q(scratch) + " --out " + q(scratch) +
            " --preds " + q(scratch / "missing.tsv")) == 3);
  CHECK(run("eval --profile tiny --data " + q(scratch) + " --out " + q(scratch) +
            " --preds x.tsv --protocol bogus") == 2);
}

TEST_CASE("tiny profile end to end") {
  fs::remove_all(kRoot / "data");
  fs::remove_all(kRoot / "run");
  fs::create_directories(kRoot);
  const fs::path data = kRoot / "data";
  const fs::path out = kRoot / "run";
  const std::string base = "--profile tiny --seed 5 --data " + q(data) + " --out " + q(out);

  // synth
  ok("synth --profile tiny --seed 5 --out " + q(data));
  CHECK(fs::exists(data / "manifest.tsv"));
  CHECK(fs::exists(data / "vocab.txt"));
  CHECK(fs::exists(data / "labels" / "train_00000.txt"));
  CHECK(fs::exists(data / "features" / "train_00000.feat"));

  // train
  ok("train " + base);
  const fs::path ckpt = out / "model.ckpt";
  REQUIRE(fs::exists(ckpt));
  {
    std::istringstream log(read_file(out / "train_log.tsv"));
    std::string line;
    while (std::getline(log, line) && (line.empty() || line[0] == '#')) {
    }
    CHECK(line == "epoch\tstep\tl_emb\tl_pred_class\tl_pred_dur\tl_seg\tl_smooth\ttotal");
  }

  const std::string with_ckpt = base + " --ckpt " + q(ckpt);

  // deterministic anticipation; horizon lengths must match the strided videos
  ok("anticipate " + with_ckpt + " --mode deterministic --name det.tsv");
  const DatasetOnDisk test_set = load_dataset(data, 4, "test");
  std::map<std::string, int> total_frames;
  for (const auto& v : test_set.videos)
    total_frames[v.video_id] = static_cast<int>(v.frame_labels.size());

  const auto det = parse_dump(out / "det.tsv");
  REQUIRE(det.size() == test_set.videos.size());
  for (const auto& r : det) {
    CHECK(r.sample_id == 0);
    CHECK(r.alpha == doctest::Approx(0.3).epsilon(1e-12));
    REQUIRE(total_frames.count(r.video_id) == 1);
    const int t = total_frames[r.video_id];
    const int observed = static_cast<int>(std::floor(0.3 * t));
    CHECK(static_cast<int>(r.frames.size()) == t - observed);
    for (int f : r.frames) {
      CHECK(f >= 0);
      CHECK(f < test_set.vocab.size());
    }
  }

  // reruns are byte-identical
  ok("anticipate " + with_ckpt + " --mode deterministic --name det2.tsv");
  CHECK(read_file(out / "det.tsv") == read_file(out / "det2.tsv"));
  CHECK(read_file(out / "det.segs.tsv") == read_file(out / "det2.segs.tsv"));

  // moc scoring, twice, byte-identical reports
  ok("eval " + base + " --preds " + q(out / "det.tsv") + " --report det_report");
  CHECK(fs::exists(out / "det_report.txt"));
  const double det_moc = csv_value(out / "det_report.csv", "moc.value");
  CHECK(det_moc >= 0.0);
  CHECK(det_moc <= 1.0);
  CHECK(csv_value(out / "det_report.csv", "window.alpha") == doctest::Approx(0.3));
  const std::string report_bytes = read_file(out / "det_report.csv");
  ok("eval " + base + " --preds " + q(out / "det.tsv") + " --report det_report");
  CHECK(read_file(out / "det_report.csv") == report_bytes);

  // ground truth scored against itself is a perfect prediction
  {
    const DatasetOnDisk full = load_dataset(data, 4, "test");
    std::ostringstream gt;
    for (const auto& v : full.videos) {
      const int t = static_cast<int>(v.frame_labels.size());
      const int observed = static_cast<int>(std::floor(0.3 * t));
      gt << v.video_id << "\t0\t0.3\t";
      for (int i = observed; i < t; ++i)
        gt << (i > observed ? " " : "") << v.frame_labels[static_cast<std::size_t>(i)];
      gt << "\n";
    }
    atomic_write(out / "gt.tsv", gt.str());
    ok("eval " + base + " --preds " + q(out / "gt.tsv") + " --report gt_report");
    CHECK(csv_value(out / "gt_report.csv", "moc.value") ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  // evaluating at a different alpha than the dump was made at is an error
  CHECK(run("eval " + base + " --preds " + q(out / "det.tsv") + " --alpha 0.5") == 3);

  // stochastic anticipation with diversity protocols
  ok("anticipate " + with_ckpt + " --mode stochastic --samples 3 --name sto.tsv");
  const auto sto = parse_dump(out / "sto.tsv");
  REQUIRE(sto.size() == 3 * test_set.videos.size());
  std::map<std::string, std::vector<int>> ids;
  for (const auto& r : sto) ids[r.video_id].push_back(r.sample_id);
  for (const auto& [id, samples] : ids) CHECK(samples == std::vector<int>{0, 1, 2});

  ok("eval " + base + " --preds " + q(out / "sto.tsv") + " --protocol div-avg --report avg");
  const double avg = csv_value(out / "avg.csv", "div.avg");
  CHECK(avg >= 0.0);
  CHECK(avg <= 1.0);
  CHECK(csv_value(out / "avg.csv", "div.m") == doctest::Approx(3.0));
  ok("eval " + base + " --preds " + q(out / "sto.tsv") +
     " --protocol div-top1 --m 2 --report top1");
  CHECK(csv_value(out / "top1.csv", "div.m") == doctest::Approx(2.0));
  CHECK(csv_value(out / "top1.csv", "div.top1") >= 0.0);

  // intermediate-step dumps feed the steps protocol and the curve plot
  ok("anticipate " + with_ckpt + " --mode deterministic --keep-intermediate --name inter.tsv");
  REQUIRE(fs::exists(out / "inter.steps.tsv"));
  ok("eval " + base + " --preds " + q(out / "inter.tsv") + " --protocol steps --report steps");
  CHECK(csv_value(out / "steps.csv", "steps.9") >= 0.0);
  CHECK(csv_value(out / "steps.csv", "steps.1") >= 0.0);
  ok("plot --curve " + q(out / "steps.csv") + " --svg " + q(out / "curve.svg"));
  CHECK(read_file(out / "curve.svg").rfind("<svg", 0) == 0);

  // timeline plot from the stochastic dump
  ok("plot --profile tiny --data " + q(data) + " --timeline " + q(out / "sto.tsv") +
     " --video test_00000 --svg " + q(out / "timeline.svg"));
  CHECK(read_file(out / "timeline.svg").rfind("<svg", 0) == 0);

  // observed-frame dump feeds the segmentation protocol
  ok("anticipate " + with_ckpt + " --mode deterministic --dump-observed --name obsrun.tsv");
  REQUIRE(fs::exists(out / "obsrun.obs.tsv"));
  ok("eval " + base + " --preds " + q(out / "obsrun.tsv") + " --protocol seg --report seg");
  const double acc = csv_value(out / "seg.csv", "seg.acc");
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(csv_value(out / "seg.csv", "seg.f1_10") <= 100.0);

  // config files layer under --set overrides
  {
    atomic_write(kRoot / "small.cfg", "# fewer videos\ndata.n_train = 3\ndata.n_test = 1\n");
    const fs::path data2 = kRoot / "data2";
    ok("synth --profile tiny --seed 5 --config " + q(kRoot / "small.cfg") + " --out " + q(data2));
    int rows = 0;
    std::istringstream manifest(read_file(data2 / "manifest.tsv"));
    std::string line;
    while (std::getline(manifest, line))
      if (!line.empty() && line[0] != '#') ++rows;
    CHECK(rows == 4);
  }
}

TEST_CASE("multilabel pipeline produces score dumps and map reports") {
  const fs::path data = kRoot / "data";
  const fs::path out = kRoot / "run_ml";
  REQUIRE(fs::exists(data / "manifest.tsv"));  // created by the previous case
  fs::remove_all(out);

  const std::string ml_sets = " --set model.multilabel=true --set model.queries=1";
  ok("train --profile tiny --seed 5 --data " + q(data) + " --out " + q(out) + ml_sets);
  ok("anticipate --profile tiny --seed 5 --data " + q(data) + " --out " + q(out) +
     " --ckpt " + q(out / "model.ckpt") + " --mode deterministic --name ml.tsv");
  REQUIRE(fs::exists(out / "ml.scores.tsv"));

  // frame dumps are empty in multilabel mode; scores carry the prediction
  for (const auto& r : parse_dump(out / "ml.tsv")) CHECK(r.frames.empty());

  ok("eval --profile tiny --seed 5 --data " + q(data) + " --out " + q(out) + " --preds " +
     q(out / "ml.tsv") + " --protocol map --report ml_report");
  const double map_all = csv_value(out / "ml_report.csv", "map.all");
  CHECK(map_all >= 0.0);
  CHECK(map_all <= 1.0);
}
