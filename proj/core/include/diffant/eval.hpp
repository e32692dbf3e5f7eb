#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace diffant {

struct EvalWindow {
  double alpha = 0.3;
  double beta = 0.5;

  void validate() const;
  // window [floor(alpha*T), floor(alpha*T) + floor(beta*T)) over a T-frame video
  std::pair<int, int> frame_range(int total_frames) const;
};

// Per-video frame labels inside the evaluation window; pred and gt aligned.
struct WindowFrames {
  std::vector<int> pred;
  std::vector<int> gt;
};

// Cuts the window out of full ground-truth labels (length T) and a prediction
// that starts at frame floor(alpha*T).
WindowFrames window_frames(const std::vector<int>& gt_full, const std::vector<int>& pred_horizon,
                           const EvalWindow& window);

// Mean over classes of dataset-pooled per-class frame accuracy; classes with
// no ground-truth frames in any window are skipped.
double moc(std::span<const WindowFrames> videos, int num_classes);

struct MapResult {
  double all = 0.0;
  double freq = 0.0;
  double rare = 0.0;
  std::vector<double> per_class;  // NaN for classes without positives
};

// Average precision per class over the video ranking (score descending, ties
// by lower video index), averaged over all / frequent / rare classes.
MapResult map_multilabel(const std::vector<Eigen::VectorXd>& scores,
                         const std::vector<std::vector<int>>& gt_sets,
                         const std::vector<int>& freq_classes,
                         const std::vector<int>& rare_classes);

enum class DiverseProtocol { averaged, top1 };

// samples[v][j] = window frames of sample j for video v (all samples of one
// video share the gt). averaged: mean MoC over sample index; top1: per video
// keep the sample with the most correct frames (ties: lowest sample id).
double diverse_eval(const std::vector<std::vector<WindowFrames>>& samples, int num_classes,
                    DiverseProtocol protocol);

struct SegMetrics {
  double acc = 0.0;    // in [0, 1]
  double edit = 0.0;   // x100
  double f1_10 = 0.0;  // x100
  double f1_25 = 0.0;
  double f1_50 = 0.0;
};

// Standard action-segmentation scores over the observed portion; F1 counts
// are pooled across videos before the final ratio.
SegMetrics seg_metrics(const std::vector<std::vector<int>>& preds,
                       const std::vector<std::vector<int>>& gts);

// Flat key/value report; keys use dots for sections ("moc.a0.30_b0.50").
class MetricReport {
public:
  void add(std::string key, double value);
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  double at(const std::string& key) const;

  std::string to_text() const;  // sectioned human-readable table
  std::string to_csv() const;   // key,value lines

private:
  std::vector<std::pair<std::string, double>> entries_;
};

}  // namespace diffant
