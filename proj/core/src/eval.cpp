#include "diffant/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "diffant/data.hpp"
#include "diffant/errors.hpp"

namespace diffant {

void EvalWindow::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0))
    throw ConfigError("eval window: alpha and beta must be in (0,1)");
  if (alpha + beta > 1.0) throw ConfigError("eval window: alpha + beta must be <= 1");
}

std::pair<int, int> EvalWindow::frame_range(int total_frames) const {
  const int begin = static_cast<int>(std::floor(alpha * total_frames));
  const int len = static_cast<int>(std::floor(beta * total_frames));
  return {begin, begin + len};
}

WindowFrames window_frames(const std::vector<int>& gt_full, const std::vector<int>& pred_horizon,
                           const EvalWindow& window) {
  window.validate();
  const int t = static_cast<int>(gt_full.size());
  const auto [begin, end] = window.frame_range(t);
  if (end <= begin) throw DataError("eval window empty for a video of length " + std::to_string(t));
  if (static_cast<int>(pred_horizon.size()) < end - begin)
    throw DataError("prediction shorter than the evaluation window");

  WindowFrames wf;
  wf.gt.assign(gt_full.begin() + begin, gt_full.begin() + end);
  wf.pred.assign(pred_horizon.begin(), pred_horizon.begin() + (end - begin));
  return wf;
}

double moc(std::span<const WindowFrames> videos, int num_classes) {
  std::vector<long long> correct(static_cast<std::size_t>(num_classes), 0);
  std::vector<long long> total(static_cast<std::size_t>(num_classes), 0);
  for (const auto& v : videos) {
    if (v.pred.size() != v.gt.size())
      throw std::invalid_argument("moc: pred/gt window length mismatch");
    for (std::size_t i = 0; i < v.gt.size(); ++i) {
      const int c = v.gt[i];
      if (c < 0 || c >= num_classes) throw std::invalid_argument("moc: class id out of range");
      ++total[static_cast<std::size_t>(c)];
      if (v.pred[i] == c) ++correct[static_cast<std::size_t>(c)];
    }
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
    ++present;
  }
  if (present == 0) throw DataError("moc: no ground-truth frames in any window");
  return sum / present;
}

namespace {

double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[static_cast<std::size_t>(a)] >
                                              scores[static_cast<std::size_t>(b)]; });
  int hits = 0;
  double ap = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positive[static_cast<std::size_t>(order[rank])]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return hits > 0 ? ap / hits : std::numeric_limits<double>::quiet_NaN();
}

double mean_over(const std::vector<double>& per_class, const std::vector<int>& classes) {
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    const double v = per_class[static_cast<std::size_t>(c)];
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

MapResult map_multilabel(const std::vector<Eigen::VectorXd>& scores,
                         const std::vector<std::vector<int>>& gt_sets,
                         const std::vector<int>& freq_classes,
                         const std::vector<int>& rare_classes) {
  if (scores.empty() || scores.size() != gt_sets.size())
    throw std::invalid_argument("map: scores/gt size mismatch");
  const int c = static_cast<int>(scores.front().size());

  MapResult res;
  res.per_class.assign(static_cast<std::size_t>(c), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int counted = 0;
  for (int cls = 0; cls < c; ++cls) {
    std::vector<double> s(scores.size());
    std::vector<bool> pos(scores.size(), false);
    bool any = false;
    for (std::size_t v = 0; v < scores.size(); ++v) {
      if (scores[v].size() != c) throw std::invalid_argument("map: ragged score vectors");
      s[v] = scores[v](cls);
      for (int g : gt_sets[v])
        if (g == cls) {
          pos[v] = true;
          any = true;
        }
    }
    if (!any) continue;  // zero-positive classes are excluded
    res.per_class[static_cast<std::size_t>(cls)] = average_precision(s, pos);
    sum += res.per_class[static_cast<std::size_t>(cls)];
    ++counted;
  }
  if (counted == 0) throw DataError("map: no positive class anywhere");
  res.all = sum / counted;
  res.freq = mean_over(res.per_class, freq_classes);
  res.rare = mean_over(res.per_class, rare_classes);
  return res;
}

double diverse_eval(const std::vector<std::vector<WindowFrames>>& samples, int num_classes,
                    DiverseProtocol protocol) {
  if (samples.empty()) throw std::invalid_argument("diverse_eval: no videos");
  const std::size_t m = samples.front().size();
  if (m == 0) throw std::invalid_argument("diverse_eval: no samples");
  for (const auto& v : samples)
    if (v.size() != m) throw std::invalid_argument("diverse_eval: ragged sample sets");

  if (protocol == DiverseProtocol::averaged) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<WindowFrames> slice;
      slice.reserve(samples.size());
      for (const auto& v : samples) slice.push_back(v[j]);
      sum += moc(slice, num_classes);
    }
    return sum / static_cast<double>(m);
  }

  std::vector<WindowFrames> best;
  best.reserve(samples.size());
  for (const auto& v : samples) {
    std::size_t pick = 0;
    long long pick_correct = -1;
    for (std::size_t j = 0; j < m; ++j) {
      long long correct = 0;
      for (std::size_t i = 0; i < v[j].gt.size(); ++i)
        if (v[j].pred[i] == v[j].gt[i]) ++correct;
      if (correct > pick_correct) {  // ties keep the lowest sample id
        pick_correct = correct;
        pick = j;
      }
    }
    best.push_back(v[pick]);
  }
  return moc(best, num_classes);
}

namespace {

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<int> segment_labels(const std::vector<int>& frames) {
  std::vector<int> labels;
  for (const auto& seg : run_length_segments(frames)) labels.push_back(seg.class_id);
  return labels;
}

struct F1Counts {
  long long tp = 0, fp = 0, fn = 0;
};

F1Counts f1_counts(const std::vector<int>& pred, const std::vector<int>& gt, double iou_thresh) {
  const auto ps = run_length_segments(pred);
  const auto gs = run_length_segments(gt);
  std::vector<bool> used(gs.size(), false);

  F1Counts c;
  for (const auto& p : ps) {
    double best_iou = 0.0;
    int best = -1;
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (used[g] || gs[g].class_id != p.class_id) continue;
      const int inter = std::max(0, std::min(p.end, gs[g].end) - std::max(p.begin, gs[g].begin));
      const int uni = std::max(p.end, gs[g].end) - std::min(p.begin, gs[g].begin);
      const double iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      used[static_cast<std::size_t>(best)] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  for (bool u : used)
    if (!u) ++c.fn;
  return c;
}

}  // namespace

SegMetrics seg_metrics(const std::vector<std::vector<int>>& preds,
                       const std::vector<std::vector<int>>& gts) {
  if (preds.size() != gts.size()) throw std::invalid_argument("seg_metrics: size mismatch");
  SegMetrics out;

  long long correct = 0, total = 0;
  double edit_sum = 0.0;
  F1Counts c10, c25, c50;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    const auto& p = preds[v];
    const auto& g = gts[v];
    for (std::size_t i = 0; i < g.size(); ++i) {
      ++total;
      if (i < p.size() && p[i] == g[i]) ++correct;
    }
    const auto pl = segment_labels(p);
    const auto gl = segment_labels(g);
    const std::size_t longest = std::max(pl.size(), gl.size());
    edit_sum += longest == 0 ? 100.0
                             : (1.0 - static_cast<double>(levenshtein(pl, gl)) / longest) * 100.0;
    for (auto [counts, thresh] : {std::pair{&c10, 0.10}, {&c25, 0.25}, {&c50, 0.50}}) {
      const F1Counts cc = f1_counts(p, g, thresh);
      counts->tp += cc.tp;
      counts->fp += cc.fp;
      counts->fn += cc.fn;
    }
  }
  out.acc = total > 0 ? static_cast<double>(correct) / total : 0.0;
  out.edit = preds.empty() ? 0.0 : edit_sum / static_cast<double>(preds.size());
  auto f1 = [](const F1Counts& c) {
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    return denom > 0.0 ? 100.0 * 2.0 * c.tp / denom : 0.0;
  };
  out.f1_10 = f1(c10);
  out.f1_25 = f1(c25);
  out.f1_50 = f1(c50);
  return out;
}

void MetricReport::add(std::string key, double value) {
  entries_.emplace_back(std::move(key), value);
}

double MetricReport::at(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw std::invalid_argument("report: no such key: " + key);
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  std::string section;
  for (const auto& [k, v] : entries_) {
    const auto dot = k.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
    if (sec != section) {
      section = sec;
      out << "[" << section << "]\n";
    }
    out << "  " << (dot == std::string::npos ? k : k.substr(dot + 1)) << " = " << v << "\n";
  }
  return out.str();
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "key,value\n";
  for (const auto& [k, v] : entries_) out << k << "," << v << "\n";
  return out.str();
}

}  // namespace diffant
