#pragma once

// Detection bookkeeping and average precision.
//
// Matching is greedy by confidence on BEV IoU. AP is the all-point
// interpolated area under the precision-recall curve, with predictions pooled
// across frames before ranking. Predictions with equal confidence enter the
// curve together, so AP depends only on the ordering of confidences.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "infracp/geometry.hpp"

namespace infracp {

struct MatchPair {
  std::size_t prediction = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct ScoredPrediction {
  double confidence = 0.0;
  bool true_positive = false;

  friend bool operator==(const ScoredPrediction&, const ScoredPrediction&) = default;
};

struct MatchResult {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  std::vector<MatchPair> pairs;            // in matching order
  std::vector<ScoredPrediction> scored;    // one entry per prediction, input order

  int ground_truth_count() const { return true_positives + false_negatives; }

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Greedy matching: predictions in order of descending confidence (ties by
/// input index) each claim the unmatched ground truth of highest IoU, provided
/// that IoU reaches `iou_threshold`.
inline MatchResult match(std::span<const OrientedBox3D> preds, std::span<const OrientedBox3D> gts,
                         double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw std::invalid_argument("match: iou_threshold must lie in (0,1)");
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });

  MatchResult r;
  r.scored.resize(preds.size());
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t pi : order) {
    r.scored[pi].confidence = preds[pi].confidence;
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = bev_iou(preds[pi], gts[g]);
      if (iou > best) {
        best = iou;
        best_g = g;
      }
    }
    if (best >= iou_threshold) {
      taken[best_g] = true;
      r.scored[pi].true_positive = true;
      r.pairs.push_back({pi, best_g, best});
      ++r.true_positives;
    } else {
      ++r.false_positives;
    }
  }
  r.false_negatives = static_cast<int>(gts.size()) - r.true_positives;
  return r;
}

/// All-point interpolated AP over the pooled predictions of `frames`.
/// Returns nullopt when the frames hold no ground truth at all.
inline std::optional<double> average_precision(std::span<const MatchResult> frames) {
  std::int64_t n_gt = 0;
  std::vector<ScoredPrediction> pooled;
  for (const MatchResult& m : frames) {
    n_gt += m.ground_truth_count();
    pooled.insert(pooled.end(), m.scored.begin(), m.scored.end());
  }
  if (n_gt == 0) return std::nullopt;
  std::sort(pooled.begin(), pooled.end(),
            [](const ScoredPrediction& a, const ScoredPrediction& b) { return a.confidence > b.confidence; });

  // One operating point per distinct confidence.
  std::vector<double> recall, precision;
  std::int64_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].confidence == pooled[i].confidence) {
      tp += pooled[j].true_positive ? 1 : 0;
      ++seen;
      ++j;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  // Precision envelope, then area under the step curve.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Reports

/// What a report was computed from. Plain values, so evaluation stays
/// independent of the harness types.
struct RunDescriptor {
  std::string cp_mode;
  std::string range_shape;
  std::string noise;  // label, e.g. "Harsh(3)"
  double sigma_xy = 0.0;
  double sigma_yaw_deg = 0.0;
  int latency_frames = 0;
  int compression_factor = 1;
  std::string fusion;
  std::vector<std::uint64_t> seeds;

  friend bool operator==(const RunDescriptor&, const RunDescriptor&) = default;
};

/// Per-frame match results of one scene at both IoU thresholds.
struct SceneRun {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<MatchResult> at50;
  std::vector<MatchResult> at70;
};

struct SceneScore {
  std::string scenario;
  std::uint64_t seed = 0;
  std::optional<double> ap50;
  std::optional<double> ap70;
  int n_ground_truth = 0;
  int n_predictions = 0;

  friend bool operator==(const SceneScore&, const SceneScore&) = default;
};

struct EvalReport {
  RunDescriptor config;
  std::optional<double> ap50;  // pooled over every frame of every scene
  std::optional<double> ap70;
  std::optional<double> mean_scene_ap50;  // mean over scenes with ground truth
  std::optional<double> mean_scene_ap70;
  std::vector<SceneScore> scenes;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<SceneScore>& scenes, std::optional<double> SceneScore::*field) {
  double sum = 0.0;
  int n = 0;
  for (const SceneScore& s : scenes)
    if (s.*field) {
      sum += *(s.*field);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace detail

inline EvalReport report(std::span<const SceneRun> runs, RunDescriptor descriptor) {
  EvalReport r;
  r.config = std::move(descriptor);
  std::vector<MatchResult> all50, all70;
  for (const SceneRun& run : runs) {
    if (run.at50.size() != run.at70.size()) throw std::invalid_argument("report: threshold runs differ in frame count");
    SceneScore s;
    s.scenario = run.scenario;
    s.seed = run.seed;
    s.ap50 = average_precision(run.at50);
    s.ap70 = average_precision(run.at70);
    for (const MatchResult& m : run.at50) {
      s.n_ground_truth += m.ground_truth_count();
      s.n_predictions += static_cast<int>(m.scored.size());
    }
    r.scenes.push_back(std::move(s));
    all50.insert(all50.end(), run.at50.begin(), run.at50.end());
    all70.insert(all70.end(), run.at70.begin(), run.at70.end());
  }
  r.ap50 = average_precision(all50);
  r.ap70 = average_precision(all70);
  r.mean_scene_ap50 = detail::mean_of(r.scenes, &SceneScore::ap50);
  r.mean_scene_ap70 = detail::mean_of(r.scenes, &SceneScore::ap70);
  return r;
}

}  // namespace infracp
