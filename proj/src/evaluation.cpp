#include "lustriage/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "lustriage/errors.hpp"

namespace lustriage {

int ClassMatches::true_positives() const {
  return static_cast<int>(std::count_if(predictions.begin(), predictions.end(),
                                        [](const ScoredMatch& m) { return m.true_positive; }));
}

namespace {

void match_frame(const FrameDetections* gt, const FrameDetections* pred, double iou_threshold,
                 MatchResult& result) {
  for (auto cls : kAllClasses) {
    std::vector<const BBox*> gt_boxes;
    if (gt)
      for (const auto& d : gt->detections)
        if (d.cls == cls) gt_boxes.push_back(&d.box);

    std::vector<const Detection*> preds;
    if (pred)
      for (const auto& d : pred->detections)
        if (d.cls == cls) preds.push_back(&d);
    std::stable_sort(preds.begin(), preds.end(), [](const Detection* a, const Detection* b) {
      return a->confidence > b->confidence;
    });

    ClassMatches& out = result.per_class[class_id(cls)];
    out.gt_count += static_cast<int>(gt_boxes.size());

    std::vector<bool> taken(gt_boxes.size(), false);
    for (const Detection* p : preds) {
      int best = -1;
      double best_iou = -1;
      for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
        if (taken[g]) continue;
        const double o = iou(p->box, *gt_boxes[g]);
        if (o >= iou_threshold && o > best_iou) {
          best = static_cast<int>(g);
          best_iou = o;
        }
      }
      if (best >= 0) taken[best] = true;
      out.predictions.push_back({p->confidence, best >= 0});
    }
  }
}

}  // namespace

MatchResult match_detections(std::span<const FrameDetections> gt,
                             std::span<const FrameDetections> pred, double iou_threshold) {
  std::map<std::string, const FrameDetections*> gt_by_id;
  for (const auto& f : gt)
    if (!gt_by_id.emplace(f.frame_id, &f).second)
      throw ValidationError("duplicate ground-truth frame '" + f.frame_id + "'");

  std::map<std::string, const FrameDetections*> pred_by_id;
  for (const auto& f : pred) {
    if (!gt_by_id.contains(f.frame_id))
      throw ValidationError("prediction frame '" + f.frame_id + "' has no ground truth");
    if (!pred_by_id.emplace(f.frame_id, &f).second)
      throw ValidationError("duplicate prediction frame '" + f.frame_id + "'");
  }

  MatchResult result;
  result.iou_threshold = iou_threshold;
  for (const auto& [id, g] : gt_by_id) {
    auto it = pred_by_id.find(id);
    match_frame(g, it == pred_by_id.end() ? nullptr : it->second, iou_threshold, result);
  }
  return result;
}

std::optional<double> average_precision(const ClassMatches& matches) {
  if (matches.gt_count == 0) {
    if (matches.predictions.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<ScoredMatch> sorted = matches.predictions;
  std::sort(sorted.begin(), sorted.end(), [](const ScoredMatch& a, const ScoredMatch& b) {
    return a.confidence > b.confidence;
  });

  // (recall, precision) at the end of every confidence tie group
  std::vector<double> recall;
  std::vector<double> precision;
  int tp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].true_positive) ++tp;
    const bool group_end =
        i + 1 == sorted.size() || sorted[i + 1].confidence != sorted[i].confidence;
    if (!group_end) continue;
    recall.push_back(static_cast<double>(tp) / matches.gt_count);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }

  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

std::optional<double> mean_ap(const MatchResult& matches) {
  double sum = 0;
  int n = 0;
  for (const auto& cm : matches.per_class) {
    if (auto ap = average_precision(cm)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int pct = 50; pct <= 95; pct += 5) t.push_back(pct / 100.0);
  return t;
}

MapResult mean_ap(std::span<const FrameDetections> gt, std::span<const FrameDetections> pred,
                  std::span<const double> iou_thresholds) {
  MapResult result;
  double sum = 0;
  int n = 0;
  for (double t : iou_thresholds) {
    const MatchResult m = match_detections(gt, pred, t);
    ApAtThreshold at;
    at.iou_threshold = t;
    for (auto c : kAllClasses) at.per_class[class_id(c)] = average_precision(m[c]);
    at.map = mean_ap(m);
    if (at.map) {
      sum += *at.map;
      ++n;
    }
    result.per_threshold.push_back(at);
  }
  if (n > 0) result.map = sum / n;
  return result;
}

PrecisionRecall precision_recall_at(const ClassMatches& matches, double confidence_threshold) {
  PrecisionRecall pr;
  pr.gt_count = matches.gt_count;
  for (const auto& m : matches.predictions) {
    if (m.confidence < confidence_threshold) continue;
    ++pr.predictions;
    if (m.true_positive) ++pr.true_positives;
  }
  if (pr.predictions > 0)
    pr.precision = static_cast<double>(pr.true_positives) / pr.predictions;
  if (pr.gt_count > 0) pr.recall = static_cast<double>(pr.true_positives) / pr.gt_count;
  if (pr.precision + pr.recall > 0)
    pr.f1 = 2 * pr.precision * pr.recall / (pr.precision + pr.recall);
  return pr;
}

ClassMatches pool_classes(const MatchResult& matches) {
  ClassMatches all;
  for (const auto& cm : matches.per_class) {
    all.gt_count += cm.gt_count;
    all.predictions.insert(all.predictions.end(), cm.predictions.begin(),
                           cm.predictions.end());
  }
  return all;
}

std::vector<ClassCurve> pr_f1_curves(const MatchResult& matches,
                                     std::span<const double> confidence_grid) {
  auto curve = [&](const ClassMatches& cm) {
    std::vector<CurvePoint> points;
    for (double t : confidence_grid) {
      const PrecisionRecall pr = precision_recall_at(cm, t);
      points.push_back({t, pr.precision, pr.recall, pr.f1});
    }
    return points;
  };

  std::vector<ClassCurve> curves;
  for (auto c : kAllClasses) {
    const ClassMatches& cm = matches[c];
    if (cm.gt_count == 0 && cm.predictions.empty()) continue;
    curves.push_back({c, curve(cm)});
  }
  curves.push_back({std::nullopt, curve(pool_classes(matches))});
  return curves;
}

std::vector<double> default_confidence_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  return grid;
}

// ---------------------------------------------------------------------------

void ConfusionMatrix::validate() const {
  if (counts.size() != rows.size())
    throw ValidationError(fmt::format("confusion matrix has {} row labels but {} rows",
                                      rows.size(), counts.size()));
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r].size() != columns.size())
      throw ValidationError(fmt::format("row '{}' has {} counts, expected {}", rows[r],
                                        counts[r].size(), columns.size()));
    for (auto v : counts[r])
      if (v < 0) throw ValidationError(fmt::format("row '{}' has a negative count", rows[r]));
  }
}

std::vector<ClassMetrics> confusion_metrics(const ConfusionMatrix& matrix,
                                            std::span<const std::string> excluded_columns) {
  matrix.validate();
  for (const auto& ex : excluded_columns)
    if (std::find(matrix.columns.begin(), matrix.columns.end(), ex) == matrix.columns.end())
      throw ValidationError("excluded column '" + ex + "' not in matrix");

  std::vector<std::size_t> core_cols;
  for (std::size_t c = 0; c < matrix.columns.size(); ++c)
    if (std::find(excluded_columns.begin(), excluded_columns.end(), matrix.columns[c]) ==
        excluded_columns.end())
      core_cols.push_back(c);

  const std::size_t n = matrix.rows.size();
  if (core_cols.size() != n)
    throw ValidationError(fmt::format("core matrix is {}x{}, not square", n, core_cols.size()));

  auto core = [&](std::size_t r, std::size_t c) { return matrix.counts[r][core_cols[c]]; };
  std::int64_t total = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) total += core(r, c);

  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };

  std::vector<ClassMetrics> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t row_sum = 0;
    std::int64_t col_sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row_sum += core(k, j);
      col_sum += core(j, k);
    }
    const std::int64_t tp = core(k, k);
    const std::int64_t fn = row_sum - tp;
    const std::int64_t fp = col_sum - tp;
    const std::int64_t tn = total - tp - fn - fp;
    out.push_back({matrix.rows[k], ratio(tp + tn, total), ratio(tp, tp + fn),
                   ratio(tn, tn + fp)});
  }
  return out;
}

BinaryVideoMetrics binary_video_metrics(const ConfusionMatrix& matrix) {
  matrix.validate();
  if (matrix.rows.size() != 2 || matrix.columns.size() != 3)
    throw ValidationError("binary video matrix must be 2 rows x 3 columns "
                          "(Abnormal, Normal, Undetected)");
  const auto& m = matrix.counts;
  const std::int64_t tp = m[0][0];
  const std::int64_t tn = m[1][1];
  const std::int64_t fp = m[1][0];
  const std::int64_t abnormal_total = m[0][0] + m[0][1] + m[0][2];
  const std::int64_t total = abnormal_total + m[1][0] + m[1][1] + m[1][2];

  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  return {ratio(tp + tn, total), ratio(tp, tp + fp), ratio(tp, abnormal_total)};
}

ConfusionMatrix build_frame_confusion(std::span<const int> gt_classes,
                                      std::span<const FrameAnalysis> analyses) {
  if (gt_classes.size() != analyses.size())
    throw ValidationError(fmt::format("{} ground-truth labels for {} frames", gt_classes.size(),
                                      analyses.size()));
  ConfusionMatrix m;
  for (int c = 1; c <= 5; ++c) {
    m.rows.push_back(fmt::format("Class {}", c));
    m.columns.push_back(fmt::format("Class {}", c));
  }
  m.columns.emplace_back(kNoClassLabel);
  m.counts.assign(5, std::vector<std::int64_t>(6, 0));

  for (std::size_t i = 0; i < analyses.size(); ++i) {
    const int gt = gt_classes[i];
    if (gt < 1 || gt > 5)
      throw ValidationError(fmt::format("frame '{}': ground-truth class {} outside 1..5",
                                        analyses[i].frame_id, gt));
    const int predicted = analyses[i].severity.severity_class;
    const int col = (predicted >= 1 && predicted <= 5) ? predicted - 1 : 5;
    ++m.counts[gt - 1][col];
  }
  return m;
}

ConfusionMatrix build_video_confusion(std::span<const Diagnosis> gt,
                                      std::span<const VideoAnalysis> videos) {
  if (gt.size() != videos.size())
    throw ValidationError(
        fmt::format("{} ground-truth labels for {} videos", gt.size(), videos.size()));
  ConfusionMatrix m;
  m.rows = {"Abnormal", "Normal"};
  m.columns = {"Abnormal", "Normal", "Undetected"};
  m.counts.assign(2, std::vector<std::int64_t>(3, 0));
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (gt[i] == Diagnosis::Undetected)
      throw ValidationError("video '" + videos[i].video_id +
                            "': ground truth must be Abnormal or Normal");
    const std::size_t row = gt[i] == Diagnosis::Abnormal ? 0 : 1;
    const std::size_t col = static_cast<std::size_t>(videos[i].diagnosis);
    ++m.counts[row][col];
  }
  return m;
}

}  // namespace lustriage
