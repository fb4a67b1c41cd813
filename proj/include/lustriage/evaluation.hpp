#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lustriage/detection.hpp"
#include "lustriage/video.hpp"

namespace lustriage {

// ---------------------------------------------------------------------------
// Detection matching and average precision

struct ScoredMatch {
  double confidence = 0;
  bool true_positive = false;
};

struct ClassMatches {
  std::vector<ScoredMatch> predictions;
  int gt_count = 0;

  int true_positives() const;
};

struct MatchResult {
  double iou_threshold = 0.5;
  std::array<ClassMatches, kNumClasses> per_class;

  const ClassMatches& operator[](LandmarkClass c) const { return per_class[class_id(c)]; }
};

/// Greedy per-frame, per-class matching. Predictions are visited by
/// descending confidence (ties by input order); each takes the unmatched
/// ground-truth box of its class with the highest IoU >= iou_threshold, ties
/// to the lowest ground-truth index. Frames are aligned by frame_id; a
/// prediction frame with no ground-truth frame is a ValidationError.
MatchResult match_detections(std::span<const FrameDetections> gt,
                             std::span<const FrameDetections> pred, double iou_threshold);

/// All-point interpolated AP. Predictions sharing a confidence enter the
/// curve together. Returns nullopt when the class has neither ground truth
/// nor predictions; 0 when it has predictions but no ground truth.
std::optional<double> average_precision(const ClassMatches& matches);

/// Mean of the defined per-class APs; nullopt when no class is defined.
std::optional<double> mean_ap(const MatchResult& matches);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct ApAtThreshold {
  double iou_threshold = 0;
  std::array<std::optional<double>, kNumClasses> per_class;
  std::optional<double> map;
};

struct MapResult {
  std::vector<ApAtThreshold> per_threshold;
  /// Mean over thresholds with a defined mAP.
  std::optional<double> map;
};

/// Re-matches at every threshold and averages.
MapResult mean_ap(std::span<const FrameDetections> gt, std::span<const FrameDetections> pred,
                  std::span<const double> iou_thresholds);

struct PrecisionRecall {
  double precision = 0;  // 0 when nothing is predicted
  double recall = 0;     // 0 when there is no ground truth
  double f1 = 0;
  int true_positives = 0;
  int predictions = 0;
  int gt_count = 0;
};

/// Counts only predictions with confidence >= confidence_threshold.
PrecisionRecall precision_recall_at(const ClassMatches& matches, double confidence_threshold);

/// Pools every class into one set of matches.
ClassMatches pool_classes(const MatchResult& matches);

struct CurvePoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct ClassCurve {
  std::optional<LandmarkClass> cls;  // nullopt = all classes pooled
  std::vector<CurvePoint> points;
};

/// One curve per class that has ground truth or predictions, followed by
/// the pooled all-class curve.
std::vector<ClassCurve> pr_f1_curves(const MatchResult& matches,
                                     std::span<const double> confidence_grid);

/// 0.00, 0.01, ..., 1.00.
std::vector<double> default_confidence_grid();

// ---------------------------------------------------------------------------
// Confusion matrices

/// Rows are actual classes, columns predicted. Columns may include extra
/// labels ("No class", "Undetected") that are excluded from metrics.
struct ConfusionMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<std::int64_t>> counts;

  void validate() const;
};

struct ClassMetrics {
  std::string label;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

/// One-vs-rest metrics over the square core left after dropping
/// `excluded_columns`. A zero denominator leaves that metric empty.
std::vector<ClassMetrics> confusion_metrics(const ConfusionMatrix& matrix,
                                            std::span<const std::string> excluded_columns);

struct BinaryVideoMetrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
};

/// Rows {Abnormal, Normal} x columns {Abnormal, Normal, Undetected}, by
/// position. Abnormal is the positive class; Undetected counts enter the
/// accuracy and recall denominators.
BinaryVideoMetrics binary_video_metrics(const ConfusionMatrix& matrix);

inline constexpr const char* kNoClassLabel = "No class";

/// Rows "Class 1".."Class 5" (ground truth), columns "Class 1".."Class 5"
/// plus "No class" for predicted Class 0 or 6.
ConfusionMatrix build_frame_confusion(std::span<const int> gt_classes,
                                      std::span<const FrameAnalysis> analyses);

/// Ground truth must be Abnormal or Normal per video.
ConfusionMatrix build_video_confusion(std::span<const Diagnosis> gt,
                                      std::span<const VideoAnalysis> videos);

}  // namespace lustriage
