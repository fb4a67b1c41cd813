#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lustriage/detection.hpp"

namespace lustriage {

/// Image-quality bands, ordered worst to best so labels compare naturally.
enum class QualityLabel : std::uint8_t { Bad, BelowAverage, Average, Good, Excellent };

std::string_view to_string(QualityLabel q);
std::optional<QualityLabel> quality_label_from_string(std::string_view s);

/// Points per quality bucket.
inline constexpr int kPleuraPoints = 30;
inline constexpr int kRibPoints = 15;
inline constexpr int kShadowPoints = 10;
inline constexpr int kArtifactPoints = 45;

struct QualityBuckets {
  bool pleura = false;
  bool rib = false;
  bool shadow = false;
  bool artifact = false;

  friend bool operator==(const QualityBuckets&, const QualityBuckets&) = default;
};

struct QualityResult {
  int score = 0;
  QualityLabel label = QualityLabel::Bad;
  QualityBuckets components;

  friend bool operator==(const QualityResult&, const QualityResult&) = default;
};

struct QualityOptions {
  /// Award the artifact bucket only when pleura is also present.
  bool artifact_requires_pleura = false;
};

/// >=90 Excellent, [75,90) Good, [45,75) Average, [30,45) BelowAverage, <30 Bad.
QualityLabel quality_label_for(int score);

QualityResult quality_score(LandmarkSet present, const QualityOptions& options = {});

/// Severity score sentinels.
inline constexpr int kSeverityUndetected = -2;  // no pleura
inline constexpr int kSeverityNoManifestation = -1;

struct SeverityResult {
  int score = kSeverityUndetected;
  int severity_class = 0;
  std::optional<LandmarkClass> driving_class;

  friend bool operator==(const SeverityResult&, const SeverityResult&) = default;
};

/// -2 -> 0, -1 -> 6, s >= 0 -> s + 1.
int severity_class_for(int score);

/// Severity value of a manifestation class (ALines 0 ... AirBronchogram 4);
/// nullopt for structural classes.
std::optional<int> manifestation_severity(LandmarkClass c);

SeverityResult severity_score(LandmarkSet present);

struct ScoringConfig {
  double confidence_threshold = kDefaultConfidenceThreshold;
  double nms_iou_threshold = kDefaultNmsIouThreshold;
  QualityOptions quality;
};

struct FrameAnalysis {
  std::string frame_id;
  std::vector<Detection> detections;  // after confidence filter and NMS
  QualityResult quality;
  SeverityResult severity;
};

/// Confidence filter, then NMS, then both scorers over the surviving classes.
FrameAnalysis analyze_frame(const FrameDetections& frame, const ScoringConfig& config = {});

/// Scores an already-curated annotation list without filtering or NMS.
FrameAnalysis score_annotations(std::string frame_id, std::vector<Detection> annotations,
                                const QualityOptions& options = {});

}  // namespace lustriage
