#include "lustriage/scoring.hpp"

#include <array>

namespace lustriage {

namespace {
constexpr std::array<std::string_view, 5> kQualityNames = {
    "Bad", "BelowAverage", "Average", "Good", "Excellent"};
}

std::string_view to_string(QualityLabel q) {
  return kQualityNames[static_cast<std::size_t>(q)];
}

std::optional<QualityLabel> quality_label_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kQualityNames.size(); ++i)
    if (kQualityNames[i] == s) return static_cast<QualityLabel>(i);
  return std::nullopt;
}

QualityLabel quality_label_for(int score) {
  if (score >= 90) return QualityLabel::Excellent;
  if (score >= 75) return QualityLabel::Good;
  if (score >= 45) return QualityLabel::Average;
  if (score >= 30) return QualityLabel::BelowAverage;
  return QualityLabel::Bad;
}

QualityResult quality_score(LandmarkSet present, const QualityOptions& options) {
  QualityResult r;
  r.components.pleura = present.contains(LandmarkClass::Pleura);
  r.components.rib = present.contains(LandmarkClass::Rib);
  r.components.shadow = present.contains(LandmarkClass::Shadow);
  r.components.artifact = present.has_manifestation() &&
                          (!options.artifact_requires_pleura || r.components.pleura);

  if (r.components.pleura) r.score += kPleuraPoints;
  if (r.components.rib) r.score += kRibPoints;
  if (r.components.shadow) r.score += kShadowPoints;
  if (r.components.artifact) r.score += kArtifactPoints;
  r.label = quality_label_for(r.score);
  return r;
}

int severity_class_for(int score) {
  if (score == kSeverityUndetected) return 0;
  if (score == kSeverityNoManifestation) return 6;
  return score + 1;
}

std::optional<int> manifestation_severity(LandmarkClass c) {
  switch (c) {
    case LandmarkClass::ALines: return 0;
    case LandmarkClass::BLines: return 1;
    case LandmarkClass::BPatch: return 2;
    case LandmarkClass::Consolidation: return 3;
    case LandmarkClass::AirBronchogram: return 4;
    default: return std::nullopt;
  }
}

SeverityResult severity_score(LandmarkSet present) {
  SeverityResult r;
  if (!present.contains(LandmarkClass::Pleura)) {
    r.score = kSeverityUndetected;
  } else {
    r.score = kSeverityNoManifestation;
    for (auto c : kAllClasses) {
      auto value = manifestation_severity(c);
      if (value && present.contains(c) && *value > r.score) {
        r.score = *value;
        r.driving_class = c;
      }
    }
  }
  r.severity_class = severity_class_for(r.score);
  return r;
}

FrameAnalysis analyze_frame(const FrameDetections& frame, const ScoringConfig& config) {
  auto confident = filter_confidence(frame.detections, config.confidence_threshold);
  return score_annotations(frame.frame_id, nms(confident, config.nms_iou_threshold),
                           config.quality);
}

FrameAnalysis score_annotations(std::string frame_id, std::vector<Detection> annotations,
                                const QualityOptions& options) {
  FrameAnalysis a;
  a.frame_id = std::move(frame_id);
  a.detections = std::move(annotations);
  const LandmarkSet present = present_classes(a.detections);
  a.quality = quality_score(present, options);
  a.severity = severity_score(present);
  return a;
}

}  // namespace lustriage
