#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lustriage/annotation_io.hpp"
#include "lustriage/scoring.hpp"

namespace lustriage {

/// Environment variable naming a config file when no path is given.
inline constexpr const char* kConfigEnvVar = "TRIAGE_CONFIG";

struct PipelineConfig {
  double confidence_threshold = kDefaultConfidenceThreshold;
  double nms_iou_threshold = kDefaultNmsIouThreshold;
  bool artifact_requires_pleura = false;
  std::optional<QualityLabel> summary_quality_min;
  QualityLabel relabel_quality_cutoff = QualityLabel::BelowAverage;
  std::optional<std::filesystem::path> class_id_table;
  std::optional<std::filesystem::path> class_aliases;
  std::optional<std::string> cors_origin;
  std::optional<std::string> bearer_token;

  ScoringConfig scoring() const {
    return {confidence_threshold, nms_iou_threshold, {artifact_requires_pleura}};
  }
  ClassIdTable id_table() const;
  ClassAliasTable alias_table() const;

  /// Throws ValidationError for thresholds outside [0,1] or unknown labels.
  /// Relative table paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  /// The explicit path if given, else $TRIAGE_CONFIG, else defaults.
  static PipelineConfig resolve(const std::optional<std::filesystem::path>& path);

  /// Settings that affect scoring output, for echoing into result files.
  nlohmann::json scoring_json() const;
};

}  // namespace lustriage
