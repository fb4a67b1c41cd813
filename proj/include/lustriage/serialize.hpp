#pragma once

#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "lustriage/active_learning.hpp"
#include "lustriage/evaluation.hpp"
#include "lustriage/scoring.hpp"
#include "lustriage/video.hpp"

namespace lustriage {

/// Top-level version tag carried by every JSON document this library emits.
inline constexpr int kSchemaVersion = 1;

void to_json(nlohmann::json& j, const BBox& b);
void to_json(nlohmann::json& j, const Detection& d);
void to_json(nlohmann::json& j, const QualityResult& q);
void to_json(nlohmann::json& j, const SeverityResult& s);
void to_json(nlohmann::json& j, const FrameAnalysis& f);
void to_json(nlohmann::json& j, const VideoAnalysis& v);
void to_json(nlohmann::json& j, const BoxPlot& b);
void to_json(nlohmann::json& j, const ScanLocationResult& r);
void to_json(nlohmann::json& j, const StudyReport& r);
void to_json(nlohmann::json& j, const RelabelQueueEntry& e);
void to_json(nlohmann::json& j, const Annotation& a);
void to_json(nlohmann::json& j, const OverrideRecord& r);
void to_json(nlohmann::json& j, const ExportManifest& m);
void to_json(nlohmann::json& j, const ConfusionMatrix& m);
void to_json(nlohmann::json& j, const ClassMetrics& m);
void to_json(nlohmann::json& j, const BinaryVideoMetrics& m);
void to_json(nlohmann::json& j, const ApAtThreshold& a);
void to_json(nlohmann::json& j, const MapResult& m);
void to_json(nlohmann::json& j, const PrecisionRecall& p);
void to_json(nlohmann::json& j, const ClassCurve& c);

/// Video analysis without the per-frame list.
nlohmann::json video_summary_json(const VideoAnalysis& v);

/// Report document with schema_version.
nlohmann::json report_document(const StudyReport& r);

/// The parsers below throw ValidationError on schema violations.
BBox bbox_from_json(const nlohmann::json& j);
Annotation annotation_from_json(const nlohmann::json& j);
/// Timestamps are optional when `require_timestamps` is false (request
/// bodies); otherwise created_at must be present.
OverrideRecord override_from_json(const nlohmann::json& j, bool require_timestamps = true);
RelabelQueueEntry queue_entry_from_json(const nlohmann::json& j);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

/// `class,threshold,precision,recall,f1`; the pooled curve is labelled "all".
std::string curves_csv(std::span<const ClassCurve> curves);

}  // namespace lustriage
