#include "lustriage/serialize.hpp"

#include <fmt/format.h>

#include "lustriage/annotation_io.hpp"
#include "lustriage/errors.hpp"

namespace lustriage {

using nlohmann::json;

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

const json& field(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(fmt::format("{}: missing field '{}'", what, key));
  return *it;
}

std::string string_field(const json& j, const char* key, const char* what) {
  const json& v = field(j, key, what);
  if (!v.is_string()) throw ValidationError(fmt::format("{}: '{}' must be a string", what, key));
  return v.get<std::string>();
}

}  // namespace

void to_json(json& j, const BBox& b) { j = json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

void to_json(json& j, const Detection& d) {
  j = {{"class", std::string(class_name(d.cls))}, {"bbox", d.box}, {"confidence", d.confidence}};
}

void to_json(json& j, const QualityResult& q) {
  json components = json::array();
  if (q.components.pleura) components.push_back("pleura");
  if (q.components.rib) components.push_back("rib");
  if (q.components.shadow) components.push_back("shadow");
  if (q.components.artifact) components.push_back("artifact");
  j = {{"score", q.score}, {"label", std::string(to_string(q.label))}, {"components", components}};
}

void to_json(json& j, const SeverityResult& s) {
  j = {{"score", s.score},
       {"class", s.severity_class},
       {"driving_class", s.driving_class ? json(std::string(class_name(*s.driving_class)))
                                         : json(nullptr)}};
}

void to_json(json& j, const FrameAnalysis& f) {
  j = {{"frame_id", f.frame_id},
       {"detections", f.detections},
       {"quality", f.quality},
       {"severity", f.severity}};
}

json video_summary_json(const VideoAnalysis& v) {
  return {{"video_id", v.video_id},
          {"video_severity", v.video_severity},
          {"diagnosis", std::string(to_string(v.diagnosis))},
          {"worst_frame_id", optional_json(v.worst_frame_id)},
          {"summary_frame_ids", v.summary_frame_ids}};
}

void to_json(json& j, const VideoAnalysis& v) {
  j = video_summary_json(v);
  j["frames"] = v.frames;
}

void to_json(json& j, const BoxPlot& b) {
  j = {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}};
}

void to_json(json& j, const ScanLocationResult& r) {
  j = {{"location", r.location},
       {"video_severity", optional_json(r.video_severity)},
       {"color", std::string(to_string(r.color))},
       {"boxplot", r.boxplot ? json(*r.boxplot) : json(nullptr)},
       {"video_ids", r.video_ids},
       {"worst_frame_id", optional_json(r.worst_frame_id)}};
}

void to_json(json& j, const StudyReport& r) {
  json locations = json::object();
  for (const auto& loc : r.locations) locations[std::to_string(loc.location)] = loc;
  j = {{"study_id", r.study_id}, {"generated_at", r.generated_at}, {"locations", locations}};
}

json report_document(const StudyReport& r) {
  json j = r;
  j["schema_version"] = kSchemaVersion;
  return j;
}

void to_json(json& j, const RelabelQueueEntry& e) {
  j = {{"frame_id", e.frame_id},
       {"video_id", e.video_id},
       {"reason", std::string(to_string(e.reason))},
       {"enqueued_at", e.enqueued_at},
       {"status", std::string(to_string(e.status))}};
}

void to_json(json& j, const Annotation& a) {
  j = {{"class", std::string(class_name(a.cls))}, {"bbox", a.box}};
}

void to_json(json& j, const OverrideRecord& r) {
  j = {{"frame_id", r.frame_id},
       {"author", r.author},
       {"created_at", r.created_at},
       {"annotations", r.annotations},
       {"note", optional_json(r.note)}};
}

void to_json(json& j, const ExportManifest& m) {
  json frames = json::array();
  for (const auto& f : m.frames)
    frames.push_back({{"frame_id", f.frame_id}, {"image", f.image}, {"label_file", f.label_file}});
  j = {{"schema_version", kSchemaVersion},
       {"exported_at", m.exported_at},
       {"format", std::string(to_string(m.format))},
       {"frames", frames},
       {"class_counts", m.class_counts}};
}

void to_json(json& j, const ConfusionMatrix& m) {
  j = {{"rows", m.rows}, {"columns", m.columns}, {"counts", m.counts}};
}

void to_json(json& j, const ClassMetrics& m) {
  j = {{"class", m.label},
       {"accuracy", optional_json(m.accuracy)},
       {"sensitivity", optional_json(m.sensitivity)},
       {"specificity", optional_json(m.specificity)}};
}

void to_json(json& j, const BinaryVideoMetrics& m) {
  j = {{"accuracy", optional_json(m.accuracy)},
       {"precision", optional_json(m.precision)},
       {"recall", optional_json(m.recall)}};
}

void to_json(json& j, const ApAtThreshold& a) {
  json per_class = json::object();
  for (auto c : kAllClasses)
    per_class[std::string(class_name(c))] = optional_json(a.per_class[class_id(c)]);
  j = {{"iou_threshold", a.iou_threshold}, {"ap", per_class}, {"map", optional_json(a.map)}};
}

void to_json(json& j, const MapResult& m) {
  j = {{"per_threshold", m.per_threshold}, {"map", optional_json(m.map)}};
}

void to_json(json& j, const PrecisionRecall& p) {
  j = {{"precision", p.precision},     {"recall", p.recall},
       {"f1", p.f1},                   {"true_positives", p.true_positives},
       {"predictions", p.predictions}, {"gt_count", p.gt_count}};
}

void to_json(json& j, const ClassCurve& c) {
  json points = json::array();
  for (const auto& p : c.points)
    points.push_back({{"threshold", p.threshold},
                      {"precision", p.precision},
                      {"recall", p.recall},
                      {"f1", p.f1}});
  j = {{"class", c.cls ? std::string(class_name(*c.cls)) : std::string("all")},
       {"points", points}};
}

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw ValidationError("bbox must be an array [xmin, ymin, xmax, ymax]");
  for (const auto& v : j)
    if (!v.is_number()) throw ValidationError("bbox coordinates must be numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

Annotation annotation_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("annotation must be an object");
  const std::string name = string_field(j, "class", "annotation");
  static const ClassAliasTable kNames;
  auto cls = kNames.lookup(name);
  if (!cls) throw ValidationError("annotation: unknown class '" + name + "'");
  return {*cls, bbox_from_json(field(j, "bbox", "annotation"))};
}

OverrideRecord override_from_json(const json& j, bool require_timestamps) {
  if (!j.is_object()) throw ValidationError("override record must be an object");
  OverrideRecord r;
  r.frame_id = string_field(j, "frame_id", "override");
  r.author = string_field(j, "author", "override");
  if (r.author.empty()) throw ValidationError("override: author must be non-empty");
  if (require_timestamps || j.contains("created_at")) {
    r.created_at = string_field(j, "created_at", "override");
  }
  const json& anns = field(j, "annotations", "override");
  if (!anns.is_array()) throw ValidationError("override: 'annotations' must be an array");
  for (const auto& a : anns) r.annotations.push_back(annotation_from_json(a));
  if (auto it = j.find("note"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("override: 'note' must be a string or null");
    r.note = it->get<std::string>();
  }
  return r;
}

RelabelQueueEntry queue_entry_from_json(const json& j) {
  RelabelQueueEntry e;
  e.frame_id = string_field(j, "frame_id", "queue entry");
  e.video_id = string_field(j, "video_id", "queue entry");
  auto reason = relabel_reason_from_string(string_field(j, "reason", "queue entry"));
  if (!reason) throw ValidationError("queue entry: unknown reason");
  e.reason = *reason;
  e.enqueued_at = string_field(j, "enqueued_at", "queue entry");
  auto status = queue_status_from_string(string_field(j, "status", "queue entry"));
  if (!status) throw ValidationError("queue entry: unknown status");
  e.status = *status;
  return e;
}

ConfusionMatrix confusion_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("confusion matrix must be an object");
  ConfusionMatrix m;
  try {
    m.rows = field(j, "rows", "confusion matrix").get<std::vector<std::string>>();
    m.columns = field(j, "columns", "confusion matrix").get<std::vector<std::string>>();
    m.counts =
        field(j, "counts", "confusion matrix").get<std::vector<std::vector<std::int64_t>>>();
  } catch (const json::type_error& e) {
    throw ValidationError(std::string("confusion matrix: ") + e.what());
  }
  m.validate();
  return m;
}

std::string curves_csv(std::span<const ClassCurve> curves) {
  std::string out = "class,threshold,precision,recall,f1\n";
  for (const auto& c : curves) {
    const std::string name = c.cls ? std::string(class_name(*c.cls)) : std::string("all");
    for (const auto& p : c.points)
      out += fmt::format("{},{:.2f},{:.6f},{:.6f},{:.6f}\n", name, p.threshold, p.precision,
                         p.recall, p.f1);
  }
  return out;
}

}  // namespace lustriage
