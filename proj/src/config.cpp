#include "lustriage/config.hpp"

#include <cstdlib>

#include "lustriage/errors.hpp"

namespace lustriage {

namespace fs = std::filesystem;
using nlohmann::json;

ClassIdTable PipelineConfig::id_table() const {
  return class_id_table ? ClassIdTable::load(*class_id_table) : ClassIdTable{};
}

ClassAliasTable PipelineConfig::alias_table() const {
  return class_aliases ? ClassAliasTable::load(*class_aliases) : ClassAliasTable{};
}

namespace {

double threshold(const json& doc, const char* key, double fallback) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ValidationError(std::string(key) + " must be a number");
  const double v = it->get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(key) + " must lie in [0,1]");
  return v;
}

std::optional<std::string> optional_string(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string(key) + " must be a string");
  return it->get<std::string>();
}

QualityLabel parse_label(const std::string& s, const char* key) {
  auto q = quality_label_from_string(s);
  if (!q) throw ValidationError(std::string(key) + ": unknown quality label '" + s + "'");
  return *q;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  PipelineConfig c;
  c.confidence_threshold = threshold(doc, "confidence_threshold", c.confidence_threshold);
  c.nms_iou_threshold = threshold(doc, "nms_iou_threshold", c.nms_iou_threshold);

  if (auto q = doc.find("quality"); q != doc.end()) {
    if (!q->is_object()) throw ValidationError("quality must be an object");
    if (auto a = q->find("artifact_requires_pleura"); a != q->end()) {
      if (!a->is_boolean())
        throw ValidationError("quality.artifact_requires_pleura must be a boolean");
      c.artifact_requires_pleura = a->get<bool>();
    }
  }
  if (auto s = doc.find("summary"); s != doc.end()) {
    if (!s->is_object()) throw ValidationError("summary must be an object");
    if (auto min = optional_string(*s, "quality_min"))
      c.summary_quality_min = parse_label(*min, "summary.quality_min");
  }
  if (auto cutoff = optional_string(doc, "relabel_quality_cutoff"))
    c.relabel_quality_cutoff = parse_label(*cutoff, "relabel_quality_cutoff");

  if (auto p = optional_string(doc, "class_id_table")) c.class_id_table = base_dir / *p;
  if (auto p = optional_string(doc, "class_aliases")) c.class_aliases = base_dir / *p;
  c.cors_origin = optional_string(doc, "cors_origin");
  c.bearer_token = optional_string(doc, "bearer_token");
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(doc, path.parent_path());
}

PipelineConfig PipelineConfig::resolve(const std::optional<fs::path>& path) {
  if (path) return load(*path);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load(env);
  return {};
}

json PipelineConfig::scoring_json() const {
  return {{"confidence_threshold", confidence_threshold},
          {"nms_iou_threshold", nms_iou_threshold},
          {"quality", {{"artifact_requires_pleura", artifact_requires_pleura}}},
          {"summary",
           {{"quality_min", summary_quality_min
                                ? json(std::string(to_string(*summary_quality_min)))
                                : json(nullptr)}}}};
}

}  // namespace lustriage
