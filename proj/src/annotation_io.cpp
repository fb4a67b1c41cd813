#include "lustriage/annotation_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

namespace lustriage {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

double parse_double(std::string_view field, int line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    throw ParseError(line_no, fmt::format("non-numeric field '{}'", field));
  return v;
}

int parse_int(std::string_view field, int line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError(line_no, fmt::format("non-integer class id '{}'", field));
  return v;
}

double normalized(double v, int line_no, std::string_view what) {
  if (v < -kNormalizedClampTolerance || v > 1.0 + kNormalizedClampTolerance)
    throw ParseError(line_no, fmt::format("{} {} outside [0,1]", what, v));
  return std::clamp(v, 0.0, 1.0);
}

// Shortest representation that parses back to the same double.
std::string exact_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Class tables

ClassIdTable::ClassIdTable() {
  for (auto c : kAllClasses) {
    by_id_[class_id(c)] = c;
    by_class_[class_id(c)] = class_id(c);
  }
}

ClassIdTable::ClassIdTable(const std::vector<std::string>& names) {
  if (names.size() != kNumClasses)
    throw ValidationError(fmt::format("class id table needs {} names, got {}",
                                      kNumClasses, names.size()));
  LandmarkSet seen;
  for (std::size_t id = 0; id < names.size(); ++id) {
    auto c = class_from_name(names[id]);
    if (!c) throw ValidationError("class id table: unknown class name '" + names[id] + "'");
    if (seen.contains(*c))
      throw ValidationError("class id table: duplicate class name '" + names[id] + "'");
    seen.insert(*c);
    by_id_[id] = *c;
    by_class_[class_id(*c)] = static_cast<int>(id);
  }
}

ClassIdTable ClassIdTable::from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("class id table must be a JSON array of names");
  std::vector<std::string> names;
  for (const auto& v : doc) {
    if (!v.is_string()) throw ParseError("class id table entries must be strings");
    names.push_back(v.get<std::string>());
  }
  return ClassIdTable(names);
}

ClassIdTable ClassIdTable::load(const fs::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

LandmarkClass ClassIdTable::to_class(int file_id) const {
  if (file_id < 0 || file_id >= static_cast<int>(kNumClasses))
    throw std::out_of_range("class id out of range: " + std::to_string(file_id));
  return by_id_[file_id];
}

int ClassIdTable::to_id(LandmarkClass c) const { return by_class_[class_id(c)]; }

ClassAliasTable::ClassAliasTable() {
  for (auto c : kAllClasses) table_.emplace(lowercase(class_name(c)), c);
}

ClassAliasTable ClassAliasTable::from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("class alias table must be a JSON object");
  ClassAliasTable t;
  for (const auto& [alias, target] : doc.items()) {
    if (!target.is_string()) throw ParseError("alias '" + alias + "' must map to a string");
    auto c = class_from_name(target.get<std::string>());
    if (!c)
      throw ValidationError("alias '" + alias + "' maps to unknown class '" +
                            target.get<std::string>() + "'");
    t.add(alias, *c);
  }
  return t;
}

ClassAliasTable ClassAliasTable::load(const fs::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void ClassAliasTable::add(std::string alias, LandmarkClass c) {
  table_[lowercase(alias)] = c;
}

std::optional<LandmarkClass> ClassAliasTable::lookup(std::string_view name) const {
  auto it = table_.find(lowercase(name));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Label text format

FrameDetections parse_label_file(std::string_view text, ImageSize image_size,
                                 LabelKind kind, const ClassIdTable& ids) {
  const std::size_t expected = kind == LabelKind::GroundTruth ? 5 : 6;
  const double w_px = image_size.width;
  const double h_px = image_size.height;

  FrameDetections frame;
  frame.image_size = image_size;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != expected)
      throw ParseError(line_no, fmt::format("expected {} fields, got {}", expected,
                                            fields.size()));

    const int raw_id = parse_int(fields[0], line_no);
    if (raw_id < 0 || raw_id >= static_cast<int>(kNumClasses))
      throw ParseError(line_no, fmt::format("class id {} out of range 0..7", raw_id));

    const double cx = normalized(parse_double(fields[1], line_no), line_no, "cx");
    const double cy = normalized(parse_double(fields[2], line_no), line_no, "cy");
    const double w = normalized(parse_double(fields[3], line_no), line_no, "w");
    const double h = normalized(parse_double(fields[4], line_no), line_no, "h");
    double conf = 1.0;
    if (kind == LabelKind::Detections)
      conf = normalized(parse_double(fields[5], line_no), line_no, "confidence");

    const BBox box{std::clamp(cx - w / 2, 0.0, 1.0) * w_px,
                   std::clamp(cy - h / 2, 0.0, 1.0) * h_px,
                   std::clamp(cx + w / 2, 0.0, 1.0) * w_px,
                   std::clamp(cy + h / 2, 0.0, 1.0) * h_px};
    frame.detections.push_back({box, ids.to_class(raw_id), conf});
  }
  return frame;
}

std::string write_label_file(const FrameDetections& frame, bool with_confidence,
                             const ClassIdTable& ids) {
  const double w_px = frame.image_size.width;
  const double h_px = frame.image_size.height;
  auto norm = [](double v, double extent) {
    return extent > 0 ? std::clamp(v / extent, 0.0, 1.0) : 0.0;
  };

  std::string out;
  for (const auto& d : frame.detections) {
    const BBox b = clamp_to_image(d.box, frame.image_size);
    const double x0 = norm(b.x_min, w_px), x1 = norm(b.x_max, w_px);
    const double y0 = norm(b.y_min, h_px), y1 = norm(b.y_max, h_px);
    out += fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f}", ids.to_id(d.cls), (x0 + x1) / 2,
                       (y0 + y1) / 2, x1 - x0, y1 - y0);
    if (with_confidence) out += " " + exact_number(d.confidence);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// XML annotation format

namespace pt = boost::property_tree;

namespace {

int xml_int(const pt::ptree& node, const std::string& key) {
  auto v = node.get_optional<std::string>(key);
  if (!v) throw ParseError("missing element <" + key + ">");
  double d = 0;
  std::string s = *v;
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](unsigned char c) { return std::isspace(c); }),
          s.end());
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(d))
    throw ParseError("element <" + key + "> is not numeric: '" + *v + "'");
  return static_cast<int>(std::lround(d));
}

}  // namespace

VocAnnotation parse_voc_annotation(std::string_view xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed XML: ") + e.what());
  }

  auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError("missing <annotation> root element");

  VocAnnotation ann;
  ann.filename = root->get<std::string>("filename", "");
  auto size = root->get_child_optional("size");
  if (!size) throw ParseError("missing <size> element");
  ann.width = xml_int(*size, "width");
  ann.height = xml_int(*size, "height");
  ann.depth = size->get_optional<std::string>("depth") ? xml_int(*size, "depth") : 3;
  if (ann.width <= 0 || ann.height <= 0)
    throw ValidationError("image size must be positive");

  for (const auto& [tag, node] : *root) {
    if (tag != "object") continue;
    VocObject obj;
    obj.name = node.get<std::string>("name", "");
    auto bnd = node.get_child_optional("bndbox");
    if (!bnd) throw ParseError("object '" + obj.name + "' has no <bndbox>");
    obj.xmin = xml_int(*bnd, "xmin");
    obj.ymin = xml_int(*bnd, "ymin");
    obj.xmax = xml_int(*bnd, "xmax");
    obj.ymax = xml_int(*bnd, "ymax");
    if (obj.xmin >= obj.xmax || obj.ymin >= obj.ymax)
      throw ValidationError(fmt::format("object '{}' has an empty box ({},{},{},{})",
                                        obj.name, obj.xmin, obj.ymin, obj.xmax, obj.ymax));
    ann.objects.push_back(std::move(obj));
  }
  return ann;
}

std::string write_voc_annotation(const VocAnnotation& ann) {
  pt::ptree tree;
  pt::ptree& root = tree.add_child("annotation", {});
  root.put("filename", ann.filename);
  root.put("size.width", ann.width);
  root.put("size.height", ann.height);
  root.put("size.depth", ann.depth);
  for (const auto& obj : ann.objects) {
    pt::ptree& node = root.add_child("object", {});
    node.put("name", obj.name);
    node.put("bndbox.xmin", obj.xmin);
    node.put("bndbox.ymin", obj.ymin);
    node.put("bndbox.xmax", obj.xmax);
    node.put("bndbox.ymax", obj.ymax);
  }
  std::ostringstream out;
  pt::write_xml(out, tree, pt::xml_writer_make_settings<std::string>(' ', 2));
  return out.str();
}

FrameDetections parse_voc_xml(std::string_view xml, const ClassAliasTable& aliases) {
  VocAnnotation ann = parse_voc_annotation(xml);
  FrameDetections frame;
  frame.frame_id = ann.filename;
  frame.image_size = {ann.width, ann.height};

  std::vector<std::string> unknown;
  for (const auto& obj : ann.objects) {
    auto c = aliases.lookup(obj.name);
    if (!c) {
      unknown.push_back(obj.name);
      continue;
    }
    BBox box{static_cast<double>(obj.xmin), static_cast<double>(obj.ymin),
             static_cast<double>(obj.xmax), static_cast<double>(obj.ymax)};
    frame.detections.push_back({clamp_to_image(box, frame.image_size), *c, 1.0});
  }
  if (!unknown.empty())
    throw ValidationError(fmt::format("unmapped class name(s): {}", fmt::join(unknown, ", ")));
  return frame;
}

std::string write_voc_xml(const FrameDetections& frame, int depth) {
  VocAnnotation ann;
  ann.filename = frame.frame_id;
  ann.width = frame.image_size.width;
  ann.height = frame.image_size.height;
  ann.depth = depth;
  for (const auto& d : frame.detections) {
    const BBox b = clamp_to_image(d.box, frame.image_size);
    ann.objects.push_back({std::string(class_name(d.cls)),
                           static_cast<int>(std::lround(b.x_min)),
                           static_cast<int>(std::lround(b.y_min)),
                           static_cast<int>(std::lround(b.x_max)),
                           static_cast<int>(std::lround(b.y_max))});
  }
  return write_voc_annotation(ann);
}

// ---------------------------------------------------------------------------
// Study manifest

std::string_view to_string(ProbeType p) {
  switch (p) {
    case ProbeType::Convex: return "convex";
    case ProbeType::Linear: return "linear";
    case ProbeType::Phased: return "phased";
  }
  return "convex";
}

std::optional<ProbeType> probe_type_from_string(std::string_view s) {
  for (auto p : {ProbeType::Convex, ProbeType::Linear, ProbeType::Phased})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string() || v.get<std::string>().empty())
    throw ValidationError(where + ": field '" + key + "' must be a non-empty string");
  return v.get<std::string>();
}

std::optional<std::string> optional_path(const json& obj, const char* key,
                                         const std::string& where) {
  const json& v = require(obj, key, where);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw ValidationError(where + ": field '" + key + "' must be a path or null");
  return v.get<std::string>();
}

}  // namespace

StudyManifest manifest_from_json(const json& doc, const fs::path& base_dir, bool strict) {
  if (!doc.is_object()) throw ValidationError("manifest must be a JSON object");

  StudyManifest m;
  m.base_dir = base_dir;
  m.study_id = require_string(doc, "study_id", "manifest");

  const std::string probe = require_string(doc, "probe_type", "manifest");
  auto p = probe_type_from_string(probe);
  if (!p) throw ValidationError("manifest: unknown probe_type '" + probe + "'");
  m.probe_type = *p;

  if (auto it = doc.find("subject"); it != doc.end()) {
    if (!it->is_object()) throw ValidationError("manifest: 'subject' must be an object");
    m.subject = *it;
  }

  const json& videos = require(doc, "videos", "manifest");
  if (!videos.is_array()) throw ValidationError("manifest: 'videos' must be an array");

  std::set<std::string> video_ids;
  std::set<std::string> frame_ids;
  for (std::size_t vi = 0; vi < videos.size(); ++vi) {
    const json& v = videos[vi];
    const std::string where = fmt::format("videos[{}]", vi);
    if (!v.is_object()) throw ValidationError(where + " must be an object");

    VideoRecord video;
    video.video_id = require_string(v, "video_id", where);
    if (!video_ids.insert(video.video_id).second)
      throw ValidationError("duplicate video_id '" + video.video_id + "'");

    const json& loc = require(v, "scan_location", where);
    if (!loc.is_null()) {
      if (!loc.is_number_integer())
        throw ValidationError(where + ": scan_location must be an integer or null");
      const int l = loc.get<int>();
      if (l < 1 || l > kNumScanLocations)
        throw ValidationError(fmt::format("{}: scan_location {} outside 1..{}", where, l,
                                          kNumScanLocations));
      video.scan_location = l;
    }

    const json& fps = require(v, "fps", where);
    if (!fps.is_number() || fps.get<double>() <= 0)
      throw ValidationError(where + ": fps must be a positive number");
    video.fps = fps.get<double>();

    const json& frames = require(v, "frames", where);
    if (!frames.is_array()) throw ValidationError(where + ": 'frames' must be an array");
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
      const json& f = frames[fi];
      const std::string fwhere = fmt::format("{}.frames[{}]", where, fi);
      if (!f.is_object()) throw ValidationError(fwhere + " must be an object");
      FrameRecord frame;
      frame.frame_id = require_string(f, "frame_id", fwhere);
      if (!frame_ids.insert(frame.frame_id).second)
        throw ValidationError("duplicate frame_id '" + frame.frame_id + "'");
      frame.image = require_string(f, "image", fwhere);
      frame.detections = optional_path(f, "detections", fwhere);
      frame.ground_truth = optional_path(f, "ground_truth", fwhere);

      if (strict) {
        for (const auto* rel : {&frame.image, frame.detections ? &*frame.detections : nullptr,
                                frame.ground_truth ? &*frame.ground_truth : nullptr}) {
          if (rel && !fs::exists(m.resolve(*rel)))
            throw ValidationError(fwhere + ": referenced file does not exist: " + *rel);
        }
      }
      video.frames.push_back(std::move(frame));
    }
    m.videos.push_back(std::move(video));
  }
  return m;
}

StudyManifest load_manifest(const fs::path& path, bool strict) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return manifest_from_json(doc, path.parent_path(), strict);
}

json manifest_to_json(const StudyManifest& m) {
  json videos = json::array();
  for (const auto& v : m.videos) {
    json frames = json::array();
    for (const auto& f : v.frames) {
      frames.push_back({{"frame_id", f.frame_id},
                        {"image", f.image},
                        {"detections", f.detections ? json(*f.detections) : json(nullptr)},
                        {"ground_truth",
                         f.ground_truth ? json(*f.ground_truth) : json(nullptr)}});
    }
    videos.push_back({{"video_id", v.video_id},
                      {"scan_location", v.scan_location ? json(*v.scan_location) : json(nullptr)},
                      {"fps", v.fps},
                      {"frames", std::move(frames)}});
  }
  return {{"study_id", m.study_id},
          {"probe_type", std::string(to_string(m.probe_type))},
          {"subject", m.subject},
          {"videos", std::move(videos)}};
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace lustriage
