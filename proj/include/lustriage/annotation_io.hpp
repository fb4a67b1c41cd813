#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lustriage/detection.hpp"
#include "lustriage/errors.hpp"

namespace lustriage {

/// Maps the integer ids found in label files to landmark classes. The default
/// table is the canonical alphabetical order.
class ClassIdTable {
 public:
  ClassIdTable();

  /// `names[i]` is the canonical class name for file id i; must be a
  /// permutation of the eight classes.
  explicit ClassIdTable(const std::vector<std::string>& names);

  /// JSON array of eight canonical names, index = file id.
  static ClassIdTable from_json(const nlohmann::json& doc);
  static ClassIdTable load(const std::filesystem::path& path);

  LandmarkClass to_class(int file_id) const;
  int to_id(LandmarkClass c) const;

 private:
  std::array<LandmarkClass, kNumClasses> by_id_{};
  std::array<int, kNumClasses> by_class_{};
};

/// Lowercase annotation-tool names to landmark classes.
class ClassAliasTable {
 public:
  /// Lowercased canonical names ("pleura", "alines", "airbronchogram", ...).
  ClassAliasTable();

  /// JSON object from lowercase name to canonical class name. Entries extend
  /// the default table.
  static ClassAliasTable from_json(const nlohmann::json& doc);
  static ClassAliasTable load(const std::filesystem::path& path);

  void add(std::string alias, LandmarkClass c);
  /// Case-insensitive; nullopt for unknown names.
  std::optional<LandmarkClass> lookup(std::string_view name) const;

 private:
  std::map<std::string, LandmarkClass, std::less<>> table_;
};

enum class LabelKind {
  GroundTruth,  // class cx cy w h
  Detections,   // class cx cy w h confidence
};

/// Tolerance for normalized values slightly outside [0,1].
inline constexpr double kNormalizedClampTolerance = 1e-6;

FrameDetections parse_label_file(std::string_view text, ImageSize image_size,
                                 LabelKind kind, const ClassIdTable& ids = {});

std::string write_label_file(const FrameDetections& frame, bool with_confidence,
                             const ClassIdTable& ids = {});

struct VocObject {
  std::string name;
  int xmin = 0;
  int ymin = 0;
  int xmax = 0;
  int ymax = 0;
};

struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  int depth = 3;
  std::vector<VocObject> objects;
};

VocAnnotation parse_voc_annotation(std::string_view xml);
std::string write_voc_annotation(const VocAnnotation& ann);

/// Frame id is the annotation's filename. Boxes clamp to the image; every
/// detection gets confidence 1.0.
FrameDetections parse_voc_xml(std::string_view xml, const ClassAliasTable& aliases = {});
/// Boxes are rounded to integer pixels.
std::string write_voc_xml(const FrameDetections& frame, int depth = 3);

enum class ProbeType { Convex, Linear, Phased };

std::string_view to_string(ProbeType p);
std::optional<ProbeType> probe_type_from_string(std::string_view s);

struct FrameRecord {
  std::string frame_id;
  std::string image;
  std::optional<std::string> detections;
  std::optional<std::string> ground_truth;
};

struct VideoRecord {
  std::string video_id;
  std::optional<int> scan_location;
  double fps = 0;
  std::vector<FrameRecord> frames;
};

struct StudyManifest {
  std::string study_id;
  ProbeType probe_type = ProbeType::Convex;
  nlohmann::json subject = nlohmann::json::object();
  std::vector<VideoRecord> videos;
  /// Directory relative paths resolve against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const {
    return base_dir / relative;
  }
};

/// Validates the manifest document. With `strict`, every referenced file must
/// exist relative to `base_dir`.
StudyManifest manifest_from_json(const nlohmann::json& doc,
                                 const std::filesystem::path& base_dir,
                                 bool strict = false);
StudyManifest load_manifest(const std::filesystem::path& path, bool strict = false);
nlohmann::json manifest_to_json(const StudyManifest& m);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lustriage
