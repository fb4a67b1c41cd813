#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lustriage/active_learning.hpp"
#include "lustriage/annotation_io.hpp"
#include "lustriage/config.hpp"
#include "lustriage/video.hpp"

namespace lustriage {

/// Pixel dimensions read from an image file. Throws NotFoundError when the
/// file is missing and ParseError when it cannot be decoded.
ImageSize image_dimensions(const std::filesystem::path& image);

/// Where a study keeps its override and queue logs.
std::filesystem::path review_dir_for(const std::filesystem::path& manifest_path);

struct FrameLocation {
  std::size_t video = 0;
  std::size_t frame = 0;
};

/// One study: manifest, per-frame detector analyses and the review state.
/// Effective analyses substitute the latest clinician override for the
/// detector output of a frame. Everything is rebuilt from files on load.
class Study {
 public:
  static Study load(const std::filesystem::path& manifest_path, const PipelineConfig& config);

  const StudyManifest& manifest() const { return manifest_; }
  const PipelineConfig& config() const { return config_; }
  const std::vector<VideoAnalysis>& videos() const { return videos_; }
  const VideoAnalysis* video(std::string_view video_id) const;

  std::optional<FrameLocation> find_frame(std::string_view frame_id) const;
  const VideoRecord& video_record(FrameLocation at) const { return manifest_.videos[at.video]; }
  const FrameRecord& frame_record(FrameLocation at) const;
  const FrameAnalysis& detector_analysis(FrameLocation at) const;
  const FrameAnalysis& effective_analysis(FrameLocation at) const;
  std::optional<ImageSize> image_size(FrameLocation at) const;
  bool has_override(FrameLocation at) const;

  /// Latest override if any, else the ground-truth file, else nullopt.
  std::optional<std::vector<Annotation>> reference_annotations(FrameLocation at) const;

  /// Videos sharing a scan location are pooled into one location result.
  StudyReport report(std::string generated_at) const;

  const ReviewWorkspace& review() const { return review_; }

  /// Latest of the manifest's modification time and every review event;
  /// stable across restarts while the files are unchanged.
  std::string state_timestamp() const;

  /// Score output document (schema_version 1).
  nlohmann::json score_document() const;

  std::vector<RelabelQueueEntry> refresh_queue(const std::string& now);
  /// Throws NotFoundError for an unknown frame.
  RelabelQueueEntry flag(std::string_view frame_id, const std::string& now);
  /// Throws NotFoundError for an unknown frame and ValidationError for boxes
  /// outside the image.
  OverrideOutcome apply_override(OverrideRecord record);
  ExportManifest export_reviewed(const std::filesystem::path& target_dir, ExportFormat format,
                                 const std::string& now);

 private:
  void rebuild_video(std::size_t v);

  StudyManifest manifest_;
  std::string manifest_mtime_;
  PipelineConfig config_;
  ClassIdTable ids_;
  ClassAliasTable aliases_;
  std::vector<std::vector<FrameAnalysis>> detector_;
  std::vector<std::vector<std::optional<ImageSize>>> sizes_;
  std::vector<VideoAnalysis> videos_;
  std::map<std::string, FrameLocation, std::less<>> frame_index_;
  ReviewWorkspace review_;
};

/// Reads a frame's detection or ground-truth file. XML files carry their own
/// size; label text needs the image's size. A missing path gives an empty
/// frame.
FrameDetections load_frame_file(const StudyManifest& manifest, const FrameRecord& frame,
                                const std::optional<std::string>& path, LabelKind kind,
                                std::optional<ImageSize> image_size, const ClassIdTable& ids,
                                const ClassAliasTable& aliases);

/// Studies under a root directory: <root>/manifest.json and
/// <root>/<dir>/manifest.json. Each study carries its own reader/writer lock.
class StudyStore {
 public:
  struct Entry {
    std::filesystem::path manifest_path;
    mutable std::shared_mutex mutex;
    Study study;
  };

  StudyStore(std::filesystem::path root, PipelineConfig config);

  std::vector<std::string> study_ids() const;
  /// nullptr when unknown.
  std::shared_ptr<Entry> find(std::string_view study_id) const;
  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  PipelineConfig config_;
  std::map<std::string, std::shared_ptr<Entry>, std::less<>> studies_;
};

}  // namespace lustriage
