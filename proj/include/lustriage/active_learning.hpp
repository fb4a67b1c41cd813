#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lustriage/annotation_io.hpp"
#include "lustriage/jsonl_log.hpp"
#include "lustriage/scoring.hpp"
#include "lustriage/video.hpp"

namespace lustriage {

enum class RelabelReason { LowQuality, PleuraOnly, ClinicianFlag };
enum class QueueStatus { Pending, Reviewed, Exported };

std::string_view to_string(RelabelReason r);
std::string_view to_string(QueueStatus s);
std::optional<RelabelReason> relabel_reason_from_string(std::string_view s);
std::optional<QueueStatus> queue_status_from_string(std::string_view s);

struct RelabelQueueEntry {
  std::string frame_id;
  std::string video_id;
  RelabelReason reason = RelabelReason::LowQuality;
  std::string enqueued_at;
  QueueStatus status = QueueStatus::Pending;

  friend bool operator==(const RelabelQueueEntry&, const RelabelQueueEntry&) = default;
};

/// Ordered relabel queue. A frame has at most one Pending entry at a time and
/// entries only move Pending -> Reviewed -> Exported.
class RelabelQueue {
 public:
  const std::vector<RelabelQueueEntry>& entries() const { return entries_; }

  /// Most recent entry for the frame, if any.
  const RelabelQueueEntry* latest(std::string_view frame_id) const;
  bool has_pending(std::string_view frame_id) const;

  /// Throws ValidationError when the frame already has a Pending entry or the
  /// entry is not Pending.
  void enqueue(RelabelQueueEntry entry);
  /// Pending -> Reviewed. Returns false when the frame has no Pending entry.
  bool mark_reviewed(std::string_view frame_id);
  /// Reviewed -> Exported. Throws when the latest entry is not Reviewed.
  void mark_exported(std::string_view frame_id);

  std::vector<RelabelQueueEntry> with_status(QueueStatus s) const;

 private:
  RelabelQueueEntry* latest_mut(std::string_view frame_id);
  std::vector<RelabelQueueEntry> entries_;
};

/// Frames whose detected class set is exactly {Pleura} are queued as
/// PleuraOnly; otherwise frames at or below `quality_cutoff` are queued as
/// LowQuality. Frames that already have any queue entry are skipped. Order
/// follows videos, then frames.
std::vector<RelabelQueueEntry> select_for_relabel(std::span<const VideoAnalysis> videos,
                                                  QualityLabel quality_cutoff,
                                                  const RelabelQueue& existing,
                                                  const std::string& now);

struct Annotation {
  LandmarkClass cls = LandmarkClass::Pleura;
  BBox box;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// A clinician's complete replacement annotation list for one frame.
struct OverrideRecord {
  std::string frame_id;
  std::string author;
  std::string created_at;
  std::vector<Annotation> annotations;
  std::optional<std::string> note;

  friend bool operator==(const OverrideRecord&, const OverrideRecord&) = default;
};

/// Throws ValidationError naming the first box that is not inside the image.
void validate_override(const OverrideRecord& record, ImageSize image_size);

/// Effective annotations per frame: the latest record wins.
std::map<std::string, std::vector<Annotation>> replay_overrides(
    std::span<const OverrideRecord> records);

std::vector<Detection> to_detections(std::span<const Annotation> annotations);

enum class ExportFormat { LabelText, Xml };

std::string_view to_string(ExportFormat f);
std::optional<ExportFormat> export_format_from_string(std::string_view s);

struct ExportSource {
  std::filesystem::path image;
  ImageSize image_size;
  std::vector<Annotation> annotations;
};

/// Returns nullopt when a frame has no annotation source.
using ExportSourceFn = std::function<std::optional<ExportSource>(const std::string& frame_id)>;

struct ExportedFrame {
  std::string frame_id;
  std::string image;       // relative to the export directory
  std::string label_file;  // relative to the export directory
};

struct ExportManifest {
  std::string exported_at;
  ExportFormat format = ExportFormat::LabelText;
  std::vector<ExportedFrame> frames;
  std::map<std::string, int> class_counts;  // canonical class name -> boxes
};

inline constexpr const char* kExportManifestName = "export_manifest.json";

/// Writes labels/<frame>.{txt,xml}, images/<frame><ext> and the export
/// manifest under target_dir. Every entry must resolve to a source before
/// anything is written.
ExportManifest export_retraining_set(std::span<const RelabelQueueEntry> reviewed,
                                     const ExportSourceFn& sources,
                                     const std::filesystem::path& target_dir,
                                     ExportFormat format, const std::string& now,
                                     const ClassIdTable& ids);

struct OverrideOutcome {
  OverrideRecord record;
  FrameAnalysis rescored;
};

/// Override log and relabel queue of one study, each persisted as an
/// append-only JSON-lines file. State is rebuilt by replaying both files.
/// Not internally synchronized.
class ReviewWorkspace {
 public:
  /// In-memory only.
  ReviewWorkspace() = default;
  /// Uses <dir>/overrides.jsonl and <dir>/queue.jsonl.
  static ReviewWorkspace open(const std::filesystem::path& dir);

  const RelabelQueue& queue() const { return queue_; }
  const std::vector<OverrideRecord>& overrides() const { return overrides_; }
  std::optional<std::vector<Annotation>> effective_annotations(std::string_view frame_id) const;

  std::vector<RelabelQueueEntry> enqueue_selected(std::span<const VideoAnalysis> videos,
                                                  QualityLabel quality_cutoff,
                                                  const std::string& now);
  /// Returns the frame's open (Pending or Reviewed) entry if there is one,
  /// otherwise enqueues a ClinicianFlag entry.
  RelabelQueueEntry flag(const std::string& frame_id, const std::string& video_id,
                         const std::string& now);

  /// Validates, appends the record, moves the frame's queue entry to
  /// Reviewed (flagging the frame first when it has no open entry) and
  /// rescores the frame from the new annotations.
  OverrideOutcome apply_override(OverrideRecord record, ImageSize image_size,
                                 const std::string& video_id, const QualityOptions& options);

  /// Exports every Reviewed entry and marks it Exported.
  ExportManifest export_reviewed(const ExportSourceFn& sources,
                                 const std::filesystem::path& target_dir, ExportFormat format,
                                 const std::string& now, const ClassIdTable& ids);

 private:
  void record_queue_event(const std::string& event, const RelabelQueueEntry& entry,
                          const std::string& at);

  std::optional<JsonLinesLog> override_log_;
  std::optional<JsonLinesLog> queue_log_;
  std::vector<OverrideRecord> overrides_;
  std::map<std::string, std::vector<Annotation>, std::less<>> effective_;
  RelabelQueue queue_;
};

}  // namespace lustriage
