#include "lustriage/active_learning.hpp"

#include <algorithm>
#include <array>
#include <set>

#include <fmt/format.h>

#include "lustriage/errors.hpp"
#include "lustriage/serialize.hpp"

namespace lustriage {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr std::array<std::string_view, 3> kReasonNames = {"LowQuality", "PleuraOnly",
                                                          "ClinicianFlag"};
constexpr std::array<std::string_view, 3> kStatusNames = {"Pending", "Reviewed", "Exported"};
constexpr std::array<std::string_view, 2> kFormatNames = {"label-text", "xml"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  return std::nullopt;
}

// Keeps frame ids usable as file names.
std::string file_stem(std::string_view frame_id) {
  std::string out;
  for (char c : frame_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "frame";
  return out;
}
}  // namespace

std::string_view to_string(RelabelReason r) { return kReasonNames[static_cast<std::size_t>(r)]; }
std::string_view to_string(QueueStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(ExportFormat f) { return kFormatNames[static_cast<std::size_t>(f)]; }

std::optional<RelabelReason> relabel_reason_from_string(std::string_view s) {
  return lookup<RelabelReason>(kReasonNames, s);
}
std::optional<QueueStatus> queue_status_from_string(std::string_view s) {
  return lookup<QueueStatus>(kStatusNames, s);
}
std::optional<ExportFormat> export_format_from_string(std::string_view s) {
  return lookup<ExportFormat>(kFormatNames, s);
}

// ---------------------------------------------------------------------------
// Queue

const RelabelQueueEntry* RelabelQueue::latest(std::string_view frame_id) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->frame_id == frame_id) return &*it;
  return nullptr;
}

RelabelQueueEntry* RelabelQueue::latest_mut(std::string_view frame_id) {
  return const_cast<RelabelQueueEntry*>(std::as_const(*this).latest(frame_id));
}

bool RelabelQueue::has_pending(std::string_view frame_id) const {
  const auto* e = latest(frame_id);
  return e && e->status == QueueStatus::Pending;
}

void RelabelQueue::enqueue(RelabelQueueEntry entry) {
  if (entry.status != QueueStatus::Pending)
    throw ValidationError("new queue entries must be Pending");
  if (has_pending(entry.frame_id))
    throw ValidationError("frame '" + entry.frame_id + "' already has a pending entry");
  entries_.push_back(std::move(entry));
}

bool RelabelQueue::mark_reviewed(std::string_view frame_id) {
  auto* e = latest_mut(frame_id);
  if (!e || e->status != QueueStatus::Pending) return false;
  e->status = QueueStatus::Reviewed;
  return true;
}

void RelabelQueue::mark_exported(std::string_view frame_id) {
  auto* e = latest_mut(frame_id);
  if (!e || e->status != QueueStatus::Reviewed)
    throw ValidationError(fmt::format("frame '{}' is not Reviewed", frame_id));
  e->status = QueueStatus::Exported;
}

std::vector<RelabelQueueEntry> RelabelQueue::with_status(QueueStatus s) const {
  std::vector<RelabelQueueEntry> out;
  std::copy_if(entries_.begin(), entries_.end(), std::back_inserter(out),
               [s](const RelabelQueueEntry& e) { return e.status == s; });
  return out;
}

std::vector<RelabelQueueEntry> select_for_relabel(std::span<const VideoAnalysis> videos,
                                                  QualityLabel quality_cutoff,
                                                  const RelabelQueue& existing,
                                                  const std::string& now) {
  const LandmarkSet pleura_only{LandmarkClass::Pleura};
  std::vector<RelabelQueueEntry> selected;
  std::set<std::string, std::less<>> seen;
  for (const auto& video : videos) {
    for (const auto& frame : video.frames) {
      if (existing.latest(frame.frame_id) || seen.contains(frame.frame_id)) continue;
      std::optional<RelabelReason> reason;
      if (present_classes(frame.detections) == pleura_only)
        reason = RelabelReason::PleuraOnly;
      else if (frame.quality.label <= quality_cutoff)
        reason = RelabelReason::LowQuality;
      if (!reason) continue;
      seen.insert(frame.frame_id);
      selected.push_back({frame.frame_id, video.video_id, *reason, now, QueueStatus::Pending});
    }
  }
  return selected;
}

// ---------------------------------------------------------------------------
// Overrides

void validate_override(const OverrideRecord& record, ImageSize image_size) {
  for (std::size_t i = 0; i < record.annotations.size(); ++i) {
    const BBox& b = record.annotations[i].box;
    if (!within_image(b, image_size))
      throw ValidationError(fmt::format(
          "annotations[{}]: box ({}, {}, {}, {}) is not a valid box inside the {}x{} image", i,
          b.x_min, b.y_min, b.x_max, b.y_max, image_size.width, image_size.height));
  }
}

std::map<std::string, std::vector<Annotation>> replay_overrides(
    std::span<const OverrideRecord> records) {
  std::map<std::string, std::vector<Annotation>> effective;
  for (const auto& r : records) effective[r.frame_id] = r.annotations;
  return effective;
}

std::vector<Detection> to_detections(std::span<const Annotation> annotations) {
  std::vector<Detection> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back({a.box, a.cls, 1.0});
  return out;
}

// ---------------------------------------------------------------------------
// Export

ExportManifest export_retraining_set(std::span<const RelabelQueueEntry> reviewed,
                                     const ExportSourceFn& sources, const fs::path& target_dir,
                                     ExportFormat format, const std::string& now,
                                     const ClassIdTable& ids) {
  std::vector<std::pair<const RelabelQueueEntry*, ExportSource>> resolved;
  for (const auto& e : reviewed) {
    auto src = sources(e.frame_id);
    if (!src) throw ValidationError("frame '" + e.frame_id + "' has no annotation source");
    resolved.emplace_back(&e, std::move(*src));
  }

  ExportManifest manifest;
  manifest.exported_at = now;
  manifest.format = format;
  for (auto c : kAllClasses) manifest.class_counts[std::string(class_name(c))] = 0;

  fs::create_directories(target_dir / "labels");
  fs::create_directories(target_dir / "images");
  std::set<std::string> used_stems;
  for (const auto& [entry, src] : resolved) {
    std::string stem = file_stem(entry->frame_id);
    for (int n = 2; !used_stems.insert(stem).second; ++n)
      stem = fmt::format("{}_{}", file_stem(entry->frame_id), n);

    FrameDetections frame{entry->frame_id, src.image_size, to_detections(src.annotations)};
    const std::string label_rel =
        "labels/" + stem + (format == ExportFormat::LabelText ? ".txt" : ".xml");
    write_text_file(target_dir / label_rel, format == ExportFormat::LabelText
                                                ? write_label_file(frame, false, ids)
                                                : write_voc_xml(frame));

    const std::string image_rel = "images/" + stem + src.image.extension().string();
    std::error_code ec;
    fs::copy_file(src.image, target_dir / image_rel, fs::copy_options::overwrite_existing, ec);
    if (ec)
      throw std::runtime_error("cannot copy image " + src.image.string() + ": " + ec.message());

    for (const auto& a : src.annotations) ++manifest.class_counts[std::string(class_name(a.cls))];
    manifest.frames.push_back({entry->frame_id, image_rel, label_rel});
  }

  write_text_file(target_dir / kExportManifestName, json(manifest).dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// Workspace

ReviewWorkspace ReviewWorkspace::open(const fs::path& dir) {
  ReviewWorkspace ws;
  ws.override_log_.emplace(dir / "overrides.jsonl");
  ws.queue_log_.emplace(dir / "queue.jsonl");

  for (const auto& j : ws.override_log_->read_all()) {
    OverrideRecord r = override_from_json(j);
    ws.effective_[r.frame_id] = r.annotations;
    ws.overrides_.push_back(std::move(r));
  }

  for (const auto& j : ws.queue_log_->read_all()) {
    const std::string event = j.value("event", "");
    const std::string frame_id = j.value("frame_id", "");
    if (event == "enqueue") {
      ws.queue_.enqueue(queue_entry_from_json(j.at("entry")));
    } else if (event == "reviewed") {
      ws.queue_.mark_reviewed(frame_id);
    } else if (event == "exported") {
      ws.queue_.mark_exported(frame_id);
    } else {
      throw ParseError("unknown queue event '" + event + "'");
    }
  }
  return ws;
}

std::optional<std::vector<Annotation>> ReviewWorkspace::effective_annotations(
    std::string_view frame_id) const {
  auto it = effective_.find(frame_id);
  if (it == effective_.end()) return std::nullopt;
  return it->second;
}

void ReviewWorkspace::record_queue_event(const std::string& event,
                                         const RelabelQueueEntry& entry, const std::string& at) {
  if (!queue_log_) return;
  json j = {{"event", event}, {"frame_id", entry.frame_id}, {"at", at}};
  if (event == "enqueue") j["entry"] = entry;
  queue_log_->append(j);
}

std::vector<RelabelQueueEntry> ReviewWorkspace::enqueue_selected(
    std::span<const VideoAnalysis> videos, QualityLabel quality_cutoff, const std::string& now) {
  auto selected = select_for_relabel(videos, quality_cutoff, queue_, now);
  for (const auto& e : selected) {
    queue_.enqueue(e);
    record_queue_event("enqueue", e, now);
  }
  return selected;
}

RelabelQueueEntry ReviewWorkspace::flag(const std::string& frame_id, const std::string& video_id,
                                        const std::string& now) {
  if (const auto* open = queue_.latest(frame_id); open && open->status != QueueStatus::Exported)
    return *open;
  RelabelQueueEntry e{frame_id, video_id, RelabelReason::ClinicianFlag, now,
                      QueueStatus::Pending};
  queue_.enqueue(e);
  record_queue_event("enqueue", e, now);
  return e;
}

OverrideOutcome ReviewWorkspace::apply_override(OverrideRecord record, ImageSize image_size,
                                                const std::string& video_id,
                                                const QualityOptions& options) {
  validate_override(record, image_size);
  if (record.created_at.empty()) record.created_at = utc_now_rfc3339();

  if (override_log_) override_log_->append(json(record));
  overrides_.push_back(record);
  effective_[record.frame_id] = record.annotations;

  flag(record.frame_id, video_id, record.created_at);
  if (queue_.mark_reviewed(record.frame_id))
    record_queue_event("reviewed", *queue_.latest(record.frame_id), record.created_at);

  OverrideOutcome out;
  out.rescored = score_annotations(record.frame_id, to_detections(record.annotations), options);
  out.record = std::move(record);
  return out;
}

ExportManifest ReviewWorkspace::export_reviewed(const ExportSourceFn& sources,
                                                const fs::path& target_dir, ExportFormat format,
                                                const std::string& now,
                                                const ClassIdTable& ids) {
  const auto reviewed = queue_.with_status(QueueStatus::Reviewed);
  ExportManifest manifest =
      export_retraining_set(reviewed, sources, target_dir, format, now, ids);
  for (const auto& e : reviewed) {
    queue_.mark_exported(e.frame_id);
    record_queue_event("exported", e, now);
  }
  return manifest;
}

}  // namespace lustriage
