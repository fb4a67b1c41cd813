#include "lustriage/store.hpp"

#include <algorithm>

#include <chrono>

#include <fmt/chrono.h>
#include <opencv2/imgcodecs.hpp>

#include "lustriage/errors.hpp"
#include "lustriage/serialize.hpp"

namespace lustriage {

namespace fs = std::filesystem;
using nlohmann::json;

ImageSize image_dimensions(const fs::path& image) {
  if (!fs::exists(image)) throw NotFoundError("image not found: " + image.string());
  const cv::Mat m = cv::imread(image.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw ParseError("cannot decode image " + image.string());
  return {m.cols, m.rows};
}

fs::path review_dir_for(const fs::path& manifest_path) {
  return manifest_path.parent_path() / "review";
}

namespace {

bool is_xml(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".xml";
}

}  // namespace

FrameDetections load_frame_file(const StudyManifest& manifest, const FrameRecord& frame,
                                const std::optional<std::string>& path, LabelKind kind,
                                std::optional<ImageSize> image_size, const ClassIdTable& ids,
                                const ClassAliasTable& aliases) {
  FrameDetections out;
  if (path) {
    const std::string text = read_text_file(manifest.resolve(*path));
    try {
      if (is_xml(*path)) {
        out = parse_voc_xml(text, aliases);
      } else {
        if (!image_size) throw ValidationError("image size unknown for label file " + *path);
        out = parse_label_file(text, *image_size, kind, ids);
      }
    } catch (const ParseError& e) {
      throw ParseError(*path + ": " + e.what());
    }
  } else if (image_size) {
    out.image_size = *image_size;
  }
  out.frame_id = frame.frame_id;
  return out;
}

// ---------------------------------------------------------------------------

Study Study::load(const fs::path& manifest_path, const PipelineConfig& config) {
  Study s;
  s.manifest_ = load_manifest(manifest_path);
  {
    const auto sys = std::chrono::file_clock::to_sys(fs::last_write_time(manifest_path));
    s.manifest_mtime_ = fmt::format(
        "{:%Y-%m-%dT%H:%M:%S}Z",
        fmt::gmtime(std::chrono::system_clock::to_time_t(
            std::chrono::time_point_cast<std::chrono::system_clock::duration>(sys))));
  }
  s.config_ = config;
  s.ids_ = config.id_table();
  s.aliases_ = config.alias_table();
  s.review_ = ReviewWorkspace::open(review_dir_for(manifest_path));

  const ScoringConfig scoring = config.scoring();
  for (std::size_t v = 0; v < s.manifest_.videos.size(); ++v) {
    const VideoRecord& video = s.manifest_.videos[v];
    auto& analyses = s.detector_.emplace_back();
    auto& sizes = s.sizes_.emplace_back();
    for (std::size_t f = 0; f < video.frames.size(); ++f) {
      const FrameRecord& rec = video.frames[f];
      s.frame_index_.emplace(rec.frame_id, FrameLocation{v, f});

      std::optional<ImageSize> size;
      const bool need_image = !(rec.detections && is_xml(*rec.detections));
      if (need_image && fs::exists(s.manifest_.resolve(rec.image)))
        size = image_dimensions(s.manifest_.resolve(rec.image));

      FrameDetections dets = load_frame_file(s.manifest_, rec, rec.detections,
                                             LabelKind::Detections, size, s.ids_, s.aliases_);
      if (!size && dets.image_size.width > 0) size = dets.image_size;
      sizes.push_back(size);
      analyses.push_back(analyze_frame(dets, scoring));
    }
  }
  for (std::size_t v = 0; v < s.manifest_.videos.size(); ++v) {
    s.videos_.emplace_back();
    s.rebuild_video(v);
  }
  return s;
}

void Study::rebuild_video(std::size_t v) {
  std::vector<FrameAnalysis> frames;
  for (const auto& detector : detector_[v]) {
    if (auto ann = review_.effective_annotations(detector.frame_id))
      frames.push_back(score_annotations(detector.frame_id, to_detections(*ann),
                                         config_.scoring().quality));
    else
      frames.push_back(detector);
  }
  videos_[v] = aggregate_video(manifest_.videos[v].video_id, std::move(frames),
                               config_.summary_quality_min);
}

const VideoAnalysis* Study::video(std::string_view video_id) const {
  auto it = std::find_if(videos_.begin(), videos_.end(),
                         [&](const VideoAnalysis& v) { return v.video_id == video_id; });
  return it == videos_.end() ? nullptr : &*it;
}

std::optional<FrameLocation> Study::find_frame(std::string_view frame_id) const {
  auto it = frame_index_.find(frame_id);
  if (it == frame_index_.end()) return std::nullopt;
  return it->second;
}

const FrameRecord& Study::frame_record(FrameLocation at) const {
  return manifest_.videos[at.video].frames[at.frame];
}

const FrameAnalysis& Study::detector_analysis(FrameLocation at) const {
  return detector_[at.video][at.frame];
}

const FrameAnalysis& Study::effective_analysis(FrameLocation at) const {
  return videos_[at.video].frames[at.frame];
}

std::optional<ImageSize> Study::image_size(FrameLocation at) const {
  return sizes_[at.video][at.frame];
}

bool Study::has_override(FrameLocation at) const {
  return review_.effective_annotations(frame_record(at).frame_id).has_value();
}

std::optional<std::vector<Annotation>> Study::reference_annotations(FrameLocation at) const {
  const FrameRecord& rec = frame_record(at);
  if (auto ann = review_.effective_annotations(rec.frame_id)) return ann;
  if (!rec.ground_truth) return std::nullopt;
  FrameDetections gt = load_frame_file(manifest_, rec, rec.ground_truth, LabelKind::GroundTruth,
                                       image_size(at), ids_, aliases_);
  std::vector<Annotation> out;
  for (const auto& d : gt.detections) out.push_back({d.cls, d.box});
  return out;
}

std::string Study::state_timestamp() const {
  std::string latest = manifest_mtime_;
  for (const auto& r : review_.overrides()) latest = std::max(latest, r.created_at);
  for (const auto& e : review_.queue().entries()) latest = std::max(latest, e.enqueued_at);
  return latest;
}

StudyReport Study::report(std::string generated_at) const {
  std::map<int, std::vector<std::size_t>> by_location;
  for (std::size_t v = 0; v < manifest_.videos.size(); ++v)
    if (auto loc = manifest_.videos[v].scan_location) by_location[*loc].push_back(v);

  std::map<int, VideoAnalysis> pooled;
  for (const auto& [loc, indices] : by_location) {
    if (indices.size() == 1) {
      pooled.emplace(loc, videos_[indices.front()]);
      continue;
    }
    std::vector<FrameAnalysis> frames;
    std::vector<std::string> ids;
    for (auto v : indices) {
      frames.insert(frames.end(), videos_[v].frames.begin(), videos_[v].frames.end());
      ids.push_back(videos_[v].video_id);
    }
    VideoAnalysis merged = aggregate_video(ids.front(), std::move(frames));
    pooled.emplace(loc, std::move(merged));
  }

  StudyReport r = scan_report(manifest_.study_id, pooled, std::move(generated_at));
  for (const auto& [loc, indices] : by_location) {
    auto& ids = r.locations[loc - 1].video_ids;
    ids.clear();
    for (auto v : indices) ids.push_back(videos_[v].video_id);
  }
  return r;
}

json Study::score_document() const {
  json videos = json::array();
  for (std::size_t v = 0; v < videos_.size(); ++v) {
    json j = videos_[v];
    const auto& loc = manifest_.videos[v].scan_location;
    j["scan_location"] = loc ? json(*loc) : json(nullptr);
    videos.push_back(std::move(j));
  }
  return {{"schema_version", kSchemaVersion},
          {"study_id", manifest_.study_id},
          {"config", config_.scoring_json()},
          {"videos", std::move(videos)}};
}

std::vector<RelabelQueueEntry> Study::refresh_queue(const std::string& now) {
  return review_.enqueue_selected(videos_, config_.relabel_quality_cutoff, now);
}

RelabelQueueEntry Study::flag(std::string_view frame_id, const std::string& now) {
  auto at = find_frame(frame_id);
  if (!at) throw NotFoundError("unknown frame '" + std::string(frame_id) + "'");
  return review_.flag(std::string(frame_id), video_record(*at).video_id, now);
}

OverrideOutcome Study::apply_override(OverrideRecord record) {
  auto at = find_frame(record.frame_id);
  if (!at) throw NotFoundError("unknown frame '" + record.frame_id + "'");
  auto size = image_size(*at);
  if (!size) throw ValidationError("image size unknown for frame '" + record.frame_id + "'");
  OverrideOutcome out = review_.apply_override(std::move(record), *size,
                                               video_record(*at).video_id,
                                               config_.scoring().quality);
  rebuild_video(at->video);
  return out;
}

ExportManifest Study::export_reviewed(const fs::path& target_dir, ExportFormat format,
                                      const std::string& now) {
  auto sources = [this](const std::string& frame_id) -> std::optional<ExportSource> {
    auto at = find_frame(frame_id);
    if (!at) return std::nullopt;
    auto annotations = reference_annotations(*at);
    auto size = image_size(*at);
    if (!annotations || !size) return std::nullopt;
    return ExportSource{manifest_.resolve(frame_record(*at).image), *size,
                        std::move(*annotations)};
  };
  return review_.export_reviewed(sources, target_dir, format, now, ids_);
}

// ---------------------------------------------------------------------------

StudyStore::StudyStore(fs::path root, PipelineConfig config)
    : root_(std::move(root)), config_(std::move(config)) {
  std::vector<fs::path> manifests;
  if (fs::exists(root_ / "manifest.json")) manifests.push_back(root_ / "manifest.json");
  if (fs::is_directory(root_)) {
    for (const auto& entry : fs::directory_iterator(root_))
      if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
        manifests.push_back(entry.path() / "manifest.json");
  } else {
    throw NotFoundError("store root is not a directory: " + root_.string());
  }
  std::sort(manifests.begin(), manifests.end());

  for (const auto& path : manifests) {
    auto entry = std::make_shared<Entry>();
    entry->manifest_path = path;
    entry->study = Study::load(path, config_);
    entry->study.refresh_queue(utc_now_rfc3339());
    const std::string id = entry->study.manifest().study_id;
    if (!studies_.emplace(id, std::move(entry)).second)
      throw ValidationError("duplicate study_id '" + id + "' under " + root_.string());
  }
}

std::vector<std::string> StudyStore::study_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : studies_) ids.push_back(id);
  return ids;
}

std::shared_ptr<StudyStore::Entry> StudyStore::find(std::string_view study_id) const {
  auto it = studies_.find(study_id);
  return it == studies_.end() ? nullptr : it->second;
}

}  // namespace lustriage
