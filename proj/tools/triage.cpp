// triage: batch front end for scoring, reporting, evaluation, metrics and the
// relabel workflow, plus the HTTP review service.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lustriage/errors.hpp"
#include "lustriage/evaluation.hpp"
#include "lustriage/serialize.hpp"
#include "lustriage/service.hpp"
#include "lustriage/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lustriage;

namespace {

void emit(const std::optional<fs::path>& out, const std::string& text) {
  if (out)
    write_text_file(*out, text);
  else
    std::cout << text;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

PipelineConfig config_from(const std::optional<fs::path>& path) {
  return PipelineConfig::resolve(path);
}

// Frames of a manifest read from either their detection or ground-truth files.
std::vector<FrameDetections> manifest_frames(const StudyManifest& m, LabelKind kind,
                                             const PipelineConfig& config) {
  const ClassIdTable ids = config.id_table();
  const ClassAliasTable aliases = config.alias_table();
  std::vector<FrameDetections> frames;
  for (const auto& video : m.videos) {
    for (const auto& rec : video.frames) {
      const auto& path = kind == LabelKind::GroundTruth ? rec.ground_truth : rec.detections;
      if (!path) continue;
      std::optional<ImageSize> size;
      if (fs::path(*path).extension() != ".xml") size = image_dimensions(m.resolve(rec.image));
      frames.push_back(load_frame_file(m, rec, path, kind, size, ids, aliases));
    }
  }
  return frames;
}

std::optional<double> parse_iou(const std::string& s) {
  if (s == "sweep") return std::nullopt;
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size() || !(v >= 0 && v <= 1))
    throw ValidationError("--iou must be a number in [0,1] or 'sweep'");
  return v;
}

TriageService* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lung-ultrasound triage: scoring, reports, evaluation and review"};
  app.require_subcommand(1);

  std::optional<fs::path> config_path;
  app.add_option("--config", config_path, "Pipeline config JSON (fallback: $TRIAGE_CONFIG)");

  // score
  fs::path manifest;
  std::optional<fs::path> out;
  auto* score = app.add_subcommand("score", "Analyze every frame and video of a study");
  score->add_option("--manifest", manifest, "Study manifest")->required();
  score->add_option("--out", out, "Output JSON (default stdout)");

  // summarize
  std::string video_id;
  std::optional<std::string> quality_min;
  fs::path out_dir;
  auto* summarize = app.add_subcommand("summarize", "Collect the summary frames of one video");
  summarize->add_option("--manifest", manifest)->required();
  summarize->add_option("--video", video_id)->required();
  summarize->add_option("--out", out_dir, "Output directory")->required();
  summarize->add_option("--quality-min", quality_min, "Minimum quality label");

  // report
  std::optional<fs::path> svg;
  auto* report = app.add_subcommand("report", "14-point scan report");
  report->add_option("--manifest", manifest)->required();
  report->add_option("--out", out);
  report->add_option("--svg", svg, "Also render the color grid as SVG");

  // evaluate
  fs::path gt_manifest;
  fs::path pred_manifest;
  std::string iou_arg = "0.5";
  std::optional<fs::path> curves_csv_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score detections against ground truth");
  evaluate->add_option("--gt-manifest", gt_manifest)->required();
  evaluate->add_option("--pred-manifest", pred_manifest)->required();
  evaluate->add_option("--iou", iou_arg, "IoU threshold or 'sweep' (0.50:0.95)");
  evaluate->add_option("--out", out);
  evaluate->add_option("--curves", curves_csv_path, "Write PR/F1 curves as CSV");

  // metrics
  fs::path confusion_path;
  std::vector<std::string> excluded;
  bool binary = false;
  auto* metrics = app.add_subcommand("metrics", "Classification metrics from a confusion matrix");
  metrics->add_option("--confusion", confusion_path, "Confusion matrix JSON")->required();
  metrics->add_option("--exclude", excluded, "Column labels to leave out");
  metrics->add_flag("--binary", binary, "Abnormal/Normal/Undetected video matrix");
  metrics->add_option("--out", out);

  // queue
  std::vector<std::string> flags;
  auto* queue = app.add_subcommand("queue", "Refresh and list the relabel queue");
  queue->add_option("--manifest", manifest)->required();
  queue->add_option("--flag", flags, "Flag a frame for review");
  queue->add_option("--out", out);

  // override
  std::string frame_id;
  std::string author;
  fs::path annotations_path;
  std::optional<std::string> note;
  auto* override_cmd = app.add_subcommand("override", "Record a clinician override");
  override_cmd->add_option("--manifest", manifest)->required();
  override_cmd->add_option("--frame", frame_id)->required();
  override_cmd->add_option("--author", author)->required();
  override_cmd->add_option("--annotations", annotations_path,
                           "JSON array of {class, bbox} (or a full override body)")
      ->required();
  override_cmd->add_option("--note", note);
  override_cmd->add_option("--out", out);

  // export
  std::string format_name = "label-text";
  auto* export_cmd = app.add_subcommand("export", "Export reviewed frames for retraining");
  export_cmd->add_option("--manifest", manifest)->required();
  export_cmd->add_option("--format", format_name, "label-text or xml");
  export_cmd->add_option("--out", out_dir, "Export directory")->required();

  // serve
  fs::path root;
  std::string addr = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "Run the HTTP review service");
  serve->add_option("--root", root, "Directory of studies")->required();
  serve->add_option("--addr", addr, "HOST:PORT");

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig config = config_from(config_path);

    if (*score) {
      const Study study = Study::load(manifest, config);
      emit(out, pretty(study.score_document()));

    } else if (*summarize) {
      PipelineConfig c = config;
      if (quality_min) {
        auto q = quality_label_from_string(*quality_min);
        if (!q) throw ValidationError("unknown quality label '" + *quality_min + "'");
        c.summary_quality_min = q;
      }
      const Study study = Study::load(manifest, c);
      const VideoAnalysis* video = study.video(video_id);
      if (!video) throw NotFoundError("unknown video '" + video_id + "'");

      fs::create_directories(out_dir);
      json frames = json::array();
      for (const auto& id : video->summary_frame_ids) {
        const auto at = *study.find_frame(id);
        const fs::path src = study.manifest().resolve(study.frame_record(at).image);
        const fs::path dst = out_dir / src.filename();
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        const FrameAnalysis& f = study.effective_analysis(at);
        frames.push_back({{"frame_id", id},
                          {"image", dst.filename().string()},
                          {"severity", f.severity},
                          {"quality", f.quality}});
      }
      json doc = {{"schema_version", kSchemaVersion},
                  {"study_id", study.manifest().study_id},
                  {"video_id", video->video_id},
                  {"video_severity", video->video_severity},
                  {"diagnosis", std::string(to_string(video->diagnosis))},
                  {"worst_frame_id", video->worst_frame_id ? json(*video->worst_frame_id)
                                                           : json(nullptr)},
                  {"frames", frames}};
      write_text_file(out_dir / "summary.json", pretty(doc));

    } else if (*report) {
      const Study study = Study::load(manifest, config);
      const StudyReport r = study.report(utc_now_rfc3339());
      emit(out, pretty(report_document(r)));
      if (svg) write_text_file(*svg, render_report_svg(r));

    } else if (*evaluate) {
      const StudyManifest gt_m = load_manifest(gt_manifest);
      const StudyManifest pred_m = load_manifest(pred_manifest);
      const auto gt = manifest_frames(gt_m, LabelKind::GroundTruth, config);
      const auto pred = manifest_frames(pred_m, LabelKind::Detections, config);

      const std::optional<double> single = parse_iou(iou_arg);
      const std::vector<double> thresholds =
          single ? std::vector<double>{*single} : coco_iou_thresholds();
      const MapResult maps = mean_ap(gt, pred, thresholds);

      // Operating-point statistics use the first threshold (0.5 for a sweep).
      const MatchResult matches = match_detections(gt, pred, thresholds.front());
      json per_class = json::object();
      for (auto c : kAllClasses) {
        const ClassMatches& cm = matches[c];
        if (cm.gt_count == 0 && cm.predictions.empty()) continue;
        per_class[std::string(class_name(c))] =
            precision_recall_at(cm, config.confidence_threshold);
      }
      const auto curves = pr_f1_curves(matches, default_confidence_grid());

      json doc = {{"schema_version", kSchemaVersion},
                  {"iou", single ? json(*single) : json("sweep")},
                  {"confidence_threshold", config.confidence_threshold},
                  {"map", maps},
                  {"map50", maps.per_threshold.front().map
                                ? json(*maps.per_threshold.front().map)
                                : json(nullptr)},
                  {"operating_point", {{"per_class", per_class},
                                       {"all", precision_recall_at(pool_classes(matches),
                                                                   config.confidence_threshold)}}},
                  {"curves", curves}};
      if (!single) doc["map50_95"] = maps.map ? json(*maps.map) : json(nullptr);
      emit(out, pretty(doc));
      if (curves_csv_path) write_text_file(*curves_csv_path, curves_csv(curves));

    } else if (*metrics) {
      json doc_in;
      try {
        doc_in = json::parse(read_text_file(confusion_path));
      } catch (const json::parse_error& e) {
        throw ParseError(confusion_path.string() + ": " + e.what());
      }
      const ConfusionMatrix m = confusion_from_json(doc_in);
      json doc = {{"schema_version", kSchemaVersion}};
      if (binary) {
        doc["binary"] = binary_video_metrics(m);
      } else {
        doc["excluded_columns"] = excluded;
        doc["classes"] = confusion_metrics(m, excluded);
      }
      emit(out, pretty(doc));

    } else if (*queue) {
      Study study = Study::load(manifest, config);
      const std::string now = utc_now_rfc3339();
      study.refresh_queue(now);
      for (const auto& f : flags) study.flag(f, now);
      emit(out, pretty({{"schema_version", kSchemaVersion},
                        {"study_id", study.manifest().study_id},
                        {"entries", study.review().queue().entries()}}));

    } else if (*override_cmd) {
      Study study = Study::load(manifest, config);
      json body = json::parse(read_text_file(annotations_path));
      if (body.is_array()) body = {{"annotations", body}};
      body["frame_id"] = frame_id;
      body["author"] = author;
      if (note) body["note"] = *note;
      body.erase("created_at");
      OverrideOutcome result = study.apply_override(override_from_json(body, false));
      json doc = result.record;
      doc["schema_version"] = kSchemaVersion;
      doc["rescored"] = {{"quality", result.rescored.quality},
                         {"severity", result.rescored.severity}};
      emit(out, pretty(doc));

    } else if (*export_cmd) {
      auto format = export_format_from_string(format_name);
      if (!format) throw ValidationError("unknown export format '" + format_name + "'");
      Study study = Study::load(manifest, config);
      const ExportManifest m = study.export_reviewed(out_dir, *format, utc_now_rfc3339());
      std::cout << fmt::format("exported {} frame(s) to {}\n", m.frames.size(),
                               out_dir.string());

    } else if (*serve) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw ValidationError("--addr must be HOST:PORT");
      const std::string host = addr.substr(0, colon);
      const int port = std::stoi(addr.substr(colon + 1));

      auto store = std::make_shared<StudyStore>(root, config);
      TriageService service(store);
      g_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << fmt::format("serving {} stud{} from {} on {}\n", store->study_ids().size(),
                               store->study_ids().size() == 1 ? "y" : "ies", root.string(), addr);
      if (!service.listen(host, port)) throw std::runtime_error("cannot listen on " + addr);
      g_service = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
