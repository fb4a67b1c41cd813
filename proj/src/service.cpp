#include "lustriage/service.hpp"

#include <algorithm>
#include <mutex>

#include <httplib.h>
#include <fmt/format.h>

#include "lustriage/errors.hpp"
#include "lustriage/serialize.hpp"

namespace lustriage {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code,
                std::string_view message) {
  send_json(res, status,
            {{"error", {{"code", std::string(code)}, {"message", std::string(message)}}}});
}

std::string content_type_for(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  return "application/octet-stream";
}

json versioned(json body) {
  body["schema_version"] = kSchemaVersion;
  return body;
}

// Runs `fn` and maps library exceptions onto the error envelope.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const ValidationError& e) {
    send_error(res, 422, "invalid", e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

json frame_json(const Study& study, FrameLocation at) {
  const FrameRecord& rec = study.frame_record(at);
  const FrameAnalysis& detector = study.detector_analysis(at);
  const FrameAnalysis& effective = study.effective_analysis(at);
  const auto size = study.image_size(at);
  const auto* entry = study.review().queue().latest(rec.frame_id);
  const auto annotations = study.reference_annotations(at);

  return versioned(
      {{"study_id", study.manifest().study_id},
       {"video_id", study.video_record(at).video_id},
       {"frame_id", rec.frame_id},
       {"image", rec.image},
       {"image_url", fmt::format("/api/studies/{}/frames/{}/image", study.manifest().study_id,
                                 rec.frame_id)},
       {"image_size", size ? json{{"width", size->width}, {"height", size->height}}
                           : json(nullptr)},
       {"detections", detector.detections},
       {"detector", {{"quality", detector.quality}, {"severity", detector.severity}}},
       {"quality", effective.quality},
       {"severity", effective.severity},
       {"overridden", study.has_override(at)},
       {"effective_annotations", annotations ? json(*annotations) : json(nullptr)},
       {"queue_entry", entry ? json(*entry) : json(nullptr)}});
}

std::string compact_timestamp(const std::string& rfc3339) {
  std::string out;
  for (char c : rfc3339)
    if (std::isdigit(static_cast<unsigned char>(c))) out += c;
  return out;
}

}  // namespace

TriageService::TriageService(std::shared_ptr<StudyStore> store)
    : store_(std::move(store)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

TriageService::~TriageService() { stop(); }

bool TriageService::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

int TriageService::bind_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool TriageService::listen_after_bind() { return server_->listen_after_bind(); }

void TriageService::stop() {
  if (server_) server_->stop();
}

void TriageService::install_routes() {
  httplib::Server& srv = *server_;
  const PipelineConfig& config = store_->config();

  srv.set_pre_routing_handler([&config](const httplib::Request& req, httplib::Response& res) {
    if (config.cors_origin) {
      res.set_header("Access-Control-Allow-Origin", *config.cors_origin);
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    }
    if (req.method == "OPTIONS") {
      res.status = 204;
      return httplib::Server::HandlerResponse::Handled;
    }
    if (config.bearer_token &&
        req.get_header_value("Authorization") != "Bearer " + *config.bearer_token) {
      send_error(res, 401, "unauthorized", "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const char* code = res.status == 404  ? "not_found"
                         : res.status < 500 ? "bad_request"
                                            : "internal";
      send_error(res, res.status, code, httplib::status_message(res.status));
    }
  });

  auto store = store_;
  auto with_study = [store](const httplib::Request& req, httplib::Response& res, auto&& fn) {
    guarded(res, [&] {
      auto entry = store->find(req.matches[1].str());
      if (!entry) throw NotFoundError("unknown study '" + req.matches[1].str() + "'");
      fn(*entry);
    });
  };

  srv.Get("/api/studies", [store](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json studies = json::array();
      for (const auto& id : store->study_ids()) {
        auto entry = store->find(id);
        std::shared_lock lock(entry->mutex);
        const Study& s = entry->study;
        std::size_t frames = 0;
        for (const auto& v : s.manifest().videos) frames += v.frames.size();
        studies.push_back({{"study_id", id},
                           {"probe_type", std::string(to_string(s.manifest().probe_type))},
                           {"subject", s.manifest().subject},
                           {"video_count", s.manifest().videos.size()},
                           {"frame_count", frames}});
      }
      send_json(res, 200, versioned({{"studies", studies}}));
    });
  });

  srv.Get(R"(/api/studies/([^/]+)/report)",
          [with_study](const httplib::Request& req, httplib::Response& res) {
            with_study(req, res, [&](StudyStore::Entry& e) {
              std::shared_lock lock(e.mutex);
              send_json(res, 200, report_document(e.study.report(e.study.state_timestamp())));
            });
          });

  srv.Get(R"(/api/studies/([^/]+)/videos/([^/]+))",
          [with_study](const httplib::Request& req, httplib::Response& res) {
            with_study(req, res, [&](StudyStore::Entry& e) {
              std::shared_lock lock(e.mutex);
              const VideoAnalysis* v = e.study.video(req.matches[2].str());
              if (!v) throw NotFoundError("unknown video '" + req.matches[2].str() + "'");
              json body = *v;
              for (const auto& rec : e.study.manifest().videos)
                if (rec.video_id == v->video_id)
                  body["scan_location"] = rec.scan_location ? json(*rec.scan_location)
                                                            : json(nullptr);
              send_json(res, 200, versioned(std::move(body)));
            });
          });

  srv.Get(R"(/api/studies/([^/]+)/frames/([^/]+)/image)",
          [with_study](const httplib::Request& req, httplib::Response& res) {
            with_study(req, res, [&](StudyStore::Entry& e) {
              std::shared_lock lock(e.mutex);
              auto at = e.study.find_frame(req.matches[2].str());
              if (!at) throw NotFoundError("unknown frame '" + req.matches[2].str() + "'");
              const fs::path path = e.study.manifest().resolve(e.study.frame_record(*at).image);
              const std::string bytes = read_text_file(path);
              res.status = 200;
              res.set_content(bytes, content_type_for(path));
            });
          });

  srv.Get(R"(/api/studies/([^/]+)/frames/([^/]+))",
          [with_study](const httplib::Request& req, httplib::Response& res) {
            with_study(req, res, [&](StudyStore::Entry& e) {
              std::shared_lock lock(e.mutex);
              auto at = e.study.find_frame(req.matches[2].str());
              if (!at) throw NotFoundError("unknown frame '" + req.matches[2].str() + "'");
              send_json(res, 200, frame_json(e.study, *at));
            });
          });

  srv.Get(R"(/api/studies/([^/]+)/queue)",
          [with_study](const httplib::Request& req, httplib::Response& res) {
            with_study(req, res, [&](StudyStore::Entry& e) {
              std::shared_lock lock(e.mutex);
              json entries = json::array();
              for (const auto& entry : e.study.review().queue().entries())
                if (entry.status != QueueStatus::Exported) entries.push_back(entry);
              send_json(res, 200,
                        versioned({{"study_id", e.study.manifest().study_id},
                                   {"entries", entries}}));
            });
          });

  srv.Post(R"(/api/studies/([^/]+)/frames/([^/]+)/override)",
           [with_study](const httplib::Request& req, httplib::Response& res) {
             with_study(req, res, [&](StudyStore::Entry& e) {
               const std::string frame_id = req.matches[2].str();
               json body = json::parse(req.body);
               if (!body.is_object()) throw ValidationError("body must be a JSON object");
               if (!body.contains("frame_id")) body["frame_id"] = frame_id;
               if (body["frame_id"] != frame_id)
                 throw ValidationError("frame_id in body does not match the URL");
               body.erase("created_at");
               OverrideRecord record = override_from_json(body, false);

               std::unique_lock lock(e.mutex);
               if (!e.study.find_frame(frame_id))
                 throw NotFoundError("unknown frame '" + frame_id + "'");
               OverrideOutcome out = e.study.apply_override(std::move(record));
               json stored = out.record;
               stored["rescored"] = {{"quality", out.rescored.quality},
                                     {"severity", out.rescored.severity}};
               send_json(res, 201, versioned(std::move(stored)));
             });
           });

  srv.Post(R"(/api/studies/([^/]+)/export)",
           [with_study](const httplib::Request& req, httplib::Response& res) {
             with_study(req, res, [&](StudyStore::Entry& e) {
               json body = req.body.empty() ? json::object() : json::parse(req.body);
               const std::string name = body.value("format", std::string("label-text"));
               auto format = export_format_from_string(name);
               if (!format) throw ValidationError("unknown export format '" + name + "'");

               std::unique_lock lock(e.mutex);
               const std::string now = utc_now_rfc3339();
               const fs::path base = e.manifest_path.parent_path() / "exports";
               fs::path dir = base / compact_timestamp(now);
               for (int n = 2; fs::exists(dir); ++n)
                 dir = base / fmt::format("{}-{}", compact_timestamp(now), n);
               json manifest = e.study.export_reviewed(dir, *format, now);
               manifest["directory"] = dir.string();
               send_json(res, 200, manifest);
             });
           });
}

}  // namespace lustriage
