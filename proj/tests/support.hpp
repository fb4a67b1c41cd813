#pragma once
// On-disk fixture studies and small process helpers shared by the tests.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lustriage/detection.hpp"

namespace fixture {

namespace fs = std::filesystem;
using lustriage::LandmarkClass;
using lustriage::LandmarkSet;

inline constexpr int kWidth = 64;
inline constexpr int kHeight = 48;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lus") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("{}-{}-{:x}", tag, ::getpid(), rd());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Each class owns a fixed 6x36 px column so boxes never overlap.
inline lustriage::BBox slot(LandmarkClass c) {
  const double x = 1 + 8.0 * lustriage::class_id(c);
  return {x, 4, x + 6, 40};
}

struct Video {
  std::string id;
  std::optional<int> location;
  std::vector<LandmarkSet> frames;
  double confidence = 0.9;
};

// Center-form label text for the classes of one frame, written by hand so
// the library's writer is not involved.
inline std::string label_text(LandmarkSet s, std::optional<double> confidence) {
  std::string out;
  for (auto c : lustriage::kAllClasses) {
    if (!s.contains(c)) continue;
    const auto b = slot(c);
    out += fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f}", lustriage::class_id(c),
                       (b.x_min + b.x_max) / 2 / kWidth, (b.y_min + b.y_max) / 2 / kHeight,
                       (b.x_max - b.x_min) / kWidth, (b.y_max - b.y_min) / kHeight);
    if (confidence) out += fmt::format(" {}", *confidence);
    out += "\n";
  }
  return out;
}

inline void write_png(const fs::path& p, int seed) {
  fs::create_directories(p.parent_path());
  cv::Mat img(kHeight, kWidth, CV_8UC1, cv::Scalar(seed % 200));
  cv::imwrite(p.string(), img);
}

// Writes images, detection and ground-truth label files and manifest.json
// under dir; returns the manifest path. Frame ids are "<video>-f<index>".
inline fs::path write_study(const fs::path& dir, const std::string& study_id,
                            const std::vector<Video>& videos) {
  nlohmann::json vids = nlohmann::json::array();
  int seed = 0;
  for (const auto& v : videos) {
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t i = 0; i < v.frames.size(); ++i) {
      const std::string fid = fmt::format("{}-f{}", v.id, i);
      write_png(dir / "images" / (fid + ".png"), seed++);
      write_file(dir / "dets" / (fid + ".txt"), label_text(v.frames[i], v.confidence));
      write_file(dir / "gt" / (fid + ".txt"), label_text(v.frames[i], std::nullopt));
      frames.push_back({{"frame_id", fid},
                        {"image", "images/" + fid + ".png"},
                        {"detections", "dets/" + fid + ".txt"},
                        {"ground_truth", "gt/" + fid + ".txt"}});
    }
    vids.push_back({{"video_id", v.id},
                    {"scan_location", v.location ? nlohmann::json(*v.location) : nlohmann::json(nullptr)},
                    {"fps", 25.0},
                    {"frames", frames}});
  }
  nlohmann::json doc = {{"study_id", study_id},
                        {"probe_type", "convex"},
                        {"subject", {{"age", 41}}},
                        {"videos", vids}};
  write_file(dir / "manifest.json", doc.dump(2));
  return dir / "manifest.json";
}

struct RunResult {
  int status = -1;
  std::string out;
};

// Runs a shell command, capturing stdout.
inline RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

inline std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace fixture
