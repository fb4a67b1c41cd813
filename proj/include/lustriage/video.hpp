#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lustriage/scoring.hpp"

namespace lustriage {

enum class Diagnosis { Abnormal, Normal, Undetected };

std::string_view to_string(Diagnosis d);

/// >=1 Abnormal, 0 Normal, <0 Undetected.
Diagnosis classify_video_binary(int video_severity);

struct VideoAnalysis {
  std::string video_id;
  std::vector<FrameAnalysis> frames;
  int video_severity = kSeverityUndetected;
  Diagnosis diagnosis = Diagnosis::Undetected;
  std::optional<std::string> worst_frame_id;
  std::vector<std::string> summary_frame_ids;
};

/// Frames with severity >= 1 (and quality label >= quality_min when given),
/// in temporal order.
std::vector<std::string> summarize_video(std::span<const FrameAnalysis> frames,
                                         std::optional<QualityLabel> quality_min = {});

/// Video severity is the frame maximum (-2 for an empty video); the worst
/// frame is the earliest one attaining it.
VideoAnalysis aggregate_video(std::string video_id, std::vector<FrameAnalysis> frames,
                              std::optional<QualityLabel> summary_quality_min = {});

struct BoxPlot {
  double min = 0;
  double q1 = 0;
  double median = 0;
  double q3 = 0;
  double max = 0;

  friend bool operator==(const BoxPlot&, const BoxPlot&) = default;
};

/// Five-number summary with quantiles interpolated linearly at p*(n-1).
/// nullopt for an empty input.
std::optional<BoxPlot> severity_boxplot(std::span<const int> scores);

enum class SeverityColor { Green, YellowGreen, Yellow, Orange, Red, Black };

std::string_view to_string(SeverityColor c);
/// Display hex for renderers.
std::string_view hex_color(SeverityColor c);

/// 0..4 map to Green..Red; negative or missing severities are Black.
SeverityColor color_for_severity(std::optional<int> video_severity);

struct ScanLocationResult {
  int location = 0;
  std::optional<int> video_severity;  // nullopt when no video was acquired
  SeverityColor color = SeverityColor::Black;
  std::optional<BoxPlot> boxplot;
  std::vector<std::string> video_ids;
  std::optional<std::string> worst_frame_id;
};

struct StudyReport {
  std::string study_id;
  std::array<ScanLocationResult, kNumScanLocations> locations;  // index = location - 1
  std::string generated_at;

  const ScanLocationResult& at(int location) const { return locations.at(location - 1); }
};

/// Throws ValidationError for a location outside 1..14. Every location is
/// present in the result.
StudyReport scan_report(std::string study_id, const std::map<int, VideoAnalysis>& by_location,
                        std::string generated_at);

/// Two columns of seven cells, L1-L7 and R1-R7 (locations 1-7 and 8-14).
std::string render_report_svg(const StudyReport& report);

}  // namespace lustriage
