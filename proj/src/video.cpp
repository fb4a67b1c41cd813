#include "lustriage/video.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lustriage/errors.hpp"

namespace lustriage {

std::string_view to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::Abnormal: return "Abnormal";
    case Diagnosis::Normal: return "Normal";
    case Diagnosis::Undetected: return "Undetected";
  }
  return "Undetected";
}

Diagnosis classify_video_binary(int video_severity) {
  if (video_severity >= 1) return Diagnosis::Abnormal;
  if (video_severity == 0) return Diagnosis::Normal;
  return Diagnosis::Undetected;
}

std::vector<std::string> summarize_video(std::span<const FrameAnalysis> frames,
                                         std::optional<QualityLabel> quality_min) {
  std::vector<std::string> ids;
  for (const auto& f : frames) {
    if (f.severity.score < 1) continue;
    if (quality_min && f.quality.label < *quality_min) continue;
    ids.push_back(f.frame_id);
  }
  return ids;
}

VideoAnalysis aggregate_video(std::string video_id, std::vector<FrameAnalysis> frames,
                              std::optional<QualityLabel> summary_quality_min) {
  VideoAnalysis v;
  v.video_id = std::move(video_id);
  v.frames = std::move(frames);
  for (const auto& f : v.frames) {
    // strict > keeps the earliest frame on ties
    if (!v.worst_frame_id || f.severity.score > v.video_severity) {
      v.video_severity = f.severity.score;
      v.worst_frame_id = f.frame_id;
    }
  }
  v.diagnosis = classify_video_binary(v.video_severity);
  v.summary_frame_ids = summarize_video(v.frames, summary_quality_min);
  return v;
}

std::optional<BoxPlot> severity_boxplot(std::span<const int> scores) {
  if (scores.empty()) return std::nullopt;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  return BoxPlot{sorted.front(), quantile(0.25), quantile(0.5), quantile(0.75),
                 sorted.back()};
}

std::string_view to_string(SeverityColor c) {
  switch (c) {
    case SeverityColor::Green: return "Green";
    case SeverityColor::YellowGreen: return "YellowGreen";
    case SeverityColor::Yellow: return "Yellow";
    case SeverityColor::Orange: return "Orange";
    case SeverityColor::Red: return "Red";
    case SeverityColor::Black: return "Black";
  }
  return "Black";
}

std::string_view hex_color(SeverityColor c) {
  switch (c) {
    case SeverityColor::Green: return "#2ca02c";
    case SeverityColor::YellowGreen: return "#9acd32";
    case SeverityColor::Yellow: return "#ffd700";
    case SeverityColor::Orange: return "#ff8c00";
    case SeverityColor::Red: return "#d62728";
    case SeverityColor::Black: return "#000000";
  }
  return "#000000";
}

SeverityColor color_for_severity(std::optional<int> video_severity) {
  if (!video_severity) return SeverityColor::Black;
  switch (*video_severity) {
    case 0: return SeverityColor::Green;
    case 1: return SeverityColor::YellowGreen;
    case 2: return SeverityColor::Yellow;
    case 3: return SeverityColor::Orange;
    case 4: return SeverityColor::Red;
    default: return SeverityColor::Black;
  }
}

StudyReport scan_report(std::string study_id, const std::map<int, VideoAnalysis>& by_location,
                        std::string generated_at) {
  StudyReport report;
  report.study_id = std::move(study_id);
  report.generated_at = std::move(generated_at);
  for (int loc = 1; loc <= kNumScanLocations; ++loc) report.locations[loc - 1].location = loc;

  for (const auto& [loc, video] : by_location) {
    if (loc < 1 || loc > kNumScanLocations)
      throw ValidationError(fmt::format("scan location {} outside 1..14", loc));
    ScanLocationResult& r = report.locations[loc - 1];
    r.video_severity = video.video_severity;
    r.color = color_for_severity(video.video_severity);
    r.video_ids = {video.video_id};
    r.worst_frame_id = video.worst_frame_id;

    std::vector<int> detected;
    for (const auto& f : video.frames)
      if (f.severity.score >= 0) detected.push_back(f.severity.score);
    r.boxplot = severity_boxplot(detected);
  }
  return report;
}

std::string render_report_svg(const StudyReport& report) {
  constexpr int kCell = 60;
  constexpr int kGap = 8;
  constexpr int kTop = 40;
  constexpr int kColumnX[2] = {20, 20 + kCell + 40};
  const int width = kColumnX[1] + kCell + 20;
  const int height = kTop + 7 * (kCell + kGap) + 12;

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "  <title>14-point scan report {2}</title>\n"
      "  <text x=\"{3}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">Left</text>\n"
      "  <text x=\"{4}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">Right</text>\n",
      width, height, report.study_id, kColumnX[0], kColumnX[1]);

  for (const auto& r : report.locations) {
    const int column = r.location <= 7 ? 0 : 1;
    const int row = (r.location - 1) % 7;
    const int x = kColumnX[column];
    const int y = kTop + row * (kCell + kGap);
    const std::string label = fmt::format("{}{}", column == 0 ? 'L' : 'R', row + 1);
    const std::string text_fill = r.color == SeverityColor::Black ? "#ffffff" : "#000000";
    svg += fmt::format(
        "  <g id=\"loc-{0}\" data-location=\"{0}\" data-color=\"{1}\">\n"
        "    <rect x=\"{2}\" y=\"{3}\" width=\"{4}\" height=\"{4}\" fill=\"{5}\" "
        "stroke=\"#444444\"/>\n"
        "    <text x=\"{6}\" y=\"{7}\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"14\" fill=\"{8}\">{9}</text>\n"
        "  </g>\n",
        r.location, to_string(r.color), x, y, kCell, hex_color(r.color), x + kCell / 2,
        y + kCell / 2 + 5, text_fill, label);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace lustriage
