#include "lustriage/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lustriage {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames = {
    "ALines", "AirBronchogram", "BLines", "BPatch",
    "Consolidation", "Pleura", "Rib", "Shadow",
};
}  // namespace

std::string_view class_name(LandmarkClass c) { return kNames[class_id(c)]; }

LandmarkClass class_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kNumClasses))
    throw std::out_of_range("landmark class id out of range: " + std::to_string(id));
  return static_cast<LandmarkClass>(id);
}

std::optional<LandmarkClass> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<LandmarkClass>(i);
  return std::nullopt;
}

bool BBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
}

bool within_image(const BBox& box, ImageSize size) {
  return box.valid() && box.x_min >= 0 && box.y_min >= 0 && box.x_max <= size.width &&
         box.y_max <= size.height;
}

BBox clamp_to_image(const BBox& box, ImageSize size) {
  auto cx = [&](double v) { return std::clamp(v, 0.0, static_cast<double>(size.width)); };
  auto cy = [&](double v) { return std::clamp(v, 0.0, static_cast<double>(size.height)); };
  return {cx(box.x_min), cy(box.y_min), cx(box.x_max), cy(box.y_max)};
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> filter_confidence(std::span<const Detection> dets,
                                         double threshold) {
  std::vector<Detection> out;
  std::copy_if(dets.begin(), dets.end(), std::back_inserter(out),
               [threshold](const Detection& d) { return d.confidence >= threshold; });
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::array<std::vector<std::size_t>, kNumClasses> kept_by_class;
  std::vector<Detection> out;
  for (std::size_t idx : order) {
    const Detection& d = dets[idx];
    auto& kept = kept_by_class[class_id(d.cls)];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(dets[k].box, d.box) > iou_threshold;
    });
    if (suppressed) continue;
    kept.push_back(idx);
    out.push_back(d);
  }
  return out;
}

LandmarkSet present_classes(std::span<const Detection> dets) {
  LandmarkSet s;
  for (const auto& d : dets) s.insert(d.cls);
  return s;
}

}  // namespace lustriage
