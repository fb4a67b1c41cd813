#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lustriage {

/// The eight lung-ultrasound landmark classes. Underlying values are the
/// canonical class ids (alphabetical by name).
enum class LandmarkClass : std::uint8_t {
  ALines = 0,
  AirBronchogram = 1,
  BLines = 2,
  BPatch = 3,
  Consolidation = 4,
  Pleura = 5,
  Rib = 6,
  Shadow = 7,
};

inline constexpr std::size_t kNumClasses = 8;

inline constexpr std::array<LandmarkClass, kNumClasses> kAllClasses = {
    LandmarkClass::ALines,        LandmarkClass::AirBronchogram,
    LandmarkClass::BLines,        LandmarkClass::BPatch,
    LandmarkClass::Consolidation, LandmarkClass::Pleura,
    LandmarkClass::Rib,           LandmarkClass::Shadow,
};

constexpr int class_id(LandmarkClass c) { return static_cast<int>(c); }

/// Pleura, Rib and Shadow are anatomical structure; everything else is a
/// lung manifestation (artifact or pathology).
constexpr bool is_structural(LandmarkClass c) {
  return c == LandmarkClass::Pleura || c == LandmarkClass::Rib ||
         c == LandmarkClass::Shadow;
}
constexpr bool is_manifestation(LandmarkClass c) { return !is_structural(c); }

std::string_view class_name(LandmarkClass c);

/// Throws std::out_of_range for ids outside 0..7.
LandmarkClass class_from_id(int id);

/// Exact match against the canonical names ("Pleura", "ALines", ...).
std::optional<LandmarkClass> class_from_name(std::string_view name);

/// Set of landmark classes present in a frame.
class LandmarkSet {
 public:
  constexpr LandmarkSet() = default;
  constexpr LandmarkSet(std::initializer_list<LandmarkClass> classes) {
    for (auto c : classes) insert(c);
  }
  static constexpr LandmarkSet from_bits(std::uint8_t bits) {
    LandmarkSet s;
    s.bits_ = bits;
    return s;
  }

  constexpr void insert(LandmarkClass c) { bits_ |= mask(c); }
  constexpr void erase(LandmarkClass c) { bits_ &= static_cast<std::uint8_t>(~mask(c)); }
  constexpr bool contains(LandmarkClass c) const { return (bits_ & mask(c)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  int size() const { return static_cast<int>(std::bitset<8>(bits_).count()); }

  constexpr bool has_manifestation() const {
    for (auto c : kAllClasses)
      if (is_manifestation(c) && contains(c)) return true;
    return false;
  }

  friend constexpr bool operator==(LandmarkSet, LandmarkSet) = default;

 private:
  static constexpr std::uint8_t mask(LandmarkClass c) {
    return static_cast<std::uint8_t>(1u << class_id(c));
  }
  std::uint8_t bits_ = 0;
};

/// Axis-aligned box in continuous pixel coordinates, corner form.
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// True when the box is valid and lies inside [0,width]x[0,height].
bool within_image(const BBox& box, ImageSize size);
BBox clamp_to_image(const BBox& box, ImageSize size);

struct Detection {
  BBox box;
  LandmarkClass cls = LandmarkClass::Pleura;
  double confidence = 1.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameDetections {
  std::string frame_id;
  ImageSize image_size;
  std::vector<Detection> detections;
};

/// Acquisition points of the lung scan protocol, seven per side.
inline constexpr int kNumScanLocations = 14;

inline constexpr double kDefaultConfidenceThreshold = 0.25;
inline constexpr double kDefaultNmsIouThreshold = 0.45;

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Detections with confidence >= threshold, in input order.
std::vector<Detection> filter_confidence(std::span<const Detection> dets,
                                         double threshold);

/// Class-wise greedy NMS. A candidate is dropped when its IoU with an
/// already-kept detection of the same class is strictly greater than
/// iou_threshold. Result is ordered by descending confidence, ties by input
/// index.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

LandmarkSet present_classes(std::span<const Detection> dets);

}  // namespace lustriage
