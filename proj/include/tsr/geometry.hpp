#pragma once

#include <array>
#include <optional>
#include <stdexcept>

namespace tsr {

/// Axis-aligned box in continuous pixel coordinates, stored as corners.
/// Zero-area boxes are allowed; negative extents are rejected at construction.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  BBox() = default;
  BBox(double x0, double y0, double x1, double y1)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (x_max < x_min || y_max < y_min)
      throw std::invalid_argument("BBox: negative extent");
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  /// (x, y, width, height) form used by COCO-style interchange files.
  static BBox from_xywh(double x, double y, double w, double h) {
    if (w < 0 || h < 0)
      throw std::invalid_argument("BBox: negative extent");
    return BBox(x, y, x + w, y + h);
  }
  std::array<double, 4> to_xywh() const {
    return {x_min, y_min, width(), height()};
  }

  /// Clamp into [0, frame_width] x [0, frame_height].
  BBox clamped(double frame_width, double frame_height) const;

  bool operator==(const BBox&) const = default;
};

/// COCO-style size class with the 32^2 / 64^2 area boundaries used here.
/// Boundary areas belong to the larger bucket: area 1024 is Medium, 4096 is Large.
enum class SizeBucket { Small, Medium, Large };

inline constexpr double kSmallAreaMax = 32.0 * 32.0;
inline constexpr double kMediumAreaMax = 64.0 * 64.0;

/// Overlap rectangle, or absent when the interiors do not overlap.
/// Boxes touching only at an edge or corner produce absent (area-0 overlap).
std::optional<BBox> intersect(const BBox& a, const BBox& b);

/// |A n B| / |A u B|; 0 when the union has zero area.
double iou(const BBox& a, const BBox& b);

/// Height + width, the box-size measure used for dataset statistics
/// and size-prioritized sampling.
double box_size(const BBox& a);

SizeBucket size_bucket(const BBox& a);

const char* size_bucket_name(SizeBucket bucket);

}  // namespace tsr
