#include "tsr/geometry.hpp"

#include <algorithm>

namespace tsr {

BBox BBox::clamped(double frame_width, double frame_height) const {
  auto clamp = [](double v, double hi) { return std::min(std::max(v, 0.0), hi); };
  return BBox(clamp(x_min, frame_width), clamp(y_min, frame_height),
              clamp(x_max, frame_width), clamp(y_max, frame_height));
}

std::optional<BBox> intersect(const BBox& a, const BBox& b) {
  const double x0 = std::max(a.x_min, b.x_min);
  const double y0 = std::max(a.y_min, b.y_min);
  const double x1 = std::min(a.x_max, b.x_max);
  const double y1 = std::min(a.y_max, b.y_max);
  if (x1 <= x0 || y1 <= y0)
    return std::nullopt;
  return BBox(x0, y0, x1, y1);
}

double iou(const BBox& a, const BBox& b) {
  const auto overlap = intersect(a, b);
  const double inter_area = overlap ? overlap->area() : 0.0;
  const double union_area = a.area() + b.area() - inter_area;
  return union_area > 0.0 ? inter_area / union_area : 0.0;
}

double box_size(const BBox& a) { return a.height() + a.width(); }

SizeBucket size_bucket(const BBox& a) {
  const double area = a.area();
  if (area < kSmallAreaMax)
    return SizeBucket::Small;
  if (area < kMediumAreaMax)
    return SizeBucket::Medium;
  return SizeBucket::Large;
}

const char* size_bucket_name(SizeBucket bucket) {
  switch (bucket) {
    case SizeBucket::Small: return "small";
    case SizeBucket::Medium: return "medium";
    case SizeBucket::Large: return "large";
  }
  return "?";
}

}  // namespace tsr
