#include "tsr/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tsr {

namespace {

// Grid cells along one axis; the grid covers the whole image, so a
// partial trailing cell still counts.
std::size_t cells_along(double extent, double stride) {
  const double n = std::ceil(extent / stride);
  return n > 0.0 ? static_cast<std::size_t>(n) : 0;
}

enum class FixedSide { Height, Width };

// Shared grid walk for the structure-aware generators: one side of the
// anchor is pinned to the level extent, the other scales with the ratio.
AnchorSet generate_fixed_side(const AnchorConfig& cfg, FixedSide side,
                              AnchorRole role) {
  cfg.validate();
  if (cfg.mode != AnchorMode::StructureAware)
    throw std::invalid_argument(
        "structure-aware generation requires AnchorMode::StructureAware");

  AnchorSet out;
  for (std::size_t level = 0; level < cfg.levels.size(); ++level) {
    const auto& [stride, extent] = cfg.levels[level];
    const std::size_t nx = cells_along(cfg.image_width, stride);
    const std::size_t ny = cells_along(cfg.image_height, stride);
    if (nx == 0 || ny == 0)
      throw std::invalid_argument(
          "anchor grid is empty at level " + std::to_string(level) +
          ": image smaller than one stride cell");
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const double cx = (static_cast<double>(i) + 0.5) * stride;
        const double cy = (static_cast<double>(j) + 0.5) * stride;
        for (double ratio : cfg.aspect_ratios) {
          const double w = side == FixedSide::Height ? extent * ratio : extent;
          const double h = side == FixedSide::Height ? extent : extent * ratio;
          const double x0 = cx - 0.5 * w;
          const double y0 = cy - 0.5 * h;
          BBox box(x0, y0, x0 + w, y0 + h);
          if (cfg.clip_to_image)
            box = box.clamped(cfg.image_width, cfg.image_height);
          out.anchors.push_back({box, level, role});
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<PyramidLevel> AnchorConfig::default_levels() {
  return {{8, 32}, {16, 64}, {32, 128}, {64, 256}, {128, 512}};
}

void AnchorConfig::validate() const {
  if (levels.empty())
    throw std::invalid_argument("AnchorConfig: at least one level required");
  if (aspect_ratios.empty())
    throw std::invalid_argument("AnchorConfig: at least one ratio required");
  double prev_stride = 0.0;
  for (const auto& [stride, extent] : levels) {
    if (!(stride > prev_stride))
      throw std::invalid_argument(
          "AnchorConfig: strides must be positive and strictly increasing");
    if (!(extent > 0.0))
      throw std::invalid_argument("AnchorConfig: base extent must be > 0");
    prev_stride = stride;
  }
  for (double r : aspect_ratios)
    if (!(r > 0.0))
      throw std::invalid_argument("AnchorConfig: ratios must be > 0");
  if (!(image_width > 0.0) || !(image_height > 0.0))
    throw std::invalid_argument("AnchorConfig: image size must be positive");
}

AnchorSet generate_column_anchors(const AnchorConfig& cfg) {
  return generate_fixed_side(cfg, FixedSide::Height, AnchorRole::Column);
}

AnchorSet generate_row_anchors(const AnchorConfig& cfg) {
  return generate_fixed_side(cfg, FixedSide::Width, AnchorRole::Row);
}

AnchorSet generate_typical_anchors(const AnchorConfig& cfg) {
  cfg.validate();
  if (cfg.mode != AnchorMode::Typical)
    throw std::invalid_argument(
        "typical generation requires AnchorMode::Typical");

  AnchorSet out;
  for (std::size_t level = 0; level < cfg.levels.size(); ++level) {
    const auto& [stride, extent] = cfg.levels[level];
    const std::size_t nx = cells_along(cfg.image_width, stride);
    const std::size_t ny = cells_along(cfg.image_height, stride);
    if (nx == 0 || ny == 0)
      throw std::invalid_argument(
          "anchor grid is empty at level " + std::to_string(level) +
          ": image smaller than one stride cell");
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const double cx = (static_cast<double>(i) + 0.5) * stride;
        const double cy = (static_cast<double>(j) + 0.5) * stride;
        for (double ratio : cfg.aspect_ratios) {
          const double w = extent * std::sqrt(ratio);
          // Deriving the height from extent^2 / w keeps the area equal
          // across ratios to within a final rounding.
          const double h = extent * extent / w;
          const double x0 = cx - 0.5 * w;
          const double y0 = cy - 0.5 * h;
          BBox box(x0, y0, x0 + w, y0 + h);
          if (cfg.clip_to_image)
            box = box.clamped(cfg.image_width, cfg.image_height);
          out.anchors.push_back({box, level, AnchorRole::Generic});
        }
      }
    }
  }
  return out;
}

std::size_t unclipped_anchor_count(const AnchorConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  for (const auto& [stride, extent] : cfg.levels)
    total += cells_along(cfg.image_width, stride) *
             cells_along(cfg.image_height, stride) * cfg.aspect_ratios.size();
  return total;
}

namespace {

// Canonical uniform double in [0, 1); fixed construction so sampling is
// reproducible across standard libraries.
double canonical_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<ScoredBox> sample_proposals_size_prioritized(
    const std::vector<ScoredBox>& proposals, std::size_t k, double gamma,
    std::uint64_t seed) {
  if (k > proposals.size())
    throw std::invalid_argument(
        "sample_proposals: k exceeds the number of proposals");
  if (gamma < 0.0)
    throw std::invalid_argument("sample_proposals: gamma must be >= 0");

  std::vector<double> weight(proposals.size());
  double total = 0.0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const double size = box_size(proposals[i].bbox);
    if (size <= 0.0 && gamma > 0.0)
      throw std::invalid_argument(
          "sample_proposals: zero-size proposal with gamma > 0");
    if (proposals[i].score < 0.0)
      throw std::invalid_argument("sample_proposals: negative score");
    weight[i] = proposals[i].score * std::pow(size, -gamma);
    total += weight[i];
  }
  if (total <= 0.0) {
    // All-zero scores: fall back to uniform weights.
    std::fill(weight.begin(), weight.end(), 1.0);
    total = static_cast<double>(weight.size());
  }

  std::mt19937_64 rng(seed);
  std::vector<char> taken(proposals.size(), 0);
  std::vector<std::size_t> selected;
  selected.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    // Recomputing the remaining mass each draw avoids drift from
    // repeated subtraction.
    double remaining = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (!taken[i])
        remaining += weight[i];
    std::size_t pick = proposals.size();
    if (remaining > 0.0) {
      double u = canonical_uniform(rng) * remaining;
      for (std::size_t i = 0; i < weight.size(); ++i) {
        if (taken[i] || weight[i] <= 0.0)
          continue;
        pick = i;
        if (u < weight[i])
          break;
        u -= weight[i];
      }
    } else {
      // Only zero-weight proposals left; fill in input order.
      for (std::size_t i = 0; i < weight.size(); ++i)
        if (!taken[i]) {
          pick = i;
          break;
        }
    }
    selected.push_back(pick);
    taken[pick] = 1;
  }

  std::sort(selected.begin(), selected.end(),
            [&weight](std::size_t a, std::size_t b) {
              if (weight[a] != weight[b])
                return weight[a] > weight[b];
              return a < b;
            });
  std::vector<ScoredBox> out;
  out.reserve(selected.size());
  for (std::size_t i : selected)
    out.push_back(proposals[i]);
  return out;
}

}  // namespace tsr
