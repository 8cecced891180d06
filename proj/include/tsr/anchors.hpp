#pragma once

#include <cstdint>
#include <vector>

#include "tsr/geometry.hpp"

namespace tsr {

enum class AnchorMode { Typical, StructureAware };

/// What a structure-aware anchor is shaped for: Column anchors share a
/// fixed height per pyramid level, Row anchors a fixed width. Generic is
/// the typical constant-area baseline.
enum class AnchorRole { Column, Row, Generic };

struct PyramidLevel {
  double stride = 0.0;       // grid spacing, pixels
  double base_extent = 0.0;  // fixed height (columns) / width (rows) / base size (typical)
};

struct AnchorConfig {
  AnchorMode mode = AnchorMode::StructureAware;
  std::vector<PyramidLevel> levels = default_levels();
  std::vector<double> aspect_ratios = {0.5, 1.0, 2.0};
  double image_width = 0.0;
  double image_height = 0.0;
  bool clip_to_image = true;

  /// Common FPN ladder: strides 8..128 with extents 32..512.
  static std::vector<PyramidLevel> default_levels();

  /// Throws std::invalid_argument on malformed settings (strides not
  /// strictly increasing, non-positive extents or ratios, empty lists,
  /// non-positive image size).
  void validate() const;
};

struct Anchor {
  BBox bbox;
  std::size_t level = 0;
  AnchorRole role = AnchorRole::Generic;
};

struct AnchorSet {
  std::vector<Anchor> anchors;
};

/// Column anchors: per level (stride s, height h) and ratio r, one box of
/// height exactly h and width h*r centered at every grid position
/// ((i+1/2)s, (j+1/2)s) covering the image. Emission order is level-major,
/// then rows, columns, ratios.
AnchorSet generate_column_anchors(const AnchorConfig& cfg);

/// Mirror of generate_column_anchors with width fixed to the level extent
/// and height = extent * ratio.
AnchorSet generate_row_anchors(const AnchorConfig& cfg);

/// Constant-area baseline: width = extent * sqrt(r), height = extent / sqrt(r);
/// all anchors of a level share area extent^2 before clipping.
AnchorSet generate_typical_anchors(const AnchorConfig& cfg);

/// Closed-form unclipped anchor count:
/// sum over levels of ceil(W/s) * ceil(H/s) * |ratios|.
std::size_t unclipped_anchor_count(const AnchorConfig& cfg);

struct ScoredBox {
  BBox bbox;
  double score = 0.0;
};

/// Weighted sampling of k proposals without replacement, weight
/// proportional to score * box_size^(-gamma). gamma = 0 degenerates to
/// score-proportional sampling. The selected set is drawn sequentially
/// with the given seed; the result is ordered by weight (descending,
/// ties by input position) and is bit-reproducible for a fixed seed.
/// Throws when k exceeds the pool, gamma < 0, or a zero-size proposal
/// meets gamma > 0.
std::vector<ScoredBox> sample_proposals_size_prioritized(
    const std::vector<ScoredBox>& proposals, std::size_t k, double gamma,
    std::uint64_t seed);

}  // namespace tsr
