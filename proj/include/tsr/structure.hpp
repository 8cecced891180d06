#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsr/geometry.hpp"
#include "tsr/ingest.hpp"

namespace tsr {

struct StructureConfig {
  /// Per-category confidence cutoffs (records with score below the
  /// category's cutoff are discarded), indexed by Category code.
  std::array<double, kCategoryCount> score_thresholds = {0.5, 0.5, 0.5, 0.5};
  double nms_iou = 0.5;
  /// Fraction of a unit cell a spanning detection must cover to claim it.
  double span_overlap_tau = 0.5;
  /// Require a surviving Table detection and clip rows/columns to it.
  bool require_table_box = true;

  void validate() const;
};

/// Half-open-free 1-D extent: [lo, hi] along one axis.
struct Extent {
  double lo = 0.0;
  double hi = 0.0;

  double center() const { return 0.5 * (lo + hi); }
  bool operator==(const Extent&) const = default;
};

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t rowspan = 1;
  std::size_t colspan = 1;
  BBox bbox;

  bool operator==(const GridCell&) const = default;
};

/// Machine-interpretable table structure: rows x columns with merged
/// cells. Cells are listed row-major by anchor position and cover every
/// lattice position exactly once (spans cover their full block).
struct TableGrid {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<Extent> row_extents;  // ordered by center, ascending
  std::vector<Extent> col_extents;
  std::vector<GridCell> cells;

  bool operator==(const TableGrid&) const = default;
};

/// Raised when no table structure survives filtering (zero rows or
/// columns, or no table box when one is required).
class NoStructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Greedy per-category suppression: records are visited by descending
/// score (ties by input position); a record is dropped when its IoU with
/// an already-kept record of the same category reaches the threshold.
/// Kept records are returned in input order.
std::vector<DetectionRecord> nms(const std::vector<DetectionRecord>& records,
                                 double iou_threshold);

/// Derive the unit-cell grid from row and column detections: threshold,
/// NMS, optional clipping to the best table box, then the cross product
/// of row y-extents and column x-extents. Spanning-cell records are not
/// consumed here (see apply_spanning). Throws NoStructureError when no
/// rows or columns survive.
TableGrid infer_grid(const std::vector<DetectionRecord>& records,
                     const StructureConfig& cfg = {});

struct SpanApplyResult {
  TableGrid grid;
  /// Spans dropped for covering no cell at tau or conflicting with an
  /// earlier merge.
  std::size_t dropped_spans = 0;
};

/// Merge spanning-cell detections into a unit grid. Each span (visited by
/// descending score) claims the unit cells it covers at >= tau, snapped
/// to the minimal enclosing rectangular block; spans that touch a block
/// already merged are dropped. The exact-cover invariant is preserved.
SpanApplyResult apply_spanning(const TableGrid& grid,
                               const std::vector<DetectionRecord>& spans,
                               const StructureConfig& cfg = {});

/// Full pipeline: infer_grid, then threshold + NMS the spanning-cell
/// records and apply them.
SpanApplyResult infer_structure(const std::vector<DetectionRecord>& records,
                                const StructureConfig& cfg = {});

/// HTML table; merged cells carry rowspan/colspan attributes, cell bodies
/// are the cell pixel boxes (no OCR).
std::string export_html(const TableGrid& grid);

/// RFC 4180 CSV, n_rows lines of n_cols fields; merged cells repeat their
/// value across the block.
std::string export_csv(const TableGrid& grid);

std::string export_json(const TableGrid& grid);
TableGrid table_grid_from_json(const std::string& json_text);

/// Rectangular block of lattice positions, inclusive on both ends.
struct SpanBlock {
  std::size_t row0 = 0, row1 = 0;
  std::size_t col0 = 0, col1 = 0;
};

struct SynthConfig {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<SpanBlock> spans;  // disjoint blocks inside the lattice
  BBox frame = BBox(0, 0, 640, 480);
  /// Edge perturbation amplitude in pixels; each box edge is shifted by
  /// a seeded uniform draw from [-jitter, jitter].
  double jitter = 0.0;
  std::uint64_t seed = 0;
  std::string image_id = "synthetic-0";
};

struct SynthResult {
  std::vector<DetectionRecord> detections;  // table, rows, columns, spans
  TableGrid grid;                           // ground truth
};

/// Generate perfect (score 1.0) detections for a synthetic table together
/// with its ground-truth grid. With jitter 0 the inference pipeline
/// reproduces the grid exactly. Throws on overlapping or out-of-lattice
/// span blocks.
SynthResult synth_table(const SynthConfig& cfg);

}  // namespace tsr
