#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsr/geometry.hpp"
#include "tsr/ingest.hpp"

namespace tsr {

/// Outcome of one prediction within greedy matching.
struct MatchEntry {
  std::size_t pred_index = 0;  // position in the prediction list as given
  std::optional<std::size_t> gt_index;  // matched ground-truth object
  double iou = 0.0;            // IoU achieved with the matched box
  bool ignored = false;        // matched an ignored box, or out-of-bucket FP
  double score = 0.0;          // copied for cross-image accumulation
  std::uint64_t order = 0;     // input position, breaks score ties
};

/// Matching outcome for one image, per category.
struct MatchSet {
  std::array<std::vector<MatchEntry>, kCategoryCount> per_category;
  /// Ground-truth boxes that count toward recall (not ignored).
  std::array<std::size_t, kCategoryCount> gt_counts{};
};

/// Greedy matching: predictions in descending score order (ties by input
/// position), each taking the unmatched same-category ground truth of
/// maximal IoU >= iou_threshold. With a bucket filter, ground truth
/// outside the bucket is ignored: predictions matching an ignored box are
/// neither TP nor FP, and unmatched predictions outside the bucket are
/// excluded. Throws when a prediction references a different image.
MatchSet match_detections(const AnnotatedImage& gt,
                          const std::vector<DetectionRecord>& preds,
                          double iou_threshold,
                          std::optional<SizeBucket> bucket_filter = {});

/// 101-point interpolated precision/recall curve (recall grid
/// 0.00, 0.01, ..., 1.00).
struct PRCurve {
  static constexpr std::size_t kRecallPoints = 101;
  std::array<double, kRecallPoints> precision{};

  /// Average precision in percent: mean interpolated precision * 100.
  double average_precision() const;
};

/// Accumulate matches from all images of one category at one threshold
/// into a PR curve. Empty when gt_count is zero (undefined curve; the
/// category is excluded from averages).
std::optional<PRCurve> pr_curve(std::vector<MatchEntry> matches,
                                std::size_t gt_count);

/// AP summary fields, in percent. NaN marks undefined entries (no ground
/// truth at that setting).
struct APFields {
  double ap = std::numeric_limits<double>::quiet_NaN();       // IoU 0.50:0.05:0.95
  double ap50 = std::numeric_limits<double>::quiet_NaN();
  double ap75 = std::numeric_limits<double>::quiet_NaN();
  double ap_small = std::numeric_limits<double>::quiet_NaN();
  double ap_medium = std::numeric_limits<double>::quiet_NaN();
  double ap_large = std::numeric_limits<double>::quiet_NaN();
};

struct APReport {
  APFields overall;
  std::map<Category, APFields> per_category;  // categories with ground truth
};

struct EvalConfig {
  /// IoU thresholds averaged into AP; defaults to 0.50:0.05:0.95.
  std::vector<double> iou_thresholds = default_iou_thresholds();
  /// Maximum detections kept per image and category (by score);
  /// 0 = uncapped, since tables can have far more than 100 rows.
  std::size_t max_detections = 0;
  /// Worker threads for per-image matching; results are independent of
  /// the thread count.
  unsigned jobs = 1;

  static std::vector<double> default_iou_thresholds();
};

/// Full evaluation of a detection set against ground truth. Throws when
/// predictions reference unknown image ids (all offenders listed).
APReport evaluate(const std::vector<AnnotatedImage>& gt,
                  const std::vector<DetectionRecord>& preds,
                  const EvalConfig& cfg = {});

std::string report_to_json(const APReport& report);

/// Aligned table with the AP, AP50, AP75, AP_S, AP_M, AP_L columns
/// followed by the per-category T, TC, TR, TSC block.
std::string report_to_text(const APReport& report);

}  // namespace tsr
