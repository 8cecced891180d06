#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tsr/exact_sum.hpp"
#include "tsr/geometry.hpp"

namespace tsr {

/// The four object categories of the table-structure detection problem.
/// Numeric codes are fixed and used verbatim in interchange files.
enum class Category : int {
  Table = 0,
  TableColumn = 1,
  TableRow = 2,
  TableSpanningCell = 3,
};

inline constexpr std::size_t kCategoryCount = 4;
inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::Table, Category::TableColumn, Category::TableRow,
    Category::TableSpanningCell};

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);
std::optional<Category> category_from_id(int id);

struct AnnotatedObject {
  Category category = Category::Table;
  BBox bbox;

  bool operator==(const AnnotatedObject&) const = default;
};

/// Ground-truth objects of one image.
struct AnnotatedImage {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<AnnotatedObject> objects;

  bool operator==(const AnnotatedImage&) const = default;
};

/// One scored predicted object.
struct DetectionRecord {
  std::string image_id;
  Category category = Category::Table;
  BBox bbox;
  double score = 0.0;

  bool operator==(const DetectionRecord&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VocParseOptions {
  /// Strict mode fails on unknown object names; lenient mode skips them.
  bool strict = false;
  /// Clamp boxes into the image frame (annotation noise of a few pixels
  /// is common in real corpora).
  bool clamp_boxes = true;
};

struct VocParseResult {
  AnnotatedImage image;
  std::size_t skipped_objects = 0;  // unknown names skipped in lenient mode
};

/// Parse a PASCAL-VOC style annotation document
/// (annotation > size > {width,height}, annotation > object >
/// {name, bndbox{xmin,ymin,xmax,ymax}}). Throws ParseError naming the
/// offending element on malformed input.
VocParseResult parse_voc_xml(const std::string& xml_text,
                             const VocParseOptions& opts = {});

std::string write_voc_xml(const AnnotatedImage& image);

/// Parse a detection-results array of
/// {image_id, category_id, bbox: [x, y, width, height], score}.
/// Throws ParseError with the offending record index.
std::vector<DetectionRecord> parse_detections(const std::string& json_text);

std::string write_detections(const std::vector<DetectionRecord>& records);

/// Streaming per-category counts, mean box sizes and a box-size
/// histogram. Accumulation is exact, so results are independent of image
/// order and partial stats from shards merge bit-exactly.
class DatasetStats {
 public:
  static std::vector<double> default_bucket_edges();

  explicit DatasetStats(std::vector<double> bucket_edges = default_bucket_edges());

  void add(const AnnotatedImage& image);
  void merge(const DatasetStats& other);

  std::uint64_t count(Category c) const;
  /// Mean of box_size over the category; NaN when the count is zero.
  double mean_size(Category c) const;
  /// Histogram over box_size; bin k covers [edges[k-1], edges[k]) with
  /// open-ended first and last bins.
  const std::vector<std::uint64_t>& histogram(Category c) const;
  const std::vector<double>& bucket_edges() const { return edges_; }
  std::uint64_t image_count() const { return images_; }

  std::string to_json() const;
  std::string to_text_table() const;

 private:
  std::vector<double> edges_;
  std::uint64_t images_ = 0;
  std::array<std::uint64_t, kCategoryCount> counts_{};
  std::array<ExactSum, kCategoryCount> size_totals_;
  std::array<std::vector<std::uint64_t>, kCategoryCount> histograms_;
};

DatasetStats dataset_stats(const std::vector<AnnotatedImage>& images);

}  // namespace tsr
