#include "tsr/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <json.hpp>

#include "tsr/text.hpp"

namespace tsr {

namespace pt = boost::property_tree;
using nlohmann::json;

std::string_view category_name(Category c) {
  switch (c) {
    case Category::Table: return "table";
    case Category::TableColumn: return "table column";
    case Category::TableRow: return "table row";
    case Category::TableSpanningCell: return "table spanning cell";
  }
  return "?";
}

std::optional<Category> category_from_name(std::string_view name) {
  for (Category c : kAllCategories)
    if (category_name(c) == name)
      return c;
  return std::nullopt;
}

std::optional<Category> category_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kCategoryCount))
    return std::nullopt;
  return static_cast<Category>(id);
}

namespace {

double require_number(const pt::ptree& node, const std::string& path,
                      const std::string& context) {
  auto v = node.get_optional<double>(path);
  if (!v)
    throw ParseError(context + ": missing or non-numeric <" + path + ">");
  return *v;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

VocParseResult parse_voc_xml(const std::string& xml_text,
                             const VocParseOptions& opts) {
  pt::ptree tree;
  std::istringstream in(xml_text);
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed XML: ") + e.what());
  }

  auto root = tree.get_child_optional("annotation");
  if (!root)
    throw ParseError("missing <annotation> root element");

  VocParseResult result;
  AnnotatedImage& image = result.image;
  image.image_id = root->get<std::string>("filename", "");
  if (!root->get_child_optional("size"))
    throw ParseError("annotation: missing <size>");
  image.width = require_number(*root, "size.width", "annotation");
  image.height = require_number(*root, "size.height", "annotation");
  if (image.width < 0.0 || image.height < 0.0)
    throw ParseError("annotation: negative image size");

  for (const auto& [key, node] : *root) {
    if (key != "object")
      continue;
    auto name = node.get_optional<std::string>("name");
    if (!name)
      throw ParseError("object: missing <name>");
    auto category = category_from_name(*name);
    if (!category) {
      if (opts.strict)
        throw ParseError("object: unknown name \"" + *name + "\"");
      ++result.skipped_objects;
      continue;
    }
    const std::string context = "object \"" + *name + "\"";
    if (!node.get_child_optional("bndbox"))
      throw ParseError(context + ": missing <bndbox>");
    const double x0 = require_number(node, "bndbox.xmin", context);
    const double y0 = require_number(node, "bndbox.ymin", context);
    const double x1 = require_number(node, "bndbox.xmax", context);
    const double y1 = require_number(node, "bndbox.ymax", context);
    if (x1 < x0 || y1 < y0)
      throw ParseError(context + ": inverted box (max < min)");
    BBox box(x0, y0, x1, y1);
    if (opts.clamp_boxes)
      box = box.clamped(image.width, image.height);
    image.objects.push_back({*category, box});
  }
  return result;
}

std::string write_voc_xml(const AnnotatedImage& image) {
  std::string out;
  out += "<?xml version=\"1.0\"?>\n<annotation>\n";
  out += "  <filename>" + xml_escape(image.image_id) + "</filename>\n";
  out += "  <size>\n";
  out += "    <width>" + format_number(image.width) + "</width>\n";
  out += "    <height>" + format_number(image.height) + "</height>\n";
  out += "  </size>\n";
  for (const AnnotatedObject& obj : image.objects) {
    out += "  <object>\n";
    out += "    <name>" + std::string(category_name(obj.category)) + "</name>\n";
    out += "    <bndbox>\n";
    out += "      <xmin>" + format_number(obj.bbox.x_min) + "</xmin>\n";
    out += "      <ymin>" + format_number(obj.bbox.y_min) + "</ymin>\n";
    out += "      <xmax>" + format_number(obj.bbox.x_max) + "</xmax>\n";
    out += "      <ymax>" + format_number(obj.bbox.y_max) + "</ymax>\n";
    out += "    </bndbox>\n";
    out += "  </object>\n";
  }
  out += "</annotation>\n";
  return out;
}

std::vector<DetectionRecord> parse_detections(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("detections: ") + e.what());
  }
  if (!doc.is_array())
    throw ParseError("detections: expected a JSON array");

  std::vector<DetectionRecord> records;
  records.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    const std::string where = "detections: record " + std::to_string(i);
    if (!rec.is_object())
      throw ParseError(where + ": expected an object");
    if (!rec.contains("image_id") || !rec["image_id"].is_string())
      throw ParseError(where + ": missing string image_id");
    if (!rec.contains("category_id") || !rec["category_id"].is_number_integer())
      throw ParseError(where + ": missing integer category_id");
    auto category = category_from_id(rec["category_id"].get<int>());
    if (!category)
      throw ParseError(where + ": unknown category_id " +
                       rec["category_id"].dump());
    if (!rec.contains("bbox") || !rec["bbox"].is_array() ||
        rec["bbox"].size() != 4)
      throw ParseError(where + ": bbox must be [x, y, width, height]");
    double b[4];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!rec["bbox"][k].is_number())
        throw ParseError(where + ": non-numeric bbox entry");
      b[k] = rec["bbox"][k].get<double>();
    }
    if (b[2] < 0.0 || b[3] < 0.0)
      throw ParseError(where + ": negative bbox extent");
    if (!rec.contains("score") || !rec["score"].is_number())
      throw ParseError(where + ": missing numeric score");
    const double score = rec["score"].get<double>();
    if (!(score >= 0.0 && score <= 1.0))
      throw ParseError(where + ": score outside [0, 1]");
    records.push_back({rec["image_id"].get<std::string>(), *category,
                       BBox::from_xywh(b[0], b[1], b[2], b[3]), score});
  }
  return records;
}

std::string write_detections(const std::vector<DetectionRecord>& records) {
  json doc = json::array();
  for (const DetectionRecord& r : records) {
    const auto xywh = r.bbox.to_xywh();
    doc.push_back({{"image_id", r.image_id},
                   {"category_id", static_cast<int>(r.category)},
                   {"bbox", {xywh[0], xywh[1], xywh[2], xywh[3]}},
                   {"score", r.score}});
  }
  return doc.dump(2) + "\n";
}

std::vector<double> DatasetStats::default_bucket_edges() {
  return {32, 64, 128, 256, 512, 1024, 2048};
}

DatasetStats::DatasetStats(std::vector<double> bucket_edges)
    : edges_(std::move(bucket_edges)) {
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (!(edges_[i] > edges_[i - 1]))
      throw std::invalid_argument(
          "DatasetStats: bucket edges must be strictly increasing");
  for (auto& h : histograms_)
    h.assign(edges_.size() + 1, 0);
}

void DatasetStats::add(const AnnotatedImage& image) {
  ++images_;
  for (const AnnotatedObject& obj : image.objects) {
    const auto c = static_cast<std::size_t>(obj.category);
    const double size = box_size(obj.bbox);
    ++counts_[c];
    size_totals_[c].add(size);
    const auto bin =
        std::upper_bound(edges_.begin(), edges_.end(), size) - edges_.begin();
    ++histograms_[c][static_cast<std::size_t>(bin)];
  }
}

void DatasetStats::merge(const DatasetStats& other) {
  if (other.edges_ != edges_)
    throw std::invalid_argument("DatasetStats: mismatched bucket edges");
  images_ += other.images_;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    counts_[c] += other.counts_[c];
    size_totals_[c].merge(other.size_totals_[c]);
    for (std::size_t k = 0; k < histograms_[c].size(); ++k)
      histograms_[c][k] += other.histograms_[c][k];
  }
}

std::uint64_t DatasetStats::count(Category c) const {
  return counts_[static_cast<std::size_t>(c)];
}

double DatasetStats::mean_size(Category c) const {
  const auto i = static_cast<std::size_t>(c);
  if (counts_[i] == 0)
    return std::numeric_limits<double>::quiet_NaN();
  return size_totals_[i].value() / static_cast<double>(counts_[i]);
}

const std::vector<std::uint64_t>& DatasetStats::histogram(Category c) const {
  return histograms_[static_cast<std::size_t>(c)];
}

std::string DatasetStats::to_json() const {
  json doc = json::object();
  for (Category c : kAllCategories) {
    json entry;
    entry["count"] = count(c);
    const double mean = mean_size(c);
    entry["mean_size"] = std::isnan(mean) ? json(nullptr) : json(mean);
    entry["histogram"] = {{"bucket_edges", edges_},
                          {"counts", histogram(c)}};
    doc[std::string(category_name(c))] = std::move(entry);
  }
  return doc.dump(2) + "\n";
}

std::string DatasetStats::to_text_table() const {
  std::string out;
  char line[96];
  std::snprintf(line, sizeof line, "%-22s %12s %12s\n", "category", "count",
                "mean_size");
  out += line;
  for (Category c : kAllCategories) {
    const double mean = mean_size(c);
    if (std::isnan(mean))
      std::snprintf(line, sizeof line, "%-22s %12llu %12s\n",
                    std::string(category_name(c)).c_str(),
                    static_cast<unsigned long long>(count(c)), "-");
    else
      std::snprintf(line, sizeof line, "%-22s %12llu %12.2f\n",
                    std::string(category_name(c)).c_str(),
                    static_cast<unsigned long long>(count(c)), mean);
    out += line;
  }
  return out;
}

DatasetStats dataset_stats(const std::vector<AnnotatedImage>& images) {
  DatasetStats stats;
  for (const AnnotatedImage& image : images)
    stats.add(image);
  return stats;
}

}  // namespace tsr
