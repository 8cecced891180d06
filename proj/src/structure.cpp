#include "tsr/structure.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "tsr/text.hpp"

namespace tsr {

using nlohmann::json;

void StructureConfig::validate() const {
  for (double t : score_thresholds)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument(
          "StructureConfig: score thresholds must be in [0, 1]");
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0))
    throw std::invalid_argument("StructureConfig: nms_iou must be in [0, 1]");
  if (!(span_overlap_tau > 0.0 && span_overlap_tau <= 1.0))
    throw std::invalid_argument(
        "StructureConfig: span_overlap_tau must be in (0, 1]");
}

namespace {

// Indices sorted by descending score, ties by input position.
std::vector<std::size_t> score_order(const std::vector<DetectionRecord>& recs) {
  std::vector<std::size_t> order(recs.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::sort(order.begin(), order.end(), [&recs](std::size_t a, std::size_t b) {
    if (recs[a].score != recs[b].score)
      return recs[a].score > recs[b].score;
    return a < b;
  });
  return order;
}

std::vector<DetectionRecord> filter_by_score(
    const std::vector<DetectionRecord>& records, const StructureConfig& cfg) {
  std::vector<DetectionRecord> kept;
  for (const DetectionRecord& r : records)
    if (r.score >= cfg.score_thresholds[static_cast<std::size_t>(r.category)])
      kept.push_back(r);
  return kept;
}

BBox extent_product(const Extent& col, const Extent& row) {
  return BBox(col.lo, row.lo, col.hi, row.hi);
}

}  // namespace

std::vector<DetectionRecord> nms(const std::vector<DetectionRecord>& records,
                                 double iou_threshold) {
  std::vector<char> keep(records.size(), 0);
  std::vector<std::size_t> kept_so_far;
  for (std::size_t i : score_order(records)) {
    bool suppressed = false;
    for (std::size_t j : kept_so_far) {
      if (records[j].category != records[i].category)
        continue;
      if (iou(records[j].bbox, records[i].bbox) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      keep[i] = 1;
      kept_so_far.push_back(i);
    }
  }
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (keep[i])
      out.push_back(records[i]);
  return out;
}

TableGrid infer_grid(const std::vector<DetectionRecord>& records,
                     const StructureConfig& cfg) {
  cfg.validate();
  std::vector<DetectionRecord> survivors =
      nms(filter_by_score(records, cfg), cfg.nms_iou);

  std::vector<BBox> rows, cols;
  const DetectionRecord* table = nullptr;
  for (const DetectionRecord& r : survivors) {
    switch (r.category) {
      case Category::Table:
        if (!table || r.score > table->score)
          table = &r;
        break;
      case Category::TableRow: rows.push_back(r.bbox); break;
      case Category::TableColumn: cols.push_back(r.bbox); break;
      case Category::TableSpanningCell: break;  // handled by apply_spanning
    }
  }

  if (cfg.require_table_box) {
    if (!table)
      throw NoStructureError("no structure: no surviving table detection");
    auto clip_to_table = [&table](std::vector<BBox>& boxes) {
      std::vector<BBox> clipped;
      for (const BBox& b : boxes)
        if (auto overlap = intersect(b, table->bbox))
          clipped.push_back(*overlap);
      boxes = std::move(clipped);
    };
    clip_to_table(rows);
    clip_to_table(cols);
  }

  if (rows.empty() || cols.empty())
    throw NoStructureError("no structure: zero surviving rows or columns");

  std::sort(rows.begin(), rows.end(), [](const BBox& a, const BBox& b) {
    return a.center_y() < b.center_y();
  });
  std::sort(cols.begin(), cols.end(), [](const BBox& a, const BBox& b) {
    return a.center_x() < b.center_x();
  });

  TableGrid grid;
  grid.n_rows = rows.size();
  grid.n_cols = cols.size();
  for (const BBox& r : rows)
    grid.row_extents.push_back({r.y_min, r.y_max});
  for (const BBox& c : cols)
    grid.col_extents.push_back({c.x_min, c.x_max});
  for (std::size_t r = 0; r < grid.n_rows; ++r)
    for (std::size_t c = 0; c < grid.n_cols; ++c)
      grid.cells.push_back(
          {r, c, 1, 1, extent_product(grid.col_extents[c], grid.row_extents[r])});
  return grid;
}

SpanApplyResult apply_spanning(const TableGrid& grid,
                               const std::vector<DetectionRecord>& spans,
                               const StructureConfig& cfg) {
  cfg.validate();

  std::vector<DetectionRecord> span_records;
  for (const DetectionRecord& r : spans)
    if (r.category == Category::TableSpanningCell)
      span_records.push_back(r);

  SpanApplyResult result;
  result.grid = grid;
  if (grid.n_rows == 0 || grid.n_cols == 0)
    return result;

  // owner block per lattice position; SIZE_MAX = still a unit cell
  constexpr std::size_t kUnit = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(grid.n_rows * grid.n_cols, kUnit);
  auto at = [&grid](std::size_t r, std::size_t c) {
    return r * grid.n_cols + c;
  };
  std::vector<SpanBlock> blocks;

  for (std::size_t i : score_order(span_records)) {
    const BBox& span = span_records[i].bbox;

    // Unit cells covered at >= tau, measured on the unit lattice
    // regardless of earlier merges.
    std::size_t r0 = grid.n_rows, r1 = 0, c0 = grid.n_cols, c1 = 0;
    bool any = false;
    for (std::size_t r = 0; r < grid.n_rows; ++r) {
      for (std::size_t c = 0; c < grid.n_cols; ++c) {
        const BBox cell =
            extent_product(grid.col_extents[c], grid.row_extents[r]);
        if (cell.area() <= 0.0)
          continue;
        const auto overlap = intersect(cell, span);
        if (!overlap || overlap->area() / cell.area() < cfg.span_overlap_tau)
          continue;
        any = true;
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
    if (!any) {
      ++result.dropped_spans;
      continue;
    }

    // Snap to the minimal enclosing rectangular block; drop the span if
    // the block touches an earlier merge.
    bool conflict = false;
    for (std::size_t r = r0; r <= r1 && !conflict; ++r)
      for (std::size_t c = c0; c <= c1 && !conflict; ++c)
        conflict = owner[at(r, c)] != kUnit;
    if (conflict) {
      ++result.dropped_spans;
      continue;
    }
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c)
        owner[at(r, c)] = blocks.size();
    blocks.push_back({r0, r1, c0, c1});
  }

  result.grid.cells.clear();
  for (std::size_t r = 0; r < grid.n_rows; ++r) {
    for (std::size_t c = 0; c < grid.n_cols; ++c) {
      const std::size_t b = owner[at(r, c)];
      if (b == kUnit) {
        result.grid.cells.push_back(
            {r, c, 1, 1,
             extent_product(grid.col_extents[c], grid.row_extents[r])});
        continue;
      }
      const SpanBlock& block = blocks[b];
      if (r != block.row0 || c != block.col0)
        continue;  // covered by the block's anchor cell
      result.grid.cells.push_back(
          {r, c, block.row1 - block.row0 + 1, block.col1 - block.col0 + 1,
           BBox(grid.col_extents[block.col0].lo, grid.row_extents[block.row0].lo,
                grid.col_extents[block.col1].hi,
                grid.row_extents[block.row1].hi)});
    }
  }
  return result;
}

SpanApplyResult infer_structure(const std::vector<DetectionRecord>& records,
                                const StructureConfig& cfg) {
  TableGrid grid = infer_grid(records, cfg);
  std::vector<DetectionRecord> spans;
  for (const DetectionRecord& r : records)
    if (r.category == Category::TableSpanningCell)
      spans.push_back(r);
  spans = nms(filter_by_score(spans, cfg), cfg.nms_iou);
  return apply_spanning(grid, spans, cfg);
}

namespace {

std::string bbox_text(const BBox& b) {
  return "(" + format_number(b.x_min) + "," + format_number(b.y_min) + "," +
         format_number(b.x_max) + "," + format_number(b.y_max) + ")";
}

// cells indexed by anchor position for row-major emission
std::vector<const GridCell*> cell_lattice(const TableGrid& grid) {
  std::vector<const GridCell*> at(grid.n_rows * grid.n_cols, nullptr);
  for (const GridCell& cell : grid.cells)
    for (std::size_t r = cell.row; r < cell.row + cell.rowspan; ++r)
      for (std::size_t c = cell.col; c < cell.col + cell.colspan; ++c)
        at[r * grid.n_cols + c] = &cell;
  return at;
}

}  // namespace

std::string export_html(const TableGrid& grid) {
  const auto lattice = cell_lattice(grid);
  std::string out = "<table>\n";
  for (std::size_t r = 0; r < grid.n_rows; ++r) {
    out += "<tr>";
    for (std::size_t c = 0; c < grid.n_cols; ++c) {
      const GridCell* cell = lattice[r * grid.n_cols + c];
      if (!cell || cell->row != r || cell->col != c)
        continue;  // inside a span block, no element emitted
      out += "<td";
      if (cell->rowspan > 1)
        out += " rowspan=\"" + std::to_string(cell->rowspan) + "\"";
      if (cell->colspan > 1)
        out += " colspan=\"" + std::to_string(cell->colspan) + "\"";
      out += ">" + bbox_text(cell->bbox) + "</td>";
    }
    out += "</tr>\n";
  }
  out += "</table>\n";
  return out;
}

std::string export_csv(const TableGrid& grid) {
  const auto lattice = cell_lattice(grid);
  std::string out;
  for (std::size_t r = 0; r < grid.n_rows; ++r) {
    for (std::size_t c = 0; c < grid.n_cols; ++c) {
      if (c > 0)
        out += ",";
      const GridCell* cell = lattice[r * grid.n_cols + c];
      out += csv_quote(cell ? bbox_text(cell->bbox) : "");
    }
    out += "\r\n";
  }
  return out;
}

std::string export_json(const TableGrid& grid) {
  json doc;
  doc["n_rows"] = grid.n_rows;
  doc["n_cols"] = grid.n_cols;
  auto extents = [](const std::vector<Extent>& es) {
    json arr = json::array();
    for (const Extent& e : es)
      arr.push_back({e.lo, e.hi});
    return arr;
  };
  doc["row_extents"] = extents(grid.row_extents);
  doc["col_extents"] = extents(grid.col_extents);
  json cells = json::array();
  for (const GridCell& cell : grid.cells)
    cells.push_back({{"row", cell.row},
                     {"col", cell.col},
                     {"rowspan", cell.rowspan},
                     {"colspan", cell.colspan},
                     {"bbox",
                      {cell.bbox.x_min, cell.bbox.y_min, cell.bbox.x_max,
                       cell.bbox.y_max}}});
  doc["cells"] = std::move(cells);
  return doc.dump(2) + "\n";
}

TableGrid table_grid_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("table grid: ") + e.what());
  }
  try {
    TableGrid grid;
    grid.n_rows = doc.at("n_rows").get<std::size_t>();
    grid.n_cols = doc.at("n_cols").get<std::size_t>();
    for (const auto& e : doc.at("row_extents"))
      grid.row_extents.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    for (const auto& e : doc.at("col_extents"))
      grid.col_extents.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    for (const auto& c : doc.at("cells")) {
      const auto& b = c.at("bbox");
      grid.cells.push_back(
          {c.at("row").get<std::size_t>(), c.at("col").get<std::size_t>(),
           c.at("rowspan").get<std::size_t>(), c.at("colspan").get<std::size_t>(),
           BBox(b.at(0).get<double>(), b.at(1).get<double>(),
                b.at(2).get<double>(), b.at(3).get<double>())});
    }
    return grid;
  } catch (const json::exception& e) {
    throw ParseError(std::string("table grid: ") + e.what());
  }
}

namespace {

double canonical_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

SynthResult synth_table(const SynthConfig& cfg) {
  if (cfg.n_rows == 0 || cfg.n_cols == 0)
    throw std::invalid_argument("synth_table: empty lattice");
  if (cfg.jitter < 0.0)
    throw std::invalid_argument("synth_table: negative jitter");
  for (const SpanBlock& s : cfg.spans) {
    if (s.row0 > s.row1 || s.col0 > s.col1 || s.row1 >= cfg.n_rows ||
        s.col1 >= cfg.n_cols)
      throw std::invalid_argument("synth_table: span block outside lattice");
  }
  for (std::size_t a = 0; a < cfg.spans.size(); ++a)
    for (std::size_t b = a + 1; b < cfg.spans.size(); ++b) {
      const SpanBlock &s = cfg.spans[a], &t = cfg.spans[b];
      const bool disjoint = s.row1 < t.row0 || t.row1 < s.row0 ||
                            s.col1 < t.col0 || t.col1 < s.col0;
      if (!disjoint)
        throw std::invalid_argument("synth_table: overlapping span blocks");
    }

  // Shared edge arrays keep the ground-truth grid and the emitted
  // detections bit-identical at jitter 0.
  std::vector<double> row_edges(cfg.n_rows + 1), col_edges(cfg.n_cols + 1);
  for (std::size_t r = 0; r <= cfg.n_rows; ++r)
    row_edges[r] = cfg.frame.y_min + cfg.frame.height() *
                                         static_cast<double>(r) /
                                         static_cast<double>(cfg.n_rows);
  for (std::size_t c = 0; c <= cfg.n_cols; ++c)
    col_edges[c] = cfg.frame.x_min + cfg.frame.width() *
                                         static_cast<double>(c) /
                                         static_cast<double>(cfg.n_cols);

  std::mt19937_64 rng(cfg.seed);
  auto jittered = [&](const BBox& b) {
    if (cfg.jitter == 0.0)
      return b;
    auto shift = [&] {
      return (2.0 * canonical_uniform(rng) - 1.0) * cfg.jitter;
    };
    const double x0 = b.x_min + shift();
    const double y0 = b.y_min + shift();
    const double x1 = b.x_max + shift();
    const double y1 = b.y_max + shift();
    return BBox(std::min(x0, x1), std::min(y0, y1), std::max(x0, x1),
                std::max(y0, y1));
  };

  SynthResult result;
  auto emit = [&](Category cat, const BBox& box) {
    result.detections.push_back({cfg.image_id, cat, jittered(box), 1.0});
  };

  emit(Category::Table, cfg.frame);
  for (std::size_t r = 0; r < cfg.n_rows; ++r)
    emit(Category::TableRow,
         BBox(cfg.frame.x_min, row_edges[r], cfg.frame.x_max, row_edges[r + 1]));
  for (std::size_t c = 0; c < cfg.n_cols; ++c)
    emit(Category::TableColumn,
         BBox(col_edges[c], cfg.frame.y_min, col_edges[c + 1], cfg.frame.y_max));
  for (const SpanBlock& s : cfg.spans)
    emit(Category::TableSpanningCell,
         BBox(col_edges[s.col0], row_edges[s.row0], col_edges[s.col1 + 1],
              row_edges[s.row1 + 1]));

  TableGrid& grid = result.grid;
  grid.n_rows = cfg.n_rows;
  grid.n_cols = cfg.n_cols;
  for (std::size_t r = 0; r < cfg.n_rows; ++r)
    grid.row_extents.push_back({row_edges[r], row_edges[r + 1]});
  for (std::size_t c = 0; c < cfg.n_cols; ++c)
    grid.col_extents.push_back({col_edges[c], col_edges[c + 1]});

  std::vector<int> block_of(cfg.n_rows * cfg.n_cols, -1);
  for (std::size_t i = 0; i < cfg.spans.size(); ++i)
    for (std::size_t r = cfg.spans[i].row0; r <= cfg.spans[i].row1; ++r)
      for (std::size_t c = cfg.spans[i].col0; c <= cfg.spans[i].col1; ++c)
        block_of[r * cfg.n_cols + c] = static_cast<int>(i);
  for (std::size_t r = 0; r < cfg.n_rows; ++r) {
    for (std::size_t c = 0; c < cfg.n_cols; ++c) {
      const int b = block_of[r * cfg.n_cols + c];
      if (b < 0) {
        grid.cells.push_back({r, c, 1, 1,
                              BBox(col_edges[c], row_edges[r], col_edges[c + 1],
                                   row_edges[r + 1])});
        continue;
      }
      const SpanBlock& s = cfg.spans[static_cast<std::size_t>(b)];
      if (r != s.row0 || c != s.col0)
        continue;
      grid.cells.push_back({r, c, s.row1 - s.row0 + 1, s.col1 - s.col0 + 1,
                            BBox(col_edges[s.col0], row_edges[s.row0],
                                 col_edges[s.col1 + 1], row_edges[s.row1 + 1])});
    }
  }
  return result;
}

}  // namespace tsr
