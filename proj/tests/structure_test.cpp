#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tsr/structure.hpp"

using namespace tsr;

namespace {

DetectionRecord det(Category cat, const BBox& box, double score) {
  return {"img", cat, box, score};
}

// every lattice position covered by exactly one cell
bool exact_cover(const TableGrid& grid) {
  std::vector<int> covered(grid.n_rows * grid.n_cols, 0);
  for (const GridCell& cell : grid.cells)
    for (std::size_t r = cell.row; r < cell.row + cell.rowspan; ++r)
      for (std::size_t c = cell.col; c < cell.col + cell.colspan; ++c) {
        if (r >= grid.n_rows || c >= grid.n_cols)
          return false;
        ++covered[r * grid.n_cols + c];
      }
  for (int n : covered)
    if (n != 1)
      return false;
  return true;
}

bool same_logical_structure(const TableGrid& a, const TableGrid& b) {
  if (a.n_rows != b.n_rows || a.n_cols != b.n_cols ||
      a.cells.size() != b.cells.size())
    return false;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const GridCell &x = a.cells[i], &y = b.cells[i];
    if (x.row != y.row || x.col != y.col || x.rowspan != y.rowspan ||
        x.colspan != y.colspan)
      return false;
  }
  return true;
}

SynthConfig random_table(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  std::uniform_int_distribution<int> n_spans(0, 3);
  SynthConfig cfg;
  cfg.n_rows = dim(rng);
  cfg.n_cols = dim(rng);
  // cell extents of 60 x 50 px leave margin over the 10 px minimum
  cfg.frame = BBox(0, 0, 60.0 * static_cast<double>(cfg.n_cols),
                   50.0 * static_cast<double>(cfg.n_rows));
  const int spans = n_spans(rng);
  for (int s = 0; s < spans; ++s) {
    std::uniform_int_distribution<std::size_t> row(0, cfg.n_rows - 1);
    std::uniform_int_distribution<std::size_t> col(0, cfg.n_cols - 1);
    std::uniform_int_distribution<std::size_t> span_len(0, 2);
    SpanBlock block;
    block.row0 = row(rng);
    block.row1 = std::min(cfg.n_rows - 1, block.row0 + span_len(rng));
    block.col0 = col(rng);
    block.col1 = std::min(cfg.n_cols - 1, block.col0 + span_len(rng));
    bool disjoint = true;
    for (const SpanBlock& other : cfg.spans)
      if (!(block.row1 < other.row0 || other.row1 < block.row0 ||
            block.col1 < other.col0 || other.col1 < block.col0))
        disjoint = false;
    if (disjoint)
      cfg.spans.push_back(block);
  }
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing fixture: " << path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("nms keeps the best of overlapping same-category boxes") {
  const BBox box(0, 0, 10, 10);
  const auto kept =
      nms({det(Category::TableRow, box, 0.9), det(Category::TableRow, box, 0.8)},
          0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  // disjoint boxes all survive
  const auto disjoint = nms({det(Category::TableRow, BBox(0, 0, 5, 5), 0.9),
                             det(Category::TableRow, BBox(20, 20, 30, 30), 0.1)},
                            0.5);
  CHECK(disjoint.size() == 2);

  // different categories never suppress each other
  const auto cross =
      nms({det(Category::TableRow, box, 0.9), det(Category::TableColumn, box, 0.8)},
          0.5);
  CHECK(cross.size() == 2);
}

TEST_CASE("nms greedy walk: A suppresses B, C survives") {
  const BBox a(0, 0, 10, 10), b(0, 2, 10, 12), c(0, 4, 10, 14);
  REQUIRE(iou(a, b) >= 0.5);
  REQUIRE(iou(a, c) < 0.5);
  REQUIRE(iou(b, c) >= 0.5);
  const auto kept = nms({det(Category::TableRow, a, 0.9),
                         det(Category::TableRow, b, 0.8),
                         det(Category::TableRow, c, 0.7)},
                        0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].bbox == a);
  CHECK(kept[1].bbox == c);
}

TEST_CASE("infer_grid builds the extent cross product") {
  std::vector<DetectionRecord> records = {
      det(Category::Table, BBox(0, 0, 90, 40), 1.0),
      det(Category::TableRow, BBox(0, 0, 90, 20), 0.9),
      det(Category::TableRow, BBox(0, 20, 90, 40), 0.9),
      det(Category::TableColumn, BBox(0, 0, 30, 40), 0.9),
      det(Category::TableColumn, BBox(30, 0, 60, 40), 0.9),
      det(Category::TableColumn, BBox(60, 0, 90, 40), 0.9),
  };
  const TableGrid grid = infer_grid(records);
  CHECK(grid.n_rows == 2);
  CHECK(grid.n_cols == 3);
  REQUIRE(grid.cells.size() == 6);
  CHECK(grid.cells[0].bbox == BBox(0, 0, 30, 20));
  CHECK(grid.cells[5].bbox == BBox(60, 20, 90, 40));
  CHECK(exact_cover(grid));

  // single row and column: one cell covering their intersection frame
  const TableGrid one = infer_grid({
      det(Category::Table, BBox(0, 0, 50, 30), 1.0),
      det(Category::TableRow, BBox(0, 0, 50, 30), 0.9),
      det(Category::TableColumn, BBox(0, 0, 50, 30), 0.9),
  });
  CHECK(one.n_rows == 1);
  CHECK(one.n_cols == 1);
  CHECK(one.cells[0].bbox == BBox(0, 0, 50, 30));
}

TEST_CASE("columns are indexed by x-center regardless of input order") {
  const TableGrid grid = infer_grid({
      det(Category::Table, BBox(0, 0, 350, 20), 1.0),
      det(Category::TableRow, BBox(0, 0, 350, 20), 0.9),
      det(Category::TableColumn, BBox(250, 0, 350, 20), 0.9),  // center 300
      det(Category::TableColumn, BBox(50, 0, 150, 20), 0.9),   // center 100
      det(Category::TableColumn, BBox(150, 0, 250, 20), 0.9),  // center 200
  });
  REQUIRE(grid.n_cols == 3);
  CHECK(grid.col_extents[0].lo == 50);
  CHECK(grid.col_extents[1].lo == 150);
  CHECK(grid.col_extents[2].lo == 250);
}

TEST_CASE("infer_grid failure modes") {
  // nothing survives the score threshold
  CHECK_THROWS_AS(
      infer_grid({det(Category::Table, BBox(0, 0, 9, 9), 0.2)}),
      NoStructureError);

  // no table detection while one is required
  std::vector<DetectionRecord> no_table = {
      det(Category::TableRow, BBox(0, 0, 90, 20), 0.9),
      det(Category::TableColumn, BBox(0, 0, 30, 20), 0.9),
  };
  CHECK_THROWS_AS(infer_grid(no_table), NoStructureError);

  StructureConfig relaxed;
  relaxed.require_table_box = false;
  CHECK_NOTHROW(infer_grid(no_table, relaxed));

  // rows but no columns
  CHECK_THROWS_WITH_AS(
      infer_grid({det(Category::Table, BBox(0, 0, 90, 40), 1.0),
                  det(Category::TableRow, BBox(0, 0, 90, 20), 0.9)}),
      doctest::Contains("no structure"), NoStructureError);

  StructureConfig bad;
  bad.span_overlap_tau = 0.0;
  CHECK_THROWS_AS(infer_grid(no_table, bad), std::invalid_argument);
}

TEST_CASE("apply_spanning merges, rectangularizes and resolves conflicts") {
  // 2x2 grid of 10x10 cells
  std::vector<DetectionRecord> base = {
      det(Category::Table, BBox(0, 0, 20, 20), 1.0),
      det(Category::TableRow, BBox(0, 0, 20, 10), 0.9),
      det(Category::TableRow, BBox(0, 10, 20, 20), 0.9),
      det(Category::TableColumn, BBox(0, 0, 10, 20), 0.9),
      det(Category::TableColumn, BBox(10, 0, 20, 20), 0.9),
  };
  const TableGrid grid = infer_grid(base);

  SUBCASE("exact two-cell span") {
    const auto out = apply_spanning(
        grid, {det(Category::TableSpanningCell, BBox(0, 0, 20, 10), 0.9)});
    CHECK(out.dropped_spans == 0);
    REQUIRE(out.grid.cells.size() == 3);
    CHECK(out.grid.cells[0].rowspan == 1);
    CHECK(out.grid.cells[0].colspan == 2);
    CHECK(out.grid.cells[0].bbox == BBox(0, 0, 20, 10));
    CHECK(exact_cover(out.grid));
  }

  SUBCASE("L-shaped coverage snaps to the enclosing block") {
    // covers (0,0), (0,1), (1,0) at >= 0.5 but (1,1) at only 0.3
    const auto out = apply_spanning(
        grid, {det(Category::TableSpanningCell, BBox(0, 0, 16, 15), 0.9)});
    CHECK(out.dropped_spans == 0);
    REQUIRE(out.grid.cells.size() == 1);
    CHECK(out.grid.cells[0].rowspan == 2);
    CHECK(out.grid.cells[0].colspan == 2);
    CHECK(exact_cover(out.grid));
  }

  SUBCASE("conflicting span loses to the higher score") {
    const auto out = apply_spanning(
        grid, {det(Category::TableSpanningCell, BBox(0, 0, 20, 10), 0.9),
               det(Category::TableSpanningCell, BBox(0, 0, 10, 20), 0.7)});
    CHECK(out.dropped_spans == 1);
    REQUIRE(out.grid.cells.size() == 3);
    CHECK(out.grid.cells[0].colspan == 2);  // the 0.9 span won
    CHECK(exact_cover(out.grid));
  }

  SUBCASE("span covering nothing is dropped with a count") {
    const auto out = apply_spanning(
        grid, {det(Category::TableSpanningCell, BBox(100, 100, 120, 120), 0.9)});
    CHECK(out.dropped_spans == 1);
    CHECK(out.grid == grid);
  }
}

TEST_CASE("synth_table emits the documented records") {
  SynthConfig cfg;
  cfg.n_rows = 3;
  cfg.n_cols = 3;
  cfg.frame = BBox(0, 0, 300, 150);
  const SynthResult plain = synth_table(cfg);
  CHECK(plain.detections.size() == 7);  // table + 3 rows + 3 columns
  CHECK(plain.grid.cells.size() == 9);
  CHECK(exact_cover(plain.grid));

  cfg.spans.push_back({0, 1, 0, 0});
  const SynthResult spanned = synth_table(cfg);
  CHECK(spanned.detections.size() == 8);
  CHECK(spanned.grid.cells.size() == 8);  // 9 - 2 + 1
  CHECK(exact_cover(spanned.grid));

  cfg.spans.push_back({1, 1, 0, 1});  // overlaps the first block
  CHECK_THROWS_AS(synth_table(cfg), std::invalid_argument);

  cfg.spans = {{0, 3, 0, 0}};  // outside the lattice
  CHECK_THROWS_AS(synth_table(cfg), std::invalid_argument);
}

TEST_CASE("round trip: inference reproduces synthetic tables") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    SynthConfig cfg = random_table(rng);
    cfg.seed = rng();

    const SynthResult clean = synth_table(cfg);
    const auto inferred = infer_structure(clean.detections);
    CHECK(inferred.dropped_spans == 0);
    CHECK(inferred.grid == clean.grid);  // extents and cells, bit-exact
    CHECK(exact_cover(inferred.grid));

    cfg.jitter = 2.0;
    const SynthResult noisy = synth_table(cfg);
    const auto recovered = infer_structure(noisy.detections);
    CHECK(recovered.dropped_spans == 0);
    CHECK(same_logical_structure(recovered.grid, clean.grid));
    CHECK(exact_cover(recovered.grid));
  }
}

TEST_CASE("html export matches hand-written markup") {
  SynthConfig cfg;
  cfg.n_rows = 2;
  cfg.n_cols = 2;
  cfg.frame = BBox(0, 0, 20, 20);
  cfg.spans = {{0, 0, 0, 1}};  // top row merged
  const SynthResult synth = synth_table(cfg);

  CHECK(export_html(synth.grid) ==
        "<table>\n"
        "<tr><td colspan=\"2\">(0,0,20,10)</td></tr>\n"
        "<tr><td>(0,10,10,20)</td><td>(10,10,20,20)</td></tr>\n"
        "</table>\n");
}

TEST_CASE("html export re-parses to the same occupancy lattice") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    const SynthResult synth = synth_table(random_table(rng));
    const auto html = export_html(synth.grid);
    CHECK(oracle::html_occupancy(html) == oracle::grid_occupancy(synth.grid));
  }
}

TEST_CASE("csv export shape and quoting") {
  SynthConfig cfg;
  cfg.n_rows = 2;
  cfg.n_cols = 3;
  cfg.frame = BBox(0, 0, 30, 20);
  const std::string csv = export_csv(synth_table(cfg).grid);

  std::istringstream lines(csv);
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    // bbox text contains commas, so each field must be quoted: counting
    // quote pairs gives the field count
    int quotes = 0;
    for (char c : line)
      if (c == '"')
        ++quotes;
    CHECK(quotes == 6);
    ++n_lines;
  }
  CHECK(n_lines == 2);

  // merged cells repeat their value across the block
  SynthConfig merged = cfg;
  merged.n_cols = 2;
  merged.frame = BBox(0, 0, 20, 20);
  merged.spans = {{0, 1, 0, 0}};
  const std::string csv2 = export_csv(synth_table(merged).grid);
  CHECK(csv2 ==
        "\"(0,0,10,20)\",\"(10,0,20,10)\"\r\n"
        "\"(0,0,10,20)\",\"(10,10,20,20)\"\r\n");
}

TEST_CASE("json export round-trips the grid") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 30; ++trial) {
    const SynthResult synth = synth_table(random_table(rng));
    const std::string text = export_json(synth.grid);
    CHECK(table_grid_from_json(text) == synth.grid);
    // byte-determinism
    CHECK(export_json(synth.grid) == text);
  }
  CHECK_THROWS_AS(table_grid_from_json("{"), ParseError);
  CHECK_THROWS_AS(table_grid_from_json("{\"n_rows\": 1}"), ParseError);
}

TEST_CASE("golden exports stay byte-identical") {
  const std::string dir = TSR_GOLDEN_DIR;

  SynthConfig plain;
  plain.n_rows = 2;
  plain.n_cols = 2;
  plain.frame = BBox(0, 0, 100, 60);
  CHECK(export_html(synth_table(plain).grid) ==
        read_file(dir + "/grid_2x2.html"));

  SynthConfig merged = plain;
  merged.spans = {{0, 0, 0, 1}};
  CHECK(export_html(synth_table(merged).grid) ==
        read_file(dir + "/grid_2x2_colspan.html"));

  SynthConfig fractional;
  fractional.n_rows = 3;
  fractional.n_cols = 3;
  fractional.frame = BBox(10.5, 20.25, 190.5, 140.25);
  fractional.spans = {{0, 1, 0, 0}, {2, 2, 1, 2}};
  CHECK(export_html(synth_table(fractional).grid) ==
        read_file(dir + "/grid_3x3_spans.html"));
}
