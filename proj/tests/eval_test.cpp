#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsr/eval.hpp"

using namespace tsr;

namespace {

AnnotatedImage one_box_image(const std::string& id, Category cat,
                             const BBox& box) {
  AnnotatedImage img;
  img.image_id = id;
  img.width = 600;
  img.height = 600;
  img.objects.push_back({cat, box});
  return img;
}

bool fields_close(const APFields& a, const APFields& b, double tol) {
  auto close = [tol](double x, double y) {
    if (std::isnan(x) || std::isnan(y))
      return std::isnan(x) && std::isnan(y);
    return std::abs(x - y) <= tol;
  };
  return close(a.ap, b.ap) && close(a.ap50, b.ap50) && close(a.ap75, b.ap75) &&
         close(a.ap_small, b.ap_small) && close(a.ap_medium, b.ap_medium) &&
         close(a.ap_large, b.ap_large);
}

// A scene whose ground truth covers all three size buckets per category.
oracle::Scene perfect_scene() {
  oracle::Scene scene;
  AnnotatedImage img;
  img.image_id = "p";
  img.width = 600;
  img.height = 600;
  double y = 0;
  for (Category cat : kAllCategories) {
    img.objects.push_back({cat, BBox(0, y, 10, y + 10)});      // small
    img.objects.push_back({cat, BBox(20, y, 60, y + 40)});     // medium
    img.objects.push_back({cat, BBox(100, y, 200, y + 100)});  // large
    y += 110;
  }
  scene.gt.push_back(img);
  for (const auto& obj : img.objects)
    scene.preds.push_back({img.image_id, obj.category, obj.bbox, 1.0});
  return scene;
}

}  // namespace

TEST_CASE("greedy matching basics") {
  const auto gt = one_box_image("a", Category::Table, BBox(0, 0, 10, 10));

  SUBCASE("exact hit is a true positive") {
    const std::vector<DetectionRecord> preds = {
        {"a", Category::Table, BBox(0, 0, 10, 10), 0.9}};
    const MatchSet m = match_detections(gt, preds, 0.5);
    REQUIRE(m.per_category[0].size() == 1);
    CHECK(m.per_category[0][0].gt_index == 0);
    CHECK(m.per_category[0][0].iou == 1.0);
    CHECK(m.gt_counts[0] == 1);
  }

  SUBCASE("second overlapping prediction becomes a false positive") {
    const std::vector<DetectionRecord> preds = {
        {"a", Category::Table, BBox(0, 0, 10, 9), 0.8},
        {"a", Category::Table, BBox(0, 0, 10, 10), 0.9}};
    const MatchSet m = match_detections(gt, preds, 0.5);
    REQUIRE(m.per_category[0].size() == 2);
    // entries follow score order: the 0.9 one matched first
    CHECK(m.per_category[0][0].pred_index == 1);
    CHECK(m.per_category[0][0].gt_index == 0);
    CHECK(m.per_category[0][1].pred_index == 0);
    CHECK_FALSE(m.per_category[0][1].gt_index.has_value());
  }

  SUBCASE("categories never cross-match") {
    const std::vector<DetectionRecord> preds = {
        {"a", Category::TableRow, BBox(0, 0, 10, 10), 0.9}};
    const MatchSet m = match_detections(gt, preds, 0.5);
    CHECK(m.per_category[static_cast<int>(Category::TableRow)].size() == 1);
    CHECK_FALSE(m.per_category[static_cast<int>(Category::TableRow)][0]
                    .gt_index.has_value());
  }

  SUBCASE("wrong image id throws") {
    const std::vector<DetectionRecord> preds = {
        {"b", Category::Table, BBox(0, 0, 10, 10), 0.9}};
    CHECK_THROWS_AS(match_detections(gt, preds, 0.5), std::invalid_argument);
  }
}

TEST_CASE("bucket filter ignores out-of-bucket boxes") {
  AnnotatedImage gt;
  gt.image_id = "a";
  gt.width = 600;
  gt.height = 600;
  gt.objects.push_back({Category::Table, BBox(0, 0, 10, 10)});      // small
  gt.objects.push_back({Category::Table, BBox(100, 100, 300, 300)});  // large

  const std::vector<DetectionRecord> preds = {
      {"a", Category::Table, BBox(0, 0, 10, 10), 0.9},
      {"a", Category::Table, BBox(100, 100, 300, 300), 0.8},
      {"a", Category::Table, BBox(400, 400, 580, 580), 0.7},  // large FP
  };
  const MatchSet m =
      match_detections(gt, preds, 0.5, SizeBucket::Small);
  CHECK(m.gt_counts[0] == 1);  // only the small box counts
  REQUIRE(m.per_category[0].size() == 3);
  CHECK(m.per_category[0][0].gt_index == 0);      // small TP
  CHECK_FALSE(m.per_category[0][0].ignored);
  CHECK(m.per_category[0][1].gt_index == 1);      // matched large -> ignored
  CHECK(m.per_category[0][1].ignored);
  CHECK_FALSE(m.per_category[0][2].gt_index.has_value());
  CHECK(m.per_category[0][2].ignored);            // large unmatched -> excluded
}

TEST_CASE("pr curve on hand-walked scenes") {
  auto entry = [](double score, std::uint64_t order, bool tp,
                  bool ignored = false) {
    MatchEntry e;
    e.score = score;
    e.order = order;
    if (tp)
      e.gt_index = 0;
    e.ignored = ignored;
    return e;
  };

  SUBCASE("all true positives give AP 100") {
    const auto curve = pr_curve({entry(0.9, 0, true), entry(0.8, 1, true)}, 2);
    REQUIRE(curve.has_value());
    for (double p : curve->precision)
      CHECK(p == 1.0);
    CHECK(curve->average_precision() == 100.0);
  }

  SUBCASE("trailing false positive does not dent the envelope") {
    const auto curve = pr_curve({entry(0.9, 0, true), entry(0.8, 1, false)}, 1);
    REQUIRE(curve.has_value());
    CHECK(curve->average_precision() == 100.0);
  }

  SUBCASE("leading false positive halves precision") {
    // 2 GT, FP at 0.9, TP at 0.8: precision 0.5 up to recall 0.5, 0 after
    const auto curve = pr_curve({entry(0.9, 0, false), entry(0.8, 1, true)}, 2);
    REQUIRE(curve.has_value());
    CHECK(curve->precision[0] == 0.5);
    CHECK(curve->precision[50] == 0.5);
    CHECK(curve->precision[51] == 0.0);
    CHECK(curve->average_precision() ==
          doctest::Approx(100.0 * 51 * 0.5 / 101.0));
  }

  SUBCASE("no ground truth: curve undefined") {
    CHECK_FALSE(pr_curve({entry(0.9, 0, false)}, 0).has_value());
  }
}

TEST_CASE("perfect predictions score 100 everywhere") {
  const auto scene = perfect_scene();
  const APReport report = evaluate(scene.gt, scene.preds);
  CHECK(report.overall.ap == 100.0);
  CHECK(report.overall.ap50 == 100.0);
  CHECK(report.overall.ap75 == 100.0);
  CHECK(report.overall.ap_small == 100.0);
  CHECK(report.overall.ap_medium == 100.0);
  CHECK(report.overall.ap_large == 100.0);
  REQUIRE(report.per_category.size() == 4);
  for (const auto& [cat, f] : report.per_category)
    CHECK(f.ap == 100.0);
}

TEST_CASE("empty predictions score 0") {
  const auto scene = perfect_scene();
  const APReport report = evaluate(scene.gt, {});
  CHECK(report.overall.ap == 0.0);
  CHECK(report.overall.ap50 == 0.0);
  CHECK(report.overall.ap_small == 0.0);
}

TEST_CASE("unknown image ids are rejected with a listing") {
  const auto scene = perfect_scene();
  std::vector<DetectionRecord> preds = scene.preds;
  preds.push_back({"ghost-1", Category::Table, BBox(0, 0, 1, 1), 0.5});
  preds.push_back({"ghost-2", Category::Table, BBox(0, 0, 1, 1), 0.5});
  CHECK_THROWS_WITH_AS(evaluate(scene.gt, preds),
                       doctest::Contains("ghost-1"), std::invalid_argument);
  try {
    evaluate(scene.gt, preds);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("ghost-2") != std::string::npos);
  }
}

TEST_CASE("evaluator equals the exhaustive oracle on random scenes") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 60; ++trial) {
    const auto scene = oracle::random_scene(rng);
    const APReport fast = evaluate(scene.gt, scene.preds);
    const APReport slow = oracle::full_report(scene.gt, scene.preds);
    REQUIRE(fast.per_category.size() == slow.per_category.size());
    CHECK(fields_close(fast.overall, slow.overall, 1e-9));
    for (const auto& [cat, f] : slow.per_category) {
      REQUIRE(fast.per_category.count(cat) == 1);
      CHECK(fields_close(fast.per_category.at(cat), f, 1e-9));
    }
  }
}

TEST_CASE("AP invariances and monotonicity") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 25; ++trial) {
    const auto scene = oracle::random_scene(rng);

    // monotone score transform changes nothing
    std::vector<DetectionRecord> transformed = scene.preds;
    for (auto& p : transformed)
      p.score = 1.0 / (1.0 + std::exp(-3.0 * (p.score - 0.5)));  // sigmoid
    const APReport base = evaluate(scene.gt, scene.preds);
    const APReport warped = evaluate(scene.gt, transformed);
    CHECK(fields_close(base.overall, warped.overall, 1e-12));

    // AP non-increasing in the IoU threshold
    for (Category cat : kAllCategories) {
      double prev = std::numeric_limits<double>::infinity();
      for (double t : {0.5, 0.65, 0.8, 0.95}) {
        const double ap = oracle::category_ap(scene.gt, scene.preds, cat, t, {});
        if (std::isnan(ap))
          continue;
        CHECK(ap <= prev + 1e-12);
        prev = ap;
      }
    }

    // a false positive below every existing score never raises AP
    std::vector<DetectionRecord> extra = scene.preds;
    extra.push_back({scene.gt[0].image_id, Category::Table,
                     BBox(580, 580, 599, 599), 1e-6});
    const APReport degraded = evaluate(scene.gt, extra);
    auto worse_or_equal = [](double a, double b) {
      return std::isnan(a) || std::isnan(b) || a <= b + 1e-12;
    };
    CHECK(worse_or_equal(degraded.overall.ap, base.overall.ap));
    CHECK(worse_or_equal(degraded.overall.ap50, base.overall.ap50));

    // ap50 bounds the threshold-averaged value
    for (const auto& [cat, f] : base.per_category)
      CHECK(f.ap50 >= f.ap - 1e-12);
  }
}

TEST_CASE("image order and thread count do not change the report") {
  std::mt19937_64 rng(67);
  const auto scene = oracle::random_scene(rng);

  std::vector<AnnotatedImage> reversed(scene.gt.rbegin(), scene.gt.rend());
  const APReport fwd = evaluate(scene.gt, scene.preds);
  const APReport rev = evaluate(reversed, scene.preds);
  CHECK(fields_close(fwd.overall, rev.overall, 0.0));

  EvalConfig parallel;
  parallel.jobs = 4;
  const APReport threaded = evaluate(scene.gt, scene.preds, parallel);
  CHECK(fields_close(fwd.overall, threaded.overall, 0.0));
}

TEST_CASE("max detections cap") {
  const auto gt = one_box_image("a", Category::Table, BBox(0, 0, 100, 100));
  // best prediction has the LOWEST score; capping to 1 keeps only the
  // high-score miss
  const std::vector<DetectionRecord> preds = {
      {"a", Category::Table, BBox(0, 0, 100, 100), 0.2},
      {"a", Category::Table, BBox(300, 300, 400, 400), 0.9},
  };
  // the 0.9 miss precedes the hit, so precision tops out at 0.5
  const APReport uncapped = evaluate({gt}, preds);
  CHECK(uncapped.overall.ap50 == 50.0);

  EvalConfig capped;
  capped.max_detections = 1;
  const APReport limited = evaluate({gt}, preds, capped);
  CHECK(limited.overall.ap50 == 0.0);
}

TEST_CASE("report serialization") {
  const auto scene = perfect_scene();
  const APReport report = evaluate(scene.gt, scene.preds);

  const std::string text = report_to_text(report);
  CHECK(text.find("AP      AP50    AP75    AP_S    AP_M    AP_L") == 0);
  CHECK(text.find("T       TC      TR      TSC") != std::string::npos);
  CHECK(text.find("100.00") != std::string::npos);

  const std::string json_text = report_to_json(report);
  CHECK(json_text.find("\"ap\": 100.0") != std::string::npos);
  CHECK(json_text.find("\"table spanning cell\"") != std::string::npos);
}
