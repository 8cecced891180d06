#include "tsr/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace tsr {

using nlohmann::json;

std::vector<double> EvalConfig::default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k)
    t.push_back(0.5 + 0.05 * k);
  return t;
}

MatchSet match_detections(const AnnotatedImage& gt,
                          const std::vector<DetectionRecord>& preds,
                          double iou_threshold,
                          std::optional<SizeBucket> bucket_filter) {
  for (const DetectionRecord& p : preds)
    if (p.image_id != gt.image_id)
      throw std::invalid_argument("match_detections: prediction for image \"" +
                                  p.image_id + "\" evaluated against \"" +
                                  gt.image_id + "\"");

  MatchSet out;
  for (std::size_t ci = 0; ci < kCategoryCount; ++ci) {
    const Category cat = static_cast<Category>(ci);

    std::vector<std::size_t> gt_idx;
    for (std::size_t g = 0; g < gt.objects.size(); ++g)
      if (gt.objects[g].category == cat)
        gt_idx.push_back(g);
    std::vector<bool> gt_ignored(gt_idx.size(), false);
    for (std::size_t g = 0; g < gt_idx.size(); ++g)
      gt_ignored[g] = bucket_filter &&
                      size_bucket(gt.objects[gt_idx[g]].bbox) != *bucket_filter;
    out.gt_counts[ci] = static_cast<std::size_t>(
        std::count(gt_ignored.begin(), gt_ignored.end(), false));

    std::vector<std::size_t> pred_idx;
    for (std::size_t p = 0; p < preds.size(); ++p)
      if (preds[p].category == cat)
        pred_idx.push_back(p);
    std::sort(pred_idx.begin(), pred_idx.end(),
              [&preds](std::size_t a, std::size_t b) {
                if (preds[a].score != preds[b].score)
                  return preds[a].score > preds[b].score;
                return a < b;
              });

    std::vector<bool> gt_matched(gt_idx.size(), false);
    for (std::size_t p : pred_idx) {
      // Best unmatched ground truth by IoU, non-ignored boxes first: an
      // ignored box may absorb a prediction only when no countable box
      // reaches the threshold. Among equal IoUs the earliest box wins.
      std::size_t best = gt_idx.size();
      double best_iou = 0.0;
      for (int phase = 0; phase < 2 && best == gt_idx.size(); ++phase) {
        const bool want_ignored = phase == 1;
        for (std::size_t g = 0; g < gt_idx.size(); ++g) {
          if (gt_matched[g] || gt_ignored[g] != want_ignored)
            continue;
          const double v = iou(preds[p].bbox, gt.objects[gt_idx[g]].bbox);
          if (v < iou_threshold || (best != gt_idx.size() && v <= best_iou))
            continue;
          best = g;
          best_iou = v;
        }
      }

      MatchEntry entry;
      entry.pred_index = p;
      entry.score = preds[p].score;
      entry.order = p;
      if (best != gt_idx.size()) {
        gt_matched[best] = true;
        entry.gt_index = gt_idx[best];
        entry.iou = best_iou;
        entry.ignored = gt_ignored[best];
      } else {
        entry.ignored = bucket_filter &&
                        size_bucket(preds[p].bbox) != *bucket_filter;
      }
      out.per_category[ci].push_back(entry);
    }
  }
  return out;
}

double PRCurve::average_precision() const {
  double total = 0.0;
  for (double p : precision)
    total += p;
  return 100.0 * total / static_cast<double>(kRecallPoints);
}

std::optional<PRCurve> pr_curve(std::vector<MatchEntry> matches,
                                std::size_t gt_count) {
  if (gt_count == 0)
    return std::nullopt;

  std::sort(matches.begin(), matches.end(),
            [](const MatchEntry& a, const MatchEntry& b) {
              if (a.score != b.score)
                return a.score > b.score;
              return a.order < b.order;
            });

  std::vector<double> recalls;
  std::vector<double> precisions;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const MatchEntry& m : matches) {
    if (m.ignored)
      continue;
    if (m.gt_index)
      ++tp;
    else
      ++fp;
    recalls.push_back(static_cast<double>(tp) /
                      static_cast<double>(gt_count));
    precisions.push_back(static_cast<double>(tp) /
                         static_cast<double>(tp + fp));
  }

  // Precision envelope: running maximum from the right makes the curve
  // non-increasing in recall.
  for (std::size_t k = precisions.size(); k-- > 1;)
    precisions[k - 1] = std::max(precisions[k - 1], precisions[k]);

  PRCurve curve;
  for (std::size_t j = 0; j < PRCurve::kRecallPoints; ++j) {
    const double r = static_cast<double>(j) / 100.0;
    const auto it = std::lower_bound(recalls.begin(), recalls.end(), r);
    curve.precision[j] =
        it == recalls.end()
            ? 0.0
            : precisions[static_cast<std::size_t>(it - recalls.begin())];
  }
  return curve;
}

namespace {

constexpr std::size_t kBucketSettings = 4;  // overall, small, medium, large

std::optional<SizeBucket> bucket_for_setting(std::size_t b) {
  switch (b) {
    case 1: return SizeBucket::Small;
    case 2: return SizeBucket::Medium;
    case 3: return SizeBucket::Large;
    default: return std::nullopt;
  }
}

double mean_defined(const std::vector<double>& values) {
  double total = 0.0;
  std::size_t n = 0;
  for (double v : values)
    if (!std::isnan(v)) {
      total += v;
      ++n;
    }
  return n > 0 ? total / static_cast<double>(n)
               : std::numeric_limits<double>::quiet_NaN();
}

std::optional<std::size_t> threshold_index(const std::vector<double>& ts,
                                           double wanted) {
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (std::abs(ts[i] - wanted) < 1e-9)
      return i;
  return std::nullopt;
}

}  // namespace

APReport evaluate(const std::vector<AnnotatedImage>& gt,
                  const std::vector<DetectionRecord>& preds,
                  const EvalConfig& cfg) {
  if (cfg.iou_thresholds.empty())
    throw std::invalid_argument("evaluate: no IoU thresholds");

  std::map<std::string, std::size_t> image_index;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!image_index.emplace(gt[i].image_id, i).second)
      throw std::invalid_argument("evaluate: duplicate image_id \"" +
                                  gt[i].image_id + "\"");

  std::set<std::string> unknown;
  for (const DetectionRecord& p : preds)
    if (!image_index.count(p.image_id))
      unknown.insert(p.image_id);
  if (!unknown.empty()) {
    std::string msg = "evaluate: predictions reference unknown image ids:";
    for (const std::string& id : unknown)
      msg += " \"" + id + "\"";
    throw std::invalid_argument(msg);
  }

  // Per-image prediction lists carrying the global input order for
  // deterministic score tie-breaks.
  struct ImagePreds {
    std::vector<DetectionRecord> records;
    std::vector<std::uint64_t> orders;
  };
  std::vector<ImagePreds> by_image(gt.size());
  for (std::size_t p = 0; p < preds.size(); ++p) {
    ImagePreds& slot = by_image[image_index.at(preds[p].image_id)];
    slot.records.push_back(preds[p]);
    slot.orders.push_back(p);
  }

  if (cfg.max_detections > 0) {
    for (ImagePreds& slot : by_image) {
      std::vector<std::size_t> keep;
      for (std::size_t ci = 0; ci < kCategoryCount; ++ci) {
        std::vector<std::size_t> of_cat;
        for (std::size_t k = 0; k < slot.records.size(); ++k)
          if (static_cast<std::size_t>(slot.records[k].category) == ci)
            of_cat.push_back(k);
        std::sort(of_cat.begin(), of_cat.end(),
                  [&slot](std::size_t a, std::size_t b) {
                    if (slot.records[a].score != slot.records[b].score)
                      return slot.records[a].score > slot.records[b].score;
                    return slot.orders[a] < slot.orders[b];
                  });
        if (of_cat.size() > cfg.max_detections)
          of_cat.resize(cfg.max_detections);
        keep.insert(keep.end(), of_cat.begin(), of_cat.end());
      }
      std::sort(keep.begin(), keep.end());
      ImagePreds trimmed;
      for (std::size_t k : keep) {
        trimmed.records.push_back(slot.records[k]);
        trimmed.orders.push_back(slot.orders[k]);
      }
      slot = std::move(trimmed);
    }
  }

  const std::size_t n_thresholds = cfg.iou_thresholds.size();
  using ImageResult = std::vector<std::array<MatchSet, kBucketSettings>>;
  std::vector<ImageResult> results(gt.size());

  auto run_image = [&](std::size_t i) {
    ImageResult r(n_thresholds);
    for (std::size_t t = 0; t < n_thresholds; ++t)
      for (std::size_t b = 0; b < kBucketSettings; ++b)
        r[t][b] = match_detections(gt[i], by_image[i].records,
                                   cfg.iou_thresholds[t],
                                   bucket_for_setting(b));
    results[i] = std::move(r);
  };

  const unsigned jobs = std::max(1u, cfg.jobs);
  if (jobs == 1 || gt.size() < 2) {
    for (std::size_t i = 0; i < gt.size(); ++i)
      run_image(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const unsigned n_workers =
        std::min<std::size_t>(jobs, gt.size());
    for (unsigned w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < gt.size();
             i = next.fetch_add(1))
          run_image(i);
      });
    for (std::thread& t : workers)
      t.join();
  }

  // Accumulate matches per (threshold, bucket, category) in image order
  // and reduce to AP values.
  std::vector<std::array<std::array<double, kCategoryCount>, kBucketSettings>>
      ap(n_thresholds);
  std::array<std::array<std::size_t, kCategoryCount>, kBucketSettings>
      gt_totals{};
  for (std::size_t b = 0; b < kBucketSettings; ++b)
    for (std::size_t c = 0; c < kCategoryCount; ++c)
      for (std::size_t i = 0; i < gt.size(); ++i)
        gt_totals[b][c] += results[i][0][b].gt_counts[c];

  for (std::size_t t = 0; t < n_thresholds; ++t) {
    for (std::size_t b = 0; b < kBucketSettings; ++b) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        std::vector<MatchEntry> all;
        for (std::size_t i = 0; i < gt.size(); ++i) {
          const MatchSet& ms = results[i][t][b];
          for (MatchEntry e : ms.per_category[c]) {
            e.order = by_image[i].orders[e.pred_index];
            all.push_back(e);
          }
        }
        const auto curve = pr_curve(std::move(all), gt_totals[b][c]);
        ap[t][b][c] = curve ? curve->average_precision()
                            : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  const auto i50 = threshold_index(cfg.iou_thresholds, 0.50);
  const auto i75 = threshold_index(cfg.iou_thresholds, 0.75);

  APReport report;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    if (gt_totals[0][c] == 0)
      continue;
    APFields f;
    std::array<std::vector<double>, kBucketSettings> across_t;
    for (std::size_t t = 0; t < n_thresholds; ++t)
      for (std::size_t b = 0; b < kBucketSettings; ++b)
        across_t[b].push_back(ap[t][b][c]);
    f.ap = mean_defined(across_t[0]);
    f.ap50 = i50 ? ap[*i50][0][c] : std::numeric_limits<double>::quiet_NaN();
    f.ap75 = i75 ? ap[*i75][0][c] : std::numeric_limits<double>::quiet_NaN();
    f.ap_small = mean_defined(across_t[1]);
    f.ap_medium = mean_defined(across_t[2]);
    f.ap_large = mean_defined(across_t[3]);
    report.per_category[static_cast<Category>(c)] = f;
  }

  std::vector<double> v_ap, v_50, v_75, v_s, v_m, v_l;
  for (const auto& [cat, f] : report.per_category) {
    v_ap.push_back(f.ap);
    v_50.push_back(f.ap50);
    v_75.push_back(f.ap75);
    v_s.push_back(f.ap_small);
    v_m.push_back(f.ap_medium);
    v_l.push_back(f.ap_large);
  }
  report.overall.ap = mean_defined(v_ap);
  report.overall.ap50 = mean_defined(v_50);
  report.overall.ap75 = mean_defined(v_75);
  report.overall.ap_small = mean_defined(v_s);
  report.overall.ap_medium = mean_defined(v_m);
  report.overall.ap_large = mean_defined(v_l);
  return report;
}

namespace {

json fields_to_json(const APFields& f) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"ap", num(f.ap)},         {"ap50", num(f.ap50)},
          {"ap75", num(f.ap75)},     {"ap_small", num(f.ap_small)},
          {"ap_medium", num(f.ap_medium)}, {"ap_large", num(f.ap_large)}};
}

std::string cell(double v) {
  if (std::isnan(v))
    return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string row(const std::vector<std::string>& cells) {
  std::string line;
  for (const std::string& c : cells) {
    line += c;
    if (c.size() < 8)
      line += std::string(8 - c.size(), ' ');
    else
      line += ' ';
  }
  while (!line.empty() && line.back() == ' ')
    line.pop_back();
  return line + "\n";
}

}  // namespace

std::string report_to_json(const APReport& report) {
  json doc = fields_to_json(report.overall);
  json per = json::object();
  for (const auto& [cat, f] : report.per_category)
    per[std::string(category_name(cat))] = fields_to_json(f);
  doc["per_category"] = std::move(per);
  return doc.dump(2) + "\n";
}

std::string report_to_text(const APReport& report) {
  std::string out;
  out += row({"AP", "AP50", "AP75", "AP_S", "AP_M", "AP_L"});
  const APFields& o = report.overall;
  out += row({cell(o.ap), cell(o.ap50), cell(o.ap75), cell(o.ap_small),
              cell(o.ap_medium), cell(o.ap_large)});
  out += "\n";
  out += row({"T", "TC", "TR", "TSC"});
  std::vector<std::string> cells;
  for (Category c : kAllCategories) {
    const auto it = report.per_category.find(c);
    cells.push_back(it == report.per_category.end() ? "-" : cell(it->second.ap));
  }
  out += row(cells);
  return out;
}

}  // namespace tsr
