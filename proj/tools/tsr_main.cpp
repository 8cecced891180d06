// Command-line front end: stats, anchors, loss, eval, infer, synth.
// Machine output (JSON) goes to stdout or --out; human-readable tables go
// to stderr behind --human. Exit codes: 0 success, 1 usage error, 2 data
// error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsr/anchors.hpp"
#include "tsr/eval.hpp"
#include "tsr/geometry.hpp"
#include "tsr/ingest.hpp"
#include "tsr/loss.hpp"
#include "tsr/structure.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty())
    std::cout << content;
  else
    write_file(out_path, content);
}

std::vector<fs::path> xml_files_sorted(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xml")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<tsr::AnnotatedImage> load_annotation_dir(
    const fs::path& dir, const tsr::VocParseOptions& opts,
    std::size_t* skipped) {
  std::vector<tsr::AnnotatedImage> images;
  for (const fs::path& file : xml_files_sorted(dir)) {
    tsr::VocParseResult r;
    try {
      r = tsr::parse_voc_xml(read_file(file), opts);
    } catch (const tsr::ParseError& e) {
      throw tsr::ParseError(file.string() + ": " + e.what());
    }
    if (r.image.image_id.empty())
      r.image.image_id = file.stem().string();
    if (skipped)
      *skipped += r.skipped_objects;
    images.push_back(std::move(r.image));
  }
  return images;
}

// ---- stats ----------------------------------------------------------

struct StatsArgs {
  std::string dir;
  std::string out;
  bool strict = false;
  bool no_clamp = false;
  bool human = false;
  unsigned jobs = 1;
};

int run_stats(const StatsArgs& args, bool verbose) {
  const tsr::VocParseOptions opts{args.strict, !args.no_clamp};
  const auto files = xml_files_sorted(args.dir);
  if (files.empty())
    std::cerr << "warning: no .xml files in " << args.dir << "\n";
  else if (verbose)
    std::cerr << files.size() << " annotation files\n";

  const unsigned jobs =
      std::max(1u, std::min<unsigned>(args.jobs,
                                      static_cast<unsigned>(files.size())));
  std::vector<tsr::DatasetStats> shards(std::max(1u, jobs));
  std::vector<std::size_t> skipped(shards.size(), 0);
  std::vector<std::string> errors(shards.size());

  auto run_shard = [&](unsigned shard) {
    try {
      for (std::size_t i = shard; i < files.size(); i += jobs) {
        tsr::VocParseResult r = tsr::parse_voc_xml(read_file(files[i]), opts);
        if (r.image.image_id.empty())
          r.image.image_id = files[i].stem().string();
        skipped[shard] += r.skipped_objects;
        shards[shard].add(r.image);
      }
    } catch (const std::exception& e) {
      errors[shard] = e.what();
    }
  };

  if (jobs <= 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> workers;
    for (unsigned s = 0; s < jobs; ++s)
      workers.emplace_back(run_shard, s);
    for (auto& w : workers)
      w.join();
  }
  for (const std::string& e : errors)
    if (!e.empty())
      throw tsr::ParseError(e);

  tsr::DatasetStats total = shards[0];
  for (std::size_t s = 1; s < shards.size(); ++s)
    total.merge(shards[s]);
  const std::size_t total_skipped =
      std::accumulate(skipped.begin(), skipped.end(), std::size_t{0});
  if (total_skipped > 0)
    std::cerr << "warning: skipped " << total_skipped
              << " objects with unknown names\n";

  emit(total.to_json(), args.out);
  if (args.human)
    std::cerr << total.to_text_table();
  return 0;
}

// ---- anchors --------------------------------------------------------

struct AnchorArgs {
  std::string mode = "column";
  double image_width = 0;
  double image_height = 0;
  std::string levels;
  std::vector<double> ratios;
  bool no_clip = false;
  std::string out;
};

std::vector<tsr::PyramidLevel> parse_levels(const std::string& text) {
  std::vector<tsr::PyramidLevel> levels;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw UsageError("--levels expects stride:extent pairs");
    try {
      levels.push_back(
          {std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw UsageError("--levels expects numeric stride:extent pairs");
    }
  }
  return levels;
}

const char* role_name(tsr::AnchorRole role) {
  switch (role) {
    case tsr::AnchorRole::Column: return "column";
    case tsr::AnchorRole::Row: return "row";
    case tsr::AnchorRole::Generic: return "generic";
  }
  return "?";
}

int run_anchors(const AnchorArgs& args) {
  tsr::AnchorConfig cfg;
  cfg.image_width = args.image_width;
  cfg.image_height = args.image_height;
  cfg.clip_to_image = !args.no_clip;
  if (!args.levels.empty())
    cfg.levels = parse_levels(args.levels);
  if (!args.ratios.empty())
    cfg.aspect_ratios = args.ratios;

  tsr::AnchorSet set;
  try {
    if (args.mode == "column") {
      cfg.mode = tsr::AnchorMode::StructureAware;
      set = tsr::generate_column_anchors(cfg);
    } else if (args.mode == "row") {
      cfg.mode = tsr::AnchorMode::StructureAware;
      set = tsr::generate_row_anchors(cfg);
    } else if (args.mode == "typical") {
      cfg.mode = tsr::AnchorMode::Typical;
      set = tsr::generate_typical_anchors(cfg);
    } else {
      throw UsageError("--mode must be column, row or typical");
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::string out;
  for (const tsr::Anchor& a : set.anchors) {
    json line = {{"level", a.level},       {"role", role_name(a.role)},
                 {"x_min", a.bbox.x_min},  {"y_min", a.bbox.y_min},
                 {"x_max", a.bbox.x_max},  {"y_max", a.bbox.y_max}};
    out += line.dump() + "\n";
  }
  emit(out, args.out);
  return 0;
}

// ---- loss -----------------------------------------------------------

struct LossArgs {
  std::string batch_file;
  std::optional<double> lambda;
  std::optional<double> beta;
  std::vector<double> alpha;
  std::string out;
};

int run_loss(const LossArgs& args) {
  json doc;
  try {
    doc = json::parse(read_file(args.batch_file));
  } catch (const json::parse_error& e) {
    throw tsr::ParseError(std::string("batch file: ") + e.what());
  }

  tsr::HardnessParams params;
  params.lambda = args.lambda.value_or(doc.value("lambda", 0.5));
  params.beta = args.beta.value_or(doc.value("beta", 1.0));
  if (!args.alpha.empty())
    params.alpha = args.alpha;
  else if (doc.contains("alpha"))
    params.alpha = doc["alpha"].get<std::vector<double>>();

  if (!doc.contains("boxes") || !doc["boxes"].is_array())
    throw tsr::ParseError("batch file: missing \"boxes\" array");
  std::size_t category_count = doc.value("category_count", std::size_t{0});
  std::vector<tsr::BatchBox> boxes;
  std::vector<std::vector<double>> per_box_residuals;
  for (const auto& b : doc["boxes"]) {
    tsr::BatchBox box;
    box.category = b.at("category").get<std::size_t>();
    box.width = b.at("width").get<double>();
    box.height = b.at("height").get<double>();
    boxes.push_back(box);
    per_box_residuals.push_back(
        b.value("residuals", std::vector<double>{}));
    category_count = std::max(category_count, box.category + 1);
  }

  const tsr::BatchClassStats stats = tsr::batch_stats(boxes, category_count);
  const std::vector<double> hardness = tsr::class_hardness(stats, params);
  const tsr::ClassWeights weights = tsr::class_weights(hardness);

  std::vector<std::vector<double>> residuals(category_count);
  for (std::size_t i = 0; i < boxes.size(); ++i)
    residuals[boxes[i].category].insert(residuals[boxes[i].category].end(),
                                        per_box_residuals[i].begin(),
                                        per_box_residuals[i].end());
  const double l1 = tsr::cost_sensitive_l1(residuals, weights, params.beta);
  const auto l1_grad = tsr::cost_sensitive_l1_grad(residuals, weights,
                                                   params.beta);

  // Slice per-category gradients back into per-box vectors.
  std::vector<std::size_t> cursor(category_count, 0);
  json box_grads = json::array();
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::size_t c = boxes[i].category;
    const std::size_t n = per_box_residuals[i].size();
    std::vector<double> g(l1_grad[c].begin() + cursor[c],
                          l1_grad[c].begin() + cursor[c] + n);
    cursor[c] += n;
    box_grads.push_back(g);
  }

  auto num_or_null = [](double v) {
    return std::isinf(v) || std::isnan(v) ? json(nullptr) : json(v);
  };
  json out;
  out["lambda"] = params.lambda;
  out["beta"] = params.beta;
  json h = json::array();
  for (double l : hardness)
    h.push_back(num_or_null(l));
  out["hardness"] = std::move(h);
  out["weights"] = weights.w;
  out["cost_sensitive_l1"] = l1;
  out["l1_gradients"] = std::move(box_grads);

  if (doc.contains("samples")) {
    std::vector<std::vector<double>> logits;
    std::vector<std::size_t> labels;
    for (const auto& s : doc["samples"]) {
      logits.push_back(s.at("logits").get<std::vector<double>>());
      labels.push_back(s.at("label").get<std::size_t>());
    }
    out["cross_entropy"] = tsr::weighted_cross_entropy(logits, labels, weights);
    out["logit_gradients"] =
        tsr::weighted_cross_entropy_grad(logits, labels, weights);
  }

  emit(out.dump(2) + "\n", args.out);
  return 0;
}

// ---- eval -----------------------------------------------------------

struct EvalArgs {
  std::string gt_dir;
  std::string pred_file;
  std::string out;
  std::size_t max_dets = 0;
  unsigned jobs = 1;
  bool human = false;
  bool strict = false;
};

int run_eval(const EvalArgs& args, bool verbose) {
  const tsr::VocParseOptions opts{args.strict, true};
  const auto gt = load_annotation_dir(args.gt_dir, opts, nullptr);
  const auto preds = tsr::parse_detections(read_file(args.pred_file));
  if (verbose)
    std::cerr << gt.size() << " images, " << preds.size() << " detections\n";

  tsr::EvalConfig cfg;
  cfg.max_detections = args.max_dets;
  cfg.jobs = args.jobs;
  tsr::APReport report;
  try {
    report = tsr::evaluate(gt, preds, cfg);
  } catch (const std::invalid_argument& e) {
    // unknown image ids and similar are data problems, not usage
    throw tsr::ParseError(e.what());
  }

  emit(tsr::report_to_json(report), args.out);
  if (args.human)
    std::cerr << tsr::report_to_text(report);
  return 0;
}

// ---- infer ----------------------------------------------------------

struct InferArgs {
  std::string pred_file;
  std::string image_id;
  std::string format = "json";
  std::string out;
  std::string out_dir;
  std::optional<double> score_threshold;
  std::vector<double> score_thresholds;
  std::optional<double> nms_iou;
  std::optional<double> tau;
  bool no_require_table = false;
};

std::string export_grid(const tsr::TableGrid& grid, const std::string& format) {
  if (format == "html")
    return tsr::export_html(grid);
  if (format == "csv")
    return tsr::export_csv(grid);
  return tsr::export_json(grid);
}

int run_infer(const InferArgs& args, bool verbose) {
  tsr::StructureConfig cfg;
  if (args.score_threshold)
    cfg.score_thresholds.fill(*args.score_threshold);
  if (!args.score_thresholds.empty()) {
    if (args.score_thresholds.size() != tsr::kCategoryCount)
      throw UsageError("--score-thresholds expects 4 values");
    std::copy(args.score_thresholds.begin(), args.score_thresholds.end(),
              cfg.score_thresholds.begin());
  }
  if (args.nms_iou)
    cfg.nms_iou = *args.nms_iou;
  if (args.tau)
    cfg.span_overlap_tau = *args.tau;
  cfg.require_table_box = !args.no_require_table;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (args.format != "html" && args.format != "csv" && args.format != "json")
    throw UsageError("--format must be html, csv or json");

  const auto records = tsr::parse_detections(read_file(args.pred_file));

  // Group by image, preserving input order within each image.
  std::vector<std::string> ids;
  std::map<std::string, std::vector<tsr::DetectionRecord>> by_image;
  for (const tsr::DetectionRecord& r : records) {
    if (!by_image.count(r.image_id))
      ids.push_back(r.image_id);
    by_image[r.image_id].push_back(r);
  }

  if (!args.image_id.empty()) {
    if (!by_image.count(args.image_id))
      throw tsr::ParseError("no detections for image \"" + args.image_id +
                            "\"");
    ids = {args.image_id};
  }
  if (ids.empty())
    throw tsr::ParseError("no detections in " + args.pred_file);

  if (ids.size() == 1) {
    if (verbose)
      std::cerr << "image " << ids[0] << ": " << by_image[ids[0]].size()
                << " detections\n";
    const auto result = tsr::infer_structure(by_image[ids[0]], cfg);
    if (result.dropped_spans > 0)
      std::cerr << "warning: dropped " << result.dropped_spans
                << " spanning cells\n";
    emit(export_grid(result.grid, args.format), args.out);
    return 0;
  }

  if (args.out_dir.empty())
    throw UsageError(
        "multiple images in input: pass --image-id or --out-dir");
  fs::create_directories(args.out_dir);
  for (const std::string& id : ids) {
    const auto result = tsr::infer_structure(by_image[id], cfg);
    if (result.dropped_spans > 0)
      std::cerr << "warning: " << id << ": dropped " << result.dropped_spans
                << " spanning cells\n";
    write_file(fs::path(args.out_dir) / (id + "." + args.format),
               export_grid(result.grid, args.format));
  }
  return 0;
}

// ---- synth ----------------------------------------------------------

struct SynthArgs {
  std::size_t rows = 3;
  std::size_t cols = 3;
  std::vector<std::string> spans;
  std::vector<double> frame;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  std::string image_id = "synthetic-0";
  std::string out_pred;
  std::string out_grid;
};

tsr::SpanBlock parse_span(const std::string& text) {
  unsigned long long v[4];
  if (std::sscanf(text.c_str(), "%llu:%llu:%llu:%llu", &v[0], &v[1], &v[2],
                  &v[3]) != 4)
    throw UsageError("--span expects row0:row1:col0:col1");
  return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
          static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3])};
}

int run_synth(const SynthArgs& args) {
  tsr::SynthConfig cfg;
  cfg.n_rows = args.rows;
  cfg.n_cols = args.cols;
  cfg.jitter = args.jitter;
  cfg.seed = args.seed;
  cfg.image_id = args.image_id;
  for (const std::string& s : args.spans)
    cfg.spans.push_back(parse_span(s));
  if (!args.frame.empty()) {
    if (args.frame.size() != 4)
      throw UsageError("--frame expects x,y,width,height");
    cfg.frame = tsr::BBox::from_xywh(args.frame[0], args.frame[1],
                                     args.frame[2], args.frame[3]);
  }

  tsr::SynthResult result;
  try {
    result = tsr::synth_table(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  emit(tsr::write_detections(result.detections), args.out_pred);
  if (!args.out_grid.empty())
    write_file(args.out_grid, tsr::export_json(result.grid));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table-structure detection toolkit"};
  app.require_subcommand(1);
  app.set_config("--config")->envname("TSR_CONFIG");

  std::uint64_t global_seed = 0;
  bool verbose = false;
  app.add_option("--seed", global_seed,
                 "Default seed for randomized subcommands");
  app.add_flag("-v,--verbose", verbose, "Progress notes on stderr");

  StatsArgs stats;
  auto* cmd_stats =
      app.add_subcommand("stats", "Per-category dataset statistics");
  cmd_stats->add_option("dir", stats.dir, "Directory of VOC XML annotations")
      ->required();
  cmd_stats->add_option("--out", stats.out, "Write JSON here (default stdout)");
  cmd_stats->add_flag("--strict", stats.strict, "Fail on unknown object names");
  cmd_stats->add_flag("--no-clamp", stats.no_clamp,
                      "Keep boxes exceeding the image frame");
  cmd_stats->add_flag("--human", stats.human, "Aligned table on stderr");
  cmd_stats->add_option("--jobs", stats.jobs, "Parallel parsing shards");

  AnchorArgs anchors;
  auto* cmd_anchors =
      app.add_subcommand("anchors", "Generate candidate boxes (JSON lines)");
  cmd_anchors->add_option("--mode", anchors.mode, "column, row or typical")
      ->required();
  cmd_anchors->add_option("--image-width", anchors.image_width)->required();
  cmd_anchors->add_option("--image-height", anchors.image_height)->required();
  cmd_anchors->add_option("--levels", anchors.levels,
                          "stride:extent pairs, comma separated");
  cmd_anchors->add_option("--ratios", anchors.ratios, "Aspect ratios")
      ->delimiter(',');
  cmd_anchors->add_flag("--no-clip", anchors.no_clip,
                        "Do not clip anchors to the image");
  cmd_anchors->add_option("--out", anchors.out);

  LossArgs loss;
  auto* cmd_loss =
      app.add_subcommand("loss", "Cost-sensitive loss reference checker");
  cmd_loss->add_option("batch", loss.batch_file, "Batch description JSON")
      ->required();
  cmd_loss->add_option("--lambda", loss.lambda, "Count/size balance");
  cmd_loss->add_option("--beta", loss.beta, "Smooth-L1 transition point");
  cmd_loss->add_option("--alpha", loss.alpha, "Per-category offsets")
      ->delimiter(',');
  cmd_loss->add_option("--out", loss.out);

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "COCO-style AP evaluation");
  cmd_eval->add_option("--gt", eval.gt_dir, "Ground-truth XML directory")
      ->required();
  cmd_eval->add_option("--pred", eval.pred_file, "Detections JSON")->required();
  cmd_eval->add_option("--out", eval.out);
  cmd_eval->add_option("--max-dets", eval.max_dets,
                       "Cap detections per image and category (0 = uncapped)");
  cmd_eval->add_option("--jobs", eval.jobs, "Worker threads");
  cmd_eval->add_flag("--human", eval.human, "Aligned table on stderr");
  cmd_eval->add_flag("--strict", eval.strict, "Fail on unknown object names");

  InferArgs infer;
  auto* cmd_infer =
      app.add_subcommand("infer", "Infer a table grid from detections");
  cmd_infer->add_option("--pred", infer.pred_file, "Detections JSON")
      ->required();
  cmd_infer->add_option("--image-id", infer.image_id);
  cmd_infer->add_option("--format", infer.format, "html, csv or json");
  cmd_infer->add_option("--out", infer.out);
  cmd_infer->add_option("--out-dir", infer.out_dir,
                        "Batch output directory (one file per image)");
  cmd_infer->add_option("--score-threshold", infer.score_threshold,
                        "Confidence cutoff for all categories");
  cmd_infer->add_option("--score-thresholds", infer.score_thresholds,
                        "Per-category cutoffs (T,TC,TR,TSC)")
      ->delimiter(',');
  cmd_infer->add_option("--nms-iou", infer.nms_iou);
  cmd_infer->add_option("--tau", infer.tau, "Span coverage fraction");
  cmd_infer->add_flag("--no-require-table", infer.no_require_table);

  SynthArgs synth;
  auto* cmd_synth =
      app.add_subcommand("synth", "Synthesize a table scene with ground truth");
  cmd_synth->add_option("--rows", synth.rows, "Lattice rows");
  cmd_synth->add_option("--cols", synth.cols, "Lattice columns");
  cmd_synth->add_option("--span", synth.spans,
                        "Span block row0:row1:col0:col1 (repeatable)");
  cmd_synth->add_option("--frame", synth.frame, "x,y,width,height")
      ->delimiter(',');
  cmd_synth->add_option("--jitter", synth.jitter, "Edge perturbation, pixels");
  cmd_synth->add_option("--seed", synth.seed);
  cmd_synth->add_option("--image-id", synth.image_id);
  cmd_synth->add_option("--out-pred", synth.out_pred,
                        "Write detections here (default stdout)");
  cmd_synth->add_option("--out-grid", synth.out_grid,
                        "Write the ground-truth grid here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (cmd_synth->parsed() && cmd_synth->count("--seed") == 0)
    synth.seed = global_seed;

  try {
    if (cmd_stats->parsed())
      return run_stats(stats, verbose);
    if (cmd_anchors->parsed())
      return run_anchors(anchors);
    if (cmd_loss->parsed())
      return run_loss(loss);
    if (cmd_eval->parsed())
      return run_eval(eval, verbose);
    if (cmd_infer->parsed())
      return run_infer(infer, verbose);
    if (cmd_synth->parsed())
      return run_synth(synth);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
