#include "cli.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "conic/countmetrics.h"
#include "conic/downstream/harness.h"
#include "conic/feature_catalog.h"
#include "conic/features.h"
#include "conic/io.h"
#include "conic/parallel.h"
#include "conic/segmetrics.h"
#include "run_config.h"

namespace conic::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnmatchedFile:
    case ErrorCode::kImageIdMismatch:
    case ErrorCode::kOrphanImage:
    case ErrorCode::kIdMismatch:
      return kExitPairing;
    case ErrorCode::kDegenerateTargets:
    case ErrorCode::kTooFewPatients:
    case ErrorCode::kTooFewImages:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kNoComparablePairs:
      return kExitDegenerate;
    default:
      return kExitInput;
  }
}

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool bootstrap = false;
  std::string feature_set;
  std::string out_path;
  bool quiet = false;
};

class Context {
 public:
  Context(const GlobalOptions& g, std::ostream& out, std::ostream& err)
      : g_(g), out_(out), err_(err) {
    if (!g.config_path.empty()) config = read_config(g.config_path);
    if (g.seed) config.seed = *g.seed;
    if (g.threads) {
      config.threads = *g.threads;
    } else if (const char* env = std::getenv("CONIC_BENCH_THREADS"); env && *env) {
      try {
        config.threads = std::stoi(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfigError, "CONIC_BENCH_THREADS is not an integer");
      }
    }
    config.validate();
  }

  void log(const std::string& msg) const {
    if (!g_.quiet) err_ << "conic-bench: " << msg << '\n';
  }

  void emit(const nlohmann::ordered_json& report) const {
    const std::string text = report.dump(2) + "\n";
    if (g_.out_path.empty()) {
      out_ << text;
      return;
    }
    std::ofstream f(g_.out_path, std::ios::binary);
    if (!f) throw Error(ErrorCode::kIoError, "cannot write " + g_.out_path);
    f << text;
  }

  nlohmann::ordered_json header(const std::string& command) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config.to_json();
    return j;
  }

  const GlobalOptions& global() const { return g_; }

  RunConfig config;

 private:
  const GlobalOptions& g_;
  std::ostream& out_;
  std::ostream& err_;
};

// Stems of label grids (sidecar files) in a directory, sorted.
std::vector<std::string> grid_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIoError, dir.string() + " is not a directory");
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s += ", ";
    s += names[i];
  }
  return s;
}

// Stems present in both directories; UnmatchedFile naming every file
// without a partner.
std::vector<std::string> paired_stems(const fs::path& gt_dir, const fs::path& pred_dir) {
  const auto gt = grid_stems(gt_dir);
  const auto pred = grid_stems(pred_dir);
  std::vector<std::string> only_gt, only_pred;
  std::set_difference(gt.begin(), gt.end(), pred.begin(), pred.end(), std::back_inserter(only_gt));
  std::set_difference(pred.begin(), pred.end(), gt.begin(), gt.end(), std::back_inserter(only_pred));
  if (!only_gt.empty() || !only_pred.empty()) {
    std::string msg;
    if (!only_gt.empty()) msg += "no prediction for " + join_names(only_gt);
    if (!only_pred.empty()) {
      if (!msg.empty()) msg += "; ";
      msg += "no ground truth for " + join_names(only_pred);
    }
    throw Error(ErrorCode::kUnmatchedFile, msg);
  }
  if (gt.empty()) throw Error(ErrorCode::kEmptyDataset, "no label grids in " + gt_dir.string());
  return gt;
}

std::vector<MatchStats> match_directories(const Context& ctx, const fs::path& gt_dir,
                                          const fs::path& pred_dir,
                                          std::vector<std::string>& stems) {
  stems = paired_stems(gt_dir, pred_dir);
  ctx.log(std::to_string(stems.size()) + " image pairs");
  std::vector<MatchStats> stats(stems.size());
  parallel_for(stems.size(), ctx.config.threads, [&](std::size_t i) {
    const auto gt = io::read_label_grid(gt_dir / stems[i], ctx.config.classes);
    const auto pred = io::read_label_grid(pred_dir / stems[i], ctx.config.classes);
    stats[i] = match_instances(gt, pred);
  });
  return stats;
}

BootstrapResult bootstrap_pq(const Context& ctx, const std::vector<MatchStats>& stats) {
  return bootstrap_metric(
      std::span<const MatchStats>(stats),
      [](std::span<const MatchStats> sample) { return aggregate_mpq(sample).mpq_plus; },
      ctx.config.bootstrap_n, derive_seed(ctx.config.seed, 0x5e6));
}

// Counts from a CSV file, or from a directory of label grids (central crop).
std::vector<ClassCounts> load_counts(const Context& ctx, const fs::path& path) {
  if (!fs::is_directory(path)) return io::read_counts_table(path);
  const auto stems = grid_stems(path);
  std::vector<ClassCounts> rows(stems.size());
  parallel_for(stems.size(), ctx.config.threads, [&](std::size_t i) {
    const auto grid = io::read_label_grid(path / stems[i], ctx.config.classes);
    const auto crop = CropSpec::central(ctx.config.crop_size, grid.height(), grid.width());
    rows[i] = counts_from_segmentation(grid, crop, stems[i]);
  });
  return rows;
}

struct JoinedCounts {
  std::vector<std::string> ids;
  CountMatrix pred;
  CountMatrix truth;
};

JoinedCounts join_counts(const std::vector<ClassCounts>& pred,
                         const std::vector<ClassCounts>& truth) {
  auto index = [](const std::vector<ClassCounts>& rows, const char* what) {
    std::map<std::string, const ClassCounts*> m;
    for (const auto& r : rows) {
      if (!m.emplace(r.image_id, &r).second) {
        throw Error(ErrorCode::kParseError,
                    std::string("duplicate image_id '") + r.image_id + "' in " + what);
      }
    }
    return m;
  };
  const auto p = index(pred, "predictions");
  const auto t = index(truth, "ground truth");
  std::vector<std::string> only_pred, only_truth;
  for (const auto& [id, row] : p) {
    if (!t.contains(id)) only_pred.push_back(id);
  }
  for (const auto& [id, row] : t) {
    if (!p.contains(id)) only_truth.push_back(id);
  }
  if (!only_pred.empty() || !only_truth.empty()) {
    std::string msg = "image ids differ";
    if (!only_pred.empty()) msg += "; only in predictions: " + join_names(only_pred);
    if (!only_truth.empty()) msg += "; only in ground truth: " + join_names(only_truth);
    throw Error(ErrorCode::kImageIdMismatch, msg);
  }
  JoinedCounts j;
  for (const auto& [id, row] : t) {
    j.ids.push_back(id);
    j.pred.push_back(to_count_matrix(std::span<const ClassCounts>(p.at(id), 1))[0]);
    j.truth.push_back(to_count_matrix(std::span<const ClassCounts>(row, 1))[0]);
  }
  return j;
}

struct CountPair {
  std::array<double, kNumClasses> pred;
  std::array<double, kNumClasses> truth;
};

nlohmann::ordered_json bootstrap_counts(const Context& ctx, const JoinedCounts& j) {
  std::vector<CountPair> pairs;
  for (std::size_t i = 0; i < j.ids.size(); ++i) pairs.push_back({j.pred[i], j.truth[i]});
  auto metric = [](std::span<const CountPair> sample) {
    CountMatrix p, t;
    for (const auto& s : sample) {
      p.push_back(s.pred);
      t.push_back(s.truth);
    }
    return composition_metrics(p, t).mr2;
  };
  auto r = bootstrap_metric(std::span<const CountPair>(pairs), metric, ctx.config.bootstrap_n,
                            derive_seed(ctx.config.seed, 0xc0c));
  // Resamples where every class has zero variance leave mR2 undefined; the
  // interval is taken over the defined ones.
  std::vector<double> defined;
  for (double s : r.samples) {
    if (!std::isnan(s)) defined.push_back(s);
  }
  nlohmann::ordered_json out;
  out["metric"] = "mr2";
  out["undefined_samples"] = r.samples.size() - defined.size();
  if (defined.empty()) {
    out["result"] = nullptr;
  } else {
    out["result"] = to_json(summarize_bootstrap(std::move(defined)));
  }
  return out;
}

int cmd_eval_seg(const Context& ctx, const fs::path& gt_dir, const fs::path& pred_dir, bool strict) {
  std::vector<std::string> stems;
  const auto stats = match_directories(ctx, gt_dir, pred_dir, stems);
  auto report = ctx.header("eval-seg");
  report["images"] = stems;
  report["metrics"] = to_json(aggregate_mpq(stats, strict));
  if (ctx.global().bootstrap) {
    nlohmann::ordered_json b;
    b["metric"] = "mpq_plus";
    b["result"] = to_json(bootstrap_pq(ctx, stats));
    report["bootstrap"] = std::move(b);
  }
  ctx.emit(report);
  return kExitOk;
}

int cmd_eval_counts(const Context& ctx, const fs::path& pred, const fs::path& truth) {
  const auto joined = join_counts(load_counts(ctx, pred), load_counts(ctx, truth));
  ctx.log(std::to_string(joined.ids.size()) + " images");
  auto report = ctx.header("eval-counts");
  report["images"] = joined.ids.size();
  report["metrics"] = to_json(composition_metrics(joined.pred, joined.truth));
  if (ctx.global().bootstrap) report["bootstrap"] = bootstrap_counts(ctx, joined);
  ctx.emit(report);
  return kExitOk;
}

int cmd_bootstrap(const Context& ctx, const std::string& kind, const fs::path& a,
                  const fs::path& b) {
  auto report = ctx.header("bootstrap");
  report["kind"] = kind;
  if (kind == "seg") {
    std::vector<std::string> stems;
    const auto stats = match_directories(ctx, a, b, stems);
    report["images"] = stems.size();
    nlohmann::ordered_json block;
    block["metric"] = "mpq_plus";
    block["result"] = to_json(bootstrap_pq(ctx, stats));
    report["bootstrap"] = std::move(block);
  } else if (kind == "counts") {
    const auto joined = join_counts(load_counts(ctx, a), load_counts(ctx, b));
    report["images"] = joined.ids.size();
    report["bootstrap"] = bootstrap_counts(ctx, joined);
  } else {
    throw Error(ErrorCode::kConfigError, "bootstrap kind must be 'seg' or 'counts'");
  }
  ctx.emit(report);
  return kExitOk;
}

int cmd_extract_features(const Context& ctx, const fs::path& nuclei_dir, const fs::path& manifest,
                         const fs::path& out_csv) {
  std::vector<fs::path> files;
  if (fs::is_directory(nuclei_dir)) {
    for (const auto& e : fs::directory_iterator(nuclei_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".ndjson") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(nuclei_dir);
  }
  std::vector<NucleusRecord> nuclei;
  for (const auto& f : files) {
    auto part = io::read_nuclei_table(f);
    nuclei.insert(nuclei.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }
  ctx.log(std::to_string(nuclei.size()) + " nuclei from " + std::to_string(files.size()) +
          " tables");
  const auto matrix =
      extract_feature_matrix(nuclei, io::read_manifest(manifest), ctx.config.radii_um,
                             ctx.config.threads);
  io::write_feature_matrix(out_csv, matrix);
  ctx.log(std::to_string(matrix.rows.size()) + " patients written to " + out_csv.string());
  return kExitOk;
}

// CSV: split,<one column per feature>; one row per split.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_importances(
    const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, path.string() + ": empty file");
  auto header = io::split_csv_line(line, 1);
  if (header.size() < 2 || header[0] != "split") {
    throw Error(ErrorCode::kParseError, path.string() + ": header must start with 'split'");
  }
  std::vector<std::string> names(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line, line_no);
    std::vector<double> v;
    for (std::size_t c = 1; c < cells.size(); ++c) v.push_back(io::parse_double(cells[c], line_no));
    if (v.size() != names.size()) {
      throw Error(ErrorCode::kWidthMismatch, "line " + std::to_string(line_no) + " has " +
                                                 std::to_string(v.size()) + " values, header has " +
                                                 std::to_string(names.size()));
    }
    rows.push_back(std::move(v));
  }
  return {names, rows};
}

int cmd_select_features(const Context& ctx, const fs::path& importances) {
  auto [names, rows] = read_importances(importances);
  ctx.log(std::to_string(rows.size()) + " importance vectors of width " +
          std::to_string(names.size()));
  auto report = ctx.header("select-features");
  const auto rep = select_features(std::move(rows));
  report["importance"] = to_json(rep, names);
  ctx.emit(report);
  return kExitOk;
}

int cmd_fit_downstream(const Context& ctx, const fs::path& features_csv,
                       const std::string& labels_csv, const std::string& survival_csv,
                       std::string task_name) {
  if (labels_csv.empty() == survival_csv.empty()) {
    throw Error(ErrorCode::kConfigError, "give exactly one of --labels and --survival");
  }
  if (task_name.empty()) task_name = labels_csv.empty() ? "survival" : "grading";
  const Task task = task_from_name(task_name);
  if ((task == Task::kGrading) != !labels_csv.empty()) {
    throw Error(ErrorCode::kConfigError, "task '" + task_name + "' does not match the targets given");
  }

  const auto names = feature_names(ctx.config.radii_um);
  const auto matrix = io::read_feature_matrix(features_csv, names);

  DownstreamInput in;
  in.feature_names = names;
  in.targets.task = task;
  std::set<std::string> feature_ids, target_ids;
  for (const auto& r : matrix.rows) feature_ids.insert(r.patient_id);
  std::map<std::string, int> grades;
  std::map<std::string, SurvivalRecord> survival;
  if (task == Task::kGrading) {
    grades = io::read_grade_labels(labels_csv);
    for (const auto& [id, g] : grades) target_ids.insert(id);
  } else {
    for (auto& s : io::read_survival_table(survival_csv)) {
      target_ids.insert(s.patient_id);
      survival.emplace(s.patient_id, s);
    }
  }
  if (feature_ids != target_ids) {
    std::vector<std::string> only_f, only_t;
    std::set_difference(feature_ids.begin(), feature_ids.end(), target_ids.begin(),
                        target_ids.end(), std::back_inserter(only_f));
    std::set_difference(target_ids.begin(), target_ids.end(), feature_ids.begin(),
                        feature_ids.end(), std::back_inserter(only_t));
    std::string msg = "patient ids differ";
    if (!only_f.empty()) msg += "; only in features: " + join_names(only_f);
    if (!only_t.empty()) msg += "; only in targets: " + join_names(only_t);
    throw Error(ErrorCode::kIdMismatch, msg);
  }

  std::vector<double> data;
  data.reserve(matrix.rows.size() * kNumFeatures);
  for (const auto& r : matrix.rows) {
    in.patient_ids.push_back(r.patient_id);
    data.insert(data.end(), r.values.begin(), r.values.end());
    if (task == Task::kGrading) {
      in.targets.labels.push_back(grades.at(r.patient_id));
    } else {
      in.targets.survival.push_back(survival.at(r.patient_id));
    }
  }
  in.x = DenseMatrix(matrix.rows.size(), kNumFeatures, std::move(data));

  DownstreamOptions opt;
  opt.search_n = ctx.config.search_n;
  opt.folds = ctx.config.folds;
  opt.repeats = ctx.config.repeats;
  opt.n_perm = ctx.config.n_perm;
  opt.seed = ctx.config.seed;
  opt.threads = ctx.config.threads;
  if (!ctx.global().feature_set.empty()) {
    opt.feature_set = feature_set_from_tag(ctx.global().feature_set);
  }
  ctx.log(std::string(to_string(task)) + ": " + std::to_string(in.patient_ids.size()) +
          " patients, " + std::to_string(opt.search_n) + " parameter sets x " +
          std::to_string(opt.folds * opt.repeats) + " splits");

  const auto rep = run_downstream(in, opt);
  auto report = ctx.header("fit-downstream");
  report["feature_set"] = ctx.global().feature_set.empty()
                              ? nlohmann::ordered_json(nullptr)
                              : nlohmann::ordered_json(ctx.global().feature_set);
  report["result"] = to_json(rep, in);
  ctx.emit(report);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CoNIC evaluation metrics and cell-analytics pipeline", "conic-bench"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON run configuration; flags take precedence")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--threads", g.threads, "worker threads (default: $CONIC_BENCH_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--bootstrap", g.bootstrap, "add a bootstrap confidence interval");
  app.add_option("--feature-set", g.feature_set, "restrict fit-downstream inputs")
      ->check(CLI::IsMember({"Dm", "Dc", "Dd", "D", "Dbar"}));
  app.add_option("--out", g.out_path, "write the report here instead of stdout");
  app.add_flag("--quiet", g.quiet, "no progress messages");

  std::string a, b, c, kind, labels, survival, task;
  bool strict = false;

  auto* seg = app.add_subcommand("eval-seg", "PQ / mPQ+ over paired label grids");
  seg->add_option("gt_dir", a)->required();
  seg->add_option("pred_dir", b)->required();
  seg->add_flag("--strict", strict, "fail when a class has no instances anywhere");

  auto* counts = app.add_subcommand("eval-counts", "composition R2 / MAE / MAAPE");
  counts->add_option("pred", a, "counts CSV or directory of label grids")->required();
  counts->add_option("truth", b, "counts CSV or directory of label grids")->required();

  auto* extract = app.add_subcommand("extract-features", "patient-level feature matrix");
  extract->add_option("nuclei", a, "directory of .ndjson nuclei tables, or one table")->required();
  extract->add_option("manifest", b, "image_id,patient_id CSV")->required();
  extract->add_option("out_csv", c)->required();

  auto* select = app.add_subcommand("select-features", "median rule over per-split importances");
  select->add_option("importances", a, "CSV: split,<feature columns>")->required();

  auto* fit = app.add_subcommand("fit-downstream", "cross-validated grading or survival models");
  fit->add_option("features", a, "feature matrix CSV")->required();
  fit->add_option("--labels", labels, "patient_id,grade CSV");
  fit->add_option("--survival", survival, "patient_id,time,event CSV");
  fit->add_option("--task", task)->check(CLI::IsMember({"grading", "survival"}));

  auto* boot = app.add_subcommand("bootstrap", "bootstrap interval only");
  boot->add_option("kind", kind, "seg or counts")->required()->check(CLI::IsMember({"seg", "counts"}));
  boot->add_option("a", a, "gt_dir (seg) or prediction counts (counts)")->required();
  boot->add_option("b", b, "pred_dir (seg) or ground-truth counts (counts)")->required();

  for (auto* sub : {seg, counts, extract, select, fit, boot}) sub->fallthrough();

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int rc = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    Context ctx(g, out, err);
    if (*seg) return cmd_eval_seg(ctx, a, b, strict);
    if (*counts) return cmd_eval_counts(ctx, a, b);
    if (*extract) return cmd_extract_features(ctx, a, b, c);
    if (*select) return cmd_select_features(ctx, a);
    if (*fit) return cmd_fit_downstream(ctx, a, labels, survival, task);
    if (*boot) return cmd_bootstrap(ctx, kind, a, b);
  } catch (const Error& e) {
    err << "conic-bench: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "conic-bench: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "conic-bench: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace conic::cli
