// Command-line frontend tying the pipeline together:
//   generate-data -> train -> infer -> evaluate -> sparsify -> report
// Exit codes: 0 success, 1 usage error, 2 data/validation error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uqdepth/datagen.hpp"
#include "uqdepth/dataset.hpp"
#include "uqdepth/eval.hpp"
#include "uqdepth/float_map.hpp"
#include "uqdepth/hash.hpp"
#include "uqdepth/plot.hpp"
#include "uqdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace uqd;

namespace {

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// One record per CLI invocation: command line, effective config, seeds, and
// content hashes of the outputs (plots excluded, they are presentation-only).
class RunRecord {
 public:
  RunRecord(int argc, char** argv) : started_(timestamp_utc()) {
    for (int i = 0; i < argc; ++i) argv_.push_back(argv[i]);
  }
  void set_config(nlohmann::json cfg) { config_ = std::move(cfg); }
  void add_output(const fs::path& p, bool hash = true) {
    outputs_.push_back({p.string(), hash ? io::sha256_file(p) : std::string("-")});
  }
  void write(const fs::path& dir) const {
    nlohmann::json j;
    j["command_line"] = argv_;
    j["config"] = config_;
    j["started"] = started_;
    j["finished"] = timestamp_utc();
    auto arr = nlohmann::json::array();
    for (const auto& [path, sha] : outputs_)
      arr.push_back({{"path", path}, {"sha256", sha}});
    j["outputs"] = arr;
    std::ofstream f(dir / "run_record.json");
    f << j.dump(2) << "\n";
  }

 private:
  std::vector<std::string> argv_;
  nlohmann::json config_;
  std::string started_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

std::vector<int> parse_widths(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

struct InferManifest {
  std::string supervision, strategy;
  std::vector<std::string> ids;
  fs::path dir;

  static InferManifest load(const fs::path& dir) {
    std::ifstream f(dir / "infer_manifest.json");
    if (!f) throw std::runtime_error("no infer_manifest.json under " + dir.string());
    nlohmann::json j;
    f >> j;
    InferManifest m;
    m.dir = dir;
    m.supervision = j.at("supervision");
    m.strategy = j.at("strategy");
    for (const auto& id : j.at("images")) m.ids.push_back(id);
    return m;
  }
};

int cmd_generate_data(const datagen::SceneSpec& spec, int count,
                      const fs::path& out, RunRecord& record) {
  const fs::path manifest = datagen::write_dataset(spec, count, out);
  record.add_output(manifest);
  record.write(out);
  std::printf("wrote %d samples under %s\n", count, out.string().c_str());
  return 0;
}

int cmd_train(const trainer::TrainConfig& cfg, const fs::path& data,
              const fs::path& out, RunRecord& record) {
  const data::Dataset ds = data::Dataset::load(data);
  record.set_config(nlohmann::json::parse(trainer::train_config_to_json(cfg)));
  const trainer::ExperimentManifest m = trainer::train(cfg, ds, out);
  for (const auto& p : m.checkpoint_refs) record.add_output(p);
  record.add_output(m.metrics_path);
  record.write(out);
  std::printf("experiment written to %s (%zu checkpoint(s))\n", out.string().c_str(),
              m.checkpoint_refs.size());
  return 0;
}

int cmd_infer(const fs::path& experiment, const fs::path& data,
              const std::string& split, const fs::path& out,
              std::uint64_t sample_seed, RunRecord& record) {
  const trainer::ExperimentManifest m = trainer::ExperimentManifest::load(experiment);
  const data::Dataset ds = data::Dataset::load(data);
  if (m.dataset_hash != ds.dataset_sha256)
    std::fprintf(stderr, "warning: dataset hash differs from the training run\n");

  std::vector<int> indices;
  if (split == "train")
    indices = ds.train_indices;
  else if (split == "test")
    indices = ds.test_indices;
  else if (split == "all") {
    indices = ds.train_indices;
    indices.insert(indices.end(), ds.test_indices.begin(), ds.test_indices.end());
  } else {
    throw std::invalid_argument("unknown split: " + split);
  }

  fs::create_directories(out / "maps");
  nlohmann::json manifest;
  manifest["experiment"] = experiment.string();
  manifest["supervision"] = trainer::supervision_to_string(m.config.supervision);
  manifest["strategy"] = uncertainty::strategy_to_string(m.config.strategy.kind);
  manifest["split"] = split;
  manifest["sample_seed"] = sample_seed;
  auto images = nlohmann::json::array();
  int total_forwards = 0;
  for (int idx : indices) {
    const data::DatasetSample& s = ds.sample(idx);
    const trainer::InferResult r = trainer::infer(m, s.left_t, sample_seed);
    const fs::path depth_path = out / "maps" / (s.id + "_depth.uqdm");
    const fs::path uncert_path = out / "maps" / (s.id + "_uncert.uqdm");
    io::write_map(depth_path, r.depth.values);
    io::write_map(uncert_path, r.uncertainty.values);
    record.add_output(depth_path);
    record.add_output(uncert_path);
    images.push_back(s.id);
    total_forwards += r.depth_forwards;
  }
  manifest["images"] = images;
  manifest["forwards_per_image"] =
      indices.empty() ? 0 : total_forwards / static_cast<int>(indices.size());
  std::ofstream f(out / "infer_manifest.json");
  f << manifest.dump(2) << "\n";
  record.add_output(out / "infer_manifest.json");
  record.write(out);
  std::printf("wrote %zu prediction pairs to %s\n", indices.size(),
              out.string().c_str());
  return 0;
}

// median scaling is applied under monocular supervision unless forced
bool use_median_scaling(const std::string& scaling, const std::string& supervision) {
  if (scaling == "median") return true;
  if (scaling == "none") return false;
  return supervision == "M";
}

struct LoadedPrediction {
  std::string id;
  Tensor depth, uncert, gt, valid;
};

std::vector<LoadedPrediction> load_predictions(const InferManifest& im,
                                               const data::Dataset& ds,
                                               bool median) {
  std::map<std::string, int> index_of;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    index_of[ds.samples[i].id] = static_cast<int>(i);
  std::vector<LoadedPrediction> out;
  for (const std::string& id : im.ids) {
    LoadedPrediction p;
    p.id = id;
    p.depth = io::read_map(im.dir / "maps" / (id + "_depth.uqdm"));
    p.uncert = io::read_map(im.dir / "maps" / (id + "_uncert.uqdm"));
    const data::DatasetSample& s = ds.sample(index_of.at(id));
    p.gt = s.gt_depth.values;
    p.valid = Tensor(p.gt.shape());
    for (std::int64_t i = 0; i < p.gt.size(); ++i)
      p.valid[i] = p.gt[i] > 0.0f ? 1.0f : 0.0f;
    if (median) p.depth = eval::median_scale(p.depth, p.gt, p.valid);
    out.push_back(std::move(p));
  }
  return out;
}

void write_metrics_row(std::ofstream& f, const std::string& label,
                       const InferManifest& im, const std::string& scope,
                       const eval::DepthMetrics& m) {
  char line[512];
  std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                label.c_str(), im.supervision.c_str(), im.strategy.c_str(),
                scope.c_str(), m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1,
                m.delta2, m.delta3);
  f << line;
}

int cmd_evaluate(const fs::path& pred, const fs::path& data, const fs::path& out_csv,
                 const std::string& scaling, const std::string& label,
                 double cap, RunRecord& record) {
  const InferManifest im = InferManifest::load(pred);
  const data::Dataset ds = data::Dataset::load(data);
  const bool median = use_median_scaling(scaling, im.supervision);
  const auto preds = load_predictions(im, ds, median);
  if (preds.empty()) throw std::runtime_error("no predictions to evaluate");

  std::vector<eval::DepthMetrics> per_image;
  for (const auto& p : preds)
    per_image.push_back(eval::depth_metrics(p.depth, p.gt, p.valid, cap));
  const eval::DepthMetrics agg = eval::aggregate_metrics(per_image);

  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  std::ofstream f(out_csv);
  f << "label,supervision,strategy,scope,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3\n";
  write_metrics_row(f, label, im, "aggregate", agg);
  for (std::size_t i = 0; i < preds.size(); ++i)
    write_metrics_row(f, label, im, preds[i].id, per_image[i]);
  f.close();
  record.add_output(out_csv);
  record.write(out_csv.has_parent_path() ? out_csv.parent_path() : fs::path("."));
  std::printf("abs_rel %.4f  rmse %.4f  d1 %.4f  (%zu images) -> %s\n", agg.abs_rel,
              agg.rmse, agg.delta1, preds.size(), out_csv.string().c_str());
  return 0;
}

int cmd_sparsify(const fs::path& pred, const fs::path& data, const fs::path& out_dir,
                 const std::string& scaling, const std::string& label,
                 double cap, RunRecord& record) {
  const InferManifest im = InferManifest::load(pred);
  const data::Dataset ds = data::Dataset::load(data);
  const bool median = use_median_scaling(scaling, im.supervision);
  const auto preds = load_predictions(im, ds, median);
  if (preds.empty()) throw std::runtime_error("no predictions to sparsify");

  fs::create_directories(out_dir);
  std::ofstream summary(out_dir / "sparsification_summary.csv");
  summary << "label,supervision,strategy,metric,ause,aurg\n";
  for (eval::SparsMetric metric : eval::all_spars_metrics()) {
    std::vector<eval::SparsificationResult> per_image;
    for (const auto& p : preds) {
      const Tensor err = eval::per_pixel_error(p.depth, p.gt, metric, cap);
      per_image.push_back(eval::sparsification(err, p.uncert, p.valid, metric));
    }
    const eval::SparsificationResult agg = eval::aggregate_sparsification(per_image);
    const std::string name = eval::spars_metric_name(metric);

    const fs::path curve_csv = out_dir / ("sparsification_" + name + ".csv");
    std::ofstream cf(curve_csv);
    cf << "fraction,estimated,oracle,random\n";
    char line[256];
    for (std::size_t i = 0; i < agg.fractions.size(); ++i) {
      std::snprintf(line, sizeof(line), "%.2f,%.9g,%.9g,%.9g\n", agg.fractions[i],
                    agg.estimated_curve[i], agg.oracle_curve[i], agg.random_curve[i]);
      cf << line;
    }
    cf.close();
    record.add_output(curve_csv);

    std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.9g,%.9g\n", label.c_str(),
                  im.supervision.c_str(), im.strategy.c_str(), name.c_str(), agg.ause,
                  agg.aurg);
    summary << line;

    io::CurveSeries est{"estimated", {0.85f, 0.25f, 0.2f}, agg.fractions,
                        agg.estimated_curve};
    io::CurveSeries oracle{"oracle", {0.2f, 0.4f, 0.85f}, agg.fractions,
                           agg.oracle_curve};
    io::CurveSeries random{"random", {0.4f, 0.4f, 0.4f}, agg.fractions,
                           agg.random_curve};
    const fs::path plot = out_dir / ("sparsification_" + name + ".ppm");
    io::write_curve_plot(plot, {est, oracle, random}, name);
    record.add_output(plot, /*hash=*/false);

    std::printf("%-14s AUSE %.6f  AURG %+.6f\n", name.c_str(), agg.ause, agg.aurg);
  }
  summary.close();
  record.add_output(out_dir / "sparsification_summary.csv");
  record.write(out_dir);
  return 0;
}

int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_csv,
               RunRecord& record) {
  struct Row {
    std::string label, sup, strategy;
    double abs_rel = 0, rmse = 0, delta1 = 0;
    std::map<std::string, std::pair<double, double>> spars;  // metric -> (ause, aurg)
  };
  std::vector<Row> rows;
  for (const fs::path& dir : inputs) {
    Row row;
    std::ifstream mf(dir / "metrics.csv");
    if (!mf) throw std::runtime_error("missing metrics.csv in " + dir.string());
    std::string line;
    std::getline(mf, line);  // header
    while (std::getline(mf, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 11 || cells[3] != "aggregate") continue;
      row.label = cells[0];
      row.sup = cells[1];
      row.strategy = cells[2];
      row.abs_rel = std::stod(cells[4]);
      row.rmse = std::stod(cells[6]);
      row.delta1 = std::stod(cells[8]);
    }
    std::ifstream sf(dir / "sparsification_summary.csv");
    if (!sf)
      throw std::runtime_error("missing sparsification_summary.csv in " + dir.string());
    std::getline(sf, line);
    while (std::getline(sf, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 6) continue;
      row.spars[cells[3]] = {std::stod(cells[4]), std::stod(cells[5])};
    }
    rows.push_back(std::move(row));
  }

  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  std::ofstream f(out_csv);
  f << "label,supervision,strategy,abs_rel,rmse,delta1,"
       "ause_abs_rel,aurg_abs_rel,ause_rmse,aurg_rmse,"
       "ause_delta_outlier,aurg_delta_outlier\n";
  std::printf("%-16s %-4s %-10s %8s %8s %8s | %18s %18s %18s\n", "label", "sup",
              "strategy", "AbsRel", "RMSE", "d<1.25", "AbsRel AUSE/AURG",
              "RMSE AUSE/AURG", "d>=1.25 AUSE/AURG");
  for (const Row& r : rows) {
    const auto sp = [&](const std::string& m) {
      const auto it = r.spars.find(m);
      return it == r.spars.end() ? std::pair<double, double>{0, 0} : it->second;
    };
    const auto [a_ause, a_aurg] = sp("abs_rel");
    const auto [r_ause, r_aurg] = sp("rmse");
    const auto [d_ause, d_aurg] = sp("delta_outlier");
    char line[512];
    std::snprintf(line, sizeof(line), "%s,%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.label.c_str(), r.sup.c_str(), r.strategy.c_str(), r.abs_rel, r.rmse,
                  r.delta1, a_ause, a_aurg, r_ause, r_aurg, d_ause, d_aurg);
    f << line;
    std::printf("%-16s %-4s %-10s %8.4f %8.4f %8.4f | %8.4f / %7.4f %8.4f / %7.4f %8.4f / %7.4f\n",
                r.label.c_str(), r.sup.c_str(), r.strategy.c_str(), r.abs_rel, r.rmse,
                r.delta1, a_ause, a_aurg, r_ause, r_aurg, d_ause, d_aurg);
  }
  f.close();
  record.add_output(out_csv);
  record.write(out_csv.has_parent_path() ? out_csv.parent_path() : fs::path("."));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised depth with uncertainty: desk-scale pipeline"};
  app.require_subcommand(1);
  RunRecord record(argc, argv);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "render a synthetic dataset");
  datagen::SceneSpec spec;
  int gen_count = 50;
  fs::path gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--width", spec.width);
  gen->add_option("--height", spec.height);
  gen->add_option("--focal", spec.focal);
  gen->add_option("--primitives", spec.num_primitives);
  gen->add_option("--near", spec.near);
  gen->add_option("--far", spec.far);
  gen->add_option("--baseline", spec.baseline);
  gen->add_option("--octaves", spec.texture_octaves);

  // train
  auto* tr = app.add_subcommand("train", "train a depth network with a strategy");
  fs::path train_data, train_out, train_config_file;
  std::string mode = "S", strategy = "log", widths_csv;
  trainer::TrainConfig tc;
  std::optional<int> opt_epochs, opt_batch, opt_scales, opt_cycles, opt_ensemble;
  std::optional<double> opt_lr, opt_beta, opt_fraction, opt_dropout, opt_alpha,
      opt_smooth, opt_dmin, opt_dmax, opt_lambda0;
  std::optional<std::uint64_t> opt_seed;
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "experiment output directory")->required();
  tr->add_option("--config", train_config_file, "json config (flags override)");
  tr->add_option("--mode", mode, "supervision: M, S or MS");
  tr->add_option("--strategy", strategy, "post drop boot snap repr log self boot+log boot+self snap+log snap+self");
  tr->add_option("--epochs", opt_epochs);
  tr->add_option("--batch-size", opt_batch);
  tr->add_option("--lr", opt_lr);
  tr->add_option("--seed", opt_seed);
  tr->add_option("--ensemble-size", opt_ensemble, "N");
  tr->add_option("--beta", opt_beta);
  tr->add_option("--bootstrap-fraction", opt_fraction);
  tr->add_option("--dropout", opt_dropout);
  tr->add_option("--widths", widths_csv, "encoder widths, e.g. 16,32,64,128");
  tr->add_option("--scales", opt_scales);
  tr->add_option("--cycles", opt_cycles, "snapshot cycles C");
  tr->add_option("--lambda0", opt_lambda0, "snapshot peak learning rate");
  tr->add_option("--alpha", opt_alpha, "ssim weight");
  tr->add_option("--smoothness-weight", opt_smooth);
  tr->add_option("--d-min", opt_dmin);
  tr->add_option("--d-max", opt_dmax);

  // infer
  auto* in = app.add_subcommand("infer", "write per-image depth and uncertainty maps");
  fs::path infer_exp, infer_data, infer_out;
  std::string infer_split = "test";
  std::uint64_t infer_seed = 0;
  in->add_option("--experiment", infer_exp)->required();
  in->add_option("--data", infer_data)->required();
  in->add_option("--out", infer_out)->required();
  in->add_option("--split", infer_split, "train, test or all");
  in->add_option("--seed", infer_seed, "sampling seed (drop strategy)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "depth metrics against ground truth");
  fs::path eval_pred, eval_data, eval_out = "metrics.csv";
  std::string eval_scaling = "auto", eval_label = "experiment";
  double eval_cap = 80.0;
  ev->add_option("--pred", eval_pred, "infer output directory")->required();
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--out", eval_out, "metrics csv path");
  ev->add_option("--scaling", eval_scaling, "auto, median or none");
  ev->add_option("--label", eval_label);
  ev->add_option("--cap", eval_cap, "maximum evaluation depth (m)");

  // sparsify
  auto* sp = app.add_subcommand("sparsify", "sparsification curves, AUSE and AURG");
  fs::path sp_pred, sp_data, sp_out;
  std::string sp_scaling = "auto", sp_label = "experiment";
  double sp_cap = 80.0;
  sp->add_option("--pred", sp_pred)->required();
  sp->add_option("--data", sp_data)->required();
  sp->add_option("--out-dir", sp_out)->required();
  sp->add_option("--scaling", sp_scaling);
  sp->add_option("--label", sp_label);
  sp->add_option("--cap", sp_cap);

  // report
  auto* rp = app.add_subcommand("report", "merge evaluation csvs into one table");
  std::vector<fs::path> report_inputs;
  fs::path report_out = "report.csv";
  rp->add_option("--inputs", report_inputs, "result directories")->required();
  rp->add_option("--out", report_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      spec.seed = gen_seed;
      nlohmann::json cfg;
      cfg["seed"] = gen_seed;
      cfg["count"] = gen_count;
      record.set_config(cfg);
      return cmd_generate_data(spec, gen_count, gen_out, record);
    }
    if (tr->parsed()) {
      if (!train_config_file.empty()) {
        std::ifstream f(train_config_file);
        if (!f) throw std::runtime_error("cannot read config: " + train_config_file.string());
        std::stringstream ss;
        ss << f.rdbuf();
        tc = trainer::train_config_from_json(ss.str());
      }
      if (tr->count("--mode") || train_config_file.empty())
        tc.supervision = trainer::supervision_from_string(mode);
      if (tr->count("--strategy") || train_config_file.empty())
        tc.strategy.kind = uncertainty::strategy_from_string(strategy);
      if (opt_epochs) tc.epochs = *opt_epochs;
      if (opt_batch) tc.batch_size = *opt_batch;
      if (opt_lr) tc.lr = static_cast<float>(*opt_lr);
      if (opt_seed) tc.seed = *opt_seed;
      if (opt_ensemble) tc.strategy.ensemble_size = *opt_ensemble;
      if (opt_beta) tc.strategy.beta = static_cast<float>(*opt_beta);
      if (opt_fraction) tc.strategy.bootstrap_fraction = static_cast<float>(*opt_fraction);
      if (opt_dropout) tc.net.dropout_p = static_cast<float>(*opt_dropout);
      if (!widths_csv.empty()) tc.net.encoder_widths = parse_widths(widths_csv);
      if (opt_scales) tc.net.scales = *opt_scales;
      if (opt_cycles || opt_lambda0) {
        uncertainty::SnapshotSchedule sch;
        if (tc.schedule) sch = *tc.schedule;
        if (opt_cycles) sch.cycles = *opt_cycles;
        if (opt_lambda0) sch.lambda0 = *opt_lambda0;
        tc.schedule = sch;
      }
      if (opt_alpha) tc.loss.alpha = static_cast<float>(*opt_alpha);
      if (opt_smooth) tc.loss.smoothness_weight = static_cast<float>(*opt_smooth);
      if (opt_dmin) tc.d_min = static_cast<float>(*opt_dmin);
      if (opt_dmax) tc.d_max = static_cast<float>(*opt_dmax);
      return cmd_train(tc, train_data, train_out, record);
    }
    if (in->parsed())
      return cmd_infer(infer_exp, infer_data, infer_split, infer_out, infer_seed, record);
    if (ev->parsed())
      return cmd_evaluate(eval_pred, eval_data, eval_out, eval_scaling, eval_label,
                          eval_cap, record);
    if (sp->parsed())
      return cmd_sparsify(sp_pred, sp_data, sp_out, sp_scaling, sp_label, sp_cap, record);
    if (rp->parsed()) return cmd_report(report_inputs, report_out, record);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
