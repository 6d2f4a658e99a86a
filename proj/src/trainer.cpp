#include "uqdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "uqdepth/float_map.hpp"
#include "uqdepth/ops.hpp"
#include "uqdepth/rng.hpp"

namespace uqd::trainer {

using geometry::ImageFrame;
using geometry::Intrinsics;
using geometry::Pose;
using models::DepthNet;
using models::PoseNet;
using uncertainty::StrategyConfig;
using uncertainty::StrategyKind;

Supervision supervision_from_string(const std::string& s) {
  if (s == "M") return Supervision::M;
  if (s == "S") return Supervision::S;
  if (s == "MS") return Supervision::MS;
  throw std::invalid_argument("unknown supervision mode: " + s);
}

std::string supervision_to_string(Supervision s) {
  switch (s) {
    case Supervision::M: return "M";
    case Supervision::S: return "S";
    case Supervision::MS: return "MS";
  }
  throw std::logic_error("unreachable supervision");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr > 0.0f)) throw std::invalid_argument("train config: lr must be > 0");
  if (!(d_min > 0.0f && d_max > d_min))
    throw std::invalid_argument("train config: need 0 < d_min < d_max");
  strategy.validate();
  net.validate();
  loss.validate();
}

// --- json (de)serialization --------------------------------------------------

namespace {

nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["supervision"] = supervision_to_string(c.supervision);
  j["strategy"] = {{"kind", uncertainty::strategy_to_string(c.strategy.kind)},
                   {"ensemble_size", c.strategy.ensemble_size},
                   {"beta", c.strategy.beta},
                   {"bootstrap_fraction", c.strategy.bootstrap_fraction}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  if (c.schedule)
    j["schedule"] = {{"lambda0", c.schedule->lambda0},
                     {"total_steps", c.schedule->total_steps},
                     {"cycles", c.schedule->cycles}};
  j["net"] = {{"encoder_widths", c.net.encoder_widths},
              {"dropout_p", c.net.dropout_p},
              {"predict_uncertainty", c.net.predict_uncertainty},
              {"scales", c.net.scales}};
  j["loss"] = {{"alpha", c.loss.alpha},
               {"smoothness_weight", c.loss.smoothness_weight},
               {"ssim_window", c.loss.ssim_window}};
  j["d_min"] = c.d_min;
  j["d_max"] = c.d_max;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.supervision = supervision_from_string(j.at("supervision"));
  const auto& s = j.at("strategy");
  c.strategy.kind = uncertainty::strategy_from_string(s.at("kind"));
  c.strategy.ensemble_size = s.at("ensemble_size");
  c.strategy.beta = s.at("beta");
  c.strategy.bootstrap_fraction = s.at("bootstrap_fraction");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.seed = j.at("seed");
  if (j.contains("schedule")) {
    uncertainty::SnapshotSchedule sch;
    sch.lambda0 = j["schedule"].at("lambda0");
    sch.total_steps = j["schedule"].at("total_steps");
    sch.cycles = j["schedule"].at("cycles");
    c.schedule = sch;
  }
  const auto& n = j.at("net");
  c.net.encoder_widths = n.at("encoder_widths").get<std::vector<int>>();
  c.net.dropout_p = n.at("dropout_p");
  c.net.predict_uncertainty = n.at("predict_uncertainty");
  c.net.scales = n.at("scales");
  const auto& l = j.at("loss");
  c.loss.alpha = l.at("alpha");
  c.loss.smoothness_weight = l.at("smoothness_weight");
  c.loss.ssim_window = l.at("ssim_window");
  c.d_min = j.at("d_min");
  c.d_max = j.at("d_max");
  return c;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& config) {
  return config_to_json(config).dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

void ExperimentManifest::save() const {
  nlohmann::json j;
  j["config"] = config_to_json(config);
  auto rel = [&](const std::filesystem::path& p) {
    return std::filesystem::relative(p, root).string();
  };
  std::vector<std::string> cks, pose_cks;
  for (const auto& p : checkpoint_refs) cks.push_back(rel(p));
  for (const auto& p : pose_checkpoint_refs) pose_cks.push_back(rel(p));
  j["checkpoints"] = cks;
  j["pose_checkpoints"] = pose_cks;
  if (!teacher_ref.empty()) j["teacher"] = rel(teacher_ref);
  if (!proxy_dir.empty()) j["proxy_dir"] = rel(proxy_dir);
  j["dataset_sha256"] = dataset_hash;
  j["metrics"] = rel(metrics_path);
  std::ofstream f(root / "experiment.json");
  if (!f) throw std::runtime_error("cannot write experiment manifest");
  f << j.dump(2) << "\n";
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& dir) {
  std::ifstream f(dir / "experiment.json");
  if (!f) throw std::runtime_error("cannot open experiment manifest in " + dir.string());
  nlohmann::json j;
  f >> j;
  ExperimentManifest m;
  m.root = dir;
  m.config = config_from_json(j.at("config"));
  for (const auto& p : j.at("checkpoints")) {
    m.checkpoint_refs.push_back(dir / std::string(p));
    if (!std::filesystem::exists(m.checkpoint_refs.back()))
      throw std::runtime_error("missing checkpoint: " + m.checkpoint_refs.back().string());
  }
  for (const auto& p : j.at("pose_checkpoints"))
    m.pose_checkpoint_refs.push_back(dir / std::string(p));
  if (j.contains("teacher")) m.teacher_ref = dir / std::string(j.at("teacher"));
  if (j.contains("proxy_dir")) m.proxy_dir = dir / std::string(j.at("proxy_dir"));
  m.dataset_hash = j.at("dataset_sha256");
  m.metrics_path = dir / std::string(j.at("metrics"));
  return m;
}

// --- loss assembly -----------------------------------------------------------

namespace {

constexpr float kInvalidSentinel = std::numeric_limits<float>::infinity();

struct SourceView {
  Var pixels;
  Var rotation;
  Var translation;
};

SourceView source_from_known_pose(const ImageFrame& frame, const Pose& pose) {
  Tensor rot({3, 3});
  for (int i = 0; i < 9; ++i) rot[i] = static_cast<float>(pose.rotation.m[i]);
  Tensor tr({3}, {static_cast<float>(pose.translation.x),
                  static_cast<float>(pose.translation.y),
                  static_cast<float>(pose.translation.z)});
  return SourceView{Var::constant(frame.pixels), Var::constant(rot),
                    Var::constant(tr)};
}

std::vector<SourceView> gather_sources(const TrainConfig& cfg,
                                       const data::DatasetSample& sample,
                                       const Var& target, PoseNet* pose_net) {
  std::vector<SourceView> sources;
  const bool stereo = cfg.supervision != Supervision::M;
  const bool temporal = cfg.supervision != Supervision::S;
  if (stereo)
    sources.push_back(source_from_known_pose(sample.right_t, sample.pose_right));
  if (temporal) {
    if (!pose_net) throw std::logic_error("temporal supervision requires a pose net");
    for (const ImageFrame* frame : {&sample.left_prev, &sample.left_next}) {
      Var src = Var::constant(frame->pixels);
      PoseNet::Output po = pose_net->forward(target, src);
      sources.push_back(SourceView{
          src, geometry::rotation_var_from_axis_angle(po.axis_angle),
          po.translation});
    }
  }
  return sources;
}

struct LossParts {
  Var total;
  double photometric = 0;
  double smooth = 0;
  double strategy_term = 0;
};

// Joint min-reprojection over all sources at one scale, with pixels lacking
// any valid source dropped from the mean.
struct ScalePhotometric {
  Var min_error;     // {h,w}, +inf where no source is valid
  Tensor any_valid;  // {h,w} 0/1
};

ScalePhotometric scale_photometric(const TrainConfig& cfg, const Var& target,
                                   const std::vector<SourceView>& sources,
                                   const Var& depth, const Intrinsics& k) {
  std::vector<Var> errors;
  Tensor any_valid(depth.value().shape());
  for (const SourceView& sv : sources) {
    geometry::WarpVar wv =
        geometry::warp(sv.pixels, depth, sv.rotation, sv.translation, k, k);
    Var err = photometric::photometric_error(wv.warped, target, cfg.loss);
    errors.push_back(ops::masked_fill(err, wv.valid_mask, kInvalidSentinel));
    for (std::int64_t i = 0; i < any_valid.size(); ++i)
      if (wv.valid_mask[i] > 0.5f) any_valid[i] = 1.0f;
  }
  photometric::MinReprojection mr = photometric::min_reprojection(errors);
  return ScalePhotometric{mr.combined, any_valid};
}

LossParts sample_loss(const TrainConfig& cfg, const data::DatasetSample& sample,
                      DepthNet& net, PoseNet* pose_net, bool sample_dropout,
                      Rng* dropout_rng, const Tensor* proxy_depth) {
  const Intrinsics& k = sample.left_t.intrinsics;
  const int h = k.height, w = k.width;
  Var target = Var::constant(sample.left_t.pixels);

  DepthNet::Output out = net.forward(target, sample_dropout, dropout_rng);
  const int scales = static_cast<int>(out.disparity.size());

  std::vector<SourceView> sources;
  if (!proxy_depth) sources = gather_sources(cfg, sample, target, pose_net);

  const StrategyConfig& strat = cfg.strategy;
  const bool repr_term = !proxy_depth && strat.kind == StrategyKind::repr;
  const bool log_term = !proxy_depth && strat.needs_uncertainty_head() &&
                        !strat.uses_self_teaching() && !repr_term;

  LossParts parts;
  parts.total = Var::scalar(0.0f);
  for (int s = 0; s < scales; ++s) {
    Var disp_full = ops::resize_bilinear(out.disparity[s], h, w);
    Var depth = geometry::disparity_to_depth(disp_full, cfg.d_min, cfg.d_max);

    if (proxy_depth) {
      // self-teaching student: likelihood of |d_S - d_T|, no photometric term
      Var residual = ops::abs(ops::sub(depth, Var::constant(*proxy_depth)));
      Var u_full = ops::resize_bilinear(out.log_uncertainty[s], h, w);
      Var ll = uncertainty::log_likelihood_loss(residual, u_full);
      parts.strategy_term += ll.scalar_value();
      parts.total = ops::add(parts.total, ll);
      continue;
    }

    ScalePhotometric sp = scale_photometric(cfg, target, sources, depth, k);
    Var photo = ops::masked_mean(sp.min_error, sp.any_valid);
    parts.photometric += photo.scalar_value();
    Var scale_total = photo;

    if (cfg.loss.smoothness_weight > 0.0f) {
      const float a = 1.0f / cfg.d_min - 1.0f / cfg.d_max;
      const float b = 1.0f / cfg.d_max;
      Var inv_depth = ops::affine(disp_full, a, b);
      Var smooth = photometric::smoothness(inv_depth, target, cfg.loss.smoothness_weight);
      parts.smooth += smooth.scalar_value();
      scale_total = ops::add(scale_total, smooth);
    }

    if (repr_term || log_term) {
      Var u_full = ops::resize_bilinear(out.log_uncertainty[s], h, w);
      // the sentinel never reaches the loss: masked pixels are excluded, but
      // replace it anyway so finiteness checks see clean values
      Var residual = ops::masked_fill(sp.min_error, sp.any_valid, 0.0f);
      Var term = repr_term
                     ? uncertainty::repr_loss(u_full, residual, strat.beta, sp.any_valid)
                     : uncertainty::log_likelihood_loss(residual, u_full, sp.any_valid);
      parts.strategy_term += term.scalar_value();
      scale_total = ops::add(scale_total, term);
    }
    parts.total = ops::add(parts.total, scale_total);
  }
  parts.total = ops::affine(parts.total, 1.0f / static_cast<float>(scales), 0.0f);
  parts.photometric /= scales;
  parts.smooth /= scales;
  parts.strategy_term /= scales;
  return parts;
}

// --- training loops ----------------------------------------------------------

struct SingleRunResult {
  std::vector<std::filesystem::path> depth_checkpoints;
  std::filesystem::path pose_checkpoint;
};

models::DepthNetConfig effective_net_config(const TrainConfig& cfg) {
  models::DepthNetConfig net = cfg.net;
  net.predict_uncertainty = cfg.strategy.needs_uncertainty_head();
  if (cfg.strategy.uses_dropout() && net.dropout_p == 0.0f) net.dropout_p = 0.2f;
  return net;
}

uncertainty::SnapshotSchedule effective_schedule(const TrainConfig& cfg,
                                                 std::int64_t total_steps) {
  uncertainty::SnapshotSchedule sch;
  sch.cycles = cfg.schedule ? cfg.schedule->cycles : 20;
  sch.lambda0 = (cfg.schedule && cfg.schedule->lambda0 > 0.0) ? cfg.schedule->lambda0
                                                              : cfg.lr;
  sch.total_steps = (cfg.schedule && cfg.schedule->total_steps > 0)
                        ? cfg.schedule->total_steps
                        : total_steps;
  sch.validate();
  return sch;
}

SingleRunResult train_single(const TrainConfig& cfg, const data::Dataset& ds,
                             const std::vector<int>& indices,
                             std::uint64_t run_seed,
                             const std::filesystem::path& out_dir,
                             const std::string& tag,
                             const std::map<int, Tensor>* proxies,
                             std::ofstream& log) {
  if (indices.empty()) throw std::invalid_argument("training set is empty");
  const bool proxy_mode = proxies != nullptr;
  const bool needs_pose = !proxy_mode && cfg.supervision != Supervision::S;

  DepthNet net(effective_net_config(cfg), run_seed);
  std::optional<PoseNet> pose_net;
  if (needs_pose) pose_net.emplace(Rng::derive(run_seed, 0x9053));

  std::vector<Var> params = net.params().vars();
  if (pose_net)
    for (const Var& p : pose_net->params().vars()) params.push_back(p);
  models::AdamOptimizer adam(params, cfg.lr);

  const int n = static_cast<int>(indices.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;

  const bool cyclic = cfg.strategy.uses_snapshots();
  uncertainty::SnapshotSchedule schedule;
  std::vector<std::int64_t> snapshot_steps;
  if (cyclic) {
    schedule = effective_schedule(cfg, total_steps);
    if (schedule.total_steps != total_steps)
      throw std::invalid_argument("snapshot schedule total_steps does not match the run");
    if (schedule.cycles < cfg.strategy.ensemble_size)
      throw std::invalid_argument("snapshot training needs at least N cycles");
    for (int c = 1; c <= schedule.cycles; ++c)
      snapshot_steps.push_back(
          std::min<std::int64_t>(static_cast<std::int64_t>(c) * schedule.cycle_length(),
                                 total_steps));
  }

  Rng dropout_rng(Rng::derive(run_seed, 0xD20));
  const bool sample_dropout = cfg.strategy.uses_dropout();

  SingleRunResult result;
  char line[256];
  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(indices);
    Rng shuffle_rng(Rng::derive(run_seed, 0xE90 + static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    for (int b = 0; b < steps_per_epoch; ++b) {
      ++t;
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      Var total = Var::scalar(0.0f);
      double photo = 0, smooth = 0, strat = 0;
      for (int i = lo; i < hi; ++i) {
        const data::DatasetSample& sample = ds.sample(order[i]);
        const Tensor* proxy = nullptr;
        if (proxy_mode) proxy = &proxies->at(order[i]);
        LossParts parts = sample_loss(cfg, sample, net, pose_net ? &*pose_net : nullptr,
                                      sample_dropout, &dropout_rng, proxy);
        total = ops::add(total, parts.total);
        photo += parts.photometric;
        smooth += parts.smooth;
        strat += parts.strategy_term;
      }
      const float inv_batch = 1.0f / static_cast<float>(hi - lo);
      Var loss = ops::affine(total, inv_batch, 0.0f);
      backward(loss);

      const double lr = cyclic ? uncertainty::snapshot_lr(schedule, t)
                               : static_cast<double>(cfg.lr);
      adam.set_lr(static_cast<float>(lr));
      adam.step();
      adam.zero_grads();

      std::snprintf(line, sizeof(line), "%s,%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                    tag.c_str(), static_cast<long long>(t), lr,
                    static_cast<double>(loss.scalar_value()),
                    photo * inv_batch, smooth * inv_batch, strat * inv_batch);
      log << line;

      if (cyclic) {
        net.training_step = t;
        for (std::size_t si = 0; si < snapshot_steps.size(); ++si) {
          if (snapshot_steps[si] != t) continue;
          char name[64];
          std::snprintf(name, sizeof(name), "%s_snap%02zu.uqck", tag.c_str(), si);
          const std::filesystem::path p = out_dir / name;
          models::save_checkpoint(net.checkpoint(), p);
          result.depth_checkpoints.push_back(p);
        }
      }
    }
  }
  net.training_step = total_steps;
  if (!cyclic) {
    const std::filesystem::path p = out_dir / (tag + ".uqck");
    models::save_checkpoint(net.checkpoint(), p);
    result.depth_checkpoints.push_back(p);
  }
  if (pose_net) {
    pose_net->training_step = total_steps;
    result.pose_checkpoint = out_dir / (tag + "_pose.uqck");
    models::save_checkpoint(pose_net->checkpoint(), result.pose_checkpoint);
  }
  return result;
}

std::map<int, Tensor> load_proxies(const data::Dataset& ds,
                                   const std::filesystem::path& proxy_dir,
                                   const std::vector<int>& indices) {
  std::map<int, Tensor> proxies;
  for (int i : indices)
    proxies.emplace(i, io::read_map(proxy_dir / (ds.sample(i).id + ".uqdm")));
  return proxies;
}

}  // namespace

std::vector<int> bootstrap_subset(const std::vector<int>& train_indices,
                                  float fraction, std::uint64_t seed,
                                  int member_index) {
  if (train_indices.empty()) throw std::invalid_argument("bootstrap_subset: empty pool");
  const int n = static_cast<int>(train_indices.size());
  int k = static_cast<int>(std::floor(fraction * n));
  if (k < 1) k = 1;
  std::vector<int> pool(train_indices);
  Rng rng(Rng::derive(seed, 0xB007 + static_cast<std::uint64_t>(member_index)));
  for (int i = 0; i < k; ++i)
    std::swap(pool[i], pool[rng.uniform_int(i, n - 1)]);
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

ExperimentManifest train(const TrainConfig& config, const data::Dataset& dataset,
                         const std::filesystem::path& out_dir) {
  config.validate();
  if (dataset.train_indices.empty())
    throw std::invalid_argument("train: dataset has no training split");
  std::filesystem::create_directories(out_dir);

  if (config.strategy.uses_self_teaching()) {
    TrainConfig teacher_cfg = config;
    teacher_cfg.strategy.kind = StrategyKind::post;  // plain self-supervised run
    teacher_cfg.schedule.reset();
    ExperimentManifest teacher = train(teacher_cfg, dataset, out_dir / "teacher");
    return train_self_teaching(teacher, config, dataset, out_dir);
  }

  ExperimentManifest m;
  m.root = out_dir;
  m.config = config;
  m.dataset_hash = dataset.dataset_sha256;
  m.metrics_path = out_dir / "training_log.csv";
  std::ofstream log(m.metrics_path);
  log << "tag,step,lr,total,photometric,smoothness,strategy_term\n";

  if (config.strategy.uses_bootstrap()) {
    for (int member = 0; member < config.strategy.ensemble_size; ++member) {
      const std::vector<int> subset =
          bootstrap_subset(dataset.train_indices, config.strategy.bootstrap_fraction,
                           config.seed, member);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "member%02d", member);
      SingleRunResult r =
          train_single(config, dataset, subset,
                       Rng::derive(config.seed, 0x3E0 + static_cast<std::uint64_t>(member)),
                       out_dir, tag, nullptr, log);
      for (const auto& p : r.depth_checkpoints) m.checkpoint_refs.push_back(p);
      if (!r.pose_checkpoint.empty()) m.pose_checkpoint_refs.push_back(r.pose_checkpoint);
    }
  } else {
    SingleRunResult r = train_single(config, dataset, dataset.train_indices,
                                     Rng::derive(config.seed, 0x3E0), out_dir,
                                     "model", nullptr, log);
    m.checkpoint_refs = r.depth_checkpoints;
    if (!r.pose_checkpoint.empty()) m.pose_checkpoint_refs.push_back(r.pose_checkpoint);
  }
  log.close();
  m.save();
  return m;
}

ExperimentManifest train_self_teaching(const ExperimentManifest& teacher,
                                       const TrainConfig& config,
                                       const data::Dataset& dataset,
                                       const std::filesystem::path& out_dir) {
  config.validate();
  if (!config.strategy.uses_self_teaching())
    throw std::invalid_argument("train_self_teaching: strategy is not a self kind");
  if (teacher.config.net.encoder_widths != config.net.encoder_widths ||
      teacher.config.net.scales != config.net.scales)
    throw std::invalid_argument("train_self_teaching: teacher/student architecture mismatch");
  if (teacher.checkpoint_refs.empty())
    throw std::invalid_argument("train_self_teaching: teacher has no checkpoint");
  std::filesystem::create_directories(out_dir);

  models::ModelCheckpoint tck = models::load_checkpoint(teacher.checkpoint_refs.front());
  DepthNet teacher_net(tck.config, tck.weights, tck.training_step, tck.seed);

  // the student sees the same training images the teacher saw
  std::vector<std::pair<std::string, ImageFrame>> images;
  for (int i : dataset.train_indices)
    images.emplace_back(dataset.sample(i).id, dataset.sample(i).left_t);
  const std::filesystem::path proxy_dir = out_dir / "proxies";
  uncertainty::self_teaching_targets(teacher_net, images, proxy_dir, config.d_min,
                                     config.d_max);
  const std::map<int, Tensor> proxies =
      load_proxies(dataset, proxy_dir, dataset.train_indices);

  ExperimentManifest m;
  m.root = out_dir;
  m.config = config;
  m.dataset_hash = dataset.dataset_sha256;
  m.teacher_ref = teacher.root / "experiment.json";
  m.proxy_dir = proxy_dir;
  m.metrics_path = out_dir / "training_log.csv";
  std::ofstream log(m.metrics_path);
  log << "tag,step,lr,total,photometric,smoothness,strategy_term\n";

  if (config.strategy.kind == StrategyKind::boot_self) {
    for (int member = 0; member < config.strategy.ensemble_size; ++member) {
      const std::vector<int> subset =
          bootstrap_subset(dataset.train_indices, config.strategy.bootstrap_fraction,
                           config.seed, member);
      const std::map<int, Tensor> member_proxies = load_proxies(dataset, proxy_dir, subset);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "student%02d", member);
      SingleRunResult r = train_single(
          config, dataset, subset,
          Rng::derive(config.seed, 0x5E1F + static_cast<std::uint64_t>(member)), out_dir,
          tag, &member_proxies, log);
      for (const auto& p : r.depth_checkpoints) m.checkpoint_refs.push_back(p);
    }
  } else {
    // self: plain student; snap+self: one student under the cyclic schedule
    SingleRunResult r =
        train_single(config, dataset, dataset.train_indices,
                     Rng::derive(config.seed, 0x5E1F), out_dir, "student", &proxies, log);
    m.checkpoint_refs = r.depth_checkpoints;
  }
  log.close();
  m.save();
  return m;
}

// --- inference ---------------------------------------------------------------

namespace {

DepthNet net_from_checkpoint(const std::filesystem::path& path) {
  models::ModelCheckpoint ck = models::load_checkpoint(path);
  if (ck.kind != "depth") throw std::runtime_error("not a depth checkpoint: " + path.string());
  return DepthNet(ck.config, ck.weights, ck.training_step, ck.seed);
}

geometry::DepthMap depth_from_forward(const DepthNet::Output& out, float d_min,
                                      float d_max) {
  return geometry::disparity_to_depth(out.disparity[0].value(), d_min, d_max);
}

Tensor variance_from_forward(const DepthNet::Output& out) {
  // exp of the predicted log-variance, clamped to stay finite in float32
  const Tensor& u = out.log_uncertainty.at(0).value();
  Tensor v(u.shape());
  for (std::int64_t i = 0; i < u.size(); ++i)
    v[i] = std::exp(std::min(u[i], 80.0f));
  return v;
}

std::vector<std::filesystem::path> ensemble_members(const ExperimentManifest& m) {
  const int n = m.config.strategy.ensemble_size;
  const auto& refs = m.checkpoint_refs;
  if (m.config.strategy.uses_snapshots()) {
    if (static_cast<int>(refs.size()) < n)
      throw std::runtime_error("fewer snapshots than ensemble size");
    return {refs.end() - n, refs.end()};  // later cycles are better converged
  }
  if (static_cast<int>(refs.size()) != n)
    throw std::runtime_error("checkpoint count does not match ensemble size");
  return refs;
}

}  // namespace

InferResult infer(const ExperimentManifest& manifest,
                  const geometry::ImageFrame& image, std::uint64_t sample_seed) {
  const TrainConfig& cfg = manifest.config;
  const StrategyConfig& strat = cfg.strategy;
  InferResult res;

  switch (strat.kind) {
    case StrategyKind::post: {
      DepthNet net = net_from_checkpoint(manifest.checkpoint_refs.front());
      uncertainty::DepthAndUncertainty du =
          uncertainty::post_uncertainty(net, image, cfg.d_min, cfg.d_max);
      res.depth = du.depth;
      res.uncertainty = du.uncertainty;
      res.depth_forwards = static_cast<int>(net.forward_count());
      return res;
    }
    case StrategyKind::repr:
    case StrategyKind::log:
    case StrategyKind::self: {
      DepthNet net = net_from_checkpoint(manifest.checkpoint_refs.front());
      DepthNet::Output out = net.forward(Var::constant(image.pixels));
      res.depth = depth_from_forward(out, cfg.d_min, cfg.d_max);
      res.uncertainty.values = variance_from_forward(out);
      res.depth_forwards = static_cast<int>(net.forward_count());
      return res;
    }
    case StrategyKind::drop: {
      DepthNet net = net_from_checkpoint(manifest.checkpoint_refs.front());
      if (net.config().dropout_p <= 0.0f)
        throw std::runtime_error("drop inference on a network without dropout");
      Rng rng(Rng::derive(cfg.seed ^ sample_seed, 0xDD));
      uncertainty::PredictionSet set;
      for (int i = 0; i < strat.ensemble_size; ++i) {
        DepthNet::Output out = net.forward(Var::constant(image.pixels), true, &rng);
        set.entries.push_back({depth_from_forward(out, cfg.d_min, cfg.d_max), {}});
      }
      uncertainty::Moments mo = uncertainty::empirical_moments(set);
      res.depth = mo.mean;
      res.uncertainty = mo.variance;
      res.depth_forwards = static_cast<int>(net.forward_count());
      return res;
    }
    case StrategyKind::boot:
    case StrategyKind::snap: {
      uncertainty::PredictionSet set;
      int forwards = 0;
      for (const auto& ref : ensemble_members(manifest)) {
        DepthNet net = net_from_checkpoint(ref);
        DepthNet::Output out = net.forward(Var::constant(image.pixels));
        set.entries.push_back({depth_from_forward(out, cfg.d_min, cfg.d_max), {}});
        forwards += static_cast<int>(net.forward_count());
      }
      uncertainty::Moments mo = uncertainty::empirical_moments(set);
      res.depth = mo.mean;
      res.uncertainty = mo.variance;
      res.depth_forwards = forwards;
      return res;
    }
    case StrategyKind::boot_log:
    case StrategyKind::boot_self:
    case StrategyKind::snap_log:
    case StrategyKind::snap_self: {
      uncertainty::PredictionSet set;
      int forwards = 0;
      for (const auto& ref : ensemble_members(manifest)) {
        DepthNet net = net_from_checkpoint(ref);
        DepthNet::Output out = net.forward(Var::constant(image.pixels));
        uncertainty::PredictionSet::Entry e;
        e.mean = depth_from_forward(out, cfg.d_min, cfg.d_max);
        e.variance = uncertainty::UncertaintyMap{variance_from_forward(out)};
        set.entries.push_back(std::move(e));
        forwards += static_cast<int>(net.forward_count());
      }
      uncertainty::Moments mo = uncertainty::bayesian_aggregate(set);
      res.depth = mo.mean;
      res.uncertainty = mo.variance;
      res.depth_forwards = forwards;
      return res;
    }
  }
  throw std::logic_error("unreachable strategy kind");
}

double photometric_loss_for_disparity(const TrainConfig& config,
                                      const data::DatasetSample& sample,
                                      const Tensor& sigmoid_disparity) {
  const Intrinsics& k = sample.left_t.intrinsics;
  Var target = Var::constant(sample.left_t.pixels);
  std::vector<SourceView> sources;
  const bool stereo = config.supervision != Supervision::M;
  const bool temporal = config.supervision != Supervision::S;
  if (stereo)
    sources.push_back(source_from_known_pose(sample.right_t, sample.pose_right));
  if (temporal) {
    sources.push_back(source_from_known_pose(sample.left_prev, sample.pose_prev));
    sources.push_back(source_from_known_pose(sample.left_next, sample.pose_next));
  }
  Var depth = geometry::disparity_to_depth(Var::constant(sigmoid_disparity),
                                           config.d_min, config.d_max);
  ScalePhotometric sp = scale_photometric(config, target, sources, depth, k);
  return ops::masked_mean(sp.min_error, sp.any_valid).scalar_value();
}

}  // namespace uqd::trainer
