#include "uqdepth/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "uqdepth/hash.hpp"
#include "uqdepth/ops.hpp"

namespace uqd::models {

using namespace uqd::ops;

void DepthNetConfig::validate() const {
  if (encoder_widths.empty())
    throw std::invalid_argument("depth net: encoder_widths must be non-empty");
  for (int w : encoder_widths)
    if (w <= 0) throw std::invalid_argument("depth net: encoder widths must be positive");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f))
    throw std::invalid_argument("depth net: dropout_p outside [0,1)");
  if (scales < 1 || scales > levels())
    throw std::invalid_argument("depth net: scales must be in [1, encoder levels]");
}

PoseEstimate PoseEstimate::normalized() const {
  PoseEstimate out = *this;
  const double theta = axis_angle.norm();
  if (theta >= M_PI) {
    // wrap the rotation angle into (-pi, pi]
    double wrapped = std::fmod(theta + M_PI, 2.0 * M_PI);
    if (wrapped < 0) wrapped += 2.0 * M_PI;
    wrapped -= M_PI;
    out.axis_angle = axis_angle * (wrapped / theta);
  }
  return out;
}

geometry::Pose PoseEstimate::to_pose() const {
  return geometry::Pose{geometry::rotation_from_axis_angle(axis_angle), translation};
}

Var ParamSet::create(const std::string& name, Tensor init) {
  for (const auto& [n, _] : entries_)
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = Var::leaf(std::move(init), true);
  entries_.emplace_back(name, v);
  return v;
}

const Var& ParamSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& [_, v] : entries_) out.push_back(v);
  return out;
}

void ParamSet::zero_grads() {
  for (auto& [_, v] : entries_) v.zero_grad();
}

namespace {

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng, float gain = 1.0f) {
  Tensor t(std::move(shape));
  const double std_dev = gain * std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.normal() * std_dev);
  return t;
}

// Creates (or restores) one conv layer's parameters.
struct ConvLayer {
  Var w, b;
};

ConvLayer make_conv(ParamSet& ps, const std::string& name, int in_c, int out_c,
                    int ksize, Rng* rng, float bias_init = 0.0f) {
  Tensor wt, bt({out_c}, bias_init);
  if (rng)
    wt = he_normal({out_c, in_c, ksize, ksize}, in_c * ksize * ksize, *rng);
  else
    wt = Tensor({out_c, in_c, ksize, ksize});
  return ConvLayer{ps.create(name + "_w", std::move(wt)),
                   ps.create(name + "_b", std::move(bt))};
}

void restore_params(ParamSet& ps,
                    const std::vector<std::pair<std::string, Tensor>>& weights) {
  if (weights.size() != ps.entries().size())
    throw std::invalid_argument("checkpoint does not match network: parameter count");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& [name, tensor] = weights[i];
    const auto& [expect_name, var] = ps.entries()[i];
    if (name != expect_name || !tensor.same_shape(var.value()))
      throw std::invalid_argument("checkpoint does not match network: " + name);
    const_cast<Var&>(var).mutable_value() = tensor;
  }
}

}  // namespace

DepthNet::DepthNet(DepthNetConfig cfg, std::uint64_t net_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  seed = net_seed;
  Rng rng(Rng::derive(net_seed, 0xD0));
  build(&rng);
}

DepthNet::DepthNet(DepthNetConfig cfg,
                   const std::vector<std::pair<std::string, Tensor>>& weights,
                   std::int64_t step, std::uint64_t net_seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  training_step = step;
  seed = net_seed;
  build(nullptr);
  restore_params(params_, weights);
}

void DepthNet::build(Rng* rng) {
  const auto& w = cfg_.encoder_widths;
  const int levels = cfg_.levels();
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;
  int in_c = 3;
  for (int i = 0; i < levels; ++i) {
    make_conv(params_, "enc" + std::to_string(i) + "_down", in_c, w[i], 3, rng ? &r : nullptr);
    make_conv(params_, "enc" + std::to_string(i) + "_conv", w[i], w[i], 3, rng ? &r : nullptr);
    in_c = w[i];
  }
  for (int i = levels - 2; i >= 0; --i)
    make_conv(params_, "dec" + std::to_string(i), w[i + 1] + w[i], w[i], 3,
              rng ? &r : nullptr);
  make_conv(params_, "dec_full", w[0], w[0], 3, rng ? &r : nullptr);
  for (int s = 0; s < cfg_.scales; ++s) {
    const int feat = s == 0 ? w[0] : w[s - 1];
    // start near the far end of the depth range: sigmoid(-4) ~ 0.018
    make_conv(params_, "disp" + std::to_string(s), feat, 1, 3, rng ? &r : nullptr, -4.0f);
    if (cfg_.predict_uncertainty)
      make_conv(params_, "uncert" + std::to_string(s), feat, 1, 3, rng ? &r : nullptr);
  }
}

DepthNet::Output DepthNet::forward(const Var& image, bool sample_dropout, Rng* rng) {
  const Tensor& img = image.value();
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("depth net: input must be {3,h,w}");
  const int levels = cfg_.levels();
  const int div = 1 << levels;
  if (img.dim(1) % div != 0 || img.dim(2) % div != 0)
    throw std::invalid_argument("depth net: input dims must be divisible by 2^levels");
  const bool use_dropout = sample_dropout && cfg_.dropout_p > 0.0f;
  if (use_dropout && !rng)
    throw std::invalid_argument("depth net: dropout sampling requires an rng");
  ++forward_count_;

  auto conv_of = [&](const std::string& name, const Var& x, int stride) {
    return conv2d(x, params_.get(name + "_w"), params_.get(name + "_b"), stride, 1);
  };

  std::vector<Var> skips;
  Var x = image;
  for (int i = 0; i < levels; ++i) {
    x = relu(conv_of("enc" + std::to_string(i) + "_down", x, 2));
    x = relu(conv_of("enc" + std::to_string(i) + "_conv", x, 1));
    skips.push_back(x);
  }

  auto maybe_drop = [&](Var v) {
    return use_dropout ? dropout(v, cfg_.dropout_p, *rng) : v;
  };

  // decoder features indexed by scale (0 = full resolution)
  std::vector<Var> dec_by_scale(static_cast<std::size_t>(levels));
  x = skips[levels - 1];
  for (int i = levels - 2; i >= 0; --i) {
    Var up = upsample_nearest2x(x);
    x = elu(conv_of("dec" + std::to_string(i), concat_channels({up, skips[i]}), 1));
    x = maybe_drop(x);
    dec_by_scale[static_cast<std::size_t>(i + 1)] = x;
  }
  x = elu(conv_of("dec_full", upsample_nearest2x(x), 1));
  x = maybe_drop(x);
  dec_by_scale[0] = x;

  Output out;
  for (int s = 0; s < cfg_.scales; ++s) {
    const Var& feat = dec_by_scale[static_cast<std::size_t>(s)];
    Var disp = sigmoid(conv_of("disp" + std::to_string(s), feat, 1));
    out.disparity.push_back(
        reshape(disp, {disp.value().dim(1), disp.value().dim(2)}));
    if (cfg_.predict_uncertainty) {
      Var u = conv_of("uncert" + std::to_string(s), feat, 1);
      out.log_uncertainty.push_back(reshape(u, {u.value().dim(1), u.value().dim(2)}));
    }
  }
  return out;
}

ModelCheckpoint DepthNet::checkpoint() const {
  ModelCheckpoint ck;
  ck.kind = "depth";
  ck.config = cfg_;
  ck.training_step = training_step;
  ck.seed = seed;
  for (const auto& [name, var] : params_.entries())
    ck.weights.emplace_back(name, var.value());
  return ck;
}

PoseNet::PoseNet(std::uint64_t net_seed, std::vector<int> widths)
    : widths_(std::move(widths)) {
  seed = net_seed;
  Rng rng(Rng::derive(net_seed, 0xA1));
  build(&rng);
}

PoseNet::PoseNet(const std::vector<std::pair<std::string, Tensor>>& weights,
                 std::vector<int> widths, std::int64_t step, std::uint64_t net_seed)
    : widths_(std::move(widths)) {
  training_step = step;
  seed = net_seed;
  build(nullptr);
  restore_params(params_, weights);
}

void PoseNet::build(Rng* rng) {
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;
  int in_c = 6;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    make_conv(params_, "pose_enc" + std::to_string(i), in_c, widths_[i], 3,
              rng ? &r : nullptr);
    in_c = widths_[i];
  }
  // zero-initialized output heads
  params_.create("pose_rot_w", Tensor({3, in_c, 1, 1}));
  params_.create("pose_rot_b", Tensor({3}));
  params_.create("pose_trans_w", Tensor({3, in_c, 1, 1}));
  params_.create("pose_trans_b", Tensor({3}));
}

PoseNet::Output PoseNet::forward(const Var& frame_a, const Var& frame_b) {
  check_same_shape(frame_a.value(), frame_b.value(), "pose net inputs");
  Var x = concat_channels({frame_a, frame_b});
  for (std::size_t i = 0; i < widths_.size(); ++i)
    x = relu(conv2d(x, params_.get("pose_enc" + std::to_string(i) + "_w"),
                    params_.get("pose_enc" + std::to_string(i) + "_b"), 2, 1));
  x = mean_hw(x);
  Var rot = conv2d(x, params_.get("pose_rot_w"), params_.get("pose_rot_b"), 1, 0);
  Var trans = conv2d(x, params_.get("pose_trans_w"), params_.get("pose_trans_b"), 1, 0);
  Output out;
  out.axis_angle = affine(reshape(rot, {3}), 0.01f, 0.0f);
  out.translation = affine(reshape(trans, {3}), 0.01f, 0.0f);
  return out;
}

PoseEstimate PoseNet::estimate(const geometry::ImageFrame& a,
                               const geometry::ImageFrame& b) {
  Output o = forward(Var::constant(a.pixels), Var::constant(b.pixels));
  PoseEstimate est;
  est.axis_angle = {o.axis_angle.value()[0], o.axis_angle.value()[1],
                    o.axis_angle.value()[2]};
  est.translation = {o.translation.value()[0], o.translation.value()[1],
                     o.translation.value()[2]};
  return est.normalized();
}

ModelCheckpoint PoseNet::checkpoint() const {
  ModelCheckpoint ck;
  ck.kind = "pose";
  ck.pose_widths = widths_;
  ck.training_step = training_step;
  ck.seed = seed;
  for (const auto& [name, var] : params_.entries())
    ck.weights.emplace_back(name, var.value());
  return ck;
}

// --- checkpoint serialization ------------------------------------------------

namespace {

constexpr char kMagic[4] = {'U', 'Q', 'C', 'K'};

template <typename T>
void put(std::vector<char>& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size())
    throw std::runtime_error("checkpoint: truncated blob");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void put_string(std::vector<char>& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string take_string(const std::vector<char>& in, std::size_t& off) {
  const auto n = take<std::uint32_t>(in, off);
  if (off + n > in.size()) throw std::runtime_error("checkpoint: truncated blob");
  std::string s(in.data() + off, in.data() + off + n);
  off += n;
  return s;
}

}  // namespace

std::vector<char> serialize_checkpoint(const ModelCheckpoint& ck) {
  std::vector<char> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put(out, static_cast<std::uint32_t>(1));  // version
  put_string(out, ck.kind);
  put(out, static_cast<std::int64_t>(ck.training_step));
  put(out, static_cast<std::uint64_t>(ck.seed));
  put(out, static_cast<std::uint32_t>(ck.config.encoder_widths.size()));
  for (int w : ck.config.encoder_widths) put(out, static_cast<std::int32_t>(w));
  put(out, ck.config.dropout_p);
  put(out, static_cast<std::uint8_t>(ck.config.predict_uncertainty ? 1 : 0));
  put(out, static_cast<std::int32_t>(ck.config.scales));
  put(out, static_cast<std::uint32_t>(ck.pose_widths.size()));
  for (int w : ck.pose_widths) put(out, static_cast<std::int32_t>(w));
  put(out, static_cast<std::uint32_t>(ck.weights.size()));
  for (const auto& [name, t] : ck.weights) {
    put_string(out, name);
    put(out, static_cast<std::uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put(out, static_cast<std::int32_t>(t.dim(i)));
    const char* p = reinterpret_cast<const char*>(t.data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  std::size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  off = 4;
  const auto version = take<std::uint32_t>(bytes, off);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  ModelCheckpoint ck;
  ck.kind = take_string(bytes, off);
  ck.training_step = take<std::int64_t>(bytes, off);
  ck.seed = take<std::uint64_t>(bytes, off);
  const auto n_widths = take<std::uint32_t>(bytes, off);
  ck.config.encoder_widths.clear();
  for (std::uint32_t i = 0; i < n_widths; ++i)
    ck.config.encoder_widths.push_back(take<std::int32_t>(bytes, off));
  ck.config.dropout_p = take<float>(bytes, off);
  ck.config.predict_uncertainty = take<std::uint8_t>(bytes, off) != 0;
  ck.config.scales = take<std::int32_t>(bytes, off);
  const auto n_pose = take<std::uint32_t>(bytes, off);
  for (std::uint32_t i = 0; i < n_pose; ++i)
    ck.pose_widths.push_back(take<std::int32_t>(bytes, off));
  const auto n_weights = take<std::uint32_t>(bytes, off);
  for (std::uint32_t i = 0; i < n_weights; ++i) {
    std::string name = take_string(bytes, off);
    const auto ndim = take<std::uint32_t>(bytes, off);
    std::vector<int> shape;
    std::int64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(take<std::int32_t>(bytes, off));
      count *= shape.back();
    }
    if (off + static_cast<std::size_t>(count) * sizeof(float) > bytes.size())
      throw std::runtime_error("checkpoint: truncated weights");
    std::vector<float> data(static_cast<std::size_t>(count));
    std::memcpy(data.data(), bytes.data() + off, data.size() * sizeof(float));
    off += data.size() * sizeof(float);
    ck.weights.emplace_back(std::move(name), Tensor(shape, std::move(data)));
  }
  return ck;
}

void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path) {
  const std::vector<char> blob = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  f.close();

  nlohmann::json j;
  j["kind"] = ck.kind;
  j["training_step"] = ck.training_step;
  j["seed"] = ck.seed;
  j["content_sha256"] = io::sha256_hex(blob.data(), blob.size());
  if (ck.kind == "depth") {
    j["config"] = {{"encoder_widths", ck.config.encoder_widths},
                   {"dropout_p", ck.config.dropout_p},
                   {"predict_uncertainty", ck.config.predict_uncertainty},
                   {"scales", ck.config.scales}};
  } else {
    j["pose_widths"] = ck.pose_widths;
  }
  std::ofstream sidecar(path.string() + ".json");
  sidecar << j.dump(2) << "\n";
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  return deserialize_checkpoint(blob);
}

AdamOptimizer::AdamOptimizer(std::vector<Var> params, float lr, float beta1,
                             float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Var& p : params_) {
    m_.emplace_back(p.value().shape());
    v_.emplace_back(p.value().shape());
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    Tensor& w = params_[i].mutable_value();
    const Tensor& g = params_[i].grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0f - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0f - beta2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void AdamOptimizer::zero_grads() {
  for (Var& p : params_) p.zero_grad();
}

}  // namespace uqd::models
