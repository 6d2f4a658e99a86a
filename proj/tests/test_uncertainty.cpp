#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "uqdepth/hash.hpp"
#include "uqdepth/ops.hpp"
#include "uqdepth/uncertainty.hpp"

using namespace uqd;
using namespace uqd::uncertainty;

namespace {

geometry::DepthMap depth_of(Tensor values) {
  geometry::DepthMap d;
  d.d_min = 0.01f;
  d.d_max = 1000.0f;
  d.values = std::move(values);
  return d;
}

PredictionSet random_set(int n, int h, int w, Rng& rng, bool with_var) {
  PredictionSet set;
  for (int i = 0; i < n; ++i) {
    PredictionSet::Entry e;
    e.mean = depth_of(test::random_tensor({h, w}, rng, 1.0, 10.0));
    if (with_var)
      e.variance = UncertaintyMap{test::random_tensor({h, w}, rng, 0.0, 2.0)};
    set.entries.push_back(std::move(e));
  }
  return set;
}

}  // namespace

TEST_CASE("empirical_moments: degenerate, two-point, and brute-force cases") {
  PredictionSet same;
  for (int i = 0; i < 4; ++i)
    same.entries.push_back({depth_of(Tensor({2, 2}, 3.0f)), {}});
  Moments m0 = empirical_moments(same);
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(m0.mean.values[i] == 3.0f);
    CHECK(m0.variance.values[i] == 0.0f);
  }

  PredictionSet two;
  two.entries.push_back({depth_of(Tensor({1, 1}, 1.0f)), {}});
  two.entries.push_back({depth_of(Tensor({1, 1}, 3.0f)), {}});
  Moments m1 = empirical_moments(two);
  CHECK(m1.mean.values[0] == doctest::Approx(2.0f));
  CHECK(m1.variance.values[0] == doctest::Approx(1.0f));  // divisor N

  Rng rng(61);
  PredictionSet big = random_set(8, 16, 16, rng, false);
  Moments m2 = empirical_moments(big);
  for (std::int64_t i = 0; i < 256; ++i) {
    double mu = 0;
    for (const auto& e : big.entries) mu += e.mean.values[i];
    mu /= 8;
    double var = 0;
    for (const auto& e : big.entries)
      var += (e.mean.values[i] - mu) * (e.mean.values[i] - mu);
    var /= 8;
    CHECK(m2.mean.values[i] == doctest::Approx(mu).epsilon(1e-6));
    CHECK(m2.variance.values[i] == doctest::Approx(var).epsilon(1e-6));
  }
}

TEST_CASE("empirical_moments: permutation invariance and zero-variance iff equal") {
  Rng rng(62);
  PredictionSet set = random_set(5, 6, 6, rng, false);
  Moments a = empirical_moments(set);
  PredictionSet shuffled;
  for (int i : {3, 0, 4, 1, 2}) shuffled.entries.push_back(set.entries[i]);
  Moments b = empirical_moments(shuffled);
  for (std::int64_t i = 0; i < 36; ++i) {
    CHECK(a.mean.values[i] == doctest::Approx(b.mean.values[i]).epsilon(1e-7));
    CHECK(a.variance.values[i] == doctest::Approx(b.variance.values[i]).epsilon(1e-6));
    CHECK(a.variance.values[i] > 0.0f);  // random entries virtually never tie
  }
}

TEST_CASE("empirical_moments rejects undersized or predictive sets") {
  PredictionSet one;
  one.entries.push_back({depth_of(Tensor({2, 2}, 1.0f)), {}});
  CHECK_THROWS_AS(empirical_moments(one), std::invalid_argument);

  Rng rng(63);
  PredictionSet with_var = random_set(3, 2, 2, rng, true);
  CHECK_THROWS_AS(empirical_moments(with_var), std::invalid_argument);
}

TEST_CASE("snapshot_lr follows the cyclic cosine schedule") {
  SnapshotSchedule s;
  s.lambda0 = 0.02;
  s.total_steps = 100;
  s.cycles = 1;
  CHECK(snapshot_lr(s, 1) == doctest::Approx(0.02));          // cos 0 = 1
  CHECK(snapshot_lr(s, 51) == doctest::Approx(0.01));         // cos(pi/2) = 0
  const std::int64_t len = s.cycle_length();
  const double expected_end =
      0.01 * (std::cos(M_PI * static_cast<double>(len - 1) / len) + 1.0);
  CHECK(snapshot_lr(s, len) == doctest::Approx(expected_end).epsilon(1e-12));

  CHECK_THROWS_AS(snapshot_lr(s, 0), std::out_of_range);
  CHECK_THROWS_AS(snapshot_lr(s, 101), std::out_of_range);
  SnapshotSchedule bad = s;
  bad.cycles = 101;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("snapshot_lr is periodic and restarts at lambda0 each cycle") {
  SnapshotSchedule s;
  s.lambda0 = 0.1;
  s.total_steps = 60;
  s.cycles = 4;  // cycle length 15
  const std::int64_t len = s.cycle_length();
  CHECK(len == 15);
  for (std::int64_t t = 1; t + len <= 60; ++t)
    CHECK(snapshot_lr(s, t) == doctest::Approx(snapshot_lr(s, t + len)).epsilon(1e-12));
  for (int c = 0; c < 4; ++c)
    CHECK(snapshot_lr(s, 1 + c * len) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("repr_loss: exact mimic, disabled weight, hand arithmetic") {
  Rng rng(64);
  const Tensor t = test::random_tensor({4, 4}, rng);
  CHECK(repr_loss(Var::constant(t), Var::constant(t), 0.1f).scalar_value() == 0.0f);
  CHECK(repr_loss(Var::constant(t), Var::constant(t), 0.0f).scalar_value() == 0.0f);
  const Tensor u0({2, 2}, 0.0f);
  const Tensor target({2, 2}, 0.3f);
  CHECK(repr_loss(Var::constant(u0), Var::constant(target), 0.1f).scalar_value() ==
        doctest::Approx(0.03f));
}

TEST_CASE("repr_loss stops gradients into the reprojection target") {
  Rng rng(65);
  Var w = Var::leaf(test::random_tensor({3, 3}, rng, 0.5, 1.5), true);
  Var u = Var::leaf(test::random_tensor({3, 3}, rng, 0.0, 0.1), true);
  Var target = ops::mul(w, w);  // stands in for the photometric pipeline
  Var loss = repr_loss(u, target, 0.1f);
  backward(loss);
  CHECK(u.has_grad());
  CHECK(!w.has_grad());  // no path: the target is detached inside
}

TEST_CASE("repr_loss gradient matches finite differences") {
  Rng rng(66);
  const Tensor u0 = test::random_tensor({8, 8}, rng, 0.5, 0.9);
  const Tensor target = test::random_tensor({8, 8}, rng, 0.0, 0.3);  // u > target
  const double err = test::max_grad_rel_err(
      [&](const Var& u) { return repr_loss(u, Var::constant(target), 0.1f); }, u0,
      1e-2, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("log_likelihood_loss: fixed points, minimizer, gradient") {
  CHECK(log_likelihood_loss(Var::constant(Tensor({2, 2}, 0.0f)),
                            Var::constant(Tensor({2, 2}, 0.0f)))
            .scalar_value() == 0.0f);

  // for fixed residual r the minimum over u sits at u = log r with value 1+log r
  const double r = 0.73;
  double best_u = 0, best_loss = 1e9;
  for (double u = -4.0; u <= 4.0; u += 1e-4) {
    const double loss = r * std::exp(-u) + u;
    if (loss < best_loss) {
      best_loss = loss;
      best_u = u;
    }
  }
  CHECK(best_u == doctest::Approx(std::log(r)).epsilon(1e-3));
  CHECK(best_loss == doctest::Approx(1.0 + std::log(r)).epsilon(1e-6));
  // and the implementation agrees with the closed form at the minimizer
  const float at_min = log_likelihood_loss(
                           Var::constant(Tensor({1}, static_cast<float>(r))),
                           Var::constant(Tensor({1}, static_cast<float>(std::log(r)))))
                           .scalar_value();
  CHECK(at_min == doctest::Approx(1.0 + std::log(r)).epsilon(1e-5));

  // gradient w.r.t. u at (r=2, u=0) is 1 - 2 = -1 per pixel
  Var u = Var::leaf(Tensor({1}, 0.0f), true);
  backward(log_likelihood_loss(Var::constant(Tensor({1}, 2.0f)), u));
  CHECK(u.grad()[0] == doctest::Approx(-1.0f).epsilon(1e-6));

  const float inf = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(log_likelihood_loss(Var::constant(Tensor({1}, inf)),
                                      Var::constant(Tensor({1}, 0.0f))),
                  std::invalid_argument);
}

TEST_CASE("log_likelihood_loss gradient matches finite differences") {
  Rng rng(67);
  const Tensor residual = test::random_tensor({8, 8}, rng, 0.1, 2.0);
  const Tensor u0 = test::random_tensor({8, 8}, rng, -0.5, 0.5);
  const double err = test::max_grad_scaled_err(
      [&](const Var& u) {
        return log_likelihood_loss(Var::constant(residual), u);
      },
      u0, 1e-2);
  CHECK(err < 1e-3);
}

TEST_CASE("bayesian_aggregate: hand cases and the brute-force oracle") {
  PredictionSet two;
  two.entries.push_back(
      {depth_of(Tensor({1, 1}, 1.0f)), UncertaintyMap{Tensor({1, 1}, 0.0f)}});
  two.entries.push_back(
      {depth_of(Tensor({1, 1}, 3.0f)), UncertaintyMap{Tensor({1, 1}, 0.0f)}});
  Moments m = bayesian_aggregate(two);
  CHECK(m.mean.values[0] == doctest::Approx(2.0f));
  CHECK(m.variance.values[0] == doctest::Approx(1.0f));

  PredictionSet collapsed;
  for (int i = 0; i < 5; ++i)
    collapsed.entries.push_back(
        {depth_of(Tensor({2, 2}, 4.0f)), UncertaintyMap{Tensor({2, 2}, 0.7f)}});
  Moments mc = bayesian_aggregate(collapsed);
  for (int i = 0; i < 4; ++i) {
    CHECK(mc.mean.values[i] == doctest::Approx(4.0f));
    CHECK(mc.variance.values[i] == doctest::Approx(0.7f).epsilon(1e-6));
  }

  Rng rng(68);
  PredictionSet big = random_set(8, 16, 16, rng, true);
  Moments mb = bayesian_aggregate(big);
  Moments emp = [&] {
    PredictionSet plain = big;
    for (auto& e : plain.entries) e.variance.reset();
    return empirical_moments(plain);
  }();
  for (std::int64_t i = 0; i < 256; ++i) {
    double mu = 0;
    for (const auto& e : big.entries) mu += e.mean.values[i];
    mu /= 8;
    double var = 0;
    for (const auto& e : big.entries) {
      const double d = e.mean.values[i] - mu;
      var += d * d + e.variance->values[i];
    }
    var /= 8;
    CHECK(mb.mean.values[i] == doctest::Approx(mu).epsilon(1e-6));
    CHECK(mb.variance.values[i] == doctest::Approx(var).epsilon(1e-6));
    // adds non-negative predictive terms on top of the empirical variance
    CHECK(mb.variance.values[i] >= emp.variance.values[i] - 1e-6f);
  }

  PredictionSet plain = big;
  for (auto& e : plain.entries) e.variance.reset();
  CHECK_THROWS_AS(bayesian_aggregate(plain), std::invalid_argument);
}

TEST_CASE("post_uncertainty: constant net collapses to zero uncertainty") {
  // a network that ignores its input: zero all weights so every disparity is
  // sigmoid(bias), symmetric under flipping
  models::DepthNetConfig cfg;
  cfg.encoder_widths = {4, 6};
  cfg.scales = 1;
  models::DepthNet net(cfg, 3);
  for (const auto& [name, var] : net.params().entries())
    const_cast<Var&>(var).mutable_value().fill(0.0f);
  Rng rng(69);
  geometry::Intrinsics k = test::tiny_intrinsics(16, 16, 16.0f);
  geometry::ImageFrame img = test::random_frame(k, rng);
  DepthAndUncertainty du = post_uncertainty(net, img, 0.1f, 100.0f);
  const float expected_depth =
      geometry::disparity_to_depth(Tensor({1}, 0.5f), 0.1f, 100.0f).values[0];
  for (std::int64_t i = 0; i < du.depth.values.size(); ++i) {
    CHECK(du.depth.values[i] == doctest::Approx(expected_depth));
    CHECK(du.uncertainty.values[i] == 0.0f);
  }
}

TEST_CASE("post_uncertainty equals the explicit flip pipeline and uses 2 forwards") {
  models::DepthNetConfig cfg;
  cfg.encoder_widths = {4, 6};
  cfg.scales = 1;
  models::DepthNet net(cfg, 91);
  Rng rng(70);
  geometry::Intrinsics k = test::tiny_intrinsics(16, 16, 16.0f);
  geometry::ImageFrame img = test::random_frame(k, rng);

  const std::int64_t before = net.forward_count();
  DepthAndUncertainty du = post_uncertainty(net, img, 0.1f, 100.0f);
  CHECK(net.forward_count() - before == 2);

  // recompose by hand: flip -> forward -> back-flip -> average / abs diff
  const Var direct = net.forward(Var::constant(img.pixels)).disparity[0];
  const Var flipped_in = ops::flip_horizontal(Var::constant(img.pixels));
  const Var mirrored = ops::flip_horizontal(net.forward(flipped_in).disparity[0]);
  const Tensor d = geometry::disparity_to_depth(direct.value(), 0.1f, 100.0f).values;
  const Tensor db = geometry::disparity_to_depth(mirrored.value(), 0.1f, 100.0f).values;
  for (std::int64_t i = 0; i < d.size(); ++i) {
    CHECK(du.depth.values[i] == doctest::Approx(0.5f * (d[i] + db[i])).epsilon(1e-6));
    CHECK(du.uncertainty.values[i] ==
          doctest::Approx(std::fabs(d[i] - db[i])).epsilon(1e-5));
  }
}

TEST_CASE("self_teaching_targets is deterministic and keyed by the teacher hash") {
  models::DepthNetConfig cfg;
  cfg.encoder_widths = {4, 6};
  cfg.scales = 1;
  models::DepthNet teacher(cfg, 123);
  Rng rng(71);
  geometry::Intrinsics k = test::tiny_intrinsics(16, 16, 16.0f);
  std::vector<std::pair<std::string, geometry::ImageFrame>> images;
  for (int i = 0; i < 3; ++i)
    images.emplace_back("img" + std::to_string(i), test::random_frame(k, rng));

  const auto dir1 = std::filesystem::temp_directory_path() / "uqd_proxy_a";
  const auto dir2 = std::filesystem::temp_directory_path() / "uqd_proxy_b";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  self_teaching_targets(teacher, images, dir1, 0.1f, 100.0f);
  self_teaching_targets(teacher, images, dir2, 0.1f, 100.0f);
  for (int i = 0; i < 3; ++i) {
    const auto f1 = dir1 / ("img" + std::to_string(i) + ".uqdm");
    const auto f2 = dir2 / ("img" + std::to_string(i) + ".uqdm");
    CHECK(io::sha256_file(f1) == io::sha256_file(f2));
  }
  CHECK(std::filesystem::exists(dir1 / "proxy_manifest.json"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("strategy parsing, classification, validation") {
  for (StrategyKind kind : all_strategies())
    CHECK(strategy_from_string(strategy_to_string(kind)) == kind);
  CHECK_THROWS_AS(strategy_from_string("bogus"), std::invalid_argument);
  CHECK(all_strategies().size() == 11);

  StrategyConfig c;
  c.kind = StrategyKind::boot;
  c.ensemble_size = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.ensemble_size = 2;
  CHECK_NOTHROW(c.validate());
  c.beta = 0.0f;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  StrategyConfig log_cfg;
  log_cfg.kind = StrategyKind::log;
  CHECK(log_cfg.needs_uncertainty_head());
  CHECK(!log_cfg.is_bayesian());
  StrategyConfig bs;
  bs.kind = StrategyKind::boot_self;
  CHECK(bs.is_bayesian());
  CHECK(bs.uses_bootstrap());
  CHECK(bs.uses_self_teaching());
  CHECK(bs.needs_uncertainty_head());
}

TEST_CASE("uncertainty map validation") {
  UncertaintyMap ok{Tensor({2, 2}, 0.5f)};
  CHECK_NOTHROW(ok.validate());
  UncertaintyMap neg{Tensor({2, 2}, -0.1f)};
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
  UncertaintyMap nan_map{Tensor({1, 1}, std::numeric_limits<float>::quiet_NaN())};
  CHECK_THROWS_AS(nan_map.validate(), std::invalid_argument);
}
