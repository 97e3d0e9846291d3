#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "handtraj/common/rng.hpp"
#include "handtraj/eval/baselines.hpp"
#include "handtraj/eval/metrics.hpp"
#include "handtraj/eval/plot.hpp"
#include "handtraj/eval/report.hpp"

using namespace handtraj;
using namespace handtraj::eval;

namespace {

HandTrajectory full(std::size_t n, Point2 base, Point2 step) {
  HandTrajectory t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.at(Side::kLeft, i) = base + static_cast<double>(i) * step;
    t.at(Side::kRight, i) = Point2{1.0 - base.x, base.y} + static_cast<double>(i) * step;
  }
  return t;
}

HandTrajectory random_traj(Rng& rng, std::size_t n, double p_valid) {
  HandTrajectory t(n);
  for (Side s : kSides)
    for (std::size_t i = 0; i < n; ++i)
      if (rng.bernoulli(p_valid)) t.at(s, i) = Point2{rng.uniform(), rng.uniform()};
  return t;
}

// Plain double loop over (step, side).
double oracle_ade(const HandTrajectory& pred, const HandTrajectory& gt) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < gt.horizon(); ++t) {
    for (Side s : {Side::kLeft, Side::kRight}) {
      if (!gt.at(s, t)) continue;
      const auto& p = pred.at(s, t);
      const auto& g = *gt.at(s, t);
      sum += p ? std::sqrt((p->x - g.x) * (p->x - g.x) + (p->y - g.y) * (p->y - g.y)) : std::sqrt(2.0);
      ++n;
    }
  }
  return sum / n;
}

double oracle_wde(const HandTrajectory& pred, const HandTrajectory& gt, const std::vector<double>& w) {
  double out = 0.0;
  for (std::size_t t = 0; t < gt.horizon(); ++t) {
    double sum = 0.0;
    int n = 0;
    for (Side s : {Side::kLeft, Side::kRight}) {
      if (!gt.at(s, t)) continue;
      const auto& p = pred.at(s, t);
      sum += p ? std::hypot(p->x - gt.at(s, t)->x, p->y - gt.at(s, t)->y) : std::sqrt(2.0);
      ++n;
    }
    if (n) out += w[t] * sum / n;
  }
  return out;
}

gt::GtSample sample(const std::string& id, const HandTrajectory& context, const HandTrajectory& future) {
  gt::GtSample s;
  s.clip_id = id;
  s.context = context;
  s.context_length = context.horizon();
  s.future = future;
  return s;
}

// Constant-velocity hands: context over T steps, future over the next N.
std::vector<gt::GtSample> cv_dataset(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<gt::GtSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    HandTrajectory ctx(10), fut(4);
    for (Side s : kSides) {
      const Point2 p0{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
      const Point2 v{rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};
      for (std::size_t t = 0; t < 10; ++t) ctx.at(s, t) = p0 + static_cast<double>(t) * v;
      for (std::size_t t = 0; t < 4; ++t) fut.at(s, t) = p0 + static_cast<double>(10 + t) * v;
    }
    out.push_back(sample("s" + std::to_string(1000 + i), ctx, fut));
  }
  return out;
}

}  // namespace

TEST_CASE("ade basics") {
  const auto g = full(4, {0.2, 0.3}, {0.05, 0.01});
  CHECK(ade(g, g) == 0.0);
  HandTrajectory gt1(1), p1(1);
  gt1.at(Side::kRight, 0) = Point2{0.1, 0.1};
  p1.at(Side::kRight, 0) = Point2{0.4, 0.5};
  CHECK(ade(p1, gt1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(ade(HandTrajectory(3), g), HorizonMismatch);
}

TEST_CASE("ade, wde match brute-force oracles on random masked data") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    HandTrajectory g = random_traj(rng, n, 0.7);
    g.at(Side::kRight, 0) = Point2{0.5, 0.5};
    const HandTrajectory p = random_traj(rng, n, 0.8);
    CHECK(std::abs(ade(p, g) - oracle_ade(p, g)) < 1e-12);
    std::vector<double> w(n);
    double sum = 0.0;
    for (auto& x : w) sum += (x = rng.uniform());
    for (auto& x : w) x /= sum;
    const WdeWeights ww{w};
    CHECK(std::abs(wde(p, g, ww) - oracle_wde(p, g, ww.values())) < 1e-12);
  }
}

TEST_CASE("fde: final offset only") {
  const auto g = full(4, {0.2, 0.3}, {0.05, 0.01});
  auto p = g;
  for (Side s : kSides) p.at(s, 3) = *g.at(s, 3) + Point2{0.0, 0.2};
  CHECK(fde(p, g) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(ade(p, g) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(fde(g, g) == 0.0);
  auto g2 = g;
  g2.at(Side::kLeft, 3).reset();
  g2.at(Side::kRight, 3).reset();
  CHECK_THROWS_AS(fde(p, g2), NoValidFinalStep);
}

TEST_CASE("wde identities are exact") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(10);
    const auto g = random_traj(rng, n, 1.0);
    const auto p = random_traj(rng, n, 1.0);
    CHECK(wde(p, g, WdeWeights::uniform(n)) == ade(p, g));
    CHECK(wde(p, g, WdeWeights::final_step(n)) == fde(p, g));
  }
}

TEST_CASE("wde weight validation and default scheme") {
  CHECK_THROWS_AS(WdeWeights({0.5, 0.4}), ConfigError);
  CHECK_THROWS_AS(WdeWeights({1.5, -0.5}), ConfigError);
  const auto w = WdeWeights::linear(4);
  CHECK(w[0] == doctest::Approx(0.1));
  CHECK(w[3] == doctest::Approx(0.4));
  const auto g = full(4, {0.2, 0.3}, {0.05, 0.01});
  CHECK_THROWS_AS(wde(g, g, WdeWeights::linear(3)), HorizonMismatch);
}

TEST_CASE("missing predictions are charged the maximum distance") {
  HandTrajectory g(2), p(2);
  g.at(Side::kLeft, 0) = Point2{0.5, 0.5};
  g.at(Side::kLeft, 1) = Point2{0.5, 0.5};
  p.at(Side::kLeft, 0) = Point2{0.5, 0.5};
  CHECK(ade(p, g) == doctest::Approx(std::sqrt(2.0) / 2));
  // A prediction where gt is invalid is ignored.
  p.at(Side::kRight, 0) = Point2{0.0, 0.0};
  CHECK(ade(p, g) == doctest::Approx(std::sqrt(2.0) / 2));
}

TEST_CASE("metric properties: nonnegative, zero iff equal, left/right symmetric") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_traj(rng, 5, 0.8);
    g.at(Side::kLeft, 4) = Point2{0.3, 0.3};
    const auto p = random_traj(rng, 5, 0.9);
    const auto w = WdeWeights::linear(5);
    CHECK(ade(p, g) >= 0.0);
    CHECK(ade(p.swapped(), g.swapped()) == ade(p, g));
    CHECK(fde(p.swapped(), g.swapped()) == fde(p, g));
    CHECK(wde(p.swapped(), g.swapped(), w) == wde(p, g, w));
    auto q = p;
    for (Side s : kSides)
      for (std::size_t t = 0; t < 5; ++t)
        if (g.at(s, t)) q.at(s, t) = g.at(s, t);
    CHECK(ade(q, g) == 0.0);
    CHECK(wde(q, g, w) == 0.0);
  }
}

TEST_CASE("kalman: stationary track predicts the same point") {
  HandTrajectory ctx(10);
  for (std::size_t t = 0; t < 10; ++t) ctx.at(Side::kRight, t) = Point2{0.4, 0.6};
  const auto out = kalman_baseline(ctx, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(out.at(Side::kRight, k)->x == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(out.at(Side::kRight, k)->y == doctest::Approx(0.6).epsilon(1e-12));
    CHECK_FALSE(out.at(Side::kLeft, k));
  }
}

TEST_CASE("kalman: exact constant-velocity track extrapolates on the line") {
  HandTrajectory ctx(10);
  const Point2 p0{0.2, 0.7}, v{0.013, -0.021};
  for (std::size_t t = 0; t < 10; ++t)
    if (t != 4) ctx.at(Side::kLeft, t) = p0 + static_cast<double>(t) * v;
  const auto out = kalman_baseline(ctx, 4, {1e-9, 1e-9});
  for (std::size_t k = 0; k < 4; ++k) {
    const Point2 want = p0 + static_cast<double>(10 + k) * v;
    CHECK(std::abs(out.at(Side::kLeft, k)->x - want.x) < 1e-6);
    CHECK(std::abs(out.at(Side::kLeft, k)->y - want.y) < 1e-6);
  }
}

TEST_CASE("kalman: a single observation leaves the side invalid; outputs are clamped") {
  HandTrajectory ctx(10);
  ctx.at(Side::kLeft, 5) = Point2{0.5, 0.5};
  for (std::size_t t = 0; t < 10; ++t) ctx.at(Side::kRight, t) = Point2{0.5 + 0.06 * t, 0.5};
  const auto out = kalman_baseline(ctx, 4);
  CHECK(out.valid_count(Side::kLeft) == 0);
  CHECK(out.at(Side::kRight, 3)->x == 1.0);
  CHECK_THROWS_AS(kalman_baseline(ctx, 4, {0.0, 1e-2}), ConfigError);
}

TEST_CASE("constant baselines") {
  HandTrajectory ctx(5);
  ctx.at(Side::kRight, 1) = Point2{0.1, 0.1};
  ctx.at(Side::kRight, 3) = Point2{0.3, 0.2};
  const auto cp = constant_position_baseline(ctx, 2);
  CHECK(*cp.at(Side::kRight, 1) == Point2{0.3, 0.2});
  const auto cv = constant_velocity_baseline(ctx, 2);
  // Velocity (0.1, 0.05) per step from step 3; future steps are 5 and 6.
  CHECK(cv.at(Side::kRight, 0)->x == doctest::Approx(0.5));
  CHECK(cv.at(Side::kRight, 1)->y == doctest::Approx(0.35));
  CHECK_FALSE(cv.at(Side::kLeft, 0));
}

TEST_CASE("self-consistency") {
  Rng rng(5);
  const auto g = random_traj(rng, 4, 0.7);
  const std::vector<HandTrajectory> one{g};
  CHECK(self_consistency(one) == g);

  HandTrajectory a(1), b(1), c(1);
  a.at(Side::kLeft, 0) = Point2{0.2, 0.4};
  b.at(Side::kLeft, 0) = Point2{0.6, 0.8};
  const std::vector<HandTrajectory> two{a, b};
  CHECK(self_consistency(two).at(Side::kLeft, 0)->x == doctest::Approx(0.4));
  CHECK(self_consistency(two).at(Side::kLeft, 0)->y == doctest::Approx(0.6));

  // Tie on validity counts as valid; minority validity is dropped.
  const std::vector<HandTrajectory> tie{a, c};
  CHECK(*self_consistency(tie).at(Side::kLeft, 0) == *a.at(Side::kLeft, 0));
  const std::vector<HandTrajectory> minority{a, c, c};
  CHECK_FALSE(self_consistency(minority).at(Side::kLeft, 0));

  CHECK_THROWS_AS(self_consistency(std::span<const HandTrajectory>{}), EmptyGenerationSet);
  const std::vector<HandTrajectory> mixed{HandTrajectory(2), HandTrajectory(3)};
  CHECK_THROWS_AS(self_consistency(mixed), HorizonMismatch);
}

TEST_CASE("self-consistency reduces error of noisy generations") {
  const auto truth = full(4, {0.3, 0.4}, {0.02, 0.01});
  double single = 0.0, averaged = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<HandTrajectory> gens;
    for (int k = 0; k < 8; ++k) {
      HandTrajectory g = truth;
      for (Side s : kSides)
        for (std::size_t t = 0; t < 4; ++t) g.at(s, t) = *truth.at(s, t) + Point2{rng.normal(0, 0.05), rng.normal(0, 0.05)};
      single += ade(g, truth) / 8.0;
      gens.push_back(g);
    }
    averaged += ade(self_consistency(gens), truth);
  }
  CHECK(averaged < single);
}

TEST_CASE("evaluate: perfect predictions score zero") {
  const auto ds = cv_dataset(20, 1);
  std::vector<PredictionRecord> preds;
  for (const auto& s : ds) preds.push_back(prediction_from_gt(s));
  const auto r = evaluate(ds, preds);
  CHECK(r.mean_ade == 0.0);
  CHECK(r.mean_fde == 0.0);
  CHECK(r.mean_wde == 0.0);
  CHECK(r.sample_count == 20);
}

TEST_CASE("evaluate: Kalman beats constant position by 2x on constant-velocity data") {
  const auto ds = cv_dataset(50, 2);
  const auto kf = evaluate(ds, baseline_predictions(ds, BaselineKind::kKalman));
  const auto cp = evaluate(ds, baseline_predictions(ds, BaselineKind::kConstantPosition));
  CHECK(cp.mean_ade >= 2.0 * kf.mean_ade);
  CHECK(kf.source == "kf");
}

TEST_CASE("evaluate: order invariance, aggregates, parallel agreement") {
  auto ds = cv_dataset(40, 3);
  const auto preds = baseline_predictions(ds, BaselineKind::kConstantVelocity);
  const auto a = evaluate(ds, preds);
  std::mt19937 g(9);
  std::shuffle(ds.begin(), ds.end(), g);
  auto shuffled_preds = preds;
  std::shuffle(shuffled_preds.begin(), shuffled_preds.end(), g);
  EvalOptions par;
  par.parallel = true;
  const auto b = evaluate(ds, shuffled_preds, par);
  CHECK(a.mean_ade == b.mean_ade);
  CHECK(a.mean_fde == b.mean_fde);
  CHECK(a.mean_wde == b.mean_wde);
  CHECK(a.to_json()["samples"] == b.to_json()["samples"]);

  double sum = 0.0;
  for (const auto& s : a.samples) sum += s.metrics.ade;
  CHECK(std::abs(sum / a.samples.size() - a.mean_ade) < 1e-12);
}

TEST_CASE("evaluate: schema errors") {
  const auto ds = cv_dataset(3, 4);
  auto preds = baseline_predictions(ds, BaselineKind::kKalman);
  preds.pop_back();
  CHECK_THROWS_AS(evaluate(ds, preds), SchemaMismatch);
  preds = baseline_predictions(ds, BaselineKind::kKalman);
  preds.push_back(preds.front());
  CHECK_THROWS_AS(evaluate(ds, preds), SchemaMismatch);
  preds = baseline_predictions(ds, BaselineKind::kKalman);
  preds[0].generations[0] = HandTrajectory(3);
  CHECK_THROWS_AS(evaluate(ds, preds), HorizonMismatch);
  CHECK_THROWS_AS(evaluate(std::span<const gt::GtSample>{}, preds), DataError);
}

TEST_CASE("evaluate: K generations are combined before scoring") {
  const auto ds = cv_dataset(1, 5);
  PredictionRecord p;
  p.clip_id = ds[0].clip_id;
  auto up = ds[0].future, down = ds[0].future;
  for (Side s : kSides)
    for (std::size_t t = 0; t < 4; ++t) {
      up.at(s, t) = *up.at(s, t) + Point2{0.0, 0.01};
      down.at(s, t) = *down.at(s, t) - Point2{0.0, 0.01};
    }
  p.generations = {up, down};
  const std::vector<PredictionRecord> preds{p};
  const auto r = evaluate(ds, preds);
  CHECK(r.mean_ade < 1e-12);
  CHECK(r.generations == 2);
}

TEST_CASE("prediction records round-trip through files") {
  const auto ds = cv_dataset(4, 6);
  auto preds = baseline_predictions(ds, BaselineKind::kKalman);
  preds[1].generations.push_back(preds[1].generations[0]);
  const auto path = std::filesystem::temp_directory_path() / "handtraj_preds.jsonl";
  std::vector<Json> recs;
  for (const auto& p : preds) recs.push_back(prediction_to_json(p));
  write_jsonl(path, recs);
  const auto back = load_predictions(path);
  REQUIRE(back.size() == preds.size());
  CHECK(back[1].generations.size() == 2);
  CHECK(back[2].generations[0] == preds[2].generations[0]);
  write_text(path, "{\"clip_id\": \"x\"}\n");
  CHECK_THROWS_AS(load_predictions(path), SchemaMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("report text and json carry weights and hashes") {
  const auto ds = cv_dataset(5, 7);
  EvalOptions opts;
  opts.config_hash = "abc123";
  opts.seed = 42;
  const auto r = evaluate(ds, baseline_predictions(ds, BaselineKind::kKalman), opts);
  const auto j = r.to_json();
  CHECK(j["config_hash"] == "abc123");
  CHECK(j["seed"] == 42);
  CHECK(j["wde"]["weights"].size() == 4);
  CHECK(r.to_text().find("ADE") != std::string::npos);
}

TEST_CASE("plots draw both hands in their colors") {
  HandTrajectory g(2), p(2);
  g.at(Side::kLeft, 0) = Point2{0.25, 0.5};
  g.at(Side::kRight, 1) = Point2{0.75, 0.5};
  p.at(Side::kLeft, 0) = Point2{0.25, 0.25};
  const Image img = plot_trajectories(nullptr, g, &p, {101, 101, 2});
  CHECK(img.at(25, 50) == Rgb{30, 60, 230});
  CHECK(img.at(75, 50) == Rgb{230, 40, 40});
  CHECK(img.at(0, 0) == Rgb{235, 235, 235});
  const auto path = std::filesystem::temp_directory_path() / "handtraj_plot.ppm";
  write_ppm(path, img);
  CHECK(read_ppm(path) == img);
  std::filesystem::remove(path);
}
