#include <cmath>

#include "conic/downstream/harness.h"
#include "conic/feature_catalog.h"
#include "doctest.h"
#include "oracles.h"

using namespace conic;
using namespace conic::testing;

namespace {

// Random features with one column that reveals the grade (or drives the
// hazard) and some missing cells.
DownstreamInput toy_input(Task task, std::size_t n, std::uint64_t seed, int signal_column) {
  Rng rng(seed);
  DownstreamInput in;
  in.feature_names = canonical_feature_names();
  in.x = DenseMatrix(n, kNumFeatures);
  in.targets.task = task;
  for (std::size_t i = 0; i < n; ++i) {
    in.patient_ids.push_back("p" + std::to_string(1000 + i));
    for (int c = 0; c < kNumFeatures; ++c) {
      in.x(i, c) = uniform_int(rng, 0, 19) == 0 ? std::nan("") : uniform_real(rng, 0, 1);
    }
    if (task == Task::kGrading) {
      const int g = static_cast<int>(i % 3);
      in.targets.labels.push_back(g);
      in.x(i, signal_column) = g + uniform_real(rng, 0, 0.5);
    } else {
      const double z = uniform_real(rng, -1, 1);
      in.x(i, signal_column) = z;
      const double t = -std::log(uniform_real(rng, 1e-6, 1)) * 365.0 * std::exp(-2.0 * z);
      in.targets.survival.push_back({in.patient_ids.back(), t, uniform_int(rng, 0, 4) != 0});
    }
  }
  return in;
}

DownstreamOptions small_options() {
  DownstreamOptions o;
  o.search_n = 3;
  o.repeats = 1;
  o.n_perm = 2;
  o.seed = 17;
  return o;
}

}  // namespace

TEST_CASE("full pipeline on a small grading set") {
  const auto in = toy_input(Task::kGrading, 45, 1, 220);
  const auto opt = small_options();
  const auto rep = run_downstream(in, opt);
  CHECK(rep.splits.size() == 5);
  CHECK(rep.sampled.size() == 3);
  REQUIRE(rep.importance.has_value());
  CHECK(rep.importance->per_split.size() == 5);
  if (!rep.importance->degenerate) {
    REQUIRE(rep.results.size() == 2);
    CHECK(rep.results[1].set == FeatureSet::kSelected);
    CHECK(rep.results[1].columns == rep.importance->selected_ids);
    CHECK(rep.selected_vs_all.has_value());
  }
  const auto& d = rep.results[0];
  CHECK(d.set == FeatureSet::kAll);
  CHECK(d.columns.size() == 222);
  CHECK(d.per_split.size() == 5);
  CHECK(d.mean_valid.size() == 3);
  CHECK(d.winner_mean_valid == d.mean_valid[d.winner]);
  for (double v : d.mean_valid) {
    if (!std::isnan(v)) CHECK(v <= d.winner_mean_valid);
  }
  // the revealing column is picked up
  CHECK(rep.importance->aggregated_mean[220] > rep.importance->median);

  const auto j = to_json(rep, in);
  CHECK(j["task"] == "grading");
  CHECK(j["metric"] == "qwk");
  CHECK(j["patients"] == 45);
}

TEST_CASE("label-revealing features give near-perfect test QWK") {
  auto in = toy_input(Task::kGrading, 60, 2, 216);
  Rng rng(6);
  for (std::size_t i = 0; i < 60; ++i) {
    for (int c = 217; c < kNumFeatures; ++c) {
      in.x(i, c) = in.targets.labels[i] + uniform_real(rng, 0, 0.5);
    }
  }
  // Separable by brute force: grade g occupies [g, g + 0.5] in every column.
  for (int c = 216; c < kNumFeatures; ++c) {
    for (std::size_t i = 0; i < 60; ++i) {
      CHECK(std::floor(in.x(i, c)) == in.targets.labels[i]);
    }
  }
  auto opt = small_options();
  opt.feature_set = FeatureSet::kDensity;
  const auto rep = run_downstream(in, opt);
  REQUIRE(rep.results.size() == 1);
  double sum = 0.0;
  for (const auto& s : rep.results[0].per_split) sum += s.test.primary;
  CHECK(sum / 5.0 > 0.9);
  CHECK_FALSE(rep.importance.has_value());
}

TEST_CASE("density subset uses the last six columns") {
  const auto in = toy_input(Task::kSurvival, 40, 3, 217);
  auto opt = small_options();
  opt.feature_set = FeatureSet::kDensity;
  const auto rep = run_downstream(in, opt);
  REQUIRE(rep.results.size() == 1);
  CHECK(rep.results[0].columns == std::vector<int>{216, 217, 218, 219, 220, 221});
  double sum = 0.0;
  for (const auto& s : rep.results[0].per_split) sum += s.test.primary;
  CHECK(sum / 5.0 > 0.6);
}

TEST_CASE("reports are deterministic and thread independent") {
  const auto in = toy_input(Task::kSurvival, 40, 4, 100);
  auto opt = small_options();
  const auto a = to_json(run_downstream(in, opt), in).dump();
  const auto b = to_json(run_downstream(in, opt), in).dump();
  opt.threads = 4;
  const auto c = to_json(run_downstream(in, opt), in).dump();
  CHECK(a == b);
  CHECK(a == c);
  opt.seed = 18;
  CHECK(to_json(run_downstream(in, opt), in).dump() != a);
}

TEST_CASE("harness errors") {
  auto in = toy_input(Task::kGrading, 30, 5, 0);
  for (auto& l : in.targets.labels) l = 1;
  CHECK_THROWS_AS(run_downstream(in, small_options()), Error);

  auto narrow = toy_input(Task::kGrading, 30, 5, 0);
  narrow.x = DenseMatrix(30, 10);
  try {
    run_downstream(narrow, small_options());
    FAIL("expected WidthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kWidthMismatch);
  }
}
