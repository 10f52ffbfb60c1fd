// Acceptance run: one PASS/FAIL line per criterion. argv[1] is the path of
// the conic-bench executable used by the end-to-end check.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "conic/countmetrics.h"
#include "conic/downstream/gbt.h"
#include "conic/downstream/importance.h"
#include "conic/downstream/metrics.h"
#include "conic/io.h"
#include "conic/morphology.h"
#include "conic/segmetrics.h"
#include "conic/spatial.h"
#include "json.hpp"
#include "oracles.h"
#include "temp_dir.h"

using namespace conic;
using namespace conic::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMatchingBudgetS = 10.0;
constexpr double kAggregationTol = 1e-9;
constexpr double kPqProductTol = 1e-12;
constexpr double kCompositionTol = 1e-9;
constexpr double kLargeSpatialBudgetS = 300.0;
constexpr double kDiskAreaRelTol = 0.02;
constexpr double kDiskEccMax = 0.05;
constexpr double kEllipseEccTol = 0.02;
constexpr double kGradientRelTol = 1e-5;
constexpr double kLossSlack = 1e-12;  // relative
constexpr double kMinTestQwk = 0.7;
constexpr double kMinTestCIndex = 0.65;
constexpr double kEndToEndBudgetS = 15.0 * 60.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ------------------------------------------------------------ segmentation

Outcome matching_oracle() {
  Rng rng(1001);
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const int h = uniform_int(rng, 1, 32), w = uniform_int(rng, 1, 32);
    const auto gt = random_grid(rng, h, w, 8);
    const auto pr = uniform_int(rng, 0, 2) ? perturb(gt, rng) : random_grid(rng, h, w, 8);
    const auto got = match_instances(gt.build(), pr.build());
    const auto want = brute_force_match(gt, pr);
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& g = got.per_class[c];
      if (g.tp != want[c].tp || g.fp != want[c].fp || g.fn != want[c].fn ||
          g.iou_sum != want[c].iou_sum) {
        ++mismatches;
      }
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < kMatchingBudgetS,
          "500 grids, " + std::to_string(mismatches) + " mismatching class entries, " +
              fmt(s, 3) + " s"};
}

Outcome mpq_aggregation() {
  const auto c = NucleusClass::kNeutrophil;
  MatchStats a, b;
  a[c] = {1, 0, 0, 1.0};
  b[c] = {0, 0, 1, 0.0};
  const std::vector<MatchStats> images = {a, b};
  const double pooled = aggregate_mpq(images).mpq_plus;
  const double per_image =
      (panoptic_quality(a).mpq_plus + panoptic_quality(b).mpq_plus) / 2.0;
  const bool ok = std::fabs(pooled - 2.0 / 3.0) <= kAggregationTol &&
                  std::fabs(per_image - 0.5) <= kAggregationTol;
  return {ok, "pooled " + fmt(pooled, 10) + ", per-image average " + fmt(per_image, 10)};
}

Outcome pq_identity() {
  Rng rng(1002);
  int bad_identity = 0, bad_product = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = random_grid(rng, uniform_int(rng, 4, 48), uniform_int(rng, 4, 48), 10);
    for (const auto& q : panoptic_quality(match_instances(g.build(), g.build())).per_class) {
      if (q.defined && (q.pq != 1.0 || q.dq != 1.0 || q.sq != 1.0)) ++bad_identity;
    }
    const auto p = perturb(g, rng);
    for (const auto& q : panoptic_quality(match_instances(g.build(), p.build())).per_class) {
      if (q.defined && std::fabs(q.pq - q.dq * q.sq) > kPqProductTol) ++bad_product;
    }
  }
  return {bad_identity == 0 && bad_product == 0,
          "identity failures " + std::to_string(bad_identity) + ", PQ != DQ*SQ " +
              std::to_string(bad_product)};
}

// ------------------------------------------------------------ composition

Outcome composition_oracle() {
  Rng rng(1003);
  double worst = 0.0;
  int flag_mismatch = 0, nonzero_constant = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = uniform_int(rng, 2, 60);
    const int hi = uniform_int(rng, 0, 80);
    CountMatrix truth(n), pred(n);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < kNumClasses; ++c) {
        truth[i][c] = uniform_int(rng, 0, hi);
        pred[i][c] = uniform_int(rng, 0, 3) == 0 ? truth[i][c] : uniform_int(rng, 0, hi);
      }
    }
    const auto r = composition_metrics(pred, truth);
    std::array<double, kNumClasses> mean{};
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<double> tc(n), pc(n);
      for (int i = 0; i < n; ++i) {
        tc[i] = truth[i][c];
        pc[i] = pred[i][c];
        mean[c] += truth[i][c];
      }
      mean[c] /= n;
      const auto o = scalar_composition(tc, pc);
      const auto& g = r.per_class[c];
      if (g.r2_defined != o.r2_defined || g.maape_defined != o.maape_defined) {
        ++flag_mismatch;
        continue;
      }
      if (o.r2_defined) worst = std::max(worst, std::fabs(g.r2 - o.r2));
      worst = std::max(worst, std::fabs(g.mae - o.mae));
      if (o.maape_defined) worst = std::max(worst, std::fabs(g.maape - o.maape));
    }
    CountMatrix constant(n);
    for (auto& row : constant) row = mean;
    for (const auto& c : composition_metrics(constant, truth).per_class) {
      if (c.r2_defined && c.r2 != 0.0) ++nonzero_constant;
    }
  }
  return {worst <= kCompositionTol && flag_mismatch == 0 && nonzero_constant == 0,
          "1000 matrices, max deviation " + fmt(worst, 3) + ", flag mismatches " +
              std::to_string(flag_mismatch) + ", constant-predictor R2 != 0: " +
              std::to_string(nonzero_constant)};
}

Outcome counting_rule() {
  Rng rng(1004);
  int mismatches = 0;
  const auto crop = CropSpec::central(224, 256, 256);
  for (int t = 0; t < 200; ++t) {
    // Blobs concentrated near the crop border so both outcomes occur.
    RawGrid g{256, 256, std::vector<std::uint32_t>(256 * 256, 0),
              std::vector<std::uint8_t>(256 * 256, 0)};
    const int n = uniform_int(rng, 0, 40);
    for (int k = 1; k <= n; ++k) {
      const auto cls = static_cast<std::uint8_t>(uniform_int(rng, 1, kNumClasses));
      const bool edge = uniform_int(rng, 0, 1);
      const int r0 = edge ? uniform_int(rng, 0, 30) : uniform_int(rng, 0, 240);
      const int c0 = uniform_int(rng, 0, 240);
      const int hh = uniform_int(rng, 1, 16), ww = uniform_int(rng, 1, 16);
      for (int r = r0; r < std::min(256, r0 + hh); ++r) {
        for (int c = c0; c < std::min(256, c0 + ww); ++c) {
          g.inst[r * 256 + c] = static_cast<std::uint32_t>(k);
          g.cls[r * 256 + c] = cls;
        }
      }
    }
    const auto got = counts_from_segmentation(g.build(), crop);
    std::map<std::uint32_t, std::array<int, 2>> tally;  // inside, total
    std::map<std::uint32_t, std::uint8_t> cls;
    for (int r = 0; r < 256; ++r) {
      for (int c = 0; c < 256; ++c) {
        const auto l = g.inst[r * 256 + c];
        if (!l) continue;
        cls[l] = g.cls[r * 256 + c];
        ++tally[l][1];
        if (r >= 16 && r < 240 && c >= 16 && c < 240) ++tally[l][0];
      }
    }
    std::array<std::int64_t, kNumClasses> want{};
    for (const auto& [l, tv] : tally) {
      if (2 * tv[0] > tv[1]) ++want[cls[l] - 1];
    }
    if (got.counts != want) ++mismatches;
  }
  return {mismatches == 0, "200 patches, " + std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------------ spatial

Outcome spatial_oracle(int threads) {
  Rng rng(1005);
  long long mismatches = 0, queries = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = uniform_int(rng, 1, 2000);
    const double extent = uniform_real(rng, 100, 5000);
    std::vector<OraclePoint> pts;
    std::vector<SpatialPoint> sp;
    for (int i = 0; i < n; ++i) {
      double x = uniform_real(rng, 0, extent), y = uniform_real(rng, 0, extent);
      if (uniform_int(rng, 0, 7) == 0) {
        x = std::round(x / 40.0) * 40.0;  // exact 200/400 distances on the lattice
        y = std::round(y / 40.0) * 40.0;
      }
      const int c = uniform_int(rng, 1, kNumClasses);
      pts.push_back({x, y, c});
      sp.push_back({x, y, static_cast<NucleusClass>(c), i});
    }
    for (double radius : {200.0, 400.0}) {
      const SpatialIndex idx(sp, radius / 4.0);
      for (int i = 0; i < n; ++i) {
        ++queries;
        if (neighbor_counts(idx, sp[i], radius) != brute_force_neighbors(pts, i, radius)) {
          ++mismatches;
        }
      }
    }
  }

  // 10^7 points: ten slides of 10^6 nuclei at about 2,500 nuclei per mm^2.
  std::vector<std::vector<SpatialPoint>> slides(10);
  for (auto& s : slides) {
    s.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) {
      s.push_back({uniform_real(rng, 0, 20000), uniform_real(rng, 0, 20000),
                   class_at(uniform_int(rng, 0, 5)), i});
    }
  }
  const std::vector<double> radii = {200.0, 400.0};
  const auto t0 = Clock::now();
  const auto f = colocalisation_features(slides, radii, threads);
  const double s = seconds_since(t0);
  const bool finite = std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); });
  return {mismatches == 0 && finite && s < kLargeSpatialBudgetS,
          std::to_string(queries) + " queries, " + std::to_string(mismatches) +
              " mismatches; 1e7-point pass " + fmt(s, 3) + " s on " + std::to_string(threads) +
              " thread(s)"};
}

// ------------------------------------------------------------ morphology

BinaryMask raster_ellipse(double a, double b) {
  std::vector<Pixel> px;
  const int reach = static_cast<int>(std::ceil(std::max(a, b))) + 1;
  for (int r = -reach; r <= reach; ++r) {
    for (int c = -reach; c <= reach; ++c) {
      if ((c / a) * (c / a) + (r / b) * (r / b) <= 1.0) px.push_back({r, c});
    }
  }
  return BinaryMask::from_pixels(px);
}

Outcome morphology() {
  const auto disk = region_properties(raster_ellipse(20, 20), 1.0);
  const double disk_rel = std::fabs(disk.area_um2 - std::numbers::pi * 400.0) /
                          (std::numbers::pi * 400.0);
  const auto ell = region_properties(raster_ellipse(20, 10), 1.0);
  const double ecc_err = std::fabs(ell.eccentricity - std::sqrt(0.75));

  Rng rng(1006);
  int scale_failures = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Pixel> px;
    int r = 0, c = 0;
    for (int s = uniform_int(rng, 1, 400); s > 0; --s) {
      px.push_back({r, c});
      r += uniform_int(rng, -1, 1);
      c += uniform_int(rng, -1, 1);
    }
    const auto m = BinaryMask::from_pixels(px);
    const double mpp = uniform_real(rng, 0.1, 1.0);
    const auto a = region_properties(m, mpp);
    const auto b = region_properties(m, 2.0 * mpp);
    if (b.area_um2 != 4.0 * a.area_um2 || b.perimeter_um != 2.0 * a.perimeter_um ||
        b.major_axis_um != 2.0 * a.major_axis_um || b.minor_axis_um != 2.0 * a.minor_axis_um ||
        b.eccentricity != a.eccentricity) {
      ++scale_failures;
    }
  }
  const bool ok = disk_rel <= kDiskAreaRelTol && disk.eccentricity < kDiskEccMax &&
                  ecc_err <= kEllipseEccTol && scale_failures == 0;
  return {ok, "disk area rel. error " + fmt(disk_rel, 3) + ", disk eccentricity " +
                  fmt(disk.eccentricity, 3) + ", 2:1 eccentricity " + fmt(ell.eccentricity, 5) +
                  ", scale failures " + std::to_string(scale_failures)};
}

// ------------------------------------------------------------ learner

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-4});
}

Outcome learner() {
  Rng rng(1007);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    // softmax instance
    const int k = uniform_int(rng, 2, 4), n = uniform_int(rng, 2, 15);
    std::vector<int> y(n);
    for (auto& v : y) v = uniform_int(rng, 0, k - 1);
    std::vector<double> m(static_cast<std::size_t>(n * k));
    for (auto& v : m) v = uniform_real(rng, -3, 3);
    std::vector<double> g, h, gp, hp, gm, hm;
    softmax_gradients(y, m, k, g, h);
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto plus = m, minus = m;
      plus[i] += eps;
      minus[i] -= eps;
      softmax_gradients(y, plus, k, gp, hp);
      softmax_gradients(y, minus, k, gm, hm);
      worst = std::max(worst, rel_err(g[i], (softmax_loss(y, plus, k) -
                                             softmax_loss(y, minus, k)) / (2 * eps)));
      worst = std::max(worst, rel_err(h[i], (gp[i] - gm[i]) / (2 * eps)));
    }
    // cox instance
    std::vector<SurvivalRecord> s(static_cast<std::size_t>(n));
    for (auto& r : s) {
      r.time = uniform_int(rng, 1, 6);
      r.event = uniform_int(rng, 0, 1);
    }
    s[0].event = true;
    std::vector<double> f(static_cast<std::size_t>(n));
    for (auto& v : f) v = uniform_real(rng, -2, 2);
    cox_gradients(s, f, g, h);
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto plus = f, minus = f;
      plus[i] += eps;
      minus[i] -= eps;
      cox_gradients(s, plus, gp, hp);
      cox_gradients(s, minus, gm, hm);
      worst = std::max(worst, rel_err(g[i], (cox_loss(s, plus) - cox_loss(s, minus)) / (2 * eps)));
      worst = std::max(worst, rel_err(h[i], (gp[i] - gm[i]) / (2 * eps)));
    }
  }

  int increases = 0;
  for (int d = 0; d < 10; ++d) {
    const std::size_t n = 50 + 10 * d;
    DenseMatrix x(n, 8);
    std::vector<int> y(n);
    std::vector<SurvivalRecord> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 8; ++c) {
        x(i, c) = uniform_int(rng, 0, 9) == 0 ? std::nan("") : uniform_real(rng, -1, 1);
      }
      y[i] = uniform_int(rng, 0, 2);
      s[i] = {"", uniform_real(rng, 1, 100), uniform_int(rng, 0, 3) != 0};
    }
    s[0].event = true;
    GbtHyperparams p;
    p.num_boost_round = 100;
    p.max_depth = 1 + d % 6;
    p.learning_rate = 0.05 + 0.05 * (d % 3);
    const auto ms = fit_softmax(x, y, 3, p, d);
    const auto mc = fit_cox(x, s, p, d);
    for (const auto* loss : {&ms.training_loss, &mc.training_loss}) {
      for (std::size_t r = 1; r < loss->size(); ++r) {
        if ((*loss)[r] > (*loss)[r - 1] * (1.0 + kLossSlack)) ++increases;
      }
    }
  }

  // separable toy: one informative feature, depth 1, 50 rounds, lr 0.1
  const std::size_t n = 60;
  DenseMatrix x(n, 4);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    x(i, 0) = y[i] ? uniform_real(rng, 0.05, 1) : uniform_real(rng, -1, -0.05);
    for (int c = 1; c < 4; ++c) x(i, c) = uniform_real(rng, -1, 1);
  }
  GbtHyperparams p;
  p.max_depth = 1;
  p.num_boost_round = 50;
  p.learning_rate = 0.1;
  const auto prob = predict_proba(fit_softmax(x, y, 2, p, 0), x);
  int correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += argmax(prob.row(i)) == y[i];
  }
  const double accuracy = static_cast<double>(correct) / n;
  return {worst < kGradientRelTol && increases == 0 && accuracy == 1.0,
          "max FD rel. error " + fmt(worst, 3) + ", loss increases " +
              std::to_string(increases) + " over 10 datasets x 100 rounds x 2 objectives" +
              ", toy accuracy " + fmt(accuracy)};
}

// ------------------------------------------------------------ downstream metrics

Outcome downstream_metrics() {
  const std::vector<int> a = {0, 1, 2};
  const bool qwk_ok = qwk(a, a) == 1.0 && qwk(a, std::vector<int>{2, 1, 0}) == -1.0 &&
                      qwk(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}) == 0.0;
  const std::vector<SurvivalRecord> all = {{"", 1, true}, {"", 2, true}, {"", 3, true}};
  const std::vector<SurvivalRecord> cens = {{"", 1, true}, {"", 2, false}, {"", 3, true}};
  const bool c_ok = c_index(std::vector<double>{3, 2, 1}, all) == 1.0 &&
                    c_index(std::vector<double>{1, 2, 3}, all) == 0.0 &&
                    c_index(std::vector<double>{3, 1, 2}, cens) == 1.0;
  Rng rng(1008);
  int asym = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = uniform_int(rng, 3, 80);
    std::vector<SurvivalRecord> s(static_cast<std::size_t>(n));
    std::vector<double> risk(static_cast<std::size_t>(n)), neg(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = {"", static_cast<double>(uniform_int(rng, 1, 20)), uniform_int(rng, 0, 2) == 0};
      risk[i] = uniform_int(rng, 0, 1) ? uniform_real(rng, -2, 2) : uniform_int(rng, 0, 3);
      neg[i] = -risk[i];
    }
    s[0] = {"", 0.5, true};
    if (c_index(risk, s) + c_index(neg, s) != 1.0) ++asym;
  }
  return {qwk_ok && c_ok && asym == 0,
          std::string("QWK hand cases ") + (qwk_ok ? "exact" : "wrong") + ", C-index hand cases " +
              (c_ok ? "exact" : "wrong") + ", antisymmetry violations " + std::to_string(asym) +
              "/100"};
}

Outcome selection_rule() {
  Rng rng(1009);
  std::vector<std::vector<double>> per_split(25, std::vector<double>(kNumFeatures));
  for (auto& v : per_split) {
    for (auto& x : v) x = uniform_real(rng, -0.05, 0.1);
  }
  const auto r = select_features(per_split);
  std::set<double> distinct(r.aggregated_mean.begin(), r.aggregated_mean.end());
  int rule_violations = 0;
  for (int f = 0; f < kNumFeatures; ++f) {
    if (r.selected[f] != (r.aggregated_mean[f] > r.median)) ++rule_violations;
  }
  // Constructed ties at the median are never selected.
  std::vector<double> tied(kNumFeatures);
  for (int f = 0; f < kNumFeatures; ++f) tied[f] = f < 100 ? 0.0 : f < 122 ? 0.5 : 1.0;
  const auto t = select_features({tied});
  const bool ties_ok = t.median == 0.5 && t.selected_ids.size() == 100 &&
                       t.selected_ids.front() == 122;
  return {distinct.size() == 222 && r.selected_ids.size() == 111 && rule_violations == 0 && ties_ok,
          std::to_string(distinct.size()) + " distinct importances, " +
              std::to_string(r.selected_ids.size()) + " selected, rule violations " +
              std::to_string(rule_violations) + ", median ties " + (ties_ok ? "excluded" : "WRONG")};
}

Outcome bootstrap() {
  const auto c = NucleusClass::kEpithelial;
  MatchStats one;
  one[c] = {3, 1, 2, 2.4};
  const std::vector<MatchStats> single = {one};
  auto metric = [](std::span<const MatchStats> s) { return aggregate_mpq(s).mpq_plus; };
  const auto a = bootstrap_metric(std::span<const MatchStats>(single), metric, 100, 42);
  const bool zero_width = a.lo == a.hi && a.mean == a.lo && a.samples.size() == 100;

  Rng rng(1010);
  std::vector<MatchStats> many(30);
  for (auto& m : many) {
    m[c] = {uniform_int(rng, 0, 5), uniform_int(rng, 0, 3), uniform_int(rng, 0, 3), 0.0};
    m[c].iou_sum = 0.75 * static_cast<double>(m[c].tp);
  }
  const auto b1 = bootstrap_metric(std::span<const MatchStats>(many), metric, 100, 7);
  const auto b2 = bootstrap_metric(std::span<const MatchStats>(many), metric, 100, 7);
  const bool deterministic = b1.samples == b2.samples && b1.lo == b2.lo && b1.hi == b2.hi;
  return {zero_width && deterministic,
          "single image [" + fmt(a.lo) + ", " + fmt(a.hi) + "], repeat run " +
              (deterministic ? "identical" : "DIFFERENT")};
}

// ------------------------------------------------------------ end to end

struct SyntheticCohort {
  fs::path nuclei_dir, manifest, grades, survival;
};

// 200 patients. Grade raises the epithelial share and tightens epithelial
// clusters; an independent lymphocyte share drives the hazard.
SyntheticCohort write_cohort(const fs::path& root) {
  Rng rng(2024);
  SyntheticCohort c{root / "nuclei", root / "manifest.csv", root / "grades.csv",
                    root / "survival.csv"};
  fs::create_directories(c.nuclei_dir);
  std::map<std::string, std::string> manifest;
  std::map<std::string, int> grades;
  std::vector<SurvivalRecord> survival;
  const double mpp = 0.5;
  for (int p = 0; p < 200; ++p) {
    char id[16];
    std::snprintf(id, sizeof id, "PT%03d", p);
    const std::string pid = id;
    const int grade = p % 3;
    const double epi = 0.15 + 0.2 * grade + uniform_real(rng, -0.05, 0.05);
    const double lym = uniform_real(rng, 0.05, 0.30);
    grades[pid] = grade;

    const double log_hazard = 12.0 * (lym - 0.175);
    const double t = -std::log(uniform_real(rng, 1e-9, 1.0)) * 1000.0 * std::exp(-log_hazard);
    const double censor = uniform_real(rng, 200.0, 6000.0);
    survival.push_back({pid, std::max(1.0, std::min(t, censor)), t <= censor});

    for (int slide = 0; slide < 2; ++slide) {
      const std::string image = pid + "_s" + std::to_string(slide);
      manifest[image] = pid;
      std::vector<NucleusRecord> nuclei;
      const int count = uniform_int(rng, 120, 180);
      std::vector<std::pair<double, double>> glands;
      for (int gi = 0; gi < 4; ++gi) {
        glands.push_back({uniform_real(rng, 200, 1300), uniform_real(rng, 200, 1300)});
      }
      const double spread = 220.0 - 60.0 * grade;
      for (int k = 0; k < count; ++k) {
        const double u = uniform_real(rng, 0, 1);
        NucleusClass cls;
        if (u < epi) {
          cls = NucleusClass::kEpithelial;
        } else if (u < epi + lym) {
          cls = NucleusClass::kLymphocyte;
        } else {
          constexpr NucleusClass rest[] = {NucleusClass::kConnective, NucleusClass::kPlasma,
                                           NucleusClass::kNeutrophil, NucleusClass::kEosinophil};
          const double v = uniform_real(rng, 0, 1);
          cls = rest[v < 0.55 ? 0 : v < 0.8 ? 1 : v < 0.92 ? 2 : 3];
        }
        double x, y;
        if (cls == NucleusClass::kEpithelial) {
          const auto& g = glands[uniform_int(rng, 0, 3)];
          const double ang = uniform_real(rng, 0, 2 * std::numbers::pi);
          const double rad = spread * std::sqrt(uniform_real(rng, 0, 1));
          x = g.first + rad * std::cos(ang);
          y = g.second + rad * std::sin(ang);
        } else {
          x = uniform_real(rng, 0, 1500);
          y = uniform_real(rng, 0, 1500);
        }
        const double a = cls == NucleusClass::kEpithelial ? uniform_real(rng, 4, 7)
                                                          : uniform_real(rng, 2, 4);
        const double b = a * uniform_real(rng, 0.5, 1.0);
        const double rot = uniform_real(rng, 0, std::numbers::pi);
        NucleusRecord r;
        r.nucleus_id = k;
        r.cls = cls;
        r.centroid_x_um = x;
        r.centroid_y_um = y;
        for (int v = 0; v < 12; ++v) {
          const double th = 2 * std::numbers::pi * v / 12;
          const double ex = a * std::cos(th), ey = b * std::sin(th);
          r.contour.push_back({x + ex * std::cos(rot) - ey * std::sin(rot),
                               y + ex * std::sin(rot) + ey * std::cos(rot)});
        }
        r.area_px = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(polygon_area(r.contour) / (mpp * mpp))));
        r.mpp = mpp;
        r.image_id = image;
        r.patient_id = pid;
        nuclei.push_back(std::move(r));
      }
      io::write_nuclei_table(c.nuclei_dir / (image + ".ndjson"), nuclei);
    }
  }
  io::write_manifest(c.manifest, manifest);
  io::write_grade_labels(c.grades, grades);
  io::write_survival_table(c.survival, survival);
  return c;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct PipelineRun {
  double seconds = 0.0;
  std::string features, grading, survival;
};

PipelineRun run_pipeline(const std::string& bench, const SyntheticCohort& c, const fs::path& out,
                         int threads, const fs::path& config) {
  fs::create_directories(out);
  const std::string common = quote(bench) + " --quiet --seed 11 --threads " +
                             std::to_string(threads) + " --config " + quote(config) + " ";
  const auto features = out / "features.csv";
  const std::vector<std::string> commands = {
      common + "extract-features " + quote(c.nuclei_dir) + " " + quote(c.manifest) + " " +
          quote(features),
      common + "--out " + quote(out / "grading.json") + " fit-downstream " + quote(features) +
          " --labels " + quote(c.grades),
      common + "--out " + quote(out / "survival.json") + " fit-downstream " + quote(features) +
          " --survival " + quote(c.survival)};
  const auto t0 = Clock::now();
  for (const auto& cmd : commands) {
    const std::string full = cmd + " 2>" + quote(out / "stderr.txt");
    if (std::system(full.c_str()) != 0) {
      throw std::runtime_error("command failed: " + cmd + "\n" + slurp(out / "stderr.txt"));
    }
  }
  PipelineRun r;
  r.seconds = seconds_since(t0);
  r.features = slurp(features);
  r.grading = slurp(out / "grading.json");
  r.survival = slurp(out / "survival.json");
  return r;
}

// Mean test metric of the last feature set (the selected subset when the
// pipeline produced one).
double final_test_metric(const std::string& report, const std::string& metric,
                         std::string& set_tag) {
  const auto j = nlohmann::json::parse(report);
  const auto& sets = j.at("result").at("feature_sets");
  const auto& last = sets.back();
  set_tag = last.at("feature_set").get<std::string>();
  return last.at("summary").at("test_" + metric).at("mean").get<double>();
}

Outcome end_to_end(const std::string& bench) {
  TempDir dir;
  const auto cohort = write_cohort(dir.path);
  std::ofstream(dir / "config.json") << R"({"search_n": 64})";
  const auto one = run_pipeline(bench, cohort, dir / "t1", 1, dir / "config.json");
  const auto eight = run_pipeline(bench, cohort, dir / "t8", 8, dir / "config.json");
  const bool identical = one.features == eight.features && one.grading == eight.grading &&
                         one.survival == eight.survival;
  std::string g_set, s_set;
  const double q = final_test_metric(one.grading, "qwk", g_set);
  const double ci = final_test_metric(one.survival, "c_index", s_set);
  std::string d_set;
  const auto gj = nlohmann::json::parse(one.grading);
  const double q_all =
      gj["result"]["feature_sets"][0]["summary"]["test_qwk"]["mean"].get<double>();
  const auto sj = nlohmann::json::parse(one.survival);
  const double c_all =
      sj["result"]["feature_sets"][0]["summary"]["test_c_index"]["mean"].get<double>();
  const bool ok = q > kMinTestQwk && ci > kMinTestCIndex && one.seconds < kEndToEndBudgetS &&
                  identical;
  return {ok, "test QWK " + fmt(q, 4) + " (" + g_set + "; D " + fmt(q_all, 4) +
                  "), test C-index " + fmt(ci, 4) + " (" + s_set + "; D " + fmt(c_all, 4) +
                  "), run " + fmt(one.seconds, 4) + " s (threads 1), " +
                  fmt(eight.seconds, 4) + " s (threads 8), reports " +
                  (identical ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path to conic-bench>\n";
    return 2;
  }
  const std::string bench = argv[1];
  const int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"matching-oracle", matching_oracle},
      {"mpq-aggregation", mpq_aggregation},
      {"pq-identity", pq_identity},
      {"composition-metrics", composition_oracle},
      {"counting-rule", counting_rule},
      {"spatial-oracle", [&] { return spatial_oracle(threads); }},
      {"morphology", morphology},
      {"learner", learner},
      {"downstream-metrics", downstream_metrics},
      {"selection-rule", selection_rule},
      {"end-to-end", [&] { return end_to_end(bench); }},
      {"bootstrap", bootstrap},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << "/"
            << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
