#include <cmath>
#include <numbers>

#include "conic/morphology.h"
#include "doctest.h"
#include "oracles.h"

using namespace conic;
using namespace conic::testing;

namespace {

// Pixels whose centres satisfy (x/a)^2 + (y/b)^2 <= 1 after rotating by
// `angle`, centred at the origin.
BinaryMask ellipse(double a, double b, double angle = 0.0) {
  std::vector<Pixel> px;
  const int reach = static_cast<int>(std::ceil(std::max(a, b))) + 1;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int r = -reach; r <= reach; ++r) {
    for (int c = -reach; c <= reach; ++c) {
      const double u = c * ca + r * sa;
      const double v = -c * sa + r * ca;
      if ((u / a) * (u / a) + (v / b) * (v / b) <= 1.0) px.push_back({r, c});
    }
  }
  return BinaryMask::from_pixels(px);
}

BinaryMask square(int n) {
  std::vector<Pixel> px;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) px.push_back({r, c});
  }
  return BinaryMask::from_pixels(px);
}

BinaryMask cross(int arm, int thickness) {
  std::vector<Pixel> px;
  const int half = thickness / 2;
  for (int r = -arm; r <= arm; ++r) {
    for (int c = -arm; c <= arm; ++c) {
      if (std::abs(r) <= half || std::abs(c) <= half) px.push_back({r, c});
    }
  }
  return BinaryMask::from_pixels(px);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIoError;
}

}  // namespace

TEST_CASE("10x10 square at 0.5 microns per pixel") {
  const auto f = region_properties(square(10), 0.5);
  CHECK(f.area_um2 == 25.0);
  CHECK(f.eccentricity == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.major_axis_um == doctest::Approx(f.minor_axis_um));
  // Unit-square pixels: variance (n^2)/12, axis 4*sqrt(var) = 4*10/sqrt(12) px.
  CHECK(f.major_axis_um == doctest::Approx(4.0 * 10.0 / std::sqrt(12.0) * 0.5));
  CHECK(f.perimeter_um == doctest::Approx(36.0 * 0.5));
}

TEST_CASE("single pixel") {
  const std::vector<Pixel> one = {{3, 4}};
  const auto f = region_properties(BinaryMask::from_pixels(one), 1.0);
  CHECK(f.area_um2 == 1.0);
  CHECK(f.minor_axis_um > 0.0);
  CHECK(f.eccentricity == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rasterised disk") {
  const auto disk = ellipse(20, 20);
  const auto f = region_properties(disk, 1.0);
  CHECK(std::fabs(f.area_um2 - std::numbers::pi * 400.0) < 0.02 * std::numbers::pi * 400.0);
  CHECK(f.eccentricity < 0.05);
  CHECK(f.perimeter_um * f.perimeter_um >= 0.95 * 4.0 * std::numbers::pi * f.area_um2);
  CHECK(best_alignment_metric(disk) < 0.05);
}

TEST_CASE("rasterised 2:1 ellipse") {
  const auto e = ellipse(20, 10);
  const auto f = region_properties(e, 1.0);
  CHECK(std::fabs(f.eccentricity - std::sqrt(0.75)) < 0.02);
  CHECK(std::fabs(f.major_axis_um / f.minor_axis_um - 2.0) < 0.06);
  CHECK(f.major_axis_um == doctest::Approx(40.0).epsilon(0.03));
  CHECK(best_alignment_metric(e) < 0.05);
}

TEST_CASE("rotation changes shape descriptors only slightly") {
  const auto e0 = ellipse(20, 10, 0.0);
  const auto e30 = ellipse(20, 10, std::numbers::pi / 6.0);
  const auto f0 = region_properties(e0, 1.0);
  const auto f30 = region_properties(e30, 1.0);
  CHECK(std::fabs(f0.eccentricity - f30.eccentricity) < 0.03);
  CHECK(std::fabs(best_alignment_metric(e0) - best_alignment_metric(e30)) < 0.05);
}

TEST_CASE("cross is less elliptical than a disk of equal area") {
  const auto x = cross(15, 5);
  const double r = std::sqrt(static_cast<double>(x.count()) / std::numbers::pi);
  const auto disk = ellipse(r, r);
  CHECK(std::fabs(static_cast<double>(disk.count() - x.count())) < 0.05 * x.count());
  const double bx = best_alignment_metric(x), bd = best_alignment_metric(disk);
  CHECK(bx > bd);
  CHECK(bx <= 1.0);
  CHECK(bd >= 0.0);
}

TEST_CASE("scale covariance is exact") {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const auto m = ellipse(uniform_real(rng, 2, 15), uniform_real(rng, 2, 15),
                           uniform_real(rng, 0, std::numbers::pi));
    const auto a = region_properties(m, 0.5);
    const auto b = region_properties(m, 1.0);
    CHECK(b.area_um2 == 4.0 * a.area_um2);
    CHECK(b.perimeter_um == 2.0 * a.perimeter_um);
    CHECK(b.major_axis_um == 2.0 * a.major_axis_um);
    CHECK(b.minor_axis_um == 2.0 * a.minor_axis_um);
    CHECK(b.eccentricity == a.eccentricity);
  }
}

TEST_CASE("random masks satisfy the shape invariants") {
  Rng rng(22);
  for (int t = 0; t < 200; ++t) {
    // random walk: always 8-connected
    std::vector<Pixel> px;
    int r = 0, c = 0;
    const int steps = uniform_int(rng, 1, 300);
    for (int s = 0; s < steps; ++s) {
      px.push_back({r, c});
      r += uniform_int(rng, -1, 1);
      c += uniform_int(rng, -1, 1);
    }
    const auto m = BinaryMask::from_pixels(px);
    REQUIRE(is_8_connected(m));
    const auto f = region_properties(m, 0.5);
    CHECK(f.major_axis_um >= f.minor_axis_um);
    CHECK(f.minor_axis_um > 0.0);
    CHECK(f.eccentricity >= 0.0);
    CHECK(f.eccentricity < 1.0);
    const double bam = best_alignment_metric(m);
    CHECK(bam >= 0.0);
    CHECK(bam <= 1.0);
  }
}

TEST_CASE("mask errors") {
  CHECK(code_of([] { region_properties(BinaryMask{}, 1.0); }) == ErrorCode::kEmptyMask);
  CHECK(code_of([] { best_alignment_metric(BinaryMask{}); }) == ErrorCode::kEmptyMask);
  const std::vector<Pixel> apart = {{0, 0}, {0, 2}};
  CHECK(code_of([&] { region_properties(BinaryMask::from_pixels(apart), 1.0); }) ==
        ErrorCode::kDisconnectedMask);
  const std::vector<Pixel> diag = {{0, 0}, {1, 1}};
  CHECK(is_8_connected(BinaryMask::from_pixels(diag)));
}

TEST_CASE("nucleus morphology from a contour") {
  NucleusRecord rec;
  rec.contour = {{0, 0}, {5, 0}, {5, 5}, {0, 5}};
  rec.area_px = 100;
  SUBCASE("mpp inferred from area") {
    const auto f = nucleus_morphology(rec);
    CHECK(f.area_um2 == doctest::Approx(25.0));
    CHECK(f.eccentricity == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("explicit mpp") {
    rec.mpp = 0.25;
    CHECK(nucleus_morphology(rec).area_um2 == doctest::Approx(25.0));
  }
  SUBCASE("tiny contour falls back to one pixel") {
    rec.contour = {{0.1, 0.1}, {0.2, 0.1}, {0.2, 0.2}};
    rec.mpp = 1.0;
    CHECK(nucleus_morphology(rec).area_um2 == 1.0);
  }
}

TEST_CASE("aggregation by class") {
  auto with_area = [](NucleusClass c, double area) {
    ClassifiedMorphology m{c, {}};
    m.features.area_um2 = area;
    return m;
  };
  SUBCASE("no nuclei") {
    const auto out = aggregate_morphology({});
    for (double v : out) CHECK(std::isnan(v));
  }
  SUBCASE("one connective nucleus") {
    const std::vector<ClassifiedMorphology> n = {with_area(NucleusClass::kConnective, 25)};
    const auto out = aggregate_morphology(n);
    CHECK(out[0] == 25.0);
    CHECK(out[1] == 0.0);
    for (int i = 12; i < 72; ++i) CHECK(std::isnan(out[i]));
  }
  SUBCASE("two epithelial nuclei") {
    const std::vector<ClassifiedMorphology> n = {with_area(NucleusClass::kEpithelial, 10),
                                                 with_area(NucleusClass::kEpithelial, 20)};
    const auto out = aggregate_morphology(n);
    // epithelial is the third class block
    CHECK(out[24] == 15.0);
    CHECK(out[25] == 5.0);
  }
  SUBCASE("permutation invariant") {
    Rng rng(23);
    std::vector<ClassifiedMorphology> n;
    for (int i = 0; i < 40; ++i) {
      ClassifiedMorphology m{class_at(uniform_int(rng, 0, 5)), {}};
      m.features = {uniform_real(rng, 1, 50), uniform_real(rng, 0, 1), uniform_real(rng, 1, 30),
                    uniform_real(rng, 1, 9),  uniform_real(rng, 1, 9), uniform_real(rng, 0, 1)};
      n.push_back(m);
    }
    const auto a = aggregate_morphology(n);
    std::shuffle(n.begin(), n.end(), rng);
    const auto b = aggregate_morphology(n);
    for (int i = 0; i < 72; ++i) {
      if (std::isnan(a[i])) {
        CHECK(std::isnan(b[i]));
      } else {
        CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
      }
    }
  }
}
