#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "surfconv/measure_conv.hpp"
#include "surfconv/quadrature.hpp"

namespace surfconv {
namespace {

CoefficientMatrix example_iv() { return CoefficientMatrix::from_rows({{1, 0}, {1, 1}, {0, 1}}); }
CoefficientMatrix paraboloid(int k) { return CoefficientMatrix::from_rows(std::vector<std::vector<std::int64_t>>(k, {1})); }

TEST(SurfaceMeasure, TotalMass) {
  EXPECT_NEAR(build_measure(paraboloid(1), 64).total_mass() / 2.0, 1.0, 0.005);
  EXPECT_NEAR(build_measure(paraboloid(2), 256).total_mass() / std::numbers::pi, 1.0, 0.005);
  EXPECT_NEAR(build_measure(example_iv(), 128).total_mass() / (4.0 * std::numbers::pi / 3.0), 1.0, 0.005);
  EXPECT_THROW(build_measure(paraboloid(2), 4), std::invalid_argument);
}

TEST(SurfaceMeasure, CountMatchesEnumeration) {
  for (int n : {8, 9, 31, 64}) {
    const auto mu = build_measure(example_iv(), n);
    std::uint64_t seen = 0;
    mu.for_each_atom([&](std::span<const double>, std::span<const double>) { ++seen; });
    EXPECT_EQ(seen, mu.atom_count()) << n;
  }
}

TEST(SurfaceMeasure, PointsLieOnTheGraph) {
  const auto C = CoefficientMatrix::from_rows({{2, -1}, {1, 3}, {0, 1}});
  const auto mu = build_measure(C, 16);
  mu.for_each_atom([&](std::span<const double> y, std::span<const double> p) {
    double r2 = 0.0;
    for (double v : y) r2 += v * v;
    EXPECT_LT(r2, 1.0);
    const auto expected = surface_point(C, y);
    for (std::size_t a = 0; a < expected.size(); ++a) EXPECT_DOUBLE_EQ(p[a], expected[a]);
  });
  const auto parab = build_measure(paraboloid(1), 32);
  parab.for_each_atom([&](std::span<const double> y, std::span<const double> p) { EXPECT_DOUBLE_EQ(p[1], y[0] * y[0]); });
}

TEST(SurfaceMeasure, WarnsWithoutStar) {
  EXPECT_FALSE(build_measure(CoefficientMatrix::from_rows({{1, 0}, {2, 0}, {0, 1}}), 8).warnings().empty());
  EXPECT_TRUE(build_measure(example_iv(), 8).warnings().empty());
}

TEST(SurfaceMeasure, PushforwardIntegral) {
  // int g dmu against polar quadrature of g(y, Phi(y)) over the unit disk.
  const auto C = CoefficientMatrix::from_rows({{1}, {2}});
  const auto g = GaussianSpec::diagonal(1.0, {0.2, -0.1, 0.5}, {0.6, 0.8, 0.7});
  const auto mu = build_measure(C, 256);
  double discrete = 0.0;
  mu.for_each_atom([&](std::span<const double>, std::span<const double> p) { discrete += g(p); });
  discrete *= mu.atom_weight();
  const auto radial = quad::gauss_legendre(64, 0.0, 1.0);
  const auto sphere = quad::sphere_rule(2, 128);
  double exact = 0.0;
  for (std::size_t s = 0; s < sphere.size(); ++s)
    for (std::size_t i = 0; i < radial.size(); ++i) {
      const std::vector<double> y{radial.nodes[i] * sphere.point(s)[0], radial.nodes[i] * sphere.point(s)[1]};
      exact += sphere.weights[s] * radial.weights[i] * radial.nodes[i] * g(surface_point(C, y));
    }
  EXPECT_NEAR(discrete / exact, 1.0, 0.005);
}

TEST(Convolution, LargeBallSeesEverything) {
  const auto mu = build_measure(example_iv(), 32);
  const std::vector<double> z{0.1, 0.0, -0.1, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(convolve_at(mu, TestSet::ball(std::vector<double>(5, 0.0), 10.0), z), mu.total_mass());
}

TEST(Convolution, TranslationInvariant) {
  const auto mu = build_measure(paraboloid(2), 64);
  const std::vector<Box> boxes{{{-0.1, -0.2, -0.05}, {0.2, 0.1, 0.1}}, {{0.0, 0.0, 0.0}, {0.3, 0.05, 0.2}}};
  const std::vector<double> v{0.25, -0.5, 1.0 / 8}, z{0.3, 0.1, 0.2};
  std::vector<double> zv(3);
  for (int a = 0; a < 3; ++a) zv[a] = z[a] + v[a];
  for (const auto& E : {TestSet::ball({0.1, 0.0, 0.05}, 0.2), TestSet::box_union(boxes),
                        TestSet::tangent_tube(paraboloid(2), std::vector<double>{0.2, 0.1}, 0.25)}) {
    EXPECT_DOUBLE_EQ(convolve_at(mu, E.translated(v), zv), convolve_at(mu, E, z)) << E.kind_name();
  }
  // Sheared sets shift in u only.
  const auto S = TestSet::sheared(paraboloid(2), {{{-0.3, -0.3, -0.1}, {0.3, 0.3, 0.2}}});
  const std::vector<double> vu{0.0, 0.0, 0.125}, zu{0.0, 0.1, 0.125 + 0.05};
  EXPECT_DOUBLE_EQ(convolve_at(mu, S.translated(vu), zu), convolve_at(mu, S, std::vector<double>{0.0, 0.1, 0.05}));
}

TEST(Convolution, BallGraphLocalization) {
  // (mu * chi_{B_delta})(Phi(y0)) ~ c delta^k.
  const auto C = paraboloid(2);
  std::vector<double> logs, logd;
  for (double dl : {0.125, 0.0625, 0.03125, 0.015625}) {
    const auto mu = build_measure(C, static_cast<std::int64_t>(std::ceil(16.0 / dl)));
    const auto z = surface_point(C, std::vector<double>{0.3, -0.2});
    logs.push_back(std::log(convolve_at(mu, TestSet::ball({0.0, 0.0, 0.0}, dl), z)));
    logd.push_back(std::log(dl));
  }
  EXPECT_NEAR(fit_slope(logd, logs), 2.0, 0.15);
}

TEST(Convolution, FunctionLinearity) {
  const auto mu = build_measure(paraboloid(2), 48);
  const auto g1 = GaussianSpec::standard(3, 0.3);
  const auto g2 = GaussianSpec::diagonal(2.0, {0.1, 0.0, 0.2}, {0.2, 0.4, 0.3});
  const std::vector<double> z{0.1, 0.2, 0.3};
  const double a = convolve_f_at(mu, [&](std::span<const double> x) { return g1(x); }, z);
  const double b = convolve_f_at(mu, [&](std::span<const double> x) { return g2(x); }, z);
  const double ab = convolve_f_at(mu, [&](std::span<const double> x) { return g1(x) + g2(x); }, z);
  EXPECT_NEAR(ab, a + b, 1e-12 * ab);
  // Restricting to a support box that covers everything changes nothing.
  const Box all{{-5, -5, -5}, {5, 5, 5}};
  EXPECT_NEAR(convolve_f_at(mu, [&](std::span<const double> x) { return g1(x); }, z, all), a, 1e-12 * a);
}

TEST(TestSets, Measures) {
  EXPECT_NEAR(TestSet::ball({0, 0, 0}, 0.5).measure(), 4.0 / 3.0 * std::numbers::pi / 8.0, 1e-12);
  const std::vector<Box> overlap{{{0, 0}, {2, 1}}, {{1, 0}, {3, 2}}};
  EXPECT_NEAR(TestSet::box_union(overlap).measure(), 2 + 4 - 1, 1e-12);
  const auto tube = TestSet::tangent_tube(example_iv(), std::vector<double>{0.1, 0.2, -0.3}, 0.25);
  EXPECT_NEAR(tube.measure(), 32.0 * std::pow(0.25, 3) * std::pow(0.0625, 2), 1e-12);
  EXPECT_NEAR(unit_ball_volume(5), 8.0 * std::numbers::pi * std::numbers::pi / 15.0, 1e-12);
}

TEST(TestSets, ShearMeasureAndBounds) {
  const auto C = example_iv();
  const Box tilde{{-0.3, -0.2, 0.0, 0.0, -0.1}, {0.2, 0.3, 0.4, 0.2, 0.3}};
  const auto S = TestSet::sheared(C, {tilde});
  EXPECT_NEAR(S.measure(), tilde.volume() / 4.0, 1e-15);
  const Box bb = S.bounding_box();
  Rng rng(3);
  std::size_t inside = 0;
  const std::size_t n = 200000;
  std::vector<double> x(5);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < 5; ++a) x[a] = rng.uniform(bb.lo[a], bb.hi[a]);
    if (S.contains(x)) ++inside;
  }
  const double mc = bb.volume() * static_cast<double>(inside) / static_cast<double>(n);
  EXPECT_NEAR(mc / S.measure(), 1.0, 0.03);
  // Every preimage point of the box lands inside the bounding box.
  for (std::size_t s = 0; s < 1000; ++s) {
    std::vector<double> w(5);
    for (std::size_t a = 0; a < 5; ++a) w[a] = rng.uniform(tilde.lo[a], tilde.hi[a]);
    const auto ph = phi(C, std::span<const double>(w.data(), 3));
    for (std::size_t j = 0; j < 2; ++j) w[3 + j] = 0.5 * (w[3 + j] + ph[j]);
    EXPECT_TRUE(S.contains(w));
    EXPECT_TRUE(bb.contains(w));
  }
}

TEST(NormMc, FubiniAtQEqualsOne) {
  const auto C = paraboloid(2);
  const auto mu = build_measure(C, 64);
  NormConfig cfg{4000, 9, 2};
  const std::vector<TestSet> sets{
      TestSet::ball({0.1, 0.0, 0.2}, 0.2),
      TestSet::box_union({{{-0.1, -0.2, -0.05}, {0.2, 0.1, 0.1}}, {{0.0, 0.0, 0.0}, {0.3, 0.05, 0.2}}}),
      TestSet::tangent_tube(C, std::vector<double>{0.2, -0.4}, 0.25),
      TestSet::sheared(C, {{{-0.2, -0.2, -0.1}, {0.3, 0.1, 0.3}}}),
  };
  for (const auto& E : sets) {
    const auto est = lq_norm_mc(mu, E, 1.0, cfg);
    EXPECT_NEAR(est.norm / (mu.total_mass() * E.measure()), 1.0, 0.02) << E.kind_name();
    EXPECT_FALSE(est.low_confidence);
  }
}

TEST(NormMc, ParabolaAgainstGridQuadrature) {
  // k = l = 1, E = B(0, 1/16), q = 3.
  const auto mu = build_measure(paraboloid(1), 256);
  const TestSet E = TestSet::ball({0.0, 0.0}, 1.0 / 16);
  const auto est = lq_norm_mc(mu, E, 3.0, {20000, 4, 2});
  // Dense 2-d midpoint grid over the support box.
  const double h = 1.0 / 512;
  double acc = 0.0;
  for (double x = -1.1 + h / 2; x < 1.1; x += h)
    for (double u = -0.1 + h / 2; u < 1.1; u += h) {
      const double F = convolve_at(mu, E, std::vector<double>{x, u});
      acc += F * F * F;
    }
  const double grid = std::cbrt(acc * h * h);
  EXPECT_NEAR(est.norm / grid, 1.0, 0.05);
}

TEST(NormMc, MonotoneInSet) {
  const auto mu = build_measure(paraboloid(2), 64);
  const auto small = lq_norm_mc(mu, TestSet::ball({0, 0, 0}, 0.1), 4.0, {3000, 1, 2});
  const auto large = lq_norm_mc(mu, TestSet::ball({0, 0, 0}, 0.2), 4.0, {3000, 1, 2});
  EXPECT_LE(small.norm, large.norm * (1.0 + 2.0 * large.stderr_ / large.norm));
}

TEST(NormMc, RefinementWithinErrorBars) {
  const auto C = paraboloid(2);
  const TestSet E = TestSet::ball({0, 0, 0}, 0.25);
  const auto a = lq_norm_mc(build_measure(C, 64), E, 4.0, {1500, 2, 2});
  const auto b = lq_norm_mc(build_measure(C, 128), E, 4.0, {1500, 2, 2});
  EXPECT_LT(std::abs(a.norm - b.norm), 2.0 * std::hypot(a.stderr_, b.stderr_));
}

TEST(NormMc, Reproducible) {
  const auto mu = build_measure(example_iv(), 32);
  const TestSet E = TestSet::ball({0, 0, 0, 0, 0}, 0.25);
  const auto a = lq_norm_mc(mu, E, 3.5, {500, 77, 1});
  const auto b = lq_norm_mc(mu, E, 3.5, {500, 77, 5});
  EXPECT_EQ(a.norm, b.norm);
  EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(BallScaling, VertexIdentity) {
  for (int k = 1; k <= 8; ++k)
    for (int l = 1; l <= k; ++l) {
      const int d = k + l;
      EXPECT_EQ(ball_norm_exponent(k, l), Rational(d) / critical_p0(k, d));
      EXPECT_EQ(Rational(k * (2 * d - k) + (d - k) * (d - k), 2 * d - k), Rational(d * d, 2 * d - k));
    }
}

TEST(BallScaling, ParaboloidExponent) {
  BallScalingConfig cfg;
  cfg.samples = 3000;
  cfg.threads = 4;
  const auto res = ball_scaling_experiment(paraboloid(2), cfg);
  EXPECT_EQ(res.expected_exponent, Rational(9, 4));
  for (double e : res.fitted_exponent) EXPECT_NEAR(e, 2.25, 0.15);
  ASSERT_EQ(res.ratio_slopes.size(), 3u);
  EXPECT_GE(res.ratio_slopes[0].second, -0.05);
  EXPECT_LE(res.ratio_slopes[2].second, -0.05);
  std::ostringstream csv;
  res.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "delta,p_num,p_den,norm,ratio,stderr,center_id");
}

TEST(BallScaling, RejectsShortRange) {
  BallScalingConfig cfg;
  cfg.deltas = {0.125, 0.0625};
  EXPECT_THROW(ball_scaling_experiment(paraboloid(2), cfg), std::invalid_argument);
  cfg.deltas = {0.125, 0.0625, 0.1};
  EXPECT_THROW(ball_scaling_experiment(paraboloid(2), cfg), std::invalid_argument);
}

TEST(RestrictedScan, FamilyDoublingStable) {
  // 1/p just inside the vertex: 1/p0 = 3/4 for k = 2, d = 3.
  RestrictedScanConfig cfg;
  cfg.family_size = 32;
  cfg.threads = 4;
  const auto rep = restricted_estimate_scan(paraboloid(2), Rational(10, 7), cfg);
  EXPECT_EQ(rep.entries.size(), 32u);
  EXPECT_GT(rep.sup_half, 0.0);
  EXPECT_LT(rep.growth(), 0.25);
  for (const auto& e : rep.entries) EXPECT_TRUE(std::isfinite(e.ratio));
}

TEST(RestrictedScan, FamiliesArePrefixStable) {
  const auto C = paraboloid(2);
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_EQ(scan_family_member(C, 5, i).to_json(), scan_family_member(C, 5, i).to_json());
  RestrictedScanConfig small;
  small.family_size = 4;
  small.samples = 200;
  RestrictedScanConfig big = small;
  big.family_size = 8;
  const auto a = restricted_estimate_scan(C, Rational(10, 7), small);
  const auto b = restricted_estimate_scan(C, Rational(10, 7), big);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.entries[i].ratio, b.entries[i].ratio);
}

TEST(RestrictedScan, WholeBallFinite) {
  const auto mu = build_measure(paraboloid(2), 64);
  const TestSet E = TestSet::ball({0, 0, 0}, 1.0);
  const auto est = lq_norm_mc(mu, E, 4.0, {1000, 1, 2});
  EXPECT_TRUE(std::isfinite(est.norm / std::pow(E.measure(), 0.7)));
  EXPECT_GT(est.norm, 0.0);
}

TEST(RestrictedScan, RefusesExteriorExponent) {
  EXPECT_THROW(restricted_estimate_scan(paraboloid(2), Rational(4, 3)), std::domain_error);  // the vertex itself
  EXPECT_THROW(restricted_estimate_scan(paraboloid(2), Rational(1)), std::domain_error);
}

/// int_a^b [F(u1 / y) - F(u0 / y)] dy for the Gaussian CDF F of f, 1 <= a < b <= 2.
double ineq6_one_dim(const GaussianSpec& f, double a, double b, double u0, double u1) {
  const double m = f.mean()[0], s = std::sqrt(f.covariance()(0, 0)), I = f.integral();
  auto cdf = [&](double t) { return 0.5 * I * (1.0 + std::erf((t - m) / (s * std::numbers::sqrt2))); };
  const auto rule = quad::composite_gauss_legendre(16, 10, a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * (cdf(u1 / rule.nodes[i]) - cdf(u0 / rule.nodes[i]));
  return acc;
}

TEST(Ineq6, OneDimensionalClosedForm) {
  const auto C = paraboloid(1);
  const auto f = GaussianSpec::diagonal(1.5, {0.2}, {0.7});
  const TestSet E = TestSet::box_union({{{1.1, -0.4}, {1.8, 0.9}}});
  const auto rep = ineq6_check(C, f, E, {40000, 3, 2});
  EXPECT_NEAR(rep.lhs / ineq6_one_dim(f, 1.1, 1.8, -0.4, 0.9), 1.0, 0.05);
}

TEST(Ineq6, EmptyAndSaturated) {
  const auto C = example_iv();
  const auto f = GaussianSpec::standard(3, 0.5);
  const TestSet far = TestSet::box_union({{{5, 5, 5, 5, 5}, {6, 6, 6, 6, 6}}});
  EXPECT_EQ(ineq6_check(C, f, far, {2000}).lhs, 0.0);

  // Boxes containing every reachable (y, L_y x): LHS = ||f||_1 * 2^k.
  const TestSet big = TestSet::box_union({{{-2, -2, -2, -60, -60}, {2, 2, 2, 60, 60}}});
  const TestSet bigger = TestSet::box_union({{{-2, -2, -2, -120, -120}, {2, 2, 2, 120, 120}}});
  const auto a = ineq6_check(C, f, big, {4000});
  const auto b = ineq6_check(C, f, bigger, {4000});
  EXPECT_NEAR(a.lhs, f.integral() * 8.0, 1e-12);
  EXPECT_NEAR(b.ratio / a.ratio, std::pow(big.measure() / bigger.measure(), 3.0 / 5.0), 1e-12);
  EXPECT_LT(b.ratio, a.ratio);
}

TEST(Ineq6, ShellSumMatchesOneDimensional) {
  // Shells n = -2, -1, 0 cover 1/4 <= |y| < 2.
  const auto C = paraboloid(1);
  const auto f = GaussianSpec::diagonal(1.0, {0.1}, {0.5});
  const TestSet E = TestSet::box_union({{{0.3, -0.2}, {1.5, 0.6}}});
  const auto rep = ineq6_shell_sum(C, f, E, 2, {40000, 8, 2});
  EXPECT_NEAR(rep.lhs / ineq6_one_dim(f, 0.3, 1.5, -0.2, 0.6), 1.0, 0.05);
}

TEST(Ineq6, StableUnderDoubling) {
  const auto C = example_iv();
  const auto f = GaussianSpec::diagonal(1.0, {0.0, 0.2, -0.1}, {0.6, 0.8, 0.5});
  for (std::size_t i = 0; i < 8; ++i) {
    Rng rng(40, i);
    Box b{std::vector<double>(5), std::vector<double>(5)};
    for (std::size_t a = 0; a < 3; ++a) {
      const double c = rng.sign() * rng.uniform(1.0, 2.0);
      b.lo[a] = c - 0.5;
      b.hi[a] = c + 0.5;
    }
    for (std::size_t a = 3; a < 5; ++a) {
      const double c = rng.uniform(-1.0, 1.0);
      b.lo[a] = c - 1.0;
      b.hi[a] = c + 1.0;
    }
    const TestSet E = TestSet::box_union({b});
    const auto x = ineq6_check(C, f, E, {20000, 1, 2});
    const auto y = ineq6_check(C, f, E, {40000, 1, 2});
    EXPECT_LT(std::abs(y.ratio - x.ratio), 3.0 * std::hypot(x.stderr_, y.stderr_) / x.rhs + 0.10 * x.ratio);
  }
}

}  // namespace
}  // namespace surfconv
