#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "surfconv/plane_transform.hpp"

namespace surfconv {
namespace {

CoefficientMatrix example_iv() { return CoefficientMatrix::from_rows({{1, 0}, {1, 1}, {0, 1}}); }

TEST(GridFunction, CsvRoundTrip) {
  auto g = GridFunction::sampled(GridFunction({-1.0, 0.5}, 0.25, {5, 3}),
                                 [](std::span<const double> x) { return std::sin(x[0]) + x[1] * x[1]; });
  std::stringstream ss;
  g.write_csv(ss);
  const auto back = GridFunction::read_csv(ss);
  ASSERT_EQ(back.size(), g.size());
  EXPECT_EQ(back.extents(), g.extents());
  EXPECT_EQ(back.origin(), g.origin());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(back[i], g[i]);
}

TEST(GridFunction, BinaryRoundTrip) {
  auto g = GridFunction::sampled(GridFunction::cube(3, 2.0, 7), [](std::span<const double> x) { return x[0] * x[1] - x[2]; });
  std::stringstream ss;
  g.write_binary(ss);
  const auto back = GridFunction::read_binary(ss);
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back[i], g[i]);
  std::stringstream bad("XXXX");
  EXPECT_THROW(GridFunction::read_binary(bad), std::runtime_error);
}

TEST(GridFunction, LocateAndInterpolate) {
  auto g = GridFunction::sampled(GridFunction::cube(2, 1.0, 20),
                                 [](std::span<const double> x) { return 2.0 * x[0] - x[1] + 0.5; });
  const std::vector<double> p{0.33, -0.41};
  EXPECT_NEAR(g.interpolate(p), 2.0 * 0.33 + 0.41 + 0.5, 1e-12);
  EXPECT_EQ(g.locate(std::vector<double>{1.5, 0.0}), -1);
  EXPECT_GE(g.locate(p), 0);
}

TEST(Transform, ConservesMass) {
  const auto C = example_iv();
  const auto f = sample_gaussian(GaussianSpec::standard(3), 64, 7.0);
  for (const std::vector<double>& y : {std::vector<double>{1.0, 1.0, 1.0}, {-0.5, 2.0, 3.7}, {4.0, -1.3, 0.6}}) {
    const auto T = transform(f, C, y, TargetSpec{64});
    EXPECT_NEAR(T.grid.integral() / T.source_mass, 1.0, 5e-3);
    EXPECT_LT(T.leak_fraction(), 1e-12);
    const auto Tl = transform(f, C, y, TargetSpec{64, std::nullopt, Deposit::linear});
    EXPECT_NEAR(Tl.grid.integral() / Tl.source_mass, 1.0, 5e-3);
  }
}

TEST(Transform, OneDimensionalDensity) {
  // k = l = 1: Tf(y; u) = f(u / (c y)) / |c y|.
  const auto C = CoefficientMatrix::from_rows({{3}});
  const auto spec = GaussianSpec::standard(1, 1.0);
  const auto f = sample_gaussian(spec, 512, 8.0);
  for (double y : {1.0, -0.7, 2.5}) {
    const std::vector<double> yy{y};
    const auto T = transform(f, C, yy, TargetSpec{256, 4.0 * 3.0 * std::abs(y)});
    const double a = 3.0 * std::abs(y);
    std::vector<double> u(1);
    for (std::size_t c = 0; c < T.grid.size(); ++c) {
      T.grid.center(c, u);
      const double expected = spec(std::vector<double>{u[0] / a}) / a;
      if (expected < 0.05 * spec(std::vector<double>{0.0}) / a) continue;
      EXPECT_NEAR(T.grid[c] / expected, 1.0, 0.02) << "u=" << u[0] << " y=" << y;
    }
  }
}

TEST(Transform, RejectsBadInput) {
  const auto f = sample_gaussian(GaussianSpec::standard(2), 16, 6.0);
  const auto bad = CoefficientMatrix::from_rows({{1}, {0}});
  EXPECT_THROW(transform(f, bad, std::vector<double>{1.0, 1.0}), SingularSubmatrix);
  const auto C = CoefficientMatrix::from_rows({{1}, {2}});
  EXPECT_THROW(transform(f, C, std::vector<double>{0.1, 1.0}), std::domain_error);
  EXPECT_THROW(transform(f, C, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Transform, ThreadCountInvariant) {
  const auto C = example_iv();
  const auto f = sample_gaussian(GaussianSpec::standard(3), 32, 6.0);
  const std::vector<double> y{1.2, -0.8, 2.0};
  const auto a = transform(f, C, y, TargetSpec{48}, 1);
  const auto b = transform(f, C, y, TargetSpec{48}, 4);
  ASSERT_EQ(a.grid.size(), b.grid.size());
  for (std::size_t i = 0; i < a.grid.size(); ++i) EXPECT_EQ(a.grid[i], b.grid[i]);
}

struct PairingCase {
  CoefficientMatrix C;
  std::vector<double> y;
};

TEST(Pairing, MatchesGaussianClosedForm) {
  const std::vector<PairingCase> cases{
      {CoefficientMatrix::from_rows({{2}}), {1.5}},
      {CoefficientMatrix::from_rows({{1}, {2}}), {1.0, -0.6}},
      {CoefficientMatrix::from_rows({{1, 0}, {0, 1}}), {0.7, 1.9}},
      {CoefficientMatrix::from_rows({{1}, {-1}, {2}}), {1.0, 1.0, 0.5}},
      {example_iv(), {1.3, -0.9, 2.2}},
  };
  for (const auto& pc : cases) {
    const int k = pc.C.k(), l = pc.C.l();
    const auto fs = GaussianSpec::diagonal(1.0, std::vector<double>(k, 0.1), std::vector<double>(k, 0.8));
    const auto hs = GaussianSpec::diagonal(1.0, std::vector<double>(l, -0.2), std::vector<double>(l, 1.5));
    const auto f = sample_gaussian(fs, k == 3 ? 96 : 128, 7.0);
    const double R = default_target_radius(f, pc.C, pc.y);
    const auto h = GridFunction::sampled(GridFunction::cube(l, R, 128), [&](std::span<const double> u) { return hs(u); });
    const auto res = pairing_check(f, h, pc.C, pc.y, TargetSpec{128});
    const double exact = gaussian_pairing(fs, hs, ly_eigen(pc.C, pc.y));
    EXPECT_NEAR(res.lhs / exact, 1.0, 0.01) << "k=" << k << " l=" << l;
    EXPECT_NEAR(res.rhs / exact, 1.0, 0.01) << "k=" << k << " l=" << l;
    EXPECT_LT(res.rel_err, 0.01);
  }
}

TEST(FourierCheck, HistogramTransformMatchesAdjointFormula) {
  const std::vector<PairingCase> cases{
      {CoefficientMatrix::from_rows({{1}, {2}}), {1.0, -0.6}},
      {CoefficientMatrix::from_rows({{1, 0}, {0, 1}}), {0.7, 1.9}},
      {example_iv(), {1.3, -0.9, 2.2}},
  };
  Rng rng(7);
  for (const auto& pc : cases) {
    const auto fs = GaussianSpec::standard(static_cast<std::size_t>(pc.C.k()), 1.0);
    std::vector<std::vector<double>> zetas;
    for (int s = 0; s < 12; ++s) {
      std::vector<double> z(static_cast<std::size_t>(pc.C.l()));
      for (auto& v : z) v = rng.uniform(-0.08, 0.08);
      zetas.push_back(z);
    }
    zetas.push_back(std::vector<double>(static_cast<std::size_t>(pc.C.l()), 1e3));
    FourierCheckSpec spec;
    spec.source_cells = pc.C.k() == 3 ? 96 : 128;
    const auto res = fourier_check(fs, pc.C, pc.y, zetas, spec);
    EXPECT_EQ(res.excluded.size(), 1u);
    EXPECT_FALSE(res.warnings.empty());
    EXPECT_EQ(res.samples.size(), 12u);
    EXPECT_LT(res.max_rel_err, 0.02) << "k=" << pc.C.k() << " l=" << pc.C.l();
  }
}

TEST(Oscillatory, BoundedByL1Norm) {
  const auto C = example_iv();
  const auto fs = GaussianSpec::diagonal(1.0, {0.3, -0.2, 0.0}, {0.7, 1.0, 0.5});
  const auto f = sample_gaussian(fs, 24, 6.0);
  const std::vector<double> y{1.0, -1.5, 0.8};
  const auto pts = lattice_points(2, 3.0, 6);
  for (double s : {0.5, 1.0, 2.0}) {
    const auto b = oscillatory_sup_bound(f, C, y, s, pts, 2);
    EXPECT_LE(b.sup_abs, b.l1_norm_f * (1.0 + 1e-12));
    EXPECT_GT(b.sup_abs, 0.0);
  }
  // At s = 0 the integrand is f itself.
  const auto b0 = oscillatory_sup_bound(f, C, y, 0.0, pts);
  EXPECT_NEAR(b0.sup_abs, b0.l1_norm_f, 1e-12 * b0.l1_norm_f);
  EXPECT_NEAR(b0.l1_norm_f, fs.integral(), 1e-3 * fs.integral());
}

TEST(Oscillatory, SpikeAttainsBound) {
  // A single nonzero cell gives |g(u)| = |f| h^k everywhere.
  const auto C = CoefficientMatrix::from_rows({{1}, {1}});
  GridFunction f = GridFunction::cube(2, 1.0, 10);
  f[37] = 5.0;
  const auto b = oscillatory_sup_bound(f, C, std::vector<double>{1.0, 2.0}, 1.0, lattice_points(1, 4.0, 20));
  EXPECT_NEAR(b.sup_abs, b.l1_norm_f, 1e-12);
}

TEST(Oscillatory, LatticePoints) {
  const auto pts = lattice_points(2, 1.0, 2);
  ASSERT_EQ(pts.size(), 25u);
  EXPECT_DOUBLE_EQ(pts.front()[0], -1.0);
  EXPECT_DOUBLE_EQ(pts.back()[1], 1.0);
  EXPECT_DOUBLE_EQ(pts[12][0], 0.0);
}

}  // namespace
}  // namespace surfconv
