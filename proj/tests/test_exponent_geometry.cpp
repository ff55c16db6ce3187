#include <gtest/gtest.h>

#include "surfconv/exponent_geometry.hpp"
#include "surfconv/rng.hpp"

namespace surfconv {
namespace {

Rational R(std::int64_t n, std::int64_t d = 1) { return make_rational(n, d); }

TEST(TriangleVertices, ExampleDimensions) {
  const auto v35 = triangle_vertices(3, 5);
  EXPECT_EQ(v35[0], (ExponentPair{0, 0}));
  EXPECT_EQ(v35[1], (ExponentPair{1, 1}));
  EXPECT_EQ(v35[2], (ExponentPair{R(5, 7), R(2, 7)}));

  const auto v12 = triangle_vertices(1, 2);
  EXPECT_EQ(v12[2], (ExponentPair{R(2, 3), R(1, 3)}));
  EXPECT_EQ(v12[2].dual(), v12[2]);
}

TEST(TriangleVertices, RejectsDegenerateDimensions) {
  EXPECT_THROW(triangle_vertices(3, 3), InvalidDimension);
  EXPECT_THROW(triangle_vertices(4, 2), InvalidDimension);
  EXPECT_THROW(triangle_vertices(0, 2), InvalidDimension);
}

TEST(TriangleVertices, DualityPermutesVertices) {
  for (int k = 1; k <= 8; ++k)
    for (int d = k + 1; d <= 2 * k + 4; ++d) {
      const auto v = triangle_vertices(k, d);
      EXPECT_EQ(v[0].dual(), v[1]);
      EXPECT_EQ(v[1].dual(), v[0]);
      EXPECT_EQ(v[2].dual(), v[2]) << "k=" << k << " d=" << d;
    }
}

TEST(RicciGap, Values) {
  EXPECT_EQ(ricci_gap(1, 3), R(1, 6));
  EXPECT_FALSE(ricci_gap(3, 5).has_value());
  EXPECT_FALSE(ricci_gap(1, 2).has_value());
}

TEST(RicciGap, AbsentWhenKkPlus3AtLeast2d) {
  for (int k = 1; k <= 8; ++k)
    for (int l = 1; l <= k; ++l) EXPECT_FALSE(ricci_gap(k, k + l).has_value()) << k << "," << l;
}

TEST(CriticalExponents, Values) {
  EXPECT_EQ(critical_q0(3, 5), R(7, 2));
  EXPECT_EQ(critical_p0(3, 5), R(7, 5));
  EXPECT_EQ(critical_q0(1, 2), R(3));
  EXPECT_EQ(critical_p0(1, 2), R(3, 2));
  for (int k = 1; k <= 8; ++k)
    for (int d = k + 1; d <= 16; ++d) {
      const auto v = triangle_vertices(k, d);
      EXPECT_EQ(Rational(1) / critical_p0(k, d), v[2].inv_p);
      EXPECT_EQ(Rational(1) / critical_q0(k, d), v[2].inv_q);
      EXPECT_EQ(Rational(1) / critical_p0(k, d) - Rational(1) / critical_q0(k, d), Rational(k, 2 * d - k));
    }
}

TEST(TypeSet, Containment) {
  const TypeSet ts35(3, 5);
  EXPECT_TRUE(ts35.contains({R(1, 2), R(1, 3)}, Containment::interior));
  EXPECT_FALSE(ts35.contains({R(1, 2), R(1, 2)}, Containment::interior));
  EXPECT_TRUE(ts35.contains({R(1, 2), R(1, 2)}, Containment::boundary));
  for (const auto& v : ts35.vertices()) {
    EXPECT_TRUE(ts35.contains(v, Containment::boundary));
    EXPECT_FALSE(ts35.contains(v, Containment::interior));
  }

  const TypeSet ts13(1, 3);
  EXPECT_FALSE(ts13.contains({R(1, 2), R(1, 4)}, Containment::boundary));
  // Inside the triangle, separated from it only by the Ricci band.
  EXPECT_TRUE(ts13.contains({R(11, 20), R(2, 5)}, Containment::interior));
  EXPECT_FALSE(ts13.contains({R(29, 50), R(2, 5)}, Containment::boundary));
  // On the band edge.
  EXPECT_TRUE(ts13.contains({R(17, 30), R(2, 5)}, Containment::boundary));
  EXPECT_FALSE(ts13.contains({R(17, 30), R(2, 5)}, Containment::interior));
}

TEST(TypeSet, InteriorImpliesBoundaryAndCentroidMonotone) {
  Rng rng(kDefaultSeed, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(6));
    const int d = k + 1 + static_cast<int>(rng.below(6));
    const TypeSet ts(k, d);
    const ExponentPair pt{R(static_cast<std::int64_t>(rng.below(41)), 40),
                          R(static_cast<std::int64_t>(rng.below(41)), 40)};
    if (ts.contains(pt, Containment::interior)) EXPECT_TRUE(ts.contains(pt, Containment::boundary));
    // Points of the closed region move strictly inside when pulled toward the centroid.
    const auto& v = ts.vertices();
    if (!ts.gap() && ts.contains(pt, Containment::boundary)) {
      const Rational cp = (v[0].inv_p + v[1].inv_p + v[2].inv_p) / 3;
      const Rational cq = (v[0].inv_q + v[1].inv_q + v[2].inv_q) / 3;
      const ExponentPair mid{(pt.inv_p + cp) / 2, (pt.inv_q + cq) / 2};
      EXPECT_TRUE(ts.contains(mid, Containment::interior));
    }
  }
}

TEST(TypeSet, JsonShape) {
  const auto j = TypeSet(3, 5).to_json();
  EXPECT_EQ(j["k"], 3);
  EXPECT_EQ(j["l"], 2);
  EXPECT_EQ(j["vertices"][2][0], nlohmann::json::array({5, 7}));
  EXPECT_EQ(j["vertices"][2][1], nlohmann::json::array({2, 7}));
  EXPECT_TRUE(j["ricci_gap"].is_null());
  EXPECT_EQ(TypeSet(1, 3).to_json()["ricci_gap"], nlohmann::json::array({1, 6}));
}

TEST(PtildeToP, CriticalValueMapsToP0) {
  EXPECT_EQ(ptilde_to_p(R(5, 3), 3, 2), R(7, 5));
  // Large ptilde drives 1/p toward 1/q0.
  const Rational big = ptilde_to_p(R(1000000), 3, 2);
  EXPECT_LT(abs(Rational(1) / big - R(2, 7)), R(1, 100000));
  EXPECT_THROW(ptilde_to_p(R(1), 3, 2), std::domain_error);
}

TEST(PtildeToP, EquivalenceAndMonotonicity) {
  Rng rng(kDefaultSeed, 2);
  for (int k = 1; k <= 6; ++k)
    for (int l = 1; l <= k; ++l) {
      const int d = k + l;
      Rational prev_inv_p = 2;
      std::vector<Rational> samples;
      for (int i = 0; i < 100; ++i)
        samples.push_back(R(1) + R(1 + static_cast<std::int64_t>(rng.below(4000)), 1000));
      std::sort(samples.begin(), samples.end());
      for (const auto& pt : samples) {
        const Rational p = ptilde_to_p(pt, k, l);
        EXPECT_EQ(pt > Rational(d, k), p > Rational(2 * d - k, d));
        EXPECT_LE(Rational(1) / p, prev_inv_p);
        prev_inv_p = Rational(1) / p;
      }
    }
}

}  // namespace
}  // namespace surfconv
