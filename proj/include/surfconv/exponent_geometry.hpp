#pragma once

// Admissible Lebesgue exponent region for convolution with a k-surface
// measure in R^d, in exact rational arithmetic.
//
// Points are (1/p, 1/q). The triangle has vertices (0,0), (1,1) and
// (d/(2d-k), (d-k)/(2d-k)); when k(k+3) < 2d it is further cut by the band
// 1/p - 1/q <= 2k/(6d - k^2 - 5k).

#include <array>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "surfconv/rational.hpp"

namespace surfconv {

class InvalidDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExponentPair {
  Rational inv_p;
  Rational inv_q;

  ExponentPair() = default;
  ExponentPair(Rational ip, Rational iq) : inv_p(std::move(ip)), inv_q(std::move(iq)) {
    if (inv_p < 0 || inv_p > 1 || inv_q < 0 || inv_q > 1)
      throw std::domain_error("exponent pair outside [0,1]^2");
  }

  /// (a, b) -> (1 - b, 1 - a), the L^p duality of convolution operators.
  ExponentPair dual() const { return {Rational(1) - inv_q, Rational(1) - inv_p}; }

  friend bool operator==(const ExponentPair&, const ExponentPair&) = default;
};

enum class Containment { boundary, interior };

namespace detail {
inline void require_dimensions(int k, int d) {
  if (k < 1) throw InvalidDimension("surface dimension k must be at least 1");
  if (d <= k) throw InvalidDimension("ambient dimension d must exceed k");
}
}  // namespace detail

inline std::array<ExponentPair, 3> triangle_vertices(int k, int d) {
  detail::require_dimensions(k, d);
  const Rational den(2 * d - k);
  return {ExponentPair{0, 0}, ExponentPair{1, 1}, ExponentPair{Rational(d) / den, Rational(d - k) / den}};
}

/// Upper bound on 1/p - 1/q from Ricci's necessary condition, present only when k(k+3) < 2d.
inline std::optional<Rational> ricci_gap(int k, int d) {
  detail::require_dimensions(k, d);
  if (k * (k + 3) >= 2 * d) return std::nullopt;
  const int den = 6 * d - k * k - 5 * k;
  // k(k+3) < 2d gives 6d - k^2 - 5k > 3k(k+3) - k^2 - 5k = 2k^2 + 4k > 0.
  if (den <= 0) throw std::logic_error("ricci_gap: non-positive denominator");
  return Rational(2 * k) / Rational(den);
}

inline Rational critical_q0(int k, int d) {
  detail::require_dimensions(k, d);
  return Rational(2 * d - k) / Rational(d - k);
}

inline Rational critical_p0(int k, int d) {
  detail::require_dimensions(k, d);
  return Rational(2 * d - k) / Rational(d);
}

/// p with 1/p = (1 + (d/l)(1/ptilde)) / q0, the exponent transfer between the
/// auxiliary estimate and the restricted convolution estimate.
inline Rational ptilde_to_p(const Rational& ptilde, int k, int l) {
  if (l < 1) throw InvalidDimension("codimension l must be at least 1");
  detail::require_dimensions(k, k + l);
  if (ptilde <= 1) throw std::domain_error("ptilde_to_p: ptilde must exceed 1");
  const int d = k + l;
  const Rational inv_p = (Rational(1) + Rational(d, l) / ptilde) / critical_q0(k, d);
  return Rational(1) / inv_p;
}

class TypeSet {
 public:
  TypeSet(int k, int d) : k_(k), d_(d), vertices_(triangle_vertices(k, d)), ricci_gap_(ricci_gap(k, d)) {}

  int k() const { return k_; }
  int d() const { return d_; }
  int l() const { return d_ - k_; }
  const std::array<ExponentPair, 3>& vertices() const { return vertices_; }
  const std::optional<Rational>& gap() const { return ricci_gap_; }

  bool contains(const ExponentPair& pt, Containment mode) const {
    // Counter-clockwise orientation: (0,0) -> vertex -> (1,1) has positive area,
    // so each edge keeps the interior on its left.
    const auto& a = vertices_[0];
    const auto& b = vertices_[2];
    const auto& c = vertices_[1];
    const Rational s1 = orient(a, b, pt), s2 = orient(b, c, pt), s3 = orient(c, a, pt);
    const bool strict = mode == Containment::interior;
    auto ok = [strict](const Rational& s) { return strict ? s > 0 : s >= 0; };
    if (!(ok(s1) && ok(s2) && ok(s3))) return false;
    if (ricci_gap_) {
      const Rational diff = pt.inv_p - pt.inv_q;
      return strict ? diff < *ricci_gap_ : diff <= *ricci_gap_;
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : vertices_)
      verts.push_back(nlohmann::json::array({rational_to_json(v.inv_p), rational_to_json(v.inv_q)}));
    return {{"k", k_},
            {"l", l()},
            {"vertices", verts},
            {"ricci_gap", ricci_gap_ ? rational_to_json(*ricci_gap_) : nlohmann::json(nullptr)}};
  }

 private:
  static Rational orient(const ExponentPair& a, const ExponentPair& b, const ExponentPair& c) {
    return (b.inv_p - a.inv_p) * (c.inv_q - a.inv_q) - (b.inv_q - a.inv_q) * (c.inv_p - a.inv_p);
  }

  int k_;
  int d_;
  std::array<ExponentPair, 3> vertices_;
  std::optional<Rational> ricci_gap_;
};

inline bool typeset_contains(const TypeSet& ts, const ExponentPair& pt, Containment mode) {
  return ts.contains(pt, mode);
}

}  // namespace surfconv
