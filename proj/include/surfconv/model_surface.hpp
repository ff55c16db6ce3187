#pragma once

// Quadratic model surfaces y -> (y; Phi_1(y), ..., Phi_l(y)) with
// Phi_j(y) = sum_i c_i^j y_i^2, built from a k x l coefficient matrix C.
//
// Exact quantities (nonsingular row submatrices, the minimal row-submatrix determinant,
// the norm constant M) are computed with rationals; everything evaluated at
// sample points uses the double view of C.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "surfconv/rational.hpp"
#include "surfconv/rng.hpp"

namespace surfconv {

using IndexSet = std::vector<std::size_t>;  // sorted, 0-based

class SingularSubmatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CoefficientMatrix {
 public:
  CoefficientMatrix(int k, int l, std::vector<Rational> entries)
      : k_(k), l_(l), entries_(std::move(entries)) {
    if (k < 1 || l < 1 || l > k)
      throw std::invalid_argument("coefficient matrix needs 1 <= l <= k, got k=" + std::to_string(k) +
                                  " l=" + std::to_string(l));
    if (entries_.size() != static_cast<std::size_t>(k * l))
      throw std::invalid_argument("coefficient matrix: expected " + std::to_string(k * l) + " entries");
    values_.reserve(entries_.size());
    for (const auto& e : entries_) values_.push_back(to_double(e));
  }

  /// Integer entries given row by row.
  static CoefficientMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    if (rows.empty()) throw std::invalid_argument("coefficient matrix: no rows");
    const int k = static_cast<int>(rows.size());
    const int l = static_cast<int>(rows.front().size());
    std::vector<Rational> e;
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != l) throw std::invalid_argument("coefficient matrix: ragged rows");
      for (auto v : r) e.emplace_back(v);
    }
    return {k, l, std::move(e)};
  }

  static CoefficientMatrix from_json(const nlohmann::json& j) {
    const int k = j.at("k").get<int>();
    const int l = j.at("l").get<int>();
    const auto& arr = j.at("entries");
    if (!arr.is_array()) throw std::invalid_argument("matrix entries must be an array");
    std::vector<Rational> e;
    for (const auto& v : arr) e.push_back(rational_from_json(v));
    return {k, l, std::move(e)};
  }

  nlohmann::json to_json() const {
    nlohmann::json e = nlohmann::json::array();
    for (const auto& v : entries_) e.push_back(rational_to_json(v));
    return {{"k", k_}, {"l", l_}, {"entries", e}};
  }

  int k() const { return k_; }
  int l() const { return l_; }
  int d() const { return k_ + l_; }

  const Rational& exact(std::size_t i, std::size_t j) const { return entries_[i * l_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * l_ + j]; }
  std::span<const double> float_view() const { return values_; }

  /// t * C, for scaling properties.
  CoefficientMatrix scaled(const Rational& t) const {
    std::vector<Rational> e;
    for (const auto& v : entries_) e.push_back(v * t);
    return {k_, l_, std::move(e)};
  }

  bool operator==(const CoefficientMatrix& o) const {
    return k_ == o.k_ && l_ == o.l_ && entries_ == o.entries_;
  }

 private:
  int k_;
  int l_;
  std::vector<Rational> entries_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Exact linear algebra

namespace detail {

/// Fraction-free (Bareiss) determinant of a square integer matrix, row-major.
inline BigInt bareiss_determinant(std::vector<BigInt> a, std::size_t n) {
  if (n == 0) return 1;
  BigInt prev = 1;
  int sign = 1;
  for (std::size_t p = 0; p + 1 < n; ++p) {
    if (a[p * n + p] == 0) {
      std::size_t r = p + 1;
      while (r < n && a[r * n + p] == 0) ++r;
      if (r == n) return 0;
      for (std::size_t c = 0; c < n; ++c) std::swap(a[p * n + c], a[r * n + c]);
      sign = -sign;
    }
    for (std::size_t i = p + 1; i < n; ++i) {
      for (std::size_t j = p + 1; j < n; ++j)
        a[i * n + j] = (a[i * n + j] * a[p * n + p] - a[i * n + p] * a[p * n + j]) / prev;
      a[i * n + p] = 0;
    }
    prev = a[p * n + p];
  }
  return sign * a[(n - 1) * n + (n - 1)];
}

/// Exact inverse by Gauss-Jordan over the rationals; empty result if singular.
inline std::vector<Rational> rational_inverse(std::vector<Rational> a, std::size_t n) {
  std::vector<Rational> inv(n * n, Rational(0));
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1;
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t r = p;
    while (r < n && a[r * n + p] == 0) ++r;
    if (r == n) return {};
    if (r != p)
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(a[p * n + c], a[r * n + c]);
        std::swap(inv[p * n + c], inv[r * n + c]);
      }
    const Rational piv = a[p * n + p];
    for (std::size_t c = 0; c < n; ++c) {
      a[p * n + c] /= piv;
      inv[p * n + c] /= piv;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i == p || a[i * n + p] == 0) continue;
      const Rational f = a[i * n + p];
      for (std::size_t c = 0; c < n; ++c) {
        a[i * n + c] -= f * a[p * n + c];
        inv[i * n + c] -= f * inv[p * n + c];
      }
    }
  }
  return inv;
}

/// Calls fn(subset) for every size-m subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t m, Fn&& fn) {
  IndexSet s(m);
  std::iota(s.begin(), s.end(), std::size_t{0});
  if (m > n) return;
  for (;;) {
    fn(static_cast<const IndexSet&>(s));
    std::size_t i = m;
    while (i > 0 && s[i - 1] == n - m + (i - 1)) --i;
    if (i == 0) return;
    ++s[i - 1];
    for (std::size_t j = i; j < m; ++j) s[j] = s[j - 1] + 1;
  }
}

}  // namespace detail

/// Exact determinant of the l x l submatrix keeping `rows` (in the given order).
inline Rational row_submatrix_det(const CoefficientMatrix& C, const IndexSet& rows) {
  const std::size_t n = static_cast<std::size_t>(C.l());
  if (rows.size() != n) throw std::invalid_argument("row_submatrix_det: need exactly l rows");
  // Clear denominators row by row, then run fraction-free elimination on integers.
  std::vector<BigInt> a(n * n);
  BigInt scale = 1;
  for (std::size_t r = 0; r < n; ++r) {
    BigInt lcm = 1;
    for (std::size_t c = 0; c < n; ++c) lcm = boost::multiprecision::lcm(lcm, denominator(C.exact(rows[r], c)));
    for (std::size_t c = 0; c < n; ++c) {
      const Rational v = C.exact(rows[r], c) * Rational(lcm);
      a[r * n + c] = numerator(v);
    }
    scale *= lcm;
  }
  return Rational(detail::bareiss_determinant(std::move(a), n), scale);
}

struct StarReport {
  bool holds = false;
  Rational min_abs_det;             // c(C): min |det| over all l x l row-submatrices
  std::optional<IndexSet> witness;  // lexicographically least singular row set

  nlohmann::json to_json() const {
    nlohmann::json w = nullptr;
    if (witness) {
      w = nlohmann::json::array();
      for (auto i : *witness) w.push_back(i + 1);
    }
    return {{"holds", holds}, {"min_abs_det", rational_to_json(min_abs_det)}, {"witness_rows", w}};
  }
};

inline StarReport check_star(const CoefficientMatrix& C) {
  StarReport rep;
  bool first = true;
  detail::for_each_subset(C.k(), C.l(), [&](const IndexSet& rows) {
    const Rational det = abs(row_submatrix_det(C, rows));
    if (first || det < rep.min_abs_det) rep.min_abs_det = det;
    first = false;
    if (det == 0 && !rep.witness) rep.witness = rows;
  });
  rep.holds = rep.min_abs_det > 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Forms and maps

/// Phi(y) in R^l.
inline std::vector<double> phi(const CoefficientMatrix& C, std::span<const double> y) {
  std::vector<double> out(C.l(), 0.0);
  for (int i = 0; i < C.k(); ++i) {
    const double y2 = y[i] * y[i];
    for (int j = 0; j < C.l(); ++j) out[j] += C(i, j) * y2;
  }
  return out;
}

/// (y; Phi(y)) in R^d.
inline std::vector<double> surface_point(const CoefficientMatrix& C, std::span<const double> y) {
  std::vector<double> out(y.begin(), y.end());
  const auto p = phi(C, y);
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// L_y x = (L_1(x,y), ..., L_l(x,y)).
inline std::vector<double> bilinear(const CoefficientMatrix& C, std::span<const double> x,
                                    std::span<const double> y) {
  std::vector<double> out(C.l(), 0.0);
  for (int i = 0; i < C.k(); ++i) {
    const double xy = x[i] * y[i];
    for (int j = 0; j < C.l(); ++j) out[j] += C(i, j) * xy;
  }
  return out;
}

/// L*_y zeta, with (L*_y zeta)(i) = y_i sum_j c_i^j zeta_j.
inline std::vector<double> adjoint(const CoefficientMatrix& C, std::span<const double> y,
                                   std::span<const double> zeta) {
  std::vector<double> out(C.k(), 0.0);
  for (int i = 0; i < C.k(); ++i) {
    double s = 0.0;
    for (int j = 0; j < C.l(); ++j) s += C(i, j) * zeta[j];
    out[i] = y[i] * s;
  }
  return out;
}

/// L*_1 zeta = C zeta.
inline std::vector<double> adjoint_one(const CoefficientMatrix& C, std::span<const double> zeta) {
  std::vector<double> ones(C.k(), 1.0);
  return adjoint(C, ones, zeta);
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// The norm constant M

struct NormConstant {
  double M = 0.0;          // rounded up from sqrt(M_squared)
  Rational M_squared;      // exact
  IndexSet worst_rows;     // row set attaining the maximum
};

/// Least M with |zeta|_2 <= M max_{i in P} |(C zeta)_i| for all zeta and all |P| = l.
/// For each P this is the l_inf -> l_2 norm of (C_P)^{-1}, attained at a sign vector.
inline NormConstant norm_constant(const CoefficientMatrix& C) {
  const std::size_t l = static_cast<std::size_t>(C.l());
  NormConstant out;
  bool first = true;
  detail::for_each_subset(C.k(), C.l(), [&](const IndexSet& rows) {
    std::vector<Rational> sub(l * l);
    for (std::size_t r = 0; r < l; ++r)
      for (std::size_t c = 0; c < l; ++c) sub[r * l + c] = C.exact(rows[r], c);
    const auto inv = detail::rational_inverse(std::move(sub), l);
    if (inv.empty()) throw SingularSubmatrix("constant_M: a row submatrix is singular");
    // The first sign is fixed to +1; s and -s give the same norm.
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (l - 1)); ++mask) {
      Rational sq = 0;
      for (std::size_t r = 0; r < l; ++r) {
        Rational acc = 0;
        for (std::size_t c = 0; c < l; ++c) {
          const bool neg = c > 0 && ((mask >> (c - 1)) & 1u);
          acc += neg ? Rational(-inv[r * l + c]) : inv[r * l + c];
        }
        sq += acc * acc;
      }
      if (first || sq > out.M_squared) {
        out.M_squared = sq;
        out.worst_rows = rows;
        first = false;
      }
    }
  });
  const double m = std::sqrt(to_double(out.M_squared));
  out.M = std::nextafter(m * (1.0 + 4.0 * std::numeric_limits<double>::epsilon()),
                         std::numeric_limits<double>::infinity());
  return out;
}

inline double constant_M(const CoefficientMatrix& C) { return norm_constant(C).M; }

// ---------------------------------------------------------------------------
// Frequency-cone selection

class InconsistentM : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Indices i with |zeta| <= M |(C zeta)_i|.
inline IndexSet cone_members(const CoefficientMatrix& C, std::span<const double> zeta, double M) {
  const double nz = norm2(zeta);
  const auto v = adjoint_one(C, zeta);
  IndexSet out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (nz <= M * std::abs(v[i])) out.push_back(i);
  return out;
}

/// Lexicographically least Q, |Q| = k - l, with |zeta| <= M |(C zeta)_i| for i in Q.
inline IndexSet select_Q(const CoefficientMatrix& C, std::span<const double> zeta, double M) {
  if (norm2(zeta) == 0.0) throw std::domain_error("select_Q: zeta must be nonzero");
  const std::size_t need = static_cast<std::size_t>(C.k() - C.l());
  IndexSet members = cone_members(C, zeta, M);
  if (members.size() < need)
    throw InconsistentM("select_Q: only " + std::to_string(members.size()) + " admissible rows, need " +
                        std::to_string(need));
  members.resize(need);
  return members;
}

/// Completes Q to a permutation (P in increasing order, then Q).
inline std::vector<std::size_t> complete_partition(int k, const IndexSet& Q) {
  std::vector<std::size_t> perm;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
    if (!std::binary_search(Q.begin(), Q.end(), i)) perm.push_back(i);
  perm.insert(perm.end(), Q.begin(), Q.end());
  return perm;
}

// ---------------------------------------------------------------------------
// Jacobian of (zeta, y_Q) -> tau, tau_i = y_i (C zeta)_i

namespace detail {
inline double float_row_det(const CoefficientMatrix& C, std::span<const std::size_t> rows) {
  const Eigen::Index l = C.l();
  Eigen::MatrixXd m(l, l);
  for (Eigen::Index r = 0; r < l; ++r)
    for (Eigen::Index c = 0; c < l; ++c) m(r, c) = C(rows[static_cast<std::size_t>(r)], static_cast<std::size_t>(c));
  return m.determinant();
}

inline void check_partition(const CoefficientMatrix& C, std::span<const std::size_t> partition) {
  const std::size_t k = static_cast<std::size_t>(C.k());
  if (partition.size() != k) throw std::invalid_argument("partition must list all k indices");
  std::vector<bool> seen(k, false);
  for (auto i : partition) {
    if (i >= k || seen[i]) throw std::invalid_argument("partition is not a permutation");
    seen[i] = true;
  }
  for (std::size_t a = static_cast<std::size_t>(C.l()) + 1; a < k; ++a)
    if (partition[a - 1] >= partition[a]) throw std::invalid_argument("partition tail must be increasing");
}
}  // namespace detail

/// prod_{a<=l} |y_{i_a}| * |D(i_1..i_l)| * prod_{a>l} |(C zeta)(i_a)|.
inline double jacobian_closed_form(const CoefficientMatrix& C, std::span<const double> y,
                                   std::span<const double> zeta, std::span<const std::size_t> partition) {
  detail::check_partition(C, partition);
  const std::size_t l = static_cast<std::size_t>(C.l());
  const auto v = adjoint_one(C, zeta);
  double J = std::abs(detail::float_row_det(C, partition.first(l)));
  for (std::size_t a = 0; a < l; ++a) J *= std::abs(y[partition[a]]);
  for (std::size_t a = l; a < partition.size(); ++a) J *= std::abs(v[partition[a]]);
  return J;
}

struct FdJacobian {
  double value = 0.0;
  std::optional<std::string> warning;
};

/// |det| of the central-difference Jacobian of (zeta, y_Q) -> tau with y_P held fixed.
inline FdJacobian jacobian_fd(const CoefficientMatrix& C, std::span<const double> y, std::span<const double> zeta,
                              std::span<const std::size_t> partition, double h = 1e-5) {
  detail::check_partition(C, partition);
  const std::size_t k = static_cast<std::size_t>(C.k()), l = static_cast<std::size_t>(C.l());
  std::vector<double> vars(k);
  for (std::size_t j = 0; j < l; ++j) vars[j] = zeta[j];
  for (std::size_t a = l; a < k; ++a) vars[a] = y[partition[a]];

  auto map = [&](const std::vector<double>& v) {
    std::vector<double> yy(y.begin(), y.end());
    for (std::size_t a = l; a < k; ++a) yy[partition[a]] = v[a];
    const auto tau = adjoint(C, yy, std::span<const double>(v.data(), l));
    std::vector<double> out(k);
    for (std::size_t a = 0; a < k; ++a) out[a] = tau[partition[a]];
    return out;
  };

  Eigen::MatrixXd jac(k, k);
  for (std::size_t c = 0; c < k; ++c) {
    auto plus = vars, minus = vars;
    plus[c] += h;
    minus[c] -= h;
    const auto fp = map(plus), fm = map(minus);
    for (std::size_t r = 0; r < k; ++r) jac(r, c) = (fp[r] - fm[r]) / (2.0 * h);
  }
  FdJacobian out;
  out.value = std::abs(jac.partialPivLu().determinant());

  const auto v = adjoint_one(C, zeta);
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < l; ++a) smallest = std::min(smallest, std::abs(y[partition[a]]));
  for (std::size_t a = l; a < k; ++a) smallest = std::min(smallest, std::abs(v[partition[a]]));
  if (smallest <= 1e-6) out.warning = "near-singular configuration: a Jacobian factor is below 1e-6";
  return out;
}

// ---------------------------------------------------------------------------
// Lower bound J >= c(C) M^{-(k-l)} |zeta|^{k-l} on the unit shell

inline double jest_lower_bound(const CoefficientMatrix& C) {
  const auto star = check_star(C);
  if (!star.holds) throw SingularSubmatrix("jest_lower_bound: a row submatrix is singular");
  return to_double(star.min_abs_det) / std::pow(constant_M(C), C.k() - C.l());
}

struct JestReport {
  std::size_t samples = 0;
  double bound_constant = 0.0;
  double min_ratio = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::optional<nlohmann::json> counterexample;

  bool passed() const { return violations == 0 && min_ratio >= 1.0; }
};

/// Draws y with |y_i| in [1, 2) and random signs, zeta standard normal; checks the bound.
inline JestReport verify_jest(const CoefficientMatrix& C, std::size_t samples, std::uint64_t seed = kDefaultSeed) {
  JestReport rep;
  rep.samples = samples;
  rep.bound_constant = jest_lower_bound(C);
  const double M = constant_M(C);
  const std::size_t k = static_cast<std::size_t>(C.k()), l = static_cast<std::size_t>(C.l());
  Rng rng(seed, 0x7E57);
  std::vector<double> y(k), zeta(l);
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : y) v = rng.sign() * rng.uniform(1.0, 2.0);
    do {
      for (auto& v : zeta) v = rng.normal();
    } while (norm2(zeta) == 0.0);
    const IndexSet Q = select_Q(C, zeta, M);
    const auto perm = complete_partition(C.k(), Q);
    const double J = jacobian_closed_form(C, y, zeta, perm);
    const double ratio = J / (rep.bound_constant * std::pow(norm2(zeta), static_cast<double>(k - l)));
    rep.min_ratio = std::min(rep.min_ratio, ratio);
    if (ratio < 1.0) {
      ++rep.violations;
      if (!rep.counterexample) rep.counterexample = nlohmann::json{{"y", y}, {"zeta", zeta}, {"ratio", ratio}};
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dyadic shells {2^{n_i} <= |y_i| < 2^{n_i + 1}}

struct ShellIndex {
  std::vector<int> n;

  bool contains(std::span<const double> y) const {
    if (y.size() != n.size()) return false;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double a = std::abs(y[i]);
      if (!(std::ldexp(1.0, n[i]) <= a && a < std::ldexp(1.0, n[i] + 1))) return false;
    }
    return true;
  }

  /// m_k of the shell: prod_i 2 * 2^{n_i} = 2^{sum (n_i + 1)}.
  double volume() const {
    int e = 0;
    for (int v : n) e += v + 1;
    return std::ldexp(1.0, e);
  }

  friend bool operator==(const ShellIndex&, const ShellIndex&) = default;
};

inline ShellIndex dyadic_shell_index(std::span<const double> y) {
  ShellIndex s;
  for (double v : y) {
    if (v == 0.0 || !std::isfinite(v)) throw std::domain_error("dyadic_shell_index: coordinate is zero");
    int e = 0;
    std::frexp(std::abs(v), &e);  // |v| = m 2^e with m in [1/2, 1)
    s.n.push_back(e - 1);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Curvature expression for k = 2, d = 4

using Sym2 = std::array<std::array<Rational, 2>, 2>;

/// Evaluates the k=2, d=4 nondegeneracy expression for Phi_j(y) = y^T Q_j y,
/// whose second partials are 2 Q_j[a][b].
inline Rational curvature_2_4(const Sym2& Q1, const Sym2& Q2) {
  auto second = [](const Sym2& Q, int a, int b) { return Rational(2) * Q[a][b]; };
  const Rational p1_11 = second(Q1, 0, 0), p1_12 = second(Q1, 0, 1), p1_22 = second(Q1, 1, 1);
  const Rational p2_11 = second(Q2, 0, 0), p2_12 = second(Q2, 0, 1), p2_22 = second(Q2, 1, 1);
  const Rational a = p1_11 * p2_12 - p2_11 * p1_12;
  const Rational b = p2_22 * p1_12 - p2_12 * p1_22;
  const Rational c = p1_11 * p2_22 - p2_11 * p1_22;
  return a * b - c * c;
}

}  // namespace surfconv
