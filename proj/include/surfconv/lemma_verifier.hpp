#pragma once

// Numerical checks of the integral formula
//
//   int_{|y_j| ~ 1} int_{R^l} |zeta|^rho w(L*_y zeta) dzeta dy  <=  c int_{R^k} |tau|^{rho-k+l} w(tau) dtau,
//
// its split over the cones F_Q, the change of variables behind it, and the
// weighted Plancherel bound obtained from it with w = |f^|^2.
//
// y is drawn uniformly from the shell [1,2)^k with random signs (volume 2^k);
// the zeta and tau integrals are done in polar coordinates with the radial
// power folded into a graded rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "surfconv/gaussian.hpp"
#include "surfconv/model_surface.hpp"
#include "surfconv/parallel.hpp"
#include "surfconv/quadrature.hpp"
#include "surfconv/rng.hpp"

namespace surfconv {

/// a exp(1 - 1 / (1 - |x - c|^2 / r^2)) inside B(c, r), zero outside; peak value a.
struct BumpSpec {
  double amplitude = 1.0;
  std::vector<double> center;
  double radius = 1.0;

  double operator()(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    s /= radius * radius;
    return s < 1.0 ? amplitude * std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  }
};

class WeightSpec {
 public:
  WeightSpec(GaussianSpec g, std::string id = "gauss") : w_(std::move(g)), id_(std::move(id)) {}
  WeightSpec(BumpSpec b, std::string id = "bump") : w_(std::move(b)), id_(std::move(id)) {
    if (!(std::get<BumpSpec>(w_).radius > 0.0)) throw std::invalid_argument("bump radius must be positive");
  }

  const std::string& id() const { return id_; }
  std::size_t dim() const {
    return std::visit([](const auto& w) -> std::size_t {
      if constexpr (std::is_same_v<std::decay_t<decltype(w)>, GaussianSpec>) return w.dim();
      else return w.center.size();
    }, w_);
  }
  double operator()(std::span<const double> x) const {
    return std::visit([&](const auto& w) { return w(x); }, w_);
  }
  const GaussianSpec* gaussian() const { return std::get_if<GaussianSpec>(&w_); }

  /// Radius of a centered ball outside which w is treated as zero.
  double truncation_radius(double tail) const {
    if (const auto* g = gaussian()) {
      // The ball of radius tail * sigma_max about the mean holds at least
      // 1 - Q(k/2, tail^2/2) of the mass.
      const double lost = boost::math::gamma_q(0.5 * static_cast<double>(g->dim()), 0.5 * tail * tail);
      if (lost > 1e-3) throw std::invalid_argument("truncation radius covers less than 99.9% of the weight's mass");
      return g->support_radius(tail);
    }
    const auto& b = std::get<BumpSpec>(w_);
    return norm2(b.center) + b.radius;
  }

  nlohmann::json to_json() const {
    if (const auto* g = gaussian()) {
      auto j = g->to_json();
      j["id"] = id_;
      return j;
    }
    const auto& b = std::get<BumpSpec>(w_);
    return {{"kind", "bump"}, {"id", id_}, {"amplitude", b.amplitude}, {"center", b.center}, {"radius", b.radius}};
  }

  static WeightSpec from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "gaussian");
    const std::string id = j.value("id", kind);
    if (kind == "gaussian") return {GaussianSpec::from_json(j), id};
    if (kind == "bump")
      return {BumpSpec{j.value("amplitude", 1.0), j.at("center").get<std::vector<double>>(), j.value("radius", 1.0)}, id};
    throw std::invalid_argument("unknown weight kind '" + kind + "'");
  }

 private:
  std::variant<GaussianSpec, BumpSpec> w_;
  std::string id_;
};

/// Gaussian with mean in [-1/2, 1/2]^n and covariance A A^T + 0.25 I, A entries in [-1, 1].
inline GaussianSpec random_gaussian(Rng& rng, std::size_t n) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = rng.uniform(-0.5, 0.5);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = rng.uniform(-1.0, 1.0);
  const Eigen::MatrixXd S = A * A.transpose() + 0.25 * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  return {rng.uniform(0.5, 2.0), m, S};
}

inline std::vector<WeightSpec> gaussian_ensemble(std::size_t n, std::size_t count, std::uint64_t seed) {
  Rng rng(seed, 0x57ULL);
  std::vector<WeightSpec> out;
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(random_gaussian(rng, n), "g" + std::to_string(i));
  return out;
}

struct McConfig {
  std::uint64_t seed = kDefaultSeed;
  std::size_t n_y = 1000;
  quad::RadialRuleSpec radial{};
  std::size_t azimuth = 48;  // sphere resolution
  double tail = 8.0;         // truncation in standard deviations
  unsigned threads = 1;

  /// Doubles the y samples and the quadrature density.
  McConfig doubled() const {
    McConfig c = *this;
    c.n_y *= 2;
    c.radial.nodes_per_panel *= 2;
    c.azimuth *= 2;
    return c;
  }
};

struct RatioReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double stderr_ = 0.0;
  double rho = 0.0;
  std::string matrix_id;
  std::string w_id;
  std::optional<IndexSet> Q;  // empty optional: the whole of R^l
  std::size_t n_y = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json q = nullptr;
    if (Q) q = *Q;
    return {{"matrix_id", matrix_id}, {"rho", rho},   {"w_id", w_id},     {"Q", q},  {"lhs", lhs},
            {"rhs", rhs},             {"ratio", ratio}, {"stderr", stderr_}, {"n_y", n_y}, {"seed", seed}};
  }
};

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_lemma_preconditions(const CoefficientMatrix& C, double rho, const WeightSpec& w,
                                        const McConfig& cfg) {
  if (!check_star(C).holds) throw SingularSubmatrix("a row submatrix is singular");
  if (!(rho > -static_cast<double>(C.l()) + 0.1))
    throw std::domain_error("rho must exceed -l + 0.1 for the zeta integral to converge");
  if (w.dim() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("weight must live on R^k");
  if (cfg.n_y == 0) throw std::invalid_argument("n_y must be positive");
}

/// int_{R^n} |x|^{rho - n + m} w(x) dx  written as  int_{S^{n-1}} int_0^R r^{rho + m - 1} w(r theta).
inline double polar_integral(std::size_t n, double exponent, double R, const WeightSpec& w, const McConfig& cfg) {
  const auto sphere = quad::sphere_rule(n, cfg.azimuth);
  const auto radial = quad::radial_rule(R, exponent, cfg.radial);
  std::vector<double> x(n);
  double total = 0.0;
  for (std::size_t d = 0; d < sphere.size(); ++d) {
    const double* th = sphere.point(d);
    double inner = 0.0;
    for (std::size_t i = 0; i < radial.size(); ++i) {
      for (std::size_t a = 0; a < n; ++a) x[a] = radial.nodes[i] * th[a];
      inner += radial.weights[i] * w(x);
    }
    total += sphere.weights[d] * inner;
  }
  return total;
}

}  // namespace detail

/// Shell integral of the left side, with its split over the cones F_Q.
struct LemmaIntegrals {
  double rho = 0.0;
  double rhs = 0.0;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  std::vector<IndexSet> q_sets;          // all Q with |Q| = k - l, lexicographic
  std::vector<double> per_q;             // lhs over the disjoint F_Q chosen by select_Q
  std::vector<double> per_q_stderr;
  std::vector<double> per_q_membership;  // lhs over the (overlapping) membership sets
  std::size_t n_y = 0;
  std::uint64_t seed = 0;

  double cover_sum() const {
    double s = 0.0;
    for (double v : per_q) s += v;
    return s;
  }
  double membership_sum() const {
    double s = 0.0;
    for (double v : per_q_membership) s += v;
    return s;
  }
};

inline double lemma_rhs(const CoefficientMatrix& C, double rho, const WeightSpec& w, const McConfig& cfg = {}) {
  detail::require_lemma_preconditions(C, rho, w, cfg);
  const double R = w.truncation_radius(cfg.tail);
  return detail::polar_integral(static_cast<std::size_t>(C.k()), rho + C.l() - 1.0, R, w, cfg);
}

inline LemmaIntegrals lemma_integrals(const CoefficientMatrix& C, double rho, const WeightSpec& w,
                                      const McConfig& cfg = {}) {
  detail::require_lemma_preconditions(C, rho, w, cfg);
  const std::size_t k = static_cast<std::size_t>(C.k()), l = static_cast<std::size_t>(C.l());
  const double Rw = w.truncation_radius(cfg.tail);
  const double a = rho + static_cast<double>(l) - 1.0;

  LemmaIntegrals out;
  out.rho = rho;
  out.n_y = cfg.n_y;
  out.seed = cfg.seed;
  out.rhs = detail::polar_integral(k, a, Rw, w, cfg);
  if (!(out.rhs > 0.0)) throw DegenerateInput("right-hand side vanishes: w is zero");

  detail::for_each_subset(k, k - l, [&](const IndexSet& q) { out.q_sets.push_back(q); });
  const std::size_t nq = out.q_sets.size();
  auto q_index = [&](const IndexSet& q) {
    return static_cast<std::size_t>(std::lower_bound(out.q_sets.begin(), out.q_sets.end(), q) - out.q_sets.begin());
  };

  // F_Q membership depends on the direction of zeta only.
  const auto sphere = quad::sphere_rule(l, cfg.azimuth);
  const double M = constant_M(C);
  std::vector<std::size_t> chosen(sphere.size());
  std::vector<std::vector<std::size_t>> members(sphere.size());
  for (std::size_t d = 0; d < sphere.size(); ++d) {
    const std::span<const double> th(sphere.point(d), l);
    chosen[d] = q_index(select_Q(C, th, M));
    const auto cm = cone_members(C, th, M);
    detail::for_each_subset(cm.size(), k - l, [&](const IndexSet& pick) {
      IndexSet q;
      for (auto p : pick) q.push_back(cm[p]);
      members[d].push_back(q_index(q));
    });
  }
  const auto unit = quad::radial_rule(1.0, a, cfg.radial);
  const double shell_volume = std::ldexp(1.0, static_cast<int>(k));

  // Per y sample: one value per Q for the partition, then one per Q for membership.
  const auto chunks = map_chunks(cfg.n_y, 64, cfg.threads, [&](ChunkRange r) {
    std::vector<double> vals;
    vals.reserve((r.end - r.begin) * 2 * nq);
    std::vector<double> y(k), v(k), x(k);
    std::vector<double> by_dir(sphere.size());
    for (std::size_t s = r.begin; s < r.end; ++s) {
      Rng rng(cfg.seed, 0x1E44A000ULL + s);
      for (auto& yi : y) yi = rng.sign() * rng.uniform(1.0, 2.0);
      for (std::size_t d = 0; d < sphere.size(); ++d) {
        v = adjoint(C, y, std::span<const double>(sphere.point(d), l));
        const double Rd = Rw / norm2(v);
        double inner = 0.0;
        for (std::size_t i = 0; i < unit.size(); ++i) {
          const double t = Rd * unit.nodes[i];
          for (std::size_t c = 0; c < k; ++c) x[c] = t * v[c];
          inner += unit.weights[i] * w(x);
        }
        by_dir[d] = sphere.weights[d] * std::pow(Rd, a + 1.0) * inner;
      }
      const std::size_t base = vals.size();
      vals.resize(base + 2 * nq, 0.0);
      for (std::size_t d = 0; d < sphere.size(); ++d) {
        vals[base + chosen[d]] += shell_volume * by_dir[d];
        for (auto qi : members[d]) vals[base + nq + qi] += shell_volume * by_dir[d];
      }
    }
    return vals;
  });

  std::vector<double> sum(2 * nq, 0.0), sum_sq(nq, 0.0);
  double total = 0.0, total_sq = 0.0;
  for (const auto& chunk : chunks)
    for (std::size_t off = 0; off < chunk.size(); off += 2 * nq) {
      double t = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        sum[q] += chunk[off + q];
        sum_sq[q] += chunk[off + q] * chunk[off + q];
        sum[nq + q] += chunk[off + nq + q];
        t += chunk[off + q];
      }
      total += t;
      total_sq += t * t;
    }
  const double n = static_cast<double>(cfg.n_y);
  auto se = [n](double s, double s2) {
    if (n < 2) return 0.0;
    const double mean = s / n;
    return std::sqrt(std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0)) / n);
  };
  out.lhs = total / n;
  out.lhs_stderr = se(total, total_sq);
  for (std::size_t q = 0; q < nq; ++q) {
    out.per_q.push_back(sum[q] / n);
    out.per_q_stderr.push_back(se(sum[q], sum_sq[q]));
    out.per_q_membership.push_back(sum[nq + q] / n);
  }
  return out;
}

inline RatioReport lemma_ratio(const CoefficientMatrix& C, double rho, const WeightSpec& w, const McConfig& cfg = {},
                               std::string matrix_id = {}) {
  const auto li = lemma_integrals(C, rho, w, cfg);
  return {li.lhs, li.rhs, li.lhs / li.rhs, li.lhs_stderr / li.rhs, rho, std::move(matrix_id), w.id(),
          std::nullopt, cfg.n_y, cfg.seed};
}

/// Ratio restricted to F_Q, where F_Q is the set of zeta for which select_Q picks Q.
inline RatioReport per_q_ratio(const CoefficientMatrix& C, double rho, const WeightSpec& w, const IndexSet& Q,
                               const McConfig& cfg = {}, std::string matrix_id = {}) {
  if (Q.size() != static_cast<std::size_t>(C.k() - C.l()) || !std::is_sorted(Q.begin(), Q.end()))
    throw std::invalid_argument("Q must be an increasing index set of size k - l");
  const auto li = lemma_integrals(C, rho, w, cfg);
  const auto it = std::find(li.q_sets.begin(), li.q_sets.end(), Q);
  if (it == li.q_sets.end()) throw std::invalid_argument("Q out of range");
  const auto qi = static_cast<std::size_t>(it - li.q_sets.begin());
  return {li.per_q[qi], li.rhs, li.per_q[qi] / li.rhs, li.per_q_stderr[qi] / li.rhs, rho, std::move(matrix_id),
          w.id(), Q, cfg.n_y, cfg.seed};
}

/// Per-Q reports from one set of integrals, in the order of li.q_sets.
inline std::vector<RatioReport> per_q_reports(const LemmaIntegrals& li, const std::string& matrix_id,
                                              const std::string& w_id) {
  std::vector<RatioReport> out;
  for (std::size_t q = 0; q < li.q_sets.size(); ++q)
    out.push_back({li.per_q[q], li.rhs, li.per_q[q] / li.rhs, li.per_q_stderr[q] / li.rhs, li.rho, matrix_id, w_id,
                   li.q_sets[q], li.n_y, li.seed});
  return out;
}

// ---------------------------------------------------------------------------
// Change of variables (zeta, y_Q) -> tau = L*_y zeta with y_P fixed

struct ChangeOfVariablesSpec {
  std::size_t zeta_panels = 16;  // per axis over [-Z, Z]
  std::size_t nodes = 16;        // per panel
  int y_min_exp = -6;            // y_Q panels [2^e, 2^{e+1}] from this exponent ...
  int y_max_exp = 10;            // ... up to 2^y_max_exp on each side of 0
  double tail = 8.0;
};

struct ChangeOfVariablesResult {
  double exact = 0.0;
  double mapped = 0.0;
  double rel_err = 0.0;
  std::vector<std::string> warnings;
};

/// Compares int g(tau) dtau with int g(L*_y zeta) J dzeta dy_Q over all of R^l x R^{k-l};
/// the map is one-to-one off the null set where some (C zeta)_i, i in Q, vanishes.
inline ChangeOfVariablesResult change_of_variables_check(const CoefficientMatrix& C, const IndexSet& Q,
                                                         std::span<const double> y_fixed, const GaussianSpec& g,
                                                         const ChangeOfVariablesSpec& spec = {}) {
  const std::size_t k = static_cast<std::size_t>(C.k()), l = static_cast<std::size_t>(C.l());
  if (Q.size() != k - l) throw std::invalid_argument("Q must have k - l indices");
  if (g.dim() != k) throw std::invalid_argument("g must live on R^k");
  const auto partition = complete_partition(C.k(), Q);
  if (y_fixed.size() != l) throw std::invalid_argument("y_fixed gives the l coordinates outside Q");
  for (double v : y_fixed)
    if (!(std::abs(v) >= 1.0 && std::abs(v) < 2.0)) throw std::domain_error("fixed |y_i| must lie in [1, 2)");

  ChangeOfVariablesResult res;
  res.exact = g.integral();
  Eigen::MatrixXd CP(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t c = 0; c < l; ++c) CP(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = C(partition[r], c);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(CP);
  if (!lu.isInvertible()) throw SingularSubmatrix("change_of_variables_check: C_P is singular");
  const double cond_inv = lu.inverse().norm();
  if (cond_inv * CP.norm() > 1e8) res.warnings.push_back("C_P is badly conditioned");

  // zeta = C_P^{-1} (tau_P / y_P) stays within this box when |tau| <= R_g.
  double ymin = 2.0;
  for (double v : y_fixed) ymin = std::min(ymin, std::abs(v));
  const double Z = cond_inv * g.support_radius(spec.tail) / ymin;
  const auto zrule = quad::composite_gauss_legendre(spec.zeta_panels, spec.nodes, -Z, Z * (1.0 + 0.1 * std::numbers::sqrt2));

  quad::Rule1D yrule = quad::gauss_legendre(spec.nodes, 0.0, std::ldexp(1.0, spec.y_min_exp));
  for (int e = spec.y_min_exp; e < spec.y_max_exp; ++e)
    yrule.append(quad::gauss_legendre(spec.nodes, std::ldexp(1.0, e), std::ldexp(1.0, e + 1)));
  {
    const std::size_t half = yrule.size();
    for (std::size_t i = 0; i < half; ++i) {
      yrule.nodes.push_back(-yrule.nodes[i]);
      yrule.weights.push_back(yrule.weights[i]);
    }
  }

  const std::size_t nz = zrule.size(), ny = yrule.size(), q = k - l;
  std::size_t zcount = 1, ycount = 1;
  for (std::size_t a = 0; a < l; ++a) zcount *= nz;
  for (std::size_t a = 0; a < q; ++a) ycount *= ny;

  std::vector<double> zeta(l), y(k), tau(k);
  for (std::size_t a = 0; a < l; ++a) y[partition[a]] = y_fixed[a];
  double acc = 0.0;
  for (std::size_t zi = 0; zi < zcount; ++zi) {
    double wz = 1.0;
    std::size_t rem = zi;
    for (std::size_t a = 0; a < l; ++a) {
      zeta[a] = zrule.nodes[rem % nz];
      wz *= zrule.weights[rem % nz];
      rem /= nz;
    }
    for (std::size_t yi = 0; yi < ycount; ++yi) {
      double wy = 1.0;
      rem = yi;
      for (std::size_t a = 0; a < q; ++a) {
        y[partition[l + a]] = yrule.nodes[rem % ny];
        wy *= yrule.weights[rem % ny];
        rem /= ny;
      }
      tau = adjoint(C, y, zeta);
      const double gv = g(tau);
      if (gv == 0.0) continue;
      acc += wz * wy * gv * jacobian_closed_form(C, y, zeta, partition);
    }
  }
  res.mapped = acc;
  res.rel_err = res.exact == 0.0 ? std::abs(res.mapped) : std::abs(res.mapped - res.exact) / std::abs(res.exact);
  return res;
}

// ---------------------------------------------------------------------------
// Weighted Plancherel bound: A = shell integral of |f^(L*_y zeta)|^2 |zeta|^{d-2l}, B = ||f||_2^2

struct PlancherelReport {
  double weighted_integral = 0.0;  // A
  double weighted_stderr = 0.0;
  double l2_norm_sq = 0.0;         // B, closed form
  double rhs_quadrature = 0.0;     // int |f^|^2 by quadrature, equal to B by Plancherel
  double ratio = 0.0;

  nlohmann::json to_json() const {
    return {{"weighted_integral", weighted_integral}, {"stderr", weighted_stderr}, {"l2_norm_sq", l2_norm_sq},
            {"rhs_quadrature", rhs_quadrature},       {"ratio", ratio}};
  }
};

/// (d - 2l) - (k - l) with d = k + l: the weight exponent on the right side of the bound.
constexpr int plancherel_weight_exponent(int k, int l) { return ((k + l) - 2 * l) - (k - l); }

inline PlancherelReport plancherel_chain(const CoefficientMatrix& C, const GaussianSpec& f, const McConfig& cfg = {}) {
  if (f.dim() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("f must live on R^k");
  const WeightSpec w(f.fourier_modulus_squared(), "|f^|^2");
  const double rho = static_cast<double>(C.d() - 2 * C.l());
  const auto li = lemma_integrals(C, rho, w, cfg);
  PlancherelReport rep;
  rep.weighted_integral = li.lhs;
  rep.weighted_stderr = li.lhs_stderr;
  const double n2 = f.lp_norm(2.0);
  rep.l2_norm_sq = n2 * n2;
  rep.rhs_quadrature = li.rhs;
  rep.ratio = rep.weighted_integral / rep.l2_norm_sq;
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline void write_ratio_jsonl(std::ostream& os, const std::vector<RatioReport>& reports) {
  for (const auto& r : reports) os << r.to_json().dump() << '\n';
}

inline std::string format_q(const std::optional<IndexSet>& Q) {
  if (!Q) return "all";
  std::string s;
  for (std::size_t i = 0; i < Q->size(); ++i) s += (i ? ";" : "") + std::to_string((*Q)[i] + 1);
  return s.empty() ? "none" : s;
}

inline void write_ratio_csv(std::ostream& os, const std::vector<RatioReport>& reports, bool header = true) {
  std::ostringstream buf;
  buf << std::setprecision(17);
  if (header) buf << "matrix_id,rho,w_id,Q,lhs,rhs,ratio,stderr,n_y,seed\n";
  for (const auto& r : reports)
    buf << r.matrix_id << ',' << r.rho << ',' << r.w_id << ',' << format_q(r.Q) << ',' << r.lhs << ',' << r.rhs << ','
        << r.ratio << ',' << r.stderr_ << ',' << r.n_y << ',' << r.seed << '\n';
  os << buf.str();
}

}  // namespace surfconv
