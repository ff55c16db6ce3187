#pragma once

// The surface measure mu on S = {(y, Phi(y)) : |y| < 1}, discretized on a
// uniform y-grid, and pointwise convolutions mu * chi_E, mu * f. L^q norms of
// mu * chi_E are estimated by importance sampling near the surface; no
// d-dimensional grid is ever built.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "surfconv/exponent_geometry.hpp"
#include "surfconv/gaussian.hpp"
#include "surfconv/model_surface.hpp"
#include "surfconv/parallel.hpp"
#include "surfconv/rng.hpp"
#include "surfconv/test_sets.hpp"

namespace surfconv {

inline constexpr std::size_t kMaxAmbientDim = 16;

/// Atoms are the centers of grid cells of [-1, 1]^k (n per axis) lying in the
/// open unit ball, each of mass h^k and placed at (y, Phi(y)).
class SurfaceMeasure {
 public:
  SurfaceMeasure(CoefficientMatrix C, std::int64_t resolution) : C_(std::move(C)), n_(resolution) {
    if (resolution < 8) throw std::invalid_argument("surface measure resolution must be at least 8");
    if (C_.d() > static_cast<int>(kMaxAmbientDim)) throw std::invalid_argument("ambient dimension above 16");
    if (!check_star(C_).holds) warnings_.push_back("this matrix has a singular row submatrix");
    h_ = 2.0 / static_cast<double>(n_);
    count_ = count_atoms();
  }

  const CoefficientMatrix& matrix() const { return C_; }
  std::size_t k() const { return static_cast<std::size_t>(C_.k()); }
  std::size_t d() const { return static_cast<std::size_t>(C_.d()); }
  std::int64_t resolution() const { return n_; }
  double spacing() const { return h_; }
  double atom_weight() const { return std::pow(h_, static_cast<double>(k())); }
  std::uint64_t atom_count() const { return count_; }
  double total_mass() const { return static_cast<double>(count_) * atom_weight(); }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Calls fn(y, point) for every atom whose y lies in [lo, hi] (k-vectors).
  template <typename Fn>
  void for_each_atom_in(std::span<const double> lo, std::span<const double> hi, Fn&& fn) const {
    const std::size_t k = this->k(), d = this->d();
    std::array<std::int64_t, kMaxAmbientDim> first{}, last{}, idx{};
    for (std::size_t a = 0; a < k; ++a) {
      first[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil((lo[a] + 1.0) / h_ - 0.5)));
      last[a] = std::min<std::int64_t>(n_ - 1, static_cast<std::int64_t>(std::floor((hi[a] + 1.0) / h_ - 0.5)));
      if (first[a] > last[a]) return;
      idx[a] = first[a];
    }
    std::array<double, kMaxAmbientDim> p{};
    const std::size_t l = d - k;
    for (;;) {
      double r2 = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        p[a] = -1.0 + (static_cast<double>(idx[a]) + 0.5) * h_;
        r2 += p[a] * p[a];
      }
      if (r2 < 1.0) {
        for (std::size_t j = 0; j < l; ++j) p[k + j] = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          const double y2 = p[a] * p[a];
          for (std::size_t j = 0; j < l; ++j) p[k + j] += C_(a, j) * y2;
        }
        fn(std::span<const double>(p.data(), k), std::span<const double>(p.data(), d));
      }
      std::size_t a = k;
      while (a > 0) {
        --a;
        if (++idx[a] <= last[a]) break;
        idx[a] = first[a];
        if (a == 0) return;
      }
    }
  }

  template <typename Fn>
  void for_each_atom(Fn&& fn) const {
    const std::vector<double> lo(k(), -1.0), hi(k(), 1.0);
    for_each_atom_in(lo, hi, std::forward<Fn>(fn));
  }

  /// y-coordinates of a uniformly chosen atom.
  void sample_atom(Rng& rng, std::span<double> y) const {
    for (;;) {
      double r2 = 0.0;
      for (std::size_t a = 0; a < k(); ++a) {
        y[a] = -1.0 + (static_cast<double>(rng.below(static_cast<std::uint64_t>(n_))) + 0.5) * h_;
        r2 += y[a] * y[a];
      }
      if (r2 < 1.0) return;
    }
  }

 private:
  std::uint64_t count_atoms() const {
    // Count along the last axis in closed form for every prefix of the first k-1.
    const std::size_t k = this->k();
    std::array<std::int64_t, kMaxAmbientDim> idx{};
    std::uint64_t total = 0;
    auto center = [&](std::int64_t i) { return -1.0 + (static_cast<double>(i) + 0.5) * h_; };
    for (;;) {
      double r2 = 0.0;
      for (std::size_t a = 0; a + 1 < k; ++a) r2 += center(idx[a]) * center(idx[a]);
      if (r2 < 1.0) {
        const double t = std::sqrt(1.0 - r2);
        auto lo = static_cast<std::int64_t>(std::ceil((1.0 - t) / h_ - 0.5));
        auto hi = static_cast<std::int64_t>(std::floor((1.0 + t) / h_ - 0.5));
        lo = std::max<std::int64_t>(lo - 1, 0);
        hi = std::min<std::int64_t>(hi + 1, n_ - 1);
        while (lo <= hi && r2 + center(lo) * center(lo) >= 1.0) ++lo;
        while (hi >= lo && r2 + center(hi) * center(hi) >= 1.0) --hi;
        if (hi >= lo) total += static_cast<std::uint64_t>(hi - lo + 1);
      }
      if (k == 1) break;
      std::size_t a = k - 1;
      bool done = false;
      while (true) {
        if (a == 0) {
          done = true;
          break;
        }
        --a;
        if (++idx[a] < n_) break;
        idx[a] = 0;
      }
      if (done) break;
    }
    return total;
  }

  CoefficientMatrix C_;
  std::int64_t n_;
  double h_ = 0.0;
  std::uint64_t count_ = 0;
  std::vector<std::string> warnings_;
};

inline SurfaceMeasure build_measure(const CoefficientMatrix& C, std::int64_t resolution) { return {C, resolution}; }

// ---------------------------------------------------------------------------
// Pointwise convolution

namespace detail {

/// Atoms p with z - p in box `b` and, when `earlier` is given, in none of those boxes.
inline std::uint64_t count_box_atoms(const SurfaceMeasure& mu, const Box& b, std::span<const double> z,
                                     std::span<const Box> earlier = {}) {
  const std::size_t k = mu.k(), d = mu.d();
  std::array<double, kMaxAmbientDim> lo{}, hi{}, diff{};
  for (std::size_t a = 0; a < d; ++a) {
    lo[a] = z[a] - b.hi[a];
    hi[a] = z[a] - b.lo[a];
  }
  std::uint64_t hits = 0;
  mu.for_each_atom_in(std::span<const double>(lo.data(), k), std::span<const double>(hi.data(), k),
                      [&](std::span<const double>, std::span<const double> p) {
                        for (std::size_t a = k; a < d; ++a)
                          if (p[a] < lo[a] || p[a] > hi[a]) return;
                        if (earlier.empty()) {
                          ++hits;
                          return;
                        }
                        for (std::size_t a = 0; a < d; ++a) diff[a] = z[a] - p[a];
                        const std::span<const double> x(diff.data(), d);
                        for (const auto& e : earlier)
                          if (e.contains(x)) return;
                        ++hits;
                      });
  return hits;
}

}  // namespace detail

/// (mu * chi_B)(z) for a single box B.
inline double convolve_box_at(const SurfaceMeasure& mu, const Box& b, std::span<const double> z) {
  if (b.lo.size() != mu.d() || z.size() != mu.d()) throw std::invalid_argument("convolve_box_at: dimension mismatch");
  return static_cast<double>(detail::count_box_atoms(mu, b, z)) * mu.atom_weight();
}

/// (mu * chi_E)(z) = sum_i w_i chi_E(z - p_i).
inline double convolve_at(const SurfaceMeasure& mu, const TestSet& E, std::span<const double> z) {
  const std::size_t k = mu.k(), d = mu.d();
  if (E.dim() != d || z.size() != d) throw std::invalid_argument("convolve_at: dimension mismatch");
  if (E.kind() == TestSet::Kind::box_union) {
    // Box by box, each atom counted in the first box containing z - p.
    const auto& boxes = E.boxes();
    std::uint64_t hits = 0;
    for (std::size_t j = 0; j < boxes.size(); ++j)
      hits += detail::count_box_atoms(mu, boxes[j], z, std::span<const Box>(boxes.data(), j));
    return static_cast<double>(hits) * mu.atom_weight();
  }
  const Box b = E.bounding_box();
  std::array<double, kMaxAmbientDim> lo{}, hi{}, diff{};
  for (std::size_t a = 0; a < d; ++a) {
    lo[a] = z[a] - b.hi[a];
    hi[a] = z[a] - b.lo[a];
  }
  std::uint64_t hits = 0;
  mu.for_each_atom_in(std::span<const double>(lo.data(), k), std::span<const double>(hi.data(), k),
                      [&](std::span<const double>, std::span<const double> p) {
                        for (std::size_t a = k; a < d; ++a)
                          if (p[a] < lo[a] || p[a] > hi[a]) return;
                        for (std::size_t a = 0; a < d; ++a) diff[a] = z[a] - p[a];
                        if (E.contains(std::span<const double>(diff.data(), d))) ++hits;
                      });
  return static_cast<double>(hits) * mu.atom_weight();
}

/// (mu * f)(z) = sum_i w_i f(z - p_i); `support`, when given, bounds where f is nonzero.
inline double convolve_f_at(const SurfaceMeasure& mu, const std::function<double(std::span<const double>)>& f,
                            std::span<const double> z, const std::optional<Box>& support = std::nullopt) {
  const std::size_t k = mu.k(), d = mu.d();
  std::vector<double> lo(k, -1.0), hi(k, 1.0), diff(d);
  if (support)
    for (std::size_t a = 0; a < k; ++a) {
      lo[a] = z[a] - support->hi[a];
      hi[a] = z[a] - support->lo[a];
    }
  double acc = 0.0;
  mu.for_each_atom_in(lo, hi, [&](std::span<const double>, std::span<const double> p) {
    for (std::size_t a = 0; a < d; ++a) diff[a] = z[a] - p[a];
    acc += f(diff);
  });
  return acc * mu.atom_weight();
}

// ---------------------------------------------------------------------------
// L^q norms

struct NormConfig {
  std::size_t samples = 4000;
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 1;
};

struct NormEstimate {
  double norm = 0.0;
  double stderr_ = 0.0;
  double integral = 0.0;  // int |mu * chi_E|^q
  bool low_confidence = false;
};

/// Importance sampling with proposal z = p + v: p a uniformly chosen atom and v
/// uniform in a cover of E. The cover is the boxes of a box union (chosen with
/// probability proportional to volume) or else one ball B(c, r) containing E.
/// The proposal density is sum_j (mu * chi_{B_j})(z) / (mu(R^d) sum_j |B_j|),
/// positive wherever mu * chi_E is.
inline NormEstimate lq_norm_mc(const SurfaceMeasure& mu, const TestSet& E, double q, const NormConfig& cfg = {}) {
  if (!(q >= 1.0)) throw std::domain_error("lq_norm_mc: q must be at least 1");
  if (cfg.samples < 2) throw std::invalid_argument("lq_norm_mc: need at least 2 samples");
  const std::size_t k = mu.k(), d = mu.d();
  const bool boxes = E.kind() == TestSet::Kind::box_union;
  const auto [bc, br] = E.bounding_ball();
  const TestSet bound = TestSet::ball(bc, br);
  const bool same = E.kind() == TestSet::Kind::ball;
  std::vector<double> cumulative;
  double cover_volume = unit_ball_volume(d) * std::pow(br, static_cast<double>(d));
  if (boxes) {
    cover_volume = 0.0;
    for (const auto& b : E.boxes()) {
      cover_volume += b.volume();
      cumulative.push_back(cover_volume);
    }
  }
  const double scale = mu.total_mass() * cover_volume;

  const auto chunks = map_chunks(cfg.samples, 64, cfg.threads, [&](ChunkRange r) {
    std::array<double, 2> acc{0.0, 0.0};
    std::vector<double> y(k), z(d), g(d);
    for (std::size_t s = r.begin; s < r.end; ++s) {
      Rng rng(cfg.seed, 0xB0A11ULL + s);
      mu.sample_atom(rng, y);
      const auto p = surface_point(mu.matrix(), y);
      if (boxes) {
        const double pick = rng.uniform() * cover_volume;
        const auto j = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(),
                                     static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
        const Box& b = E.boxes()[j];
        for (std::size_t a = 0; a < d; ++a) z[a] = p[a] + rng.uniform(b.lo[a], b.hi[a]);
      } else {
        double gn = 0.0;
        for (auto& v : g) {
          v = rng.normal();
          gn += v * v;
        }
        const double rad = br * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / std::sqrt(gn);
        for (std::size_t a = 0; a < d; ++a) z[a] = p[a] + bc[a] + rad * g[a];
      }
      const double F = convolve_at(mu, E, z);
      double G = F;
      if (boxes) {
        G = 0.0;
        for (const auto& b : E.boxes()) G += convolve_box_at(mu, b, z);
      } else if (!same) {
        G = convolve_at(mu, bound, z);
      }
      const double v = F > 0.0 ? std::pow(F, q) / G * scale : 0.0;
      acc[0] += v;
      acc[1] += v * v;
    }
    return acc;
  });
  double s1 = 0.0, s2 = 0.0;
  for (const auto& c : chunks) {
    s1 += c[0];
    s2 += c[1];
  }
  const double n = static_cast<double>(cfg.samples);
  NormEstimate out;
  out.integral = s1 / n;
  const double var = std::max(0.0, (s2 / n - out.integral * out.integral) * n / (n - 1.0));
  const double se_int = std::sqrt(var / n);
  out.norm = std::pow(out.integral, 1.0 / q);
  out.stderr_ = out.integral > 0.0 ? out.norm * se_int / (q * out.integral) : 0.0;
  out.low_confidence = out.norm > 0.0 && out.stderr_ / out.norm > 0.1;
  return out;
}

// ---------------------------------------------------------------------------
// Ball scaling at the triangle vertex

/// k + l/q0, the delta-exponent of ||mu * chi_{B_delta}||_{q0}.
inline Rational ball_norm_exponent(int k, int l) {
  return Rational(k) + Rational(l) / critical_q0(k, k + l);
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct BallScalingConfig {
  std::vector<double> deltas{0.125, 0.0625, 0.03125, 0.015625};
  std::vector<Rational> inv_p;  // empty: 1/p0 - 1/20, 1/p0, 1/p0 + 1/20
  std::size_t samples = 4000;
  std::size_t centers = 3;
  double cells_per_delta = 4.0;  // y-grid spacing <= delta / cells_per_delta
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 1;
};

struct BallScalingRow {
  double delta = 0.0;
  Rational inv_p;
  double norm = 0.0;
  double ratio = 0.0;  // norm / m_d(B_delta)^{1/p}
  double stderr_ = 0.0;
  std::size_t center_id = 0;
};

struct BallScalingResult {
  Rational q0;
  Rational expected_exponent;
  std::vector<BallScalingRow> rows;
  std::vector<double> fitted_exponent;  // per center
  double mean_exponent = 0.0;
  std::vector<std::pair<Rational, double>> ratio_slopes;  // per 1/p, averaged over centers
  std::vector<std::string> warnings;

  void write_csv(std::ostream& os) const {
    std::ostringstream buf;
    buf << std::setprecision(17) << "delta,p_num,p_den,norm,ratio,stderr,center_id\n";
    for (const auto& r : rows) {
      const Rational p = Rational(1) / r.inv_p;
      buf << r.delta << ',' << numerator(p) << ',' << denominator(p) << ',' << r.norm << ',' << r.ratio << ','
          << r.stderr_ << ',' << r.center_id << '\n';
    }
    os << buf.str();
  }
};

inline BallScalingResult ball_scaling_experiment(const CoefficientMatrix& C, const BallScalingConfig& cfg = {}) {
  if (!check_star(C).holds) throw SingularSubmatrix("ball_scaling_experiment: a row submatrix is singular");
  if (cfg.deltas.size() < 3) throw std::invalid_argument("ball_scaling_experiment: need at least 3 dyadic deltas");
  for (double dl : cfg.deltas) {
    int e = 0;
    if (!(dl > 0.0 && dl < 1.0) || std::frexp(dl, &e) != 0.5)
      throw std::invalid_argument("ball_scaling_experiment: deltas must be dyadic and below 1");
  }
  const int k = C.k(), l = C.l(), d = C.d();
  BallScalingResult res;
  res.q0 = critical_q0(k, d);
  res.expected_exponent = ball_norm_exponent(k, l);
  std::vector<Rational> inv_ps = cfg.inv_p;
  if (inv_ps.empty()) {
    const Rational v = Rational(1) / critical_p0(k, d);
    inv_ps = {v - Rational(1, 20), v, v + Rational(1, 20)};
  }
  const double q0 = to_double(res.q0);

  std::vector<double> deltas = cfg.deltas;
  std::sort(deltas.begin(), deltas.end(), std::greater<>());  // coarsest first
  std::vector<std::vector<double>> log_norm(cfg.centers);
  Rng center_rng(cfg.seed, 0xCE47E5ULL);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < cfg.centers; ++c) {
    std::vector<double> y(static_cast<std::size_t>(k), 0.0);
    if (c > 0)
      for (auto& v : y) v = center_rng.uniform(-0.5, 0.5) / std::sqrt(static_cast<double>(k));
    centers.push_back(surface_point(C, y));
  }
  for (double dl : deltas) {
    const auto n = static_cast<std::int64_t>(2.0 * std::ceil(cfg.cells_per_delta / dl));
    const SurfaceMeasure mu(C, n);
    const double ball_measure = unit_ball_volume(static_cast<std::size_t>(d)) * std::pow(dl, d);
    for (std::size_t c = 0; c < cfg.centers; ++c) {
      NormConfig nc{cfg.samples, derive_seed(cfg.seed, 0xBA11000ULL + 97 * c + static_cast<std::uint64_t>(n)), cfg.threads};
      const auto est = lq_norm_mc(mu, TestSet::ball(centers[c], dl), q0, nc);
      if (est.low_confidence) res.warnings.push_back("low-confidence norm at delta=" + std::to_string(dl));
      log_norm[c].push_back(std::log(est.norm));
      for (const auto& ip : inv_ps)
        res.rows.push_back({dl, ip, est.norm, est.norm / std::pow(ball_measure, to_double(ip)), est.stderr_, c});
    }
  }
  // Drop the coarsest delta from the fit.
  std::vector<double> log_delta;
  for (std::size_t i = 1; i < deltas.size(); ++i) log_delta.push_back(std::log(deltas[i]));
  for (std::size_t c = 0; c < cfg.centers; ++c) {
    const std::vector<double> ys(log_norm[c].begin() + 1, log_norm[c].end());
    res.fitted_exponent.push_back(fit_slope(log_delta, ys));
  }
  for (double e : res.fitted_exponent) res.mean_exponent += e / static_cast<double>(cfg.centers);
  for (const auto& ip : inv_ps) res.ratio_slopes.emplace_back(ip, res.mean_exponent - d * to_double(ip));
  return res;
}

// ---------------------------------------------------------------------------
// Restricted estimate over a family of sets

struct RestrictedScanConfig {
  std::size_t family_size = 32;  // the sup is compared between the first half and the whole family
  std::int64_t resolution = 128;  // finest y-grid; each set uses the coarsest grid resolving it
  double cells_per_scale = 4.0;   // y-grid spacing <= y_scale(E) / cells_per_scale
  std::size_t samples = 2000;
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 1;
};

struct RestrictedEntry {
  std::size_t set_id = 0;
  std::string kind;
  double measure = 0.0;
  double norm = 0.0;
  double ratio = 0.0;
  double stderr_ = 0.0;
  std::int64_t resolution = 0;
};

struct RestrictedScanReport {
  Rational inv_p;
  Rational q0;
  std::vector<RestrictedEntry> entries;
  double sup_half = 0.0;
  double sup_full = 0.0;
  std::size_t argmax = 0;

  double growth() const { return sup_half > 0.0 ? sup_full / sup_half - 1.0 : 0.0; }

  void write_csv(std::ostream& os) const {
    std::ostringstream buf;
    buf << std::setprecision(17) << "set_id,kind,measure,ratio,stderr,resolution\n";
    for (const auto& e : entries)
      buf << e.set_id << ',' << e.kind << ',' << e.measure << ',' << e.ratio << ',' << e.stderr_ << ',' << e.resolution
          << '\n';
    os << buf.str();
  }
};

/// Member i of the scan family; depends only on (C, seed, i), so families are prefix-stable.
inline TestSet scan_family_member(const CoefficientMatrix& C, std::uint64_t seed, std::size_t i) {
  const std::size_t k = static_cast<std::size_t>(C.k()), d = static_cast<std::size_t>(C.d());
  Rng rng(seed, 0xFA0000ULL + i);
  std::vector<double> y0(k);
  for (auto& v : y0) v = rng.uniform(-0.6, 0.6) / std::sqrt(static_cast<double>(k));
  const auto p0 = surface_point(C, y0);
  auto scale = [&](double lo, double hi) { return std::ldexp(1.0, -static_cast<int>(std::floor(rng.uniform(lo, hi)))); };
  switch (i % 4) {
    case 0: {
      auto c = p0;
      const double r = scale(1.0, 5.0);
      for (auto& v : c) v += 0.5 * r * rng.uniform(-1.0, 1.0);
      return TestSet::ball(c, r);
    }
    case 1: {
      std::vector<Box> boxes;
      const std::size_t nb = 1 + rng.below(3);
      for (std::size_t b = 0; b < nb; ++b) {
        Box bx{std::vector<double>(d), std::vector<double>(d)};
        for (std::size_t a = 0; a < d; ++a) {
          const double w = scale(1.0, 5.0);
          const double c = p0[a] + 0.5 * w * rng.uniform(-1.0, 1.0);
          bx.lo[a] = c - w;
          bx.hi[a] = c + w;
        }
        boxes.push_back(std::move(bx));
      }
      return TestSet::box_union(std::move(boxes));
    }
    case 2:
      return TestSet::tangent_tube(C, y0, scale(1.0, 4.0));
    default: {
      Box bx{std::vector<double>(d), std::vector<double>(d)};
      const double w = scale(1.0, 4.0);
      const auto ph = phi(C, y0);
      for (std::size_t a = 0; a < k; ++a) {
        bx.lo[a] = y0[a] - w;
        bx.hi[a] = y0[a] + w;
      }
      for (std::size_t j = 0; j < d - k; ++j) {
        bx.lo[k + j] = ph[j] - w * w;
        bx.hi[k + j] = ph[j] + w * w;
      }
      return TestSet::sheared(C, {bx});
    }
  }
}

inline RestrictedScanReport restricted_estimate_scan(const CoefficientMatrix& C, const Rational& p,
                                                     const RestrictedScanConfig& cfg = {}) {
  const int k = C.k(), d = C.d();
  RestrictedScanReport rep;
  rep.inv_p = Rational(1) / p;
  rep.q0 = critical_q0(k, d);
  const TypeSet ts(k, d);
  const ExponentPair pt(rep.inv_p, Rational(1) / rep.q0);
  if (!ts.contains(pt, Containment::interior))
    throw std::domain_error("restricted_estimate_scan: (1/p, 1/q0) = (" + to_string(pt.inv_p) + ", " +
                            to_string(pt.inv_q) + ") is not interior to the triangle with vertex (" +
                            to_string(ts.vertices()[2].inv_p) + ", " + to_string(ts.vertices()[2].inv_q) + ")");
  if (cfg.family_size < 2) throw std::invalid_argument("restricted_estimate_scan: family too small");
  if (cfg.resolution < 8 || !(cfg.cells_per_scale > 0.0))
    throw std::invalid_argument("restricted_estimate_scan: bad resolution settings");
  std::map<std::int64_t, SurfaceMeasure> measures;
  const double q0 = to_double(rep.q0), ip = to_double(rep.inv_p);
  for (std::size_t i = 0; i < cfg.family_size; ++i) {
    const TestSet E = scan_family_member(C, cfg.seed, i);
    const double want = 2.0 * cfg.cells_per_scale / E.y_scale(static_cast<std::size_t>(k));
    std::int64_t n = std::max<std::int64_t>(16, 2 * static_cast<std::int64_t>(std::ceil(0.5 * std::min(want, 1e9))));
    n = std::min(n, cfg.resolution);
    const auto& mu = measures.try_emplace(n, C, n).first->second;
    const auto est = lq_norm_mc(mu, E, q0, {cfg.samples, derive_seed(cfg.seed, 0x5CA0000ULL + i), cfg.threads});
    const double m = E.measure();
    RestrictedEntry e{i, E.kind_name(), m, est.norm, est.norm / std::pow(m, ip), est.stderr_ / std::pow(m, ip), n};
    if (e.ratio > rep.sup_full) {
      rep.sup_full = e.ratio;
      rep.argmax = i;
    }
    if (i < cfg.family_size / 2) rep.sup_half = rep.sup_full;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// The restricted bilinear estimate
//   int int_{|y_i| ~ 1} f(x) chi_E(y; L_y x) dy dx  <=  C ||f||_{d/k} m_d(E)^{k/d}

struct Ineq6Config {
  std::size_t samples = 20000;
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 1;
};

struct Ineq6Report {
  double lhs = 0.0;
  double stderr_ = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double measure = 0.0;
};

/// x is drawn from f / ||f||_1 and y uniformly from the shell {2^{n_i} <= |y_i| < 2^{n_i+1}}.
inline Ineq6Report ineq6_check(const CoefficientMatrix& C, const GaussianSpec& f, const TestSet& E,
                               const Ineq6Config& cfg = {}, const std::optional<ShellIndex>& shell = std::nullopt) {
  if (!check_star(C).holds) throw SingularSubmatrix("ineq6_check: a row submatrix is singular");
  const std::size_t k = static_cast<std::size_t>(C.k()), d = static_cast<std::size_t>(C.d());
  if (f.dim() != k || E.dim() != d) throw std::invalid_argument("ineq6_check: dimension mismatch");
  if (!(f.amplitude() > 0.0)) throw std::invalid_argument("ineq6_check: f must be a positive Gaussian");
  if (cfg.samples < 2) throw std::invalid_argument("ineq6_check: need at least 2 samples");
  const ShellIndex sh = shell.value_or(ShellIndex{std::vector<int>(k, 0)});
  if (sh.n.size() != k) throw std::invalid_argument("ineq6_check: shell index must have k entries");

  const auto chunks = map_chunks(cfg.samples, 64, cfg.threads, [&](ChunkRange r) {
    std::uint64_t hits = 0;
    std::vector<double> y(k), pt(d);
    for (std::size_t s = r.begin; s < r.end; ++s) {
      Rng rng(cfg.seed, 0x16E0000ULL + s);
      const auto x = f.sample(rng);
      for (std::size_t i = 0; i < k; ++i) {
        const double lo = std::ldexp(1.0, sh.n[i]);
        y[i] = rng.sign() * rng.uniform(lo, 2.0 * lo);
      }
      const auto u = bilinear(C, x, y);
      std::copy(y.begin(), y.end(), pt.begin());
      std::copy(u.begin(), u.end(), pt.begin() + static_cast<std::ptrdiff_t>(k));
      if (E.contains(pt)) ++hits;
    }
    return hits;
  });
  std::uint64_t hits = 0;
  for (auto h : chunks) hits += h;
  const double n = static_cast<double>(cfg.samples);
  const double frac = static_cast<double>(hits) / n;
  const double scale = f.integral() * sh.volume();
  Ineq6Report rep;
  rep.lhs = scale * frac;
  rep.stderr_ = scale * std::sqrt(frac * (1.0 - frac) / n);
  rep.measure = E.measure();
  rep.rhs = f.lp_norm(static_cast<double>(d) / static_cast<double>(k)) *
            std::pow(rep.measure, static_cast<double>(k) / static_cast<double>(d));
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

/// Member i of a box family in (y, u) space: y-part centered in the unit shell,
/// u-part on the scale of L_y x for |y_i| ~ 1.5 and |x| ~ 1. Depends only on (C, seed, i).
inline TestSet ineq6_family_member(const CoefficientMatrix& C, std::uint64_t seed, std::size_t i) {
  const std::size_t k = static_cast<std::size_t>(C.k()), d = static_cast<std::size_t>(C.d());
  Rng rng(seed, 0x16F0000ULL + i);
  Box b{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t a = 0; a < k; ++a) {
    const double c = rng.sign() * rng.uniform(1.0, 2.0);
    const double w = 0.5 * std::ldexp(1.0, -static_cast<int>(std::floor(rng.uniform(0.0, 3.0))));
    b.lo[a] = c - w;
    b.hi[a] = c + w;
  }
  for (std::size_t a = k; a < d; ++a) {
    double col = 0.0;
    for (std::size_t i = 0; i < k; ++i) col += C(i, a - k) * C(i, a - k);
    const double scale = 1.5 * std::sqrt(col);
    const double c = scale * rng.uniform(-1.0, 1.0);
    const double w = scale * std::ldexp(1.0, -static_cast<int>(std::floor(rng.uniform(0.0, 3.0))));
    b.lo[a] = c - w;
    b.hi[a] = c + w;
  }
  return TestSet::box_union({b});
}

/// Sum of the shell-restricted left sides over all shells with -depth <= n_i <= 0.
inline Ineq6Report ineq6_shell_sum(const CoefficientMatrix& C, const GaussianSpec& f, const TestSet& E, int depth,
                                   const Ineq6Config& cfg = {}) {
  if (depth < 0) throw std::invalid_argument("ineq6_shell_sum: depth must be nonnegative");
  const std::size_t k = static_cast<std::size_t>(C.k());
  Ineq6Report total;
  std::vector<int> n(k, -depth);
  std::uint64_t shell_id = 0;
  double var = 0.0;
  for (;;) {
    Ineq6Config c = cfg;
    c.seed = derive_seed(cfg.seed, 0x5E11ULL + shell_id++);
    const auto r = ineq6_check(C, f, E, c, ShellIndex{n});
    total.lhs += r.lhs;
    var += r.stderr_ * r.stderr_;
    total.rhs = r.rhs;
    total.measure = r.measure;
    std::size_t a = 0;
    while (a < k && ++n[a] > 0) n[a++] = -depth;
    if (a == k) break;
  }
  total.stderr_ = std::sqrt(var);
  total.ratio = total.rhs > 0.0 ? total.lhs / total.rhs : 0.0;
  return total;
}

}  // namespace surfconv
