#pragma once

// The restricted (k-l)-plane transform at a frozen shell parameter y:
// Tf(y; .) is the pushforward of f dm_k under x -> L_y x, so that
//
//   integral Tf(y; u) h(u) du = integral f(x) h(L_y x) dx.
//
// Realized as a histogram: every source cell deposits f(x) h^k into the
// target cell containing L_y x.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "surfconv/gaussian.hpp"
#include "surfconv/grid_function.hpp"
#include "surfconv/model_surface.hpp"
#include "surfconv/parallel.hpp"

namespace surfconv {

enum class Deposit { nearest, linear };

struct TargetSpec {
  std::int64_t cells = 128;       // per axis
  std::optional<double> radius;   // half-width R of [-R, R]^l; default from the source box
  Deposit deposit = Deposit::nearest;
};

struct PushforwardDensity {
  std::vector<double> y;
  GridFunction grid;
  double source_mass = 0.0;
  double leaked_mass = 0.0;  // mass whose image fell outside the target box

  double leak_fraction() const { return source_mass == 0.0 ? 0.0 : std::abs(leaked_mass / source_mass); }
};

namespace detail {

inline void require_transform_preconditions(const CoefficientMatrix& C, std::span<const double> y) {
  if (y.size() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("transform: y must have k entries");
  for (double v : y)
    if (!(std::abs(v) >= 0.5 && std::abs(v) <= 4.0))
      throw std::domain_error("transform: |y_i| must lie in [1/2, 4]");
  if (!check_star(C).holds) throw SingularSubmatrix("transform: a row submatrix is singular");
}

/// Row-major l x k matrix of L_y: (L_y)_{j,i} = c_i^j y_i.
inline std::vector<double> ly_matrix(const CoefficientMatrix& C, std::span<const double> y) {
  const int k = C.k(), l = C.l();
  std::vector<double> m(static_cast<std::size_t>(k * l));
  for (int j = 0; j < l; ++j)
    for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(j * k + i)] = C(i, j) * y[i];
  return m;
}

inline void apply_ly(const std::vector<double>& m, std::size_t k, std::size_t l, std::span<const double> x,
                     std::span<double> out) {
  for (std::size_t j = 0; j < l; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += m[j * k + i] * x[i];
    out[j] = s;
  }
}

}  // namespace detail

/// The l x k matrix of L_y.
inline Eigen::MatrixXd ly_eigen(const CoefficientMatrix& C, std::span<const double> y) {
  Eigen::MatrixXd L(C.l(), C.k());
  for (int j = 0; j < C.l(); ++j)
    for (int i = 0; i < C.k(); ++i) L(j, i) = C(i, j) * y[static_cast<std::size_t>(i)];
  return L;
}

/// Target half-width: 1.05 * max over source-box corners of |L_y x|.
inline double default_target_radius(const GridFunction& f, const CoefficientMatrix& C, std::span<const double> y) {
  const std::size_t k = f.dim(), l = static_cast<std::size_t>(C.l());
  const auto m = detail::ly_matrix(C, y);
  double R = 0.0;
  std::vector<double> x(k), u(l);
  for (std::uint32_t corner = 0; corner < (1u << k); ++corner) {
    for (std::size_t a = 0; a < k; ++a) x[a] = ((corner >> a) & 1u) ? f.upper(a) : f.origin()[a];
    detail::apply_ly(m, k, l, x, u);
    R = std::max(R, norm2(u));
  }
  return 1.05 * R;
}

inline PushforwardDensity transform(const GridFunction& f, const CoefficientMatrix& C, std::span<const double> y,
                                    const TargetSpec& target = {}, unsigned threads = 1) {
  if (f.dim() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("transform: f must live on R^k");
  detail::require_transform_preconditions(C, y);
  const std::size_t k = f.dim(), l = static_cast<std::size_t>(C.l());
  const double R = target.radius.value_or(default_target_radius(f, C, y));
  PushforwardDensity out{{y.begin(), y.end()}, GridFunction::cube(l, R, target.cells)};
  const auto m = detail::ly_matrix(C, y);
  const double src_vol = f.cell_volume();

  // Images are computed in parallel; deposits run sequentially in source order
  // so every target cell accumulates its partial sums in a fixed order.
  const auto images = map_chunks(f.size(), 64, threads, [&](ChunkRange r) {
    std::vector<double> u((r.end - r.begin) * l);
    std::vector<double> x(k);
    for (std::size_t s = r.begin; s < r.end; ++s) {
      f.center(s, x);
      detail::apply_ly(m, k, l, x, std::span<double>(u).subspan((s - r.begin) * l, l));
    }
    return u;
  });

  GridFunction& g = out.grid;
  const double h = g.spacing();
  std::vector<double> acc(g.size(), 0.0);
  std::size_t s = 0;
  for (const auto& chunk : images) {
    for (std::size_t off = 0; off < chunk.size(); off += l, ++s) {
      const double mass = f[s] * src_vol;
      out.source_mass += mass;
      if (mass == 0.0) continue;
      const std::span<const double> u(chunk.data() + off, l);
      if (target.deposit == Deposit::nearest) {
        const auto idx = g.locate(u);
        if (idx < 0) {
          out.leaked_mass += mass;
          continue;
        }
        acc[static_cast<std::size_t>(idx)] += mass;
      } else {
        // Cloud-in-cell: split among the 2^l nearest cell centers.
        double placed = 0.0;
        for (std::uint32_t corner = 0; corner < (1u << l); ++corner) {
          double w = 1.0;
          std::int64_t flat = 0;
          bool inside = true;
          for (std::size_t a = 0; a < l; ++a) {
            const double t = (u[a] - g.origin()[a]) / h - 0.5;
            const double fl = std::floor(t);
            const bool hi = (corner >> a) & 1u;
            const auto c = static_cast<std::int64_t>(fl) + (hi ? 1 : 0);
            if (c < 0 || c >= g.extents()[a]) {
              inside = false;
              break;
            }
            w *= hi ? t - fl : 1.0 - (t - fl);
            flat = flat * g.extents()[a] + c;
          }
          if (!inside) continue;
          acc[static_cast<std::size_t>(flat)] += w * mass;
          placed += w;
        }
        out.leaked_mass += (1.0 - placed) * mass;
      }
    }
  }
  const double inv_vol = 1.0 / g.cell_volume();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = acc[i] * inv_vol;
  return out;
}

// ---------------------------------------------------------------------------

struct PairingResult {
  double lhs = 0.0;  // integral Tf(y;u) h(u) du on the target grid
  double rhs = 0.0;  // integral f(x) h(L_y x) dx on the source grid
  double rel_err = 0.0;
  double leak_fraction = 0.0;
};

inline PairingResult pairing_check(const GridFunction& f, const GridFunction& h, const CoefficientMatrix& C,
                                   std::span<const double> y, const TargetSpec& target = {}, unsigned threads = 1) {
  if (h.dim() != static_cast<std::size_t>(C.l())) throw std::invalid_argument("pairing_check: h must live on R^l");
  const auto T = transform(f, C, y, target, threads);
  PairingResult res;
  res.leak_fraction = T.leak_fraction();
  std::vector<double> u(h.dim());
  for (std::size_t c = 0; c < T.grid.size(); ++c) {
    if (T.grid[c] == 0.0) continue;
    T.grid.center(c, u);
    res.lhs += T.grid[c] * h.interpolate(u);
  }
  res.lhs *= T.grid.cell_volume();

  const std::size_t k = f.dim(), l = h.dim();
  const auto m = detail::ly_matrix(C, y);
  std::vector<double> x(k);
  for (std::size_t s = 0; s < f.size(); ++s) {
    if (f[s] == 0.0) continue;
    f.center(s, x);
    detail::apply_ly(m, k, l, x, u);
    res.rhs += f[s] * h.interpolate(u);
  }
  res.rhs *= f.cell_volume();
  res.rel_err = res.rhs == 0.0 ? std::abs(res.lhs) : std::abs(res.lhs - res.rhs) / std::abs(res.rhs);
  return res;
}

// ---------------------------------------------------------------------------

struct FourierCheckSpec {
  std::int64_t source_cells = 128;  // per axis, over mean +- tail * sigma
  /// Target cells per axis; 0 picks the spacing from `oversample`.
  std::int64_t target_cells = 0;
  /// Target spacing as a multiple of the largest image spacing of the source lattice.
  double oversample = 6.0;
  double tail = 7.0;
  Deposit deposit = Deposit::linear;
  /// Errors are measured relative to max(|exact|, floor * |exact(0)|).
  double relative_floor = 1e-3;
  unsigned threads = 1;
};

struct FourierSample {
  std::vector<double> zeta;
  std::complex<double> discrete;
  std::complex<double> exact;
  double rel_err = 0.0;
};

struct FourierCheckResult {
  std::vector<FourierSample> samples;
  std::vector<std::vector<double>> excluded;  // beyond Nyquist / 2
  std::vector<std::string> warnings;
  double nyquist = 0.0;
  double max_rel_err = 0.0;
};

/// sum_c mass_c exp(-2 pi i <c, zeta>) over the cell centers c of g.
inline std::complex<double> lattice_fourier(const GridFunction& g, std::span<const double> zeta) {
  const std::size_t l = g.dim();
  std::complex<double> acc = 0.0;
  std::vector<double> c(l);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0) continue;
    g.center(i, c);
    double ph = 0.0;
    for (std::size_t a = 0; a < l; ++a) ph += c[a] * zeta[a];
    ph *= -2.0 * std::numbers::pi;
    acc += g[i] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return acc * g.cell_volume();
}

/// Fourier multiplier of a deposit: the box (nearest) or tent (linear) kernel of width h.
inline double deposit_window(Deposit d, double h, std::span<const double> zeta) {
  double w = 1.0;
  for (double z : zeta) {
    const double x = std::numbers::pi * z * h;
    const double s = x == 0.0 ? 1.0 : std::sin(x) / x;
    w *= d == Deposit::nearest ? s : s * s;
  }
  return w;
}

inline GridFunction sample_gaussian(const GaussianSpec& f, std::int64_t cells, double tail) {
  const std::size_t k = f.dim();
  double half = 0.0;
  for (std::size_t a = 0; a < k; ++a) half = std::max(half, std::sqrt(f.covariance()(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
  half *= tail;
  std::vector<double> origin(k);
  for (std::size_t a = 0; a < k; ++a) origin[a] = f.mean()[static_cast<Eigen::Index>(a)] - half;
  GridFunction g(origin, 2.0 * half / static_cast<double>(cells), std::vector<std::int64_t>(k, cells));
  return GridFunction::sampled(std::move(g), [&](std::span<const double> x) { return f(x); });
}

/// Compares the deposited transform against f^(L*_y zeta). The lattice sum of the
/// deposited masses approximates the transform times the deposit window, which is
/// divided out.
inline FourierCheckResult fourier_check(const GaussianSpec& f, const CoefficientMatrix& C, std::span<const double> y,
                                        const std::vector<std::vector<double>>& zetas,
                                        const FourierCheckSpec& spec = {}) {
  if (f.dim() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("fourier_check: f must live on R^k");
  const GridFunction src = sample_gaussian(f, spec.source_cells, spec.tail);
  TargetSpec ts;
  ts.deposit = spec.deposit;
  ts.cells = spec.target_cells;
  if (ts.cells <= 0) {
    double step = 0.0;
    for (int i = 0; i < C.k(); ++i)
      for (int j = 0; j < C.l(); ++j) step = std::max(step, std::abs(C(i, j) * y[i]) * src.spacing());
    const double R = default_target_radius(src, C, y);
    ts.cells = std::max<std::int64_t>(8, static_cast<std::int64_t>(std::ceil(2.0 * R / (spec.oversample * step))));
    if (C.k() == 1) {
      // The images form a lattice of spacing `step`; keep the target spacing an exact multiple of it.
      const double multiple = std::max(1.0, std::round(spec.oversample));
      ts.radius = 0.5 * static_cast<double>(ts.cells) * multiple * step;
    }
  }
  const auto T = transform(src, C, y, ts, spec.threads);

  FourierCheckResult out;
  out.nyquist = 0.5 / T.grid.spacing();
  const std::vector<double> zero(static_cast<std::size_t>(C.l()), 0.0);
  const double scale = std::abs(f.fourier(adjoint(C, y, zero)));
  for (const auto& z : zetas) {
    if (z.size() != static_cast<std::size_t>(C.l())) throw std::invalid_argument("fourier_check: zeta must have l entries");
    if (norm2(z) > 0.5 * out.nyquist) {
      out.excluded.push_back(z);
      out.warnings.push_back("frequency beyond Nyquist/2 excluded");
      continue;
    }
    FourierSample s{z, lattice_fourier(T.grid, z) / deposit_window(spec.deposit, T.grid.spacing(), z),
                    f.fourier(adjoint(C, y, z)), 0.0};
    s.rel_err = std::abs(s.discrete - s.exact) / std::max(std::abs(s.exact), spec.relative_floor * scale);
    out.max_rel_err = std::max(out.max_rel_err, s.rel_err);
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct OscillatoryBound {
  double sup_abs = 0.0;
  double l1_norm_f = 0.0;
  std::vector<double> argmax;
};

/// g(u) = integral f(x) |u - L_y x|^{is} dx over the given u points, with |0|^{is} := 1.
inline OscillatoryBound oscillatory_sup_bound(const GridFunction& f, const CoefficientMatrix& C,
                                              std::span<const double> y, double s,
                                              const std::vector<std::vector<double>>& u_points, unsigned threads = 1) {
  if (f.dim() != static_cast<std::size_t>(C.k())) throw std::invalid_argument("oscillatory_sup_bound: f must live on R^k");
  const std::size_t k = f.dim(), l = static_cast<std::size_t>(C.l());
  const auto m = detail::ly_matrix(C, y);
  std::vector<double> images(f.size() * l);
  std::vector<double> x(k);
  OscillatoryBound out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.center(i, x);
    detail::apply_ly(m, k, l, x, std::span<double>(images).subspan(i * l, l));
    out.l1_norm_f += std::abs(f[i]);
  }
  out.l1_norm_f *= f.cell_volume();
  const double vol = f.cell_volume();

  const auto mags = map_chunks(u_points.size(), 16, threads, [&](ChunkRange r) {
    std::vector<double> res;
    for (std::size_t p = r.begin; p < r.end; ++p) {
      const auto& u = u_points[p];
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] == 0.0) continue;
        double d2 = 0.0;
        for (std::size_t a = 0; a < l; ++a) {
          const double t = u[a] - images[i * l + a];
          d2 += t * t;
        }
        const double ph = d2 > 0.0 ? 0.5 * s * std::log(d2) : 0.0;
        re += f[i] * std::cos(ph);
        im += f[i] * std::sin(ph);
      }
      res.push_back(vol * std::hypot(re, im));
    }
    return res;
  });
  std::size_t p = 0;
  for (const auto& chunk : mags)
    for (double v : chunk) {
      if (v > out.sup_abs) {
        out.sup_abs = v;
        out.argmax = u_points[p];
      }
      ++p;
    }
  return out;
}

/// Points of a uniform (2n+1)^l lattice on [-R, R]^l.
inline std::vector<std::vector<double>> lattice_points(std::size_t l, double R, std::size_t n) {
  std::vector<std::vector<double>> pts;
  const std::size_t side = 2 * n + 1;
  std::size_t total = 1;
  for (std::size_t a = 0; a < l; ++a) total *= side;
  for (std::size_t i = 0; i < total; ++i) {
    std::vector<double> u(l);
    std::size_t rem = i;
    for (std::size_t a = l; a-- > 0;) {
      u[a] = R * (static_cast<double>(rem % side) - static_cast<double>(n)) / static_cast<double>(std::max<std::size_t>(n, 1));
      rem /= side;
    }
    pts.push_back(std::move(u));
  }
  return pts;
}

}  // namespace surfconv
