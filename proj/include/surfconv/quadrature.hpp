#pragma once

// Quadrature rules: Gauss-Legendre on intervals, a graded radial rule for
// integrands carrying a singular power r^a (a > -1), and product rules on
// the unit sphere S^{n-1} built from hyperspherical angles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace surfconv::quad {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <typename F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }

  void append(const Rule1D& other) {
    nodes.insert(nodes.end(), other.nodes.begin(), other.nodes.end());
    weights.insert(weights.end(), other.weights.begin(), other.weights.end());
  }
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
inline Rule1D gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
  Rule1D r;
  r.nodes.assign(n, 0.0);
  r.weights.assign(n, 0.0);
  if (n == 1) {
    r.weights[0] = 2.0;
    return r;
  }
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kd = static_cast<double>(k);
        const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      dp = nd * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  return r;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule1D gauss_legendre(std::size_t n, double a, double b) {
  Rule1D r = gauss_legendre(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < n; ++i) {
    r.nodes[i] = mid + half * r.nodes[i];
    r.weights[i] *= half;
  }
  return r;
}

/// Composite rule: `panels` equal panels on [a, b], `n` nodes each.
inline Rule1D composite_gauss_legendre(std::size_t panels, std::size_t n, double a, double b) {
  Rule1D r;
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p)
    r.append(gauss_legendre(n, a + h * static_cast<double>(p), a + h * static_cast<double>(p + 1)));
  return r;
}

/// Rule for  integral_0^R r^a g(r) dr  with a > -1, returned with the r^a
/// factor folded into the weights, so  sum w_i g(r_i)  approximates the integral.
///
/// Layout: the innermost panel [0, R 2^-graded] uses the substitution
/// r = r0 s^{1/(a+1)} which absorbs the singular power exactly; the graded
/// panels double in width up to R/4; [R/4, R] is split into `outer` equal panels.
struct RadialRuleSpec {
  std::size_t nodes_per_panel = 10;
  std::size_t graded = 6;
  std::size_t outer = 6;
};

inline Rule1D radial_rule(double R, double a, RadialRuleSpec spec = {}) {
  if (!(a > -1.0)) throw std::invalid_argument("radial_rule: exponent must exceed -1");
  if (!(R > 0.0)) throw std::invalid_argument("radial_rule: radius must be positive");
  Rule1D out;
  const std::size_t m = spec.nodes_per_panel;
  const double r0 = R * std::ldexp(1.0, -static_cast<int>(spec.graded) - 2);
  {
    const double inv = 1.0 / (a + 1.0);
    const Rule1D s = gauss_legendre(m, 0.0, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
      out.nodes.push_back(r0 * std::pow(s.nodes[i], inv));
      out.weights.push_back(s.weights[i] * std::pow(r0, a + 1.0) * inv);
    }
  }
  double lo = r0;
  for (std::size_t g = 0; g < spec.graded; ++g) {
    const Rule1D p = gauss_legendre(m, lo, 2.0 * lo);
    for (std::size_t i = 0; i < m; ++i) {
      out.nodes.push_back(p.nodes[i]);
      out.weights.push_back(p.weights[i] * std::pow(p.nodes[i], a));
    }
    lo *= 2.0;
  }
  const Rule1D tail = composite_gauss_legendre(spec.outer, m, lo, R);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    out.nodes.push_back(tail.nodes[i]);
    out.weights.push_back(tail.weights[i] * std::pow(tail.nodes[i], a));
  }
  return out;
}

/// Points on S^{n-1} with weights summing to its surface area.
struct SphereRule {
  std::size_t dim = 0;
  std::vector<double> points;  // row-major, size() * dim
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  const double* point(std::size_t i) const { return points.data() + i * dim; }
};

inline double sphere_area(std::size_t dim) {
  // |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)
  const double n = static_cast<double>(dim);
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

namespace detail {
/// Rule for  integral_0^pi sin^m(phi) g(phi) dphi  returned as (phi, weight) pairs.
/// Odd m: Gauss-Legendre in t = cos(phi), exact for polynomial g(cos).
/// Even m: midpoint in phi; the integrand is then a periodic even function.
inline Rule1D polar_rule(std::size_t n, std::size_t m) {
  Rule1D r;
  if (m % 2 == 1) {
    const Rule1D gl = gauss_legendre(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = gl.nodes[i];
      r.nodes.push_back(std::acos(t));
      r.weights.push_back(gl.weights[i] * std::pow(1.0 - t * t, 0.5 * static_cast<double>(m - 1)));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double phi = std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      r.nodes.push_back(phi);
      r.weights.push_back(std::numbers::pi / static_cast<double>(n) * std::pow(std::sin(phi), static_cast<double>(m)));
    }
  }
  return r;
}
}  // namespace detail

/// Product rule in hyperspherical coordinates: `azimuth` midpoint points for
/// the periodic angle, `azimuth / 2` points for each polar angle.
inline SphereRule sphere_rule(std::size_t dim, std::size_t azimuth) {
  if (dim == 0) throw std::invalid_argument("sphere_rule: dimension must be positive");
  SphereRule s;
  s.dim = dim;
  if (dim == 1) {
    s.points = {-1.0, 1.0};
    s.weights = {1.0, 1.0};
    return s;
  }
  if (azimuth < 4) azimuth = 4;
  const std::size_t polar_n = std::max<std::size_t>(2, azimuth / 2);
  const std::size_t n_polar_angles = dim - 2;
  std::vector<Rule1D> polar;
  for (std::size_t j = 0; j < n_polar_angles; ++j) polar.push_back(detail::polar_rule(polar_n, dim - 2 - j));

  std::vector<std::size_t> idx(n_polar_angles, 0);
  std::vector<double> x(dim);
  for (;;) {
    double w_polar = 1.0, sin_prod = 1.0;
    for (std::size_t j = 0; j < n_polar_angles; ++j) {
      const double phi = polar[j].nodes[idx[j]];
      x[j] = sin_prod * std::cos(phi);
      w_polar *= polar[j].weights[idx[j]];
      sin_prod *= std::sin(phi);
    }
    for (std::size_t a = 0; a < azimuth; ++a) {
      const double th = 2.0 * std::numbers::pi * (static_cast<double>(a) + 0.5) / static_cast<double>(azimuth);
      x[dim - 2] = sin_prod * std::cos(th);
      x[dim - 1] = sin_prod * std::sin(th);
      s.points.insert(s.points.end(), x.begin(), x.end());
      s.weights.push_back(w_polar * 2.0 * std::numbers::pi / static_cast<double>(azimuth));
    }
    std::size_t j = 0;
    while (j < n_polar_angles && ++idx[j] == polar_n) idx[j++] = 0;
    if (j == n_polar_angles) break;
  }
  return s;
}

}  // namespace surfconv::quad
