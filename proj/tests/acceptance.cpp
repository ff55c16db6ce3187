// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "surfconv/experiment.hpp"

namespace {

using namespace surfconv;
namespace ex = surfconv::experiment;

const std::filesystem::path kConfigs = SURFCONV_CONFIG_DIR;

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    passed = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::map<std::string, ex::RunOutput> first_runs;

const ex::RunOutput& suite_run(const std::string& config) {
  auto it = first_runs.find(config);
  if (it != first_runs.end()) return it->second;
  const auto cfg = ex::load_config(kConfigs / config);
  return first_runs.emplace(config, ex::run_experiment(cfg, hardware_threads())).first->second;
}

/// Requires every verdict whose check name starts with one of `prefixes` to pass, and at least one to exist.
void require_verdicts(Outcome& o, const ex::RunOutput& run, const std::vector<std::string>& prefixes) {
  std::size_t seen = 0;
  for (const auto& v : run.verdicts) {
    const bool wanted = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
                          return v.check.rfind(p, 0) == 0;
                        });
    if (!wanted) continue;
    ++seen;
    o.require(v.passed, v.suite + " " + v.matrix_id + " " + v.check + " value=" + v.value.dump());
  }
  o.require(seen > 0, "no matching verdicts");
}

std::vector<ex::NamedMatrix> battery() { return ex::load_config(kConfigs / "ineq6.json").matrices; }

// ---------------------------------------------------------------------------

Outcome star_exactness() {
  Outcome o;
  const auto iv = check_star(CoefficientMatrix::from_rows({{1, 0}, {1, 1}, {0, 1}}));
  o.require(iv.holds && iv.min_abs_det == 1, "example matrix: holds=" + std::to_string(iv.holds));
  const auto neg = check_star(CoefficientMatrix::from_rows({{1, 0}, {2, 0}, {0, 1}}));
  o.require(!neg.holds && neg.witness == IndexSet{0, 1}, "negative control witness");
  require_verdicts(o, suite_run("check_star.json"), {});
  return o;
}

Outcome exponent_geometry() {
  Outcome o;
  struct Hand {
    int k, d;
    Rational a, b, q0, p0;
  };
  const std::vector<Hand> hand = {
      {1, 2, Rational(2, 3), Rational(1, 3), Rational(3), Rational(3, 2)},
      {2, 3, Rational(3, 4), Rational(1, 4), Rational(4), Rational(4, 3)},
      {3, 5, Rational(5, 7), Rational(2, 7), Rational(7, 2), Rational(7, 5)},
      {4, 7, Rational(7, 10), Rational(3, 10), Rational(10, 3), Rational(10, 7)},
  };
  for (const auto& h : hand) {
    const auto v = triangle_vertices(h.k, h.d);
    const std::string tag = "(" + std::to_string(h.k) + "," + std::to_string(h.d) + ")";
    o.require(v[0] == ExponentPair(0, 0) && v[1] == ExponentPair(1, 1) && v[2] == ExponentPair(h.a, h.b),
              tag + " vertices");
    o.require(critical_q0(h.k, h.d) == h.q0, tag + " q0");
    o.require(critical_p0(h.k, h.d) == h.p0, tag + " p0");
  }
  for (int k = 1; k <= 8; ++k)
    for (int l = 1; l <= k; ++l) {
      const int d = k + l;
      const auto v = triangle_vertices(k, d);
      o.require(v[2].dual() == v[2], "self-duality k=" + std::to_string(k) + " l=" + std::to_string(l));
      o.require(Rational(k) + Rational(l) / critical_q0(k, d) == Rational(d) / critical_p0(k, d),
                "scaling identity k=" + std::to_string(k) + " l=" + std::to_string(l));
    }
  o.require(ricci_gap(1, 3) == Rational(1, 6), "ricci_gap(1,3)");
  require_verdicts(o, suite_run("typeset.json"), {});
  return o;
}

Outcome adjoint_identity() {
  Outcome o;
  double worst = 0.0;
  for (const auto& m : battery()) {
    const auto& C = m.C;
    const std::size_t k = C.k(), l = C.l();
    Rng rng(0xAD01, k * 16 + l);
    std::vector<double> x(k), y(k), zeta(l);
    for (int t = 0; t < 10000; ++t) {
      for (auto& v : x) v = rng.normal();
      for (auto& v : y) v = rng.normal();
      for (auto& v : zeta) v = rng.normal();
      const auto a = adjoint(C, y, zeta);
      const auto b = bilinear(C, x, y);
      double lhs = 0.0, rhs = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < k; ++i) lhs += a[i] * x[i];
      for (std::size_t j = 0; j < l; ++j) rhs += zeta[j] * b[j];
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j) scale += std::abs(C(i, j) * x[i] * y[i] * zeta[j]);
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
  }
  o.require(worst <= 1e-12, "relative error " + fmt(worst));
  o.detail = o.passed ? "max rel err " + fmt(worst) : o.detail;
  return o;
}

Outcome jacobian() {
  Outcome o;
  const auto mats = battery();
  double worst_fd = 0.0;
  std::size_t configs = 0;
  Rng rng(0xFD, 1);
  while (configs < 1000) {
    const auto& C = mats[configs % mats.size()].C;
    const std::size_t k = C.k(), l = C.l();
    std::vector<double> y(k), zeta(l);
    for (auto& v : y) v = rng.sign() * rng.uniform(0.5, 2.0);
    for (auto& v : zeta) v = rng.normal();
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = k; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    IndexSet Q(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - l));
    std::sort(Q.begin(), Q.end());
    const auto perm = complete_partition(C.k(), Q);
    const auto fd = jacobian_fd(C, y, zeta, perm);
    if (fd.warning) continue;
    const double cf = jacobian_closed_form(C, y, zeta, perm);
    worst_fd = std::max(worst_fd, std::abs(fd.value - cf) / cf);
    ++configs;
  }
  o.require(worst_fd <= 1e-6, "finite-difference rel err " + fmt(worst_fd));
  double min_ratio = INFINITY;
  for (const auto& m : mats) {
    const auto rep = verify_jest(m.C, 100000, 0x1E57);
    min_ratio = std::min(min_ratio, rep.min_ratio);
    o.require(rep.passed(), m.id + " lower bound min ratio " + fmt(rep.min_ratio));
  }
  if (o.passed) o.detail = "fd rel err " + fmt(worst_fd) + ", lower bound min ratio " + fmt(min_ratio);
  return o;
}

Outcome norm_certificate() {
  Outcome o;
  for (const auto& m : battery()) {
    const auto& C = m.C;
    const std::size_t k = C.k(), l = C.l();
    const double M = constant_M(C);
    std::vector<IndexSet> subsets;
    detail::for_each_subset(k, l, [&](const IndexSet& P) { subsets.push_back(P); });
    Rng rng(0x4E0, k * 16 + l);
    std::vector<double> zeta(l);
    std::size_t bad_cert = 0, bad_q = 0;
    for (int t = 0; t < 100000; ++t) {
      for (auto& v : zeta) v = rng.normal();
      const auto v = adjoint_one(C, zeta);
      const double nz = norm2(zeta);
      for (const auto& P : subsets) {
        double best = 0.0;
        for (auto i : P) best = std::max(best, std::abs(v[i]));
        if (nz > M * best) ++bad_cert;
      }
      try {
        const auto Q = select_Q(C, zeta, M);
        bool ok = Q.size() == k - l && std::is_sorted(Q.begin(), Q.end());
        for (auto i : Q) ok = ok && nz <= M * std::abs(v[i]);
        if (!ok) ++bad_q;
      } catch (const InconsistentM&) {
        ++bad_q;
      }
    }
    o.require(bad_cert == 0, m.id + " certificate violations " + std::to_string(bad_cert));
    o.require(bad_q == 0, m.id + " invalid Q " + std::to_string(bad_q));
  }
  return o;
}

Outcome transform_contract() {
  Outcome o;
  require_verdicts(o, suite_run("transform_check.json"), {"pairing", "leak", "mass_conservation", "fourier_identity"});
  return o;
}

Outcome oscillatory_bound() {
  Outcome o;
  require_verdicts(o, suite_run("transform_check.json"), {"oscillatory"});
  return o;
}

Outcome lemma() {
  Outcome o;
  const auto& run = suite_run("lemma_mc.json");
  o.require(run.report["config"]["params"]["ensemble"].get<int>() >= 20, "ensemble below 20");
  require_verdicts(o, run, {"closed_form", "doubling_drift", "cover_sum"});
  return o;
}

Outcome plancherel() {
  Outcome o;
  require_verdicts(o, suite_run("plancherel.json"), {});
  return o;
}

Outcome ball_scaling() {
  Outcome o;
  require_verdicts(o, suite_run("ball_scan.json"), {});
  return o;
}

double one_dimensional_lhs(const GaussianSpec& f, double a, double b, double u0, double u1) {
  const double m = f.mean()[0], s = std::sqrt(f.covariance()(0, 0)), I = f.integral();
  auto cdf = [&](double t) { return 0.5 * I * (1.0 + std::erf((t - m) / (s * std::numbers::sqrt2))); };
  const auto rule = quad::composite_gauss_legendre(16, 10, a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i)
    acc += rule.weights[i] * (cdf(u1 / rule.nodes[i]) - cdf(u0 / rule.nodes[i]));
  return acc;
}

Outcome restricted_and_ineq6() {
  Outcome o;
  require_verdicts(o, suite_run("restricted_scan.json"), {});
  require_verdicts(o, suite_run("ineq6.json"), {});
  const auto C = CoefficientMatrix::from_rows({{1}});
  const auto f = GaussianSpec::diagonal(1.5, {0.2}, {0.7});
  const TestSet E = TestSet::box_union({{{1.1, -0.4}, {1.8, 0.9}}});
  const auto rep = ineq6_check(C, f, E, {40000, 0xC1, 1});
  const double err = std::abs(rep.lhs / one_dimensional_lhs(f, 1.1, 1.8, -0.4, 0.9) - 1.0);
  o.require(err <= 0.05, "one-dimensional closed form rel err " + fmt(err));
  if (o.passed) o.detail = "one-dimensional rel err " + fmt(err);
  return o;
}

Outcome curvature() {
  Outcome o;
  Rng rng(0xC0, 2);
  std::size_t singular = 0;
  for (int t = 0; t < 100; ++t) {
    std::int64_t c[2][2];
    for (auto& row : c)
      for (auto& v : row) v = static_cast<std::int64_t>(rng.below(7)) - 3;
    const auto C = CoefficientMatrix::from_rows({{c[0][0], c[0][1]}, {c[1][0], c[1][1]}});
    Sym2 Q1{{{C.exact(0, 0), 0}, {0, C.exact(1, 0)}}};
    Sym2 Q2{{{C.exact(0, 1), 0}, {0, C.exact(1, 1)}}};
    const Rational det = C.exact(0, 0) * C.exact(1, 1) - C.exact(0, 1) * C.exact(1, 0);
    const Rational curv = curvature_2_4(Q1, Q2);
    o.require(curv == Rational(-16) * det * det, "curvature mismatch at sample " + std::to_string(t));
    const bool star = check_star(C).holds;
    o.require((curv == 0) == !star, "vanishing disagrees with check_star at sample " + std::to_string(t));
    singular += star ? 0 : 1;
  }
  if (o.passed) o.detail = std::to_string(singular) + " of 100 samples singular";
  return o;
}

Outcome reproducibility() {
  Outcome o;
  const unsigned other_threads = hardware_threads() == 1 ? 2 : 1;
  std::size_t files = 0;
  for (const auto& [config, first] : first_runs) {
    const auto again = ex::run_experiment(ex::load_config(kConfigs / config), other_threads);
    o.require(again.artifacts.size() == first.artifacts.size(), config + " file count");
    for (std::size_t i = 0; i < std::min(again.artifacts.size(), first.artifacts.size()); ++i) {
      ++files;
      o.require(again.artifacts[i].name == first.artifacts[i].name &&
                    again.artifacts[i].content == first.artifacts[i].content,
                config + " " + first.artifacts[i].name + " differs");
    }
  }
  o.require(first_runs.size() == ex::kSuites.size(), "not every suite was run");
  if (o.passed) o.detail = std::to_string(files) + " files across " + std::to_string(first_runs.size()) + " suites";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    std::string name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"nonsingular submatrix check", 1, star_exactness},
      {"exponent geometry", 1, exponent_geometry},
      {"adjoint identity", 1, adjoint_identity},
      {"Jacobian closed form and lower bound", 30, jacobian},
      {"norm constant certificate and Q selection", 10, norm_certificate},
      {"plane transform contract", 120, transform_contract},
      {"oscillatory sup bound", 60, oscillatory_bound},
      {"lemma integral ratios", 300, lemma},
      {"Plancherel chain", 180, plancherel},
      {"ball scaling exponents", 600, ball_scaling},
      {"restricted scan and shell inequality", 300, restricted_and_ineq6},
      {"curvature cross-check", 1, curvature},
      {"byte-identical reruns", 3600, reproducibility},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < c.limit_seconds, "took " + fmt(secs) + " s, limit " + fmt(c.limit_seconds) + " s");
    if (!o.passed) ++failed;
    std::printf("%s criterion %2zu: %s (%.2f s)%s%s\n", o.passed ? "PASS" : "FAIL", i + 1, c.name.c_str(), secs,
                o.detail.empty() ? "" : " | ", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
