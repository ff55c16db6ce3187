#pragma once

// Configuration-driven experiments: schema validation, the eight suites, run
// reports and the consolidated summary. Everything here is deterministic in
// (config, seed); wall-clock time is kept out of the payloads.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "surfconv/exponent_geometry.hpp"
#include "surfconv/gaussian.hpp"
#include "surfconv/grid_function.hpp"
#include "surfconv/lemma_verifier.hpp"
#include "surfconv/measure_conv.hpp"
#include "surfconv/model_surface.hpp"
#include "surfconv/plane_transform.hpp"
#include "surfconv/rational.hpp"
#include "surfconv/rng.hpp"

namespace surfconv::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";

/// A config that does not match the schema; `pointer` is a JSON pointer to the offending key.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

class ThresholdTooHigh : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Suite { check_star, typeset, ball_scan, restricted_scan, lemma_mc, transform_check, plancherel, ineq6 };

inline constexpr std::array<std::pair<Suite, std::string_view>, 8> kSuites{{
    {Suite::check_star, "check-star"},
    {Suite::typeset, "typeset"},
    {Suite::ball_scan, "ball-scan"},
    {Suite::restricted_scan, "restricted-scan"},
    {Suite::lemma_mc, "lemma-mc"},
    {Suite::transform_check, "transform-check"},
    {Suite::plancherel, "plancherel"},
    {Suite::ineq6, "ineq6"},
}};

inline std::string suite_name(Suite s) {
  for (const auto& [v, n] : kSuites)
    if (v == s) return std::string(n);
  return "unknown";
}

inline std::optional<Suite> parse_suite(std::string_view name) {
  for (const auto& [v, n] : kSuites)
    if (n == name) return v;
  return std::nullopt;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Integer, [num, den] or "num/den".
inline Rational parse_rational(const json& j, const std::string& ptr) {
  try {
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      const auto slash = s.find('/');
      if (slash == std::string::npos) return Rational(BigInt(s));
      const BigInt den(s.substr(slash + 1));
      if (den == 0) throw std::invalid_argument("zero denominator");
      return Rational(BigInt(s.substr(0, slash)), den);
    }
    return rational_from_json(j);
  } catch (const std::exception& e) {
    throw SchemaError(ptr, std::string("not a rational: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matrices

struct NamedMatrix {
  std::string id;
  CoefficientMatrix C;
  std::optional<bool> expect_star;

  json to_json() const {
    json j = C.to_json();
    j["id"] = id;
    if (expect_star) j["expect_star"] = *expect_star;
    return j;
  }
};

namespace detail {

inline bool is_nonnegative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline bool valid_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

inline json read_json_file(const fs::path& path, const std::string& ptr) {
  std::ifstream in(path);
  if (!in) throw SchemaError(ptr, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(ptr, path.string() + " is not valid JSON: " + e.what());
  }
}

inline int small_int(const json& j, const std::string& ptr) {
  if (!j.is_number_integer()) throw SchemaError(ptr, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 1 || v > 16) throw SchemaError(ptr, "expected an integer in [1, 16]");
  return static_cast<int>(v);
}

/// Entries either flat (k*l rationals, row-major) or as k rows of l rationals.
inline std::vector<Rational> parse_entries(const json& e, int k, int l, const std::string& ptr) {
  if (!e.is_array()) throw SchemaError(ptr, "entries must be an array");
  const auto n = static_cast<std::size_t>(k * l);
  const bool rows = e.size() == static_cast<std::size_t>(k) &&
                    std::all_of(e.begin(), e.end(), [&](const json& r) {
                      return r.is_array() && r.size() == static_cast<std::size_t>(l);
                    });
  std::vector<Rational> out;
  if (rows) {
    for (std::size_t i = 0; i < e.size(); ++i)
      for (std::size_t j = 0; j < e[i].size(); ++j)
        out.push_back(parse_rational(e[i][j], ptr + "/" + std::to_string(i) + "/" + std::to_string(j)));
    return out;
  }
  if (e.size() != n) throw SchemaError(ptr, "expected " + std::to_string(n) + " entries or " + std::to_string(k) + " rows");
  for (std::size_t i = 0; i < n; ++i) out.push_back(parse_rational(e[i], ptr + "/" + std::to_string(i)));
  return out;
}

inline NamedMatrix parse_matrix(const json& j, const std::string& ptr, const fs::path& base, std::string default_id,
                                bool strict = true) {
  if (!j.is_object()) throw SchemaError(ptr, "matrix must be an object");
  if (j.contains("file")) {
    if (!j["file"].is_string()) throw SchemaError(ptr + "/file", "expected a path");
    for (const auto& [key, _] : j.items())
      if (key != "file" && key != "id" && key != "expect_star")
        throw SchemaError(ptr + "/" + key, "not allowed next to 'file'");
    fs::path p = j["file"].get<std::string>();
    if (p.is_relative()) p = base / p;
    auto m = parse_matrix(read_json_file(p, ptr + "/file"), ptr + "/file", p.parent_path(), default_id, false);
    if (j.contains("id")) {
      if (!j["id"].is_string() || !valid_id(j["id"].get<std::string>()))
        throw SchemaError(ptr + "/id", "ids use letters, digits, '_', '-' and '.'");
      m.id = j["id"].get<std::string>();
    }
    if (j.contains("expect_star")) {
      if (!j["expect_star"].is_boolean()) throw SchemaError(ptr + "/expect_star", "expected true or false");
      m.expect_star = j["expect_star"].get<bool>();
    }
    return m;
  }
  if (strict)
    for (const auto& [key, _] : j.items())
      if (key != "id" && key != "k" && key != "l" && key != "entries" && key != "expect_star")
        throw SchemaError(ptr + "/" + key, "unknown matrix key");
  for (const char* key : {"k", "l", "entries"})
    if (!j.contains(key)) throw SchemaError(ptr + "/" + key, "required");
  const int k = small_int(j["k"], ptr + "/k");
  const int l = small_int(j["l"], ptr + "/l");
  if (l > k) throw SchemaError(ptr + "/l", "need 1 <= l <= k");
  std::string id = std::move(default_id);
  if (j.contains("id")) {
    if (!j["id"].is_string() || !valid_id(j["id"].get<std::string>()))
      throw SchemaError(ptr + "/id", "ids use letters, digits, '_', '-' and '.'");
    id = j["id"].get<std::string>();
  }
  std::optional<bool> expect;
  if (j.contains("expect_star")) {
    if (!j["expect_star"].is_boolean()) throw SchemaError(ptr + "/expect_star", "expected true or false");
    expect = j["expect_star"].get<bool>();
  }
  return {std::move(id), CoefficientMatrix(k, l, parse_entries(j["entries"], k, l, ptr + "/entries")), expect};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config

struct ExperimentConfig {
  Suite suite = Suite::check_star;
  std::uint64_t seed = 0;
  std::vector<NamedMatrix> matrices;
  json params = json::object();
  std::optional<std::string> output;
  std::optional<unsigned> threads;

  /// The parts that determine results: suite, seed, resolved matrices, params.
  json canonical() const {
    json m = json::array();
    for (const auto& nm : matrices) m.push_back(nm.to_json());
    return {{"suite", suite_name(suite)}, {"seed", seed}, {"matrices", m}, {"params", params}};
  }
  std::string hash() const { return hex64(fnv1a64(canonical().dump())); }
};

inline ExperimentConfig parse_config(const json& j, const fs::path& base = {}) {
  if (!j.is_object()) throw SchemaError("", "config must be a JSON object");
  static const std::set<std::string> allowed{"suite", "seed", "matrix", "matrices", "params", "output", "threads",
                                             "description"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw SchemaError("/" + key, "unknown key");

  ExperimentConfig cfg;
  if (!j.contains("suite")) throw SchemaError("/suite", "required");
  if (!j["suite"].is_string()) throw SchemaError("/suite", "expected a string");
  const auto s = parse_suite(j["suite"].get<std::string>());
  if (!s) throw SchemaError("/suite", "unknown suite '" + j["suite"].get<std::string>() + "'");
  cfg.suite = *s;

  if (!j.contains("seed")) throw SchemaError("/seed", "required");
  if (!detail::is_nonnegative_integer(j["seed"])) throw SchemaError("/seed", "expected a nonnegative 64-bit integer");
  cfg.seed = j["seed"].get<std::uint64_t>();

  if (j.contains("matrix") && j.contains("matrices")) throw SchemaError("/matrices", "give either 'matrix' or 'matrices'");
  if (j.contains("matrix")) cfg.matrices.push_back(detail::parse_matrix(j["matrix"], "/matrix", base, "matrix"));
  if (j.contains("matrices")) {
    const auto& arr = j["matrices"];
    if (!arr.is_array() || arr.empty()) throw SchemaError("/matrices", "expected a nonempty array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string ptr = "/matrices/" + std::to_string(i);
      cfg.matrices.push_back(detail::parse_matrix(arr[i], ptr, base, "m" + std::to_string(i)));
      if (!ids.insert(cfg.matrices.back().id).second) throw SchemaError(ptr + "/id", "duplicate matrix id");
    }
  }
  if (cfg.matrices.empty() && cfg.suite != Suite::typeset) throw SchemaError("/matrix", "required for this suite");

  if (j.contains("params")) {
    if (!j["params"].is_object()) throw SchemaError("/params", "expected an object");
    cfg.params = j["params"];
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) throw SchemaError("/output", "expected a directory path");
    cfg.output = j["output"].get<std::string>();
  }
  if (j.contains("threads")) {
    if (!detail::is_nonnegative_integer(j["threads"]) || j["threads"].get<std::uint64_t>() == 0 ||
        j["threads"].get<std::uint64_t>() > 1024)
      throw SchemaError("/threads", "expected an integer in [1, 1024]");
    cfg.threads = static_cast<unsigned>(j["threads"].get<std::uint64_t>());
  }
  if (j.contains("description") && !j["description"].is_string()) throw SchemaError("/description", "expected a string");
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config(detail::read_json_file(path, ""), path.parent_path());
}

/// Reads SURFCONV_SEED-style values: decimal 64-bit unsigned.
inline std::optional<std::uint64_t> parse_seed(std::string_view s) {
  if (s.empty() || s.size() > 20) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    const std::uint64_t d = static_cast<std::uint64_t>(c - '0');
    if (v > (std::numeric_limits<std::uint64_t>::max() - d) / 10) return std::nullopt;
    v = v * 10 + d;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Suite parameters

class Params {
 public:
  Params(const json& j, std::set<std::string> allowed) : j_(j) {
    for (const auto& [key, _] : j_.items())
      if (!allowed.count(key)) throw SchemaError("/params/" + key, "unknown parameter for this suite");
  }

  double real(const std::string& key, double def, double lo = -std::numeric_limits<double>::infinity(),
              double hi = std::numeric_limits<double>::infinity()) {
    double v = def;
    if (j_.contains(key)) {
      if (!j_[key].is_number()) throw SchemaError(ptr(key), "expected a number");
      v = j_[key].get<double>();
    }
    if (!(v >= lo && v <= hi)) throw SchemaError(ptr(key), "out of range");
    used_[key] = v;
    return v;
  }

  std::size_t count(const std::string& key, std::size_t def, std::size_t lo = 1,
                    std::size_t hi = std::size_t{1} << 32) {
    std::size_t v = def;
    if (j_.contains(key)) {
      if (!detail::is_nonnegative_integer(j_[key])) throw SchemaError(ptr(key), "expected a nonnegative integer");
      v = j_[key].get<std::size_t>();
    }
    if (v < lo || v > hi)
      throw SchemaError(ptr(key), "expected a value in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    used_[key] = v;
    return v;
  }

  std::vector<double> reals(const std::string& key, std::vector<double> def) {
    if (j_.contains(key)) {
      const auto& a = j_[key];
      if (!a.is_array() || a.empty()) throw SchemaError(ptr(key), "expected a nonempty array of numbers");
      def.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw SchemaError(ptr(key) + "/" + std::to_string(i), "expected a number");
        def.push_back(a[i].get<double>());
      }
    }
    used_[key] = def;
    return def;
  }

  std::optional<Rational> rational(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    auto r = parse_rational(j_[key], ptr(key));
    used_[key] = rational_to_json(r);
    return r;
  }

  std::vector<Rational> rationals(const std::string& key) {
    std::vector<Rational> out;
    if (!j_.contains(key)) return out;
    const auto& a = j_[key];
    if (!a.is_array() || a.empty()) throw SchemaError(ptr(key), "expected a nonempty array of rationals");
    json echo = json::array();
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.push_back(parse_rational(a[i], ptr(key) + "/" + std::to_string(i)));
      echo.push_back(rational_to_json(out.back()));
    }
    used_[key] = echo;
    return out;
  }

  const json* raw(const std::string& key) const { return j_.contains(key) ? &j_[key] : nullptr; }
  void record(const std::string& key, json v) { used_[key] = std::move(v); }
  static std::string ptr(const std::string& key) { return "/params/" + key; }
  const json& used() const { return used_; }

 private:
  const json& j_;
  json used_ = json::object();
};

// ---------------------------------------------------------------------------
// Run output

struct Verdict {
  std::string suite;
  std::string matrix_id;
  std::string check;
  bool passed = false;
  json value;
  json bound;
  std::string detail;
  json counterexample;

  json to_json() const {
    json j{{"suite", suite}, {"matrix_id", matrix_id}, {"check", check}, {"passed", passed},
           {"value", value}, {"bound", bound},         {"detail", detail}};
    if (!counterexample.is_null()) j["counterexample"] = counterexample;
    return j;
  }
};

struct Artifact {
  std::string name;
  std::string content;
};

struct RunOutput {
  json report;
  std::vector<Artifact> artifacts;  // run_report.json last
  std::vector<Verdict> verdicts;
  double wall_seconds = 0.0;

  bool passed() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class SuiteContext {
 public:
  SuiteContext(const ExperimentConfig& cfg, unsigned threads)
      : cfg(cfg), threads(std::max(1u, threads)), hash(cfg.hash()), name(suite_name(cfg.suite)) {}

  const ExperimentConfig& cfg;
  unsigned threads;
  std::string hash;
  std::string name;
  std::vector<Verdict> verdicts;
  std::vector<Artifact> artifacts;
  json results = json::object();
  std::uint64_t samples = 0;

  void check(const std::string& matrix_id, const std::string& what, bool passed, json value = nullptr,
             json bound = nullptr, std::string detail = {}, json counterexample = nullptr) {
    verdicts.push_back({name, matrix_id, what, passed, std::move(value), std::move(bound), std::move(detail),
                        std::move(counterexample)});
  }

  /// '#' comment line carrying the config hash and the matrices in exact form.
  std::string comment(const std::vector<const NamedMatrix*>& ms) const {
    json m = json::object();
    for (const auto* nm : ms) m[nm->id] = nm->C.to_json();
    return "# surfconv " + std::string(kToolVersion) + " config_hash=" + hash + " seed=" + std::to_string(cfg.seed) +
           " matrices=" + m.dump() + "\n";
  }
  std::vector<const NamedMatrix*> all_matrices() const {
    std::vector<const NamedMatrix*> out;
    for (const auto& m : cfg.matrices) out.push_back(&m);
    return out;
  }

  void csv(std::string file, const std::vector<const NamedMatrix*>& ms, const std::string& body) {
    artifacts.push_back({std::move(file), comment(ms) + body});
  }
  void text(std::string file, std::string body) { artifacts.push_back({std::move(file), std::move(body)}); }
};

template <typename Fn>
void per_matrix(SuiteContext& ctx, Fn&& fn) {
  for (const auto& m : ctx.cfg.matrices) {
    try {
      fn(m);
    } catch (const SchemaError&) {
      throw;
    } catch (const SingularSubmatrix& e) {
      const auto star = check_star(m.C);
      json w = star.to_json();
      ctx.check(m.id, "preconditions", false, nullptr, nullptr, e.what(), w);
    } catch (const std::exception& e) {
      ctx.check(m.id, "completed", false, nullptr, nullptr, e.what());
    }
  }
}

inline json pair_json(const ExponentPair& p) {
  return json::array({rational_to_json(p.inv_p), rational_to_json(p.inv_q)});
}

inline std::vector<double> shell_point(Rng& rng, std::size_t k) {
  std::vector<double> y(k);
  for (auto& v : y) v = rng.sign() * rng.uniform(1.0, 2.0);
  return y;
}

// ---------------------------------------------------------------------------
// check-star

inline void run_check_star(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {});
  std::ostringstream csv;
  csv << "matrix_id,k,l,holds,min_abs_det,witness_rows,expected\n";
  per_matrix(ctx, [&](const NamedMatrix& m) {
    const auto rep = check_star(m.C);
    const bool expected = m.expect_star.value_or(true);
    json r = rep.to_json();
    std::string witness;
    if (rep.witness) {
      for (std::size_t i = 0; i < rep.witness->size(); ++i)
        witness += (i ? ";" : "") + std::to_string((*rep.witness)[i] + 1);
      r["witness_det"] = rational_to_json(row_submatrix_det(m.C, *rep.witness));
    }
    if (rep.holds) {
      const auto nc = norm_constant(m.C);
      r["M"] = nc.M;
      r["jest_constant"] = jest_lower_bound(m.C);
    }
    ctx.results[m.id] = r;
    csv << m.id << ',' << m.C.k() << ',' << m.C.l() << ',' << (rep.holds ? "true" : "false") << ','
        << to_string(rep.min_abs_det) << ',' << witness << ',' << (expected ? "true" : "false") << '\n';
    ctx.check(m.id, "star", rep.holds == expected, rep.holds, expected,
              rep.holds ? "all l x l row submatrices are nonsingular" : "singular row set " + witness,
              rep.holds == expected ? json(nullptr) : r);
    if (rep.witness) {
      const bool singular = row_submatrix_det(m.C, *rep.witness) == 0;
      ctx.check(m.id, "witness_singular", singular, witness, "det = 0");
    }
  });
  ctx.csv("check_star.csv", ctx.all_matrices(), csv.str());
}

// ---------------------------------------------------------------------------
// typeset

inline void run_typeset(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"dims"});
  std::vector<std::pair<int, int>> dims;
  if (const json* d = p.raw("dims")) {
    if (!d->is_array() || d->empty()) throw SchemaError("/params/dims", "expected a nonempty array of [k, d] pairs");
    for (std::size_t i = 0; i < d->size(); ++i) {
      const auto& e = (*d)[i];
      const std::string ptr = "/params/dims/" + std::to_string(i);
      if (!e.is_array() || e.size() != 2) throw SchemaError(ptr, "expected [k, d]");
      const int k = small_int(e[0], ptr + "/0");
      if (!e[1].is_number_integer()) throw SchemaError(ptr + "/1", "expected an integer");
      const auto dd = e[1].get<std::int64_t>();
      if (dd <= k || dd > 2 * k) throw SchemaError(ptr + "/1", "need k < d <= 2k");
      dims.emplace_back(k, static_cast<int>(dd));
    }
    p.record("dims", *d);
  }
  for (const auto& m : ctx.cfg.matrices) dims.emplace_back(m.C.k(), m.C.d());
  if (dims.empty()) throw SchemaError("/params/dims", "required when no matrix is given");
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());

  std::ostringstream csv;
  csv << "k,d,vertex,inv_p,inv_q\n";
  for (const auto& [k, d] : dims) {
    const TypeSet ts(k, d);
    const int l = d - k;
    const Rational q0 = critical_q0(k, d), p0 = critical_p0(k, d);
    const auto& v = ts.vertices();
    const std::string id = "k" + std::to_string(k) + "_d" + std::to_string(d);
    json r = ts.to_json();
    r["q0"] = rational_to_json(q0);
    r["p0"] = rational_to_json(p0);
    r["q0_text"] = to_string(q0);
    r["p0_text"] = to_string(p0);
    json vt = json::array();
    for (std::size_t i = 0; i < 3; ++i) {
      csv << k << ',' << d << ',' << i << ',' << to_string(v[i].inv_p) << ',' << to_string(v[i].inv_q) << '\n';
      vt.push_back("(" + to_string(v[i].inv_p) + ", " + to_string(v[i].inv_q) + ")");
    }
    r["vertices_text"] = vt;
    ctx.results[id] = r;

    const ExponentPair& x = v[2];
    const bool is_vertex = x.inv_p == Rational(1) / p0 && x.inv_q == Rational(1) / q0;
    ctx.check(id, "vertex_is_critical_pair", is_vertex, pair_json(x),
              json::array({rational_to_json(Rational(1) / p0), rational_to_json(Rational(1) / q0)}));
    const bool self_dual = Rational(1) - x.inv_q == x.inv_p && Rational(1) - x.inv_p == x.inv_q;
    ctx.check(id, "vertex_self_dual", self_dual, pair_json(x), "(1 - 1/q0, 1 - 1/p0) = (1/p0, 1/q0)");
    const Rational lhs = Rational(k) + Rational(l) / q0, rhs = Rational(d) / p0;
    ctx.check(id, "scaling_identity", lhs == rhs, rational_to_json(lhs), rational_to_json(rhs),
              "k + l/q0 = d/p0");
  }
  ctx.csv("typeset.csv", ctx.all_matrices(), csv.str());
}

// ---------------------------------------------------------------------------
// ball-scan

inline void run_ball_scan(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"deltas", "inv_p", "samples", "centers", "cells_per_delta", "tolerance"});
  BallScalingConfig bc;
  bc.deltas = p.reals("deltas", bc.deltas);
  for (std::size_t i = 0; i < bc.deltas.size(); ++i)
    if (!(bc.deltas[i] > 0.0 && bc.deltas[i] < 1.0))
      throw SchemaError("/params/deltas/" + std::to_string(i), "deltas lie in (0, 1)");
  if (bc.deltas.size() < 3) throw SchemaError("/params/deltas", "need at least 3 deltas");
  bc.inv_p = p.rationals("inv_p");
  bc.samples = p.count("samples", bc.samples, 2);
  bc.centers = p.count("centers", bc.centers, 1, 64);
  bc.cells_per_delta = p.real("cells_per_delta", bc.cells_per_delta, 1.0, 64.0);
  const std::optional<double> tol_param =
      p.raw("tolerance") ? std::optional<double>(p.real("tolerance", 0.0, 0.0, 10.0)) : std::nullopt;
  bc.seed = ctx.cfg.seed;
  bc.threads = ctx.threads;

  per_matrix(ctx, [&](const NamedMatrix& m) {
    const auto res = ball_scaling_experiment(m.C, bc);
    ctx.samples += static_cast<std::uint64_t>(bc.deltas.size() * bc.centers * bc.samples);
    const double tol = tol_param.value_or(m.C.k() == 2 && m.C.l() == 1 ? 0.15 : 0.2);
    const double expected = to_double(res.expected_exponent);
    json rows = json::array();
    for (const auto& r : res.rows)
      rows.push_back({{"delta", r.delta}, {"inv_p", rational_to_json(r.inv_p)}, {"norm", r.norm}, {"ratio", r.ratio},
                      {"stderr", r.stderr_}, {"center_id", r.center_id}});
    json slopes = json::array();
    for (const auto& [ip, s] : res.ratio_slopes) slopes.push_back({{"inv_p", rational_to_json(ip)}, {"slope", s}});
    ctx.results[m.id] = {{"q0", rational_to_json(res.q0)},
                         {"expected_exponent", rational_to_json(res.expected_exponent)},
                         {"fitted_exponent", res.fitted_exponent},
                         {"mean_exponent", res.mean_exponent},
                         {"ratio_slopes", slopes},
                         {"rows", rows},
                         {"warnings", res.warnings}};
    std::ostringstream csv;
    res.write_csv(csv);
    ctx.csv("ball_scan_" + m.id + ".csv", {&m}, csv.str());

    ctx.check(m.id, "fitted_exponent", std::abs(res.mean_exponent - expected) <= tol, res.mean_exponent, expected,
              "|fitted - (k + l/q0)| <= " + fmt(tol), std::abs(res.mean_exponent - expected) <= tol
                                                          ? json(nullptr)
                                                          : json{{"fitted_per_center", res.fitted_exponent}});
    const Rational vertex = Rational(1) / critical_p0(m.C.k(), m.C.d());
    for (const auto& [ip, s] : res.ratio_slopes) {
      const std::string label = "ratio_slope 1/p=" + to_string(ip);
      if (ip < vertex)
        ctx.check(m.id, label, s > 0.0, s, "> 0", "ratio decays as delta -> 0 below the vertex");
      else if (ip > vertex)
        ctx.check(m.id, label, s < 0.0, s, "< 0", "ratio grows as delta -> 0 above the vertex");
      else
        ctx.check(m.id, label, std::abs(s) <= tol, s, tol, "flat at the vertex");
    }
  });
  ctx.results["params"] = p.used();
}

// ---------------------------------------------------------------------------
// restricted-scan

inline void run_restricted_scan(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"p", "family_size", "resolution", "cells_per_scale", "samples", "max_growth"});
  RestrictedScanConfig rc;
  const auto p_param = p.rational("p");
  rc.family_size = p.count("family_size", rc.family_size, 2, 4096);
  rc.resolution = static_cast<std::int64_t>(p.count("resolution", static_cast<std::size_t>(rc.resolution), 8, 4096));
  rc.cells_per_scale = p.real("cells_per_scale", rc.cells_per_scale, 0.5, 64.0);
  rc.samples = p.count("samples", rc.samples, 2);
  const double max_growth = p.real("max_growth", 0.25, 0.0, 100.0);
  rc.seed = ctx.cfg.seed;
  rc.threads = ctx.threads;

  for (const auto& m : ctx.cfg.matrices) {
    if (!p_param) continue;
    const TypeSet ts(m.C.k(), m.C.d());
    if (*p_param <= 1 || !ts.contains(ExponentPair(Rational(1) / *p_param, Rational(1) / critical_q0(m.C.k(), m.C.d())),
                                      Containment::interior))
      throw SchemaError("/params/p", "(1/p, 1/q0) is not interior to the type set for matrix " + m.id);
  }

  std::ostringstream summary;
  per_matrix(ctx, [&](const NamedMatrix& m) {
    Rational pp;
    if (p_param) {
      pp = *p_param;
    } else {
      const Rational mid = (Rational(1) / critical_q0(m.C.k(), m.C.d()) + Rational(1) / critical_p0(m.C.k(), m.C.d())) / 2;
      pp = Rational(1) / mid;
    }
    const auto rep = restricted_estimate_scan(m.C, pp, rc);
    ctx.samples += static_cast<std::uint64_t>(rc.family_size * rc.samples);
    json entries = json::array();
    for (const auto& e : rep.entries)
      entries.push_back({{"set_id", e.set_id}, {"kind", e.kind}, {"measure", e.measure}, {"norm", e.norm},
                         {"ratio", e.ratio}, {"stderr", e.stderr_}, {"resolution", e.resolution}});
    ctx.results[m.id] = {{"p", rational_to_json(pp)},   {"q0", rational_to_json(rep.q0)}, {"sup_half", rep.sup_half},
                         {"sup_full", rep.sup_full},    {"argmax", rep.argmax},           {"growth", rep.growth()},
                         {"entries", entries}};
    std::ostringstream csv;
    rep.write_csv(csv);
    ctx.csv("restricted_scan_" + m.id + ".csv", {&m}, csv.str());
    const bool bounded = std::isfinite(rep.sup_full) && rep.sup_full > 0.0;
    ctx.check(m.id, "ratio_bounded", bounded, rep.sup_full, "finite, positive");
    ctx.check(m.id, "family_doubling_growth", rep.growth() < max_growth, rep.growth(), max_growth,
              "sup over 2N sets / sup over N sets - 1",
              rep.growth() < max_growth ? json(nullptr) : json{{"argmax_set", rep.argmax},
                                                               {"kind", rep.entries[rep.argmax].kind},
                                                               {"ratio", rep.sup_full}});
  });
  ctx.results["params"] = p.used();
}

// ---------------------------------------------------------------------------
// lemma-mc

inline McConfig mc_config(Params& p, const SuiteContext& ctx, std::size_t default_ny) {
  McConfig mc;
  mc.seed = ctx.cfg.seed;
  mc.threads = ctx.threads;
  mc.n_y = p.count("n_y", default_ny, 2, 1u << 24);
  mc.azimuth = p.count("azimuth", mc.azimuth, 4, 4096);
  mc.radial.nodes_per_panel = p.count("radial_nodes", mc.radial.nodes_per_panel, 2, 256);
  mc.tail = p.real("tail", mc.tail, 4.0, 40.0);
  return mc;
}

/// For k = l = 1 the ratio is 2 |c|^{-rho-1} int_1^2 y^{-rho-1} dy for every weight.
inline double one_dimensional_ratio(double c, double rho) {
  const double shell = rho == 0.0 ? std::log(2.0) : (1.0 - std::pow(2.0, -rho)) / rho;
  return 2.0 * std::pow(std::abs(c), -rho - 1.0) * shell;
}

inline void run_lemma_mc(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"rho", "ensemble", "n_y", "azimuth", "radial_nodes", "tail", "drift_tolerance",
                            "cover_low", "cover_high", "closed_form_tolerance"});
  std::vector<json> rho_spec{0, 1, "d-2l"};
  if (const json* r = p.raw("rho")) {
    if (!r->is_array() || r->empty()) throw SchemaError("/params/rho", "expected a nonempty array");
    rho_spec.clear();
    for (std::size_t i = 0; i < r->size(); ++i) {
      const auto& v = (*r)[i];
      if (!v.is_number() && !(v.is_string() && v.get<std::string>() == "d-2l"))
        throw SchemaError("/params/rho/" + std::to_string(i), "expected a number or \"d-2l\"");
      rho_spec.push_back(v);
    }
  }
  p.record("rho", rho_spec);
  const std::size_t ensemble = p.count("ensemble", 20, 1, 10000);
  const McConfig mc = mc_config(p, ctx, 400);
  const double drift_tol = p.real("drift_tolerance", 0.10, 0.0, 10.0);
  const double cover_lo = p.real("cover_low", 0.98, 0.0, 1.0);
  const double cover_hi = p.real("cover_high", 1.10, 1.0, 100.0);
  const double cf_tol = p.real("closed_form_tolerance", 0.02, 0.0, 1.0);

  per_matrix(ctx, [&](const NamedMatrix& m) {
    const int k = m.C.k(), l = m.C.l(), d = m.C.d();
    std::vector<double> rhos;
    for (const auto& r : rho_spec) rhos.push_back(r.is_string() ? static_cast<double>(d - 2 * l) : r.get<double>());
    std::sort(rhos.begin(), rhos.end());
    rhos.erase(std::unique(rhos.begin(), rhos.end()), rhos.end());
    const auto ws = gaussian_ensemble(static_cast<std::size_t>(k), ensemble, derive_seed(ctx.cfg.seed, 0x1E4));
    const json matrix_json = m.C.to_json();

    std::vector<RatioReport> rows;
    std::ostringstream drift_csv, jsonl;
    drift_csv << std::setprecision(17) << "rho,w_id,ratio,ratio_doubled,drift,cover_ratio,membership_ratio\n";
    json per_rho = json::array();
    for (double rho : rhos) {
      double worst_drift = 0.0, worst_cover = 1.0, worst_cf = 0.0;
      std::string drift_w, cover_w, cf_w;
      json members = json::array();
      for (const auto& w : ws) {
        const auto a = lemma_integrals(m.C, rho, w, mc);
        const auto b = lemma_integrals(m.C, rho, w, mc.doubled());
        ctx.samples += static_cast<std::uint64_t>(a.n_y + b.n_y);
        const double r1 = a.lhs / a.rhs, r2 = b.lhs / b.rhs;
        const double drift = std::abs(r2 / r1 - 1.0);
        const double cover = a.cover_sum() / a.lhs;
        const double member = a.membership_sum() / a.lhs;
        drift_csv << rho << ',' << w.id() << ',' << r1 << ',' << r2 << ',' << drift << ',' << cover << ',' << member
                  << '\n';
        members.push_back({{"w_id", w.id()}, {"ratio", r1}, {"ratio_doubled", r2}, {"drift", drift},
                           {"cover_ratio", cover}, {"stderr", a.lhs_stderr / a.rhs}});
        if (drift > worst_drift) {
          worst_drift = drift;
          drift_w = w.id();
        }
        if (std::abs(cover - 1.0) > std::abs(worst_cover - 1.0) || cover_w.empty()) {
          worst_cover = cover;
          cover_w = w.id();
        }
        if (k == 1 && l == 1) {
          const double err = std::abs(r2 / one_dimensional_ratio(m.C(0, 0), rho) - 1.0);
          if (err > worst_cf || cf_w.empty()) {
            worst_cf = err;
            cf_w = w.id();
          }
        }
        RatioReport total{a.lhs, a.rhs, r1, a.lhs_stderr / a.rhs, rho, m.id, w.id(), std::nullopt, a.n_y, a.seed};
        rows.push_back(total);
        for (auto& q : per_q_reports(a, m.id, w.id())) rows.push_back(std::move(q));
      }
      const std::string rho_label = "rho=" + fmt(rho);
      ctx.check(m.id, "doubling_drift " + rho_label, worst_drift < drift_tol, worst_drift, drift_tol,
                "max over " + std::to_string(ws.size()) + " weights; worst " + drift_w,
                worst_drift < drift_tol ? json(nullptr) : json{{"w_id", drift_w}, {"rho", rho}});
      const bool cover_ok = worst_cover >= cover_lo && worst_cover <= cover_hi;
      ctx.check(m.id, "cover_sum " + rho_label, cover_ok, worst_cover, json::array({cover_lo, cover_hi}),
                "per-Q sum / total, worst " + cover_w,
                cover_ok ? json(nullptr) : json{{"w_id", cover_w}, {"rho", rho}});
      if (k == 1 && l == 1)
        ctx.check(m.id, "closed_form " + rho_label, worst_cf <= cf_tol, worst_cf, cf_tol,
                  "relative error against 2|c|^(-rho-1) int_1^2 y^(-rho-1) dy, worst " + cf_w,
                  worst_cf <= cf_tol ? json(nullptr) : json{{"w_id", cf_w}, {"rho", rho}});
      per_rho.push_back({{"rho", rho}, {"max_drift", worst_drift}, {"worst_cover", worst_cover}, {"members", members}});
    }
    for (const auto& r : rows) {
      json j = r.to_json();
      j["config_hash"] = ctx.hash;
      j["matrix"] = matrix_json;
      jsonl << j.dump() << '\n';
    }
    std::ostringstream csv;
    write_ratio_csv(csv, rows);
    ctx.csv("lemma_" + m.id + ".csv", {&m}, csv.str());
    ctx.csv("lemma_drift_" + m.id + ".csv", {&m}, drift_csv.str());
    ctx.text("lemma_" + m.id + ".jsonl", jsonl.str());
    ctx.results[m.id] = {{"rho", rhos}, {"per_rho", per_rho}};
  });
  ctx.results["params"] = p.used();
}

// ---------------------------------------------------------------------------
// transform-check

/// Target half-width covering the image of f under L_y to 7 standard deviations per
/// axis, and a random Gaussian test function h on the same scale.
inline std::pair<double, GaussianSpec> image_scale_pair(const GaussianSpec& f, const CoefficientMatrix& C,
                                                        std::span<const double> y, Rng& rng) {
  const Eigen::MatrixXd L = ly_eigen(C, y);
  const Eigen::VectorXd mean = L * f.mean();
  const Eigen::MatrixXd cov = L * f.covariance() * L.transpose();
  double R = 0.0;
  Eigen::VectorXd hm = mean;
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const double sd = std::sqrt(cov(j, j));
    R = std::max(R, std::abs(mean[j]) + 7.0 * sd);
    hm[j] += 0.5 * sd * rng.normal();
  }
  const double amplitude = rng.uniform(0.5, 2.0);
  return {R, GaussianSpec(amplitude, hm, cov * rng.uniform(0.5, 2.0))};
}

inline void run_transform_check(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"cells", "source_cells", "y_samples", "zetas", "pairing_tolerance", "leak_tolerance",
                            "fourier_tolerance", "oscillatory_functions", "oscillatory_s", "oscillatory_cells",
                            "oscillatory_lattice", "oscillatory_tolerance"});
  const auto cells = static_cast<std::int64_t>(p.count("cells", 128, 8, 1024));
  const std::optional<std::size_t> source_param =
      p.raw("source_cells") ? std::optional<std::size_t>(p.count("source_cells", 0, 8, 1024)) : std::nullopt;
  const std::size_t y_samples = p.count("y_samples", 3, 1, 1000);
  const std::size_t n_zeta = p.count("zetas", 16, 1, 100000);
  const double pair_tol = p.real("pairing_tolerance", 0.01, 0.0, 1.0);
  const double leak_tol = p.real("leak_tolerance", 1e-3, 0.0, 1.0);
  const double ft_tol = p.real("fourier_tolerance", 0.02, 0.0, 1.0);
  const std::size_t n_osc = p.count("oscillatory_functions", 10, 0, 1000);
  const auto osc_s = p.reals("oscillatory_s", {0.5, 1.0, 2.0});
  const std::optional<std::size_t> osc_cells_param =
      p.raw("oscillatory_cells") ? std::optional<std::size_t>(p.count("oscillatory_cells", 0, 2, 512)) : std::nullopt;
  const std::size_t osc_lattice = p.count("oscillatory_lattice", 4, 0, 64);
  const double osc_tol = p.real("oscillatory_tolerance", 1e-3, 0.0, 1.0);

  per_matrix(ctx, [&](const NamedMatrix& m) {
    const int k = m.C.k(), l = m.C.l();
    if (k > 3) throw std::invalid_argument("transform-check grids are limited to k <= 3");
    if (!check_star(m.C).holds) throw SingularSubmatrix("transform-check: a row submatrix is singular");
    const auto source_cells =
        static_cast<std::int64_t>(source_param.value_or(k == 1 ? 512 : (k == 2 ? 128 : 96)));
    Rng rng(ctx.cfg.seed, 0x7F0000ULL);
    const auto fs = random_gaussian(rng, static_cast<std::size_t>(k));
    const auto f = sample_gaussian(fs, source_cells, 7.0);
    ctx.samples += f.size() * y_samples;

    double worst_pair = 0.0, worst_leak = 0.0, worst_mass = 0.0, worst_ft = 0.0;
    json pair_ce, ft_ce, per_y = json::array();
    std::ostringstream csv;
    csv << std::setprecision(17) << "y_id,check,zeta,value,reference,rel_err\n";
    for (std::size_t s = 0; s < y_samples; ++s) {
      const auto y = shell_point(rng, static_cast<std::size_t>(k));
      const auto [R, hs] = image_scale_pair(fs, m.C, y, rng);
      const TargetSpec target{cells, R};
      const auto h = GridFunction::sampled(GridFunction::cube(static_cast<std::size_t>(l), R, cells),
                                           [&](std::span<const double> u) { return hs(u); });
      const auto pr = pairing_check(f, h, m.C, y, target, ctx.threads);
      const double exact = gaussian_pairing(fs, hs, ly_eigen(m.C, y));
      const double err = std::max({pr.rel_err, std::abs(pr.lhs / exact - 1.0), std::abs(pr.rhs / exact - 1.0)});
      csv << s << ",pairing,," << pr.lhs << ',' << exact << ',' << err << '\n';
      if (err >= worst_pair) {
        worst_pair = err;
        pair_ce = {{"y", y}, {"h", hs.to_json()}, {"lhs", pr.lhs}, {"rhs", pr.rhs}, {"closed_form", exact}};
      }
      const auto T = transform(f, m.C, y, target, ctx.threads);
      const double mass_err = std::abs(T.grid.integral() / T.source_mass - 1.0);
      worst_leak = std::max(worst_leak, T.leak_fraction());
      worst_mass = std::max(worst_mass, mass_err);
      csv << s << ",mass,," << T.grid.integral() << ',' << T.source_mass << ',' << mass_err << '\n';
      if (s == 0) {
        std::ostringstream g;
        T.grid.write_csv(g);
        ctx.csv("transform_grid_" + m.id + ".csv", {&m}, g.str());
      }

      FourierCheckSpec fsp;
      fsp.source_cells = source_cells;
      fsp.threads = ctx.threads;
      const double nyq = fourier_check(fs, m.C, y, {}, fsp).nyquist;
      std::vector<std::vector<double>> zetas;
      for (std::size_t z = 0; z < n_zeta; ++z) {
        std::vector<double> v(static_cast<std::size_t>(l));
        double nv = 0.0;
        do {
          nv = 0.0;
          for (auto& c : v) {
            c = rng.normal();
            nv += c * c;
          }
        } while (nv == 0.0);
        const double r = 0.5 * nyq * std::pow(rng.uniform(), 1.0 / static_cast<double>(l)) / std::sqrt(nv);
        for (auto& c : v) c *= r;
        zetas.push_back(std::move(v));
      }
      const auto fr = fourier_check(fs, m.C, y, zetas, fsp);
      for (const auto& smp : fr.samples) {
        csv << s << ",fourier," << json(smp.zeta).dump() << ',' << std::abs(smp.discrete) << ','
            << std::abs(smp.exact) << ',' << smp.rel_err << '\n';
        if (smp.rel_err >= worst_ft) {
          worst_ft = smp.rel_err;
          ft_ce = {{"y", y}, {"zeta", smp.zeta}, {"rel_err", smp.rel_err}};
        }
      }
      per_y.push_back({{"y", y},
                       {"pairing_rel_err", err},
                       {"leak_fraction", T.leak_fraction()},
                       {"mass_rel_err", mass_err},
                       {"nyquist", fr.nyquist},
                       {"fourier_max_rel_err", fr.max_rel_err},
                       {"fourier_excluded", fr.excluded.size()}});
    }
    ctx.check(m.id, "pairing", worst_pair <= pair_tol, worst_pair, pair_tol, "against the Gaussian closed form",
              worst_pair <= pair_tol ? json(nullptr) : pair_ce);
    ctx.check(m.id, "leak", worst_leak < leak_tol, worst_leak, leak_tol);
    ctx.check(m.id, "mass_conservation", worst_mass < leak_tol, worst_mass, leak_tol);
    ctx.check(m.id, "fourier_identity", worst_ft <= ft_tol, worst_ft, ft_tol, "|zeta| <= Nyquist/2",
              worst_ft <= ft_tol ? json(nullptr) : ft_ce);

    json osc = json::array();
    if (n_osc > 0) {
      const auto oc = static_cast<std::int64_t>(osc_cells_param.value_or(k == 1 ? 64 : (k == 2 ? 24 : 12)));
      double worst_excess = 0.0, worst_zero = 0.0;
      json osc_ce;
      for (std::size_t i = 0; i < n_osc; ++i) {
        Rng orng(ctx.cfg.seed, 0x05C0000ULL + i);
        auto g = GridFunction::cube(static_cast<std::size_t>(k), 2.0, oc);
        for (auto& v : g.values()) v = orng.uniform();
        const auto y = shell_point(orng, static_cast<std::size_t>(k));
        const double R = default_target_radius(g, m.C, y);
        const auto pts = lattice_points(static_cast<std::size_t>(l), R, osc_lattice);
        for (double s : osc_s) {
          const auto b = oscillatory_sup_bound(g, m.C, y, s, pts, ctx.threads);
          const double excess = b.sup_abs / b.l1_norm_f - 1.0;
          csv << i << ",oscillatory s=" << s << ",," << b.sup_abs << ',' << b.l1_norm_f << ',' << excess << '\n';
          osc.push_back({{"f_id", i}, {"s", s}, {"sup", b.sup_abs}, {"l1", b.l1_norm_f}});
          if (excess > worst_excess || osc_ce.is_null()) {
            worst_excess = excess;
            osc_ce = {{"f_id", i}, {"s", s}, {"y", y}, {"argmax", b.argmax}};
          }
        }
        const auto b0 = oscillatory_sup_bound(g, m.C, y, 0.0, pts, ctx.threads);
        worst_zero = std::max(worst_zero, std::abs(b0.sup_abs / b0.l1_norm_f - 1.0));
      }
      ctx.check(m.id, "oscillatory_bound", worst_excess <= osc_tol, worst_excess, osc_tol,
                "sup |T_is f| / ||f||_1 - 1", worst_excess <= osc_tol ? json(nullptr) : osc_ce);
      ctx.check(m.id, "oscillatory_s0_equality", worst_zero <= 1e-12, worst_zero, 1e-12);
    }
    ctx.csv("transform_check_" + m.id + ".csv", {&m}, csv.str());
    ctx.results[m.id] = {{"f", fs.to_json()}, {"per_y", per_y}, {"oscillatory", osc}};
  });
  ctx.results["params"] = p.used();
}

// ---------------------------------------------------------------------------
// plancherel

inline void run_plancherel(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"ensemble", "n_y", "azimuth", "radial_nodes", "tail", "drift_tolerance",
                            "quadrature_tolerance"});
  const std::size_t ensemble = p.count("ensemble", 20, 1, 10000);
  const McConfig mc = mc_config(p, ctx, 300);
  const double drift_tol = p.real("drift_tolerance", 0.10, 0.0, 10.0);
  const double quad_tol = p.real("quadrature_tolerance", 0.01, 0.0, 1.0);

  per_matrix(ctx, [&](const NamedMatrix& m) {
    const int k = m.C.k(), l = m.C.l();
    const int e = plancherel_weight_exponent(k, l);
    ctx.check(m.id, "weight_exponent_identity", e == 0, e, 0, "(d - 2l) - (k - l) with d = k + l");
    Rng rng(ctx.cfg.seed, 0x9A0000ULL);
    std::ostringstream csv;
    csv << std::setprecision(17) << "f_id,A,stderr,B,ratio,ratio_doubled,drift,rhs_quadrature\n";
    double worst_drift = 0.0, worst_quad = 0.0;
    bool finite = true;
    std::string drift_f;
    json members = json::array();
    for (std::size_t i = 0; i < ensemble; ++i) {
      const auto f = random_gaussian(rng, static_cast<std::size_t>(k));
      const std::string id = "f" + std::to_string(i);
      const auto a = plancherel_chain(m.C, f, mc);
      const auto b = plancherel_chain(m.C, f, mc.doubled());
      ctx.samples += static_cast<std::uint64_t>(mc.n_y * 3);
      const double drift = std::abs(b.ratio / a.ratio - 1.0);
      const double quad = std::abs(a.rhs_quadrature / a.l2_norm_sq - 1.0);
      finite = finite && std::isfinite(a.ratio) && std::isfinite(b.ratio) && a.ratio > 0.0;
      if (drift > worst_drift || drift_f.empty()) {
        worst_drift = drift;
        drift_f = id;
      }
      worst_quad = std::max(worst_quad, quad);
      csv << id << ',' << a.weighted_integral << ',' << a.weighted_stderr << ',' << a.l2_norm_sq << ',' << a.ratio
          << ',' << b.ratio << ',' << drift << ',' << a.rhs_quadrature << '\n';
      json r = a.to_json();
      r["f_id"] = id;
      r["f"] = f.to_json();
      r["ratio_doubled"] = b.ratio;
      r["drift"] = drift;
      members.push_back(r);
    }
    ctx.check(m.id, "ratio_finite", finite, finite, true);
    ctx.check(m.id, "doubling_drift", worst_drift < drift_tol, worst_drift, drift_tol, "worst " + drift_f,
              worst_drift < drift_tol ? json(nullptr) : json{{"f_id", drift_f}});
    ctx.check(m.id, "plancherel_quadrature", worst_quad <= quad_tol, worst_quad, quad_tol,
              "int |f^|^2 by quadrature against ||f||_2^2");
    ctx.csv("plancherel_" + m.id + ".csv", {&m}, csv.str());
    ctx.results[m.id] = {{"weight_exponent", e}, {"members", members}, {"max_drift", worst_drift}};
  });
  ctx.results["params"] = p.used();
}

// ---------------------------------------------------------------------------
// ineq6

inline void run_ineq6(SuiteContext& ctx) {
  Params p(ctx.cfg.params, {"family_size", "samples", "sigma", "max_growth"});
  const std::size_t family = p.count("family_size", 32, 1, 4096);
  Ineq6Config ic;
  ic.samples = p.count("samples", ic.samples, 2);
  ic.threads = ctx.threads;
  const double sigma = p.real("sigma", 1.0, 1e-3, 1e3);
  const double max_growth = p.real("max_growth", 0.25, 0.0, 100.0);

  per_matrix(ctx, [&](const NamedMatrix& m) {
    const auto f = GaussianSpec::standard(static_cast<std::size_t>(m.C.k()), sigma);
    std::ostringstream csv;
    csv << std::setprecision(17) << "set_id,measure,lhs,stderr,rhs,ratio\n";
    double sup_half = 0.0, sup_full = 0.0;
    std::size_t argmax = 0;
    json entries = json::array();
    for (std::size_t i = 0; i < 2 * family; ++i) {
      const auto E = ineq6_family_member(m.C, ctx.cfg.seed, i);
      Ineq6Config c = ic;
      c.seed = derive_seed(ctx.cfg.seed, 0x16A0000ULL + i);
      const auto r = ineq6_check(m.C, f, E, c);
      ctx.samples += ic.samples;
      csv << i << ',' << r.measure << ',' << r.lhs << ',' << r.stderr_ << ',' << r.rhs << ',' << r.ratio << '\n';
      entries.push_back({{"set_id", i}, {"box", E.to_json()}, {"measure", r.measure}, {"lhs", r.lhs},
                         {"stderr", r.stderr_}, {"rhs", r.rhs}, {"ratio", r.ratio}});
      if (r.ratio > sup_full) {
        sup_full = r.ratio;
        argmax = i;
      }
      if (i < family) sup_half = sup_full;
    }
    const double growth = sup_half > 0.0 ? sup_full / sup_half - 1.0 : std::numeric_limits<double>::infinity();
    ctx.check(m.id, "ratio_bounded", std::isfinite(sup_full) && sup_full > 0.0, sup_full, "finite, positive");
    ctx.check(m.id, "family_doubling_growth", growth < max_growth, growth, max_growth,
              "sup over 2N sets / sup over N sets - 1",
              growth < max_growth ? json(nullptr) : json{{"argmax_set", argmax}, {"ratio", sup_full}});
    ctx.csv("ineq6_" + m.id + ".csv", {&m}, csv.str());
    ctx.results[m.id] = {{"f", f.to_json()},        {"sup_half", sup_half}, {"sup_full", sup_full},
                         {"argmax", argmax},        {"growth", growth},     {"entries", entries}};
  });
  ctx.results["params"] = p.used();
}

}  // namespace detail

/// Runs the configured suite. Throws SchemaError for bad parameters before any computation.
inline RunOutput run_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
  const auto start = std::chrono::steady_clock::now();
  detail::SuiteContext ctx(cfg, threads);
  switch (cfg.suite) {
    case Suite::check_star: detail::run_check_star(ctx); break;
    case Suite::typeset: detail::run_typeset(ctx); break;
    case Suite::ball_scan: detail::run_ball_scan(ctx); break;
    case Suite::restricted_scan: detail::run_restricted_scan(ctx); break;
    case Suite::lemma_mc: detail::run_lemma_mc(ctx); break;
    case Suite::transform_check: detail::run_transform_check(ctx); break;
    case Suite::plancherel: detail::run_plancherel(ctx); break;
    case Suite::ineq6: detail::run_ineq6(ctx); break;
  }
  RunOutput out;
  out.verdicts = std::move(ctx.verdicts);
  if (out.verdicts.empty())
    out.verdicts.push_back({ctx.name, "", "nonempty", false, nullptr, nullptr, "suite produced no verdicts", nullptr});
  json verdicts = json::array();
  std::size_t failed = 0;
  for (const auto& v : out.verdicts) {
    verdicts.push_back(v.to_json());
    failed += v.passed ? 0 : 1;
  }
  json files = json::array();
  for (const auto& a : ctx.artifacts) files.push_back(a.name);
  out.report = {{"tool", "surfconv"},
                {"version", kToolVersion},
                {"suite", ctx.name},
                {"seed", cfg.seed},
                {"config_hash", ctx.hash},
                {"config", cfg.canonical()},
                {"results", ctx.results},
                {"samples", ctx.samples},
                {"verdicts", verdicts},
                {"failed", failed},
                {"passed", failed == 0},
                {"files", files}};
  out.artifacts = std::move(ctx.artifacts);
  out.artifacts.push_back({"run_report.json", out.report.dump(2) + "\n"});
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Files

/// Writes every file to a temporary name first and renames once all writes succeeded.
inline void write_files_atomically(const fs::path& dir, const std::vector<Artifact>& files) {
  fs::create_directories(dir);
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& f : files) {
      const fs::path final_path = dir / f.name;
      const fs::path tmp = dir / ("." + f.name + ".tmp");
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      os << f.content;
      os.close();
      if (!os) throw std::runtime_error("cannot write " + tmp.string());
      staged.emplace_back(tmp, final_path);
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
    throw;
  }
  for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
}

// ---------------------------------------------------------------------------
// gen-matrix

/// Integer entries in [-9, 9], redrawn until every l x l row minor is nonzero with min |det| >= threshold.
inline CoefficientMatrix generate_matrix(int k, int l, std::uint64_t seed, const Rational& threshold,
                                         std::size_t max_attempts = 10000) {
  if (k < 1 || l < 1 || l > k || k > 16) throw std::invalid_argument("gen-matrix: need 1 <= l <= k <= 16");
  Rng rng(seed, 0x6E4A7ULL);
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<Rational> e;
    for (int i = 0; i < k * l; ++i) e.emplace_back(static_cast<std::int64_t>(rng.below(19)) - 9);
    CoefficientMatrix C(k, l, std::move(e));
    const auto star = check_star(C);
    if (star.holds && star.min_abs_det >= threshold) return C;
  }
  throw ThresholdTooHigh("gen-matrix: no matrix with min |det| >= " + to_string(threshold) + " in " +
                         std::to_string(max_attempts) + " draws; the threshold is too high");
}

// ---------------------------------------------------------------------------
// report

struct Summary {
  std::size_t runs = 0;
  bool passed = true;
  std::vector<std::string> failing_suites;
  std::vector<Artifact> files;  // summary.txt, verdicts.csv, loglog.csv, ensemble.csv
};

class EmptyRunDirectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<fs::path> find_run_reports(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "run_report.json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::string json_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return fmt(v.get<double>());
  return v.dump();
}

}  // namespace detail

/// Merges every run_report.json below `dir`. The output depends only on those reports.
inline Summary summarize_runs(const fs::path& dir) {
  const auto reports = find_run_reports(dir);
  if (reports.empty()) throw EmptyRunDirectory("no run_report.json under " + dir.string());
  Summary s;
  s.runs = reports.size();
  std::ostringstream txt, verdicts, loglog, ensemble;
  verdicts << "run,suite,matrix_id,check,passed,value,bound,detail\n";
  loglog << std::setprecision(17) << "run,matrix_id,center_id,log_delta,log_norm\n";
  ensemble << std::setprecision(17) << "run,suite,matrix_id,group,member,ratio\n";
  std::set<std::string> failing;
  std::size_t width = 3;
  struct Row {
    std::string run, suite;
    std::size_t checks, failed;
  };
  std::vector<Row> table;
  for (const auto& path : reports) {
    const json r = detail::read_json_file(path, "");
    std::string run = fs::relative(path.parent_path(), dir).generic_string();
    if (run.empty()) run = ".";
    const std::string suite = r.value("suite", std::string("unknown"));
    std::size_t failed = 0, checks = 0;
    for (const auto& v : r.value("verdicts", json::array())) {
      ++checks;
      const bool ok = v.value("passed", false);
      if (!ok) ++failed;
      verdicts << detail::csv_field(run) << ',' << suite << ',' << detail::csv_field(v.value("matrix_id", "")) << ','
               << detail::csv_field(v.value("check", "")) << ',' << (ok ? "pass" : "fail") << ','
               << detail::csv_field(detail::json_cell(v.value("value", json()))) << ','
               << detail::csv_field(detail::json_cell(v.value("bound", json()))) << ','
               << detail::csv_field(v.value("detail", "")) << '\n';
    }
    if (failed > 0 || checks == 0) failing.insert(suite);
    table.push_back({run, suite, checks, failed});
    width = std::max(width, run.size());

    const json& res = r.value("results", json::object());
    if (suite == "ball-scan") {
      std::set<std::tuple<std::string, std::size_t, double>> seen;
      for (const auto& [mid, mr] : res.items()) {
        if (!mr.is_object() || !mr.contains("rows")) continue;
        for (const auto& row : mr["rows"]) {
          const auto key = std::make_tuple(mid, row["center_id"].get<std::size_t>(), row["delta"].get<double>());
          if (!seen.insert(key).second) continue;
          loglog << detail::csv_field(run) << ',' << mid << ',' << std::get<1>(key) << ','
                 << std::log(std::get<2>(key)) << ',' << std::log(row["norm"].get<double>()) << '\n';
        }
      }
    }
    for (const auto& [mid, mr] : res.items()) {
      if (!mr.is_object()) continue;
      if (suite == "lemma-mc" && mr.contains("per_rho"))
        for (const auto& pr : mr["per_rho"])
          for (const auto& mem : pr["members"])
            ensemble << detail::csv_field(run) << ",lemma-mc," << mid << ",rho=" << detail::fmt(pr["rho"].get<double>())
                     << ',' << mem["w_id"].get<std::string>() << ',' << mem["ratio"].get<double>() << '\n';
      if (suite == "plancherel" && mr.contains("members"))
        for (const auto& mem : mr["members"])
          ensemble << detail::csv_field(run) << ",plancherel," << mid << ",A/B," << mem["f_id"].get<std::string>()
                   << ',' << mem["ratio"].get<double>() << '\n';
      if ((suite == "ineq6" || suite == "restricted-scan") && mr.contains("entries"))
        for (const auto& e : mr["entries"])
          ensemble << detail::csv_field(run) << ',' << suite << ',' << mid << ",sets," << e["set_id"].get<std::size_t>()
                   << ',' << e["ratio"].get<double>() << '\n';
    }
  }
  s.passed = failing.empty();
  s.failing_suites.assign(failing.begin(), failing.end());

  txt << "surfconv report\n";
  txt << "runs: " << s.runs << "\n\n";
  txt << std::left << std::setw(static_cast<int>(width)) << "run" << "  " << std::setw(16) << "suite" << "  "
      << std::setw(7) << "checks" << "  " << std::setw(7) << "failed" << "  status\n";
  for (const auto& t : table)
    txt << std::left << std::setw(static_cast<int>(width)) << t.run << "  " << std::setw(16) << t.suite << "  "
        << std::setw(7) << t.checks << "  " << std::setw(7) << t.failed << "  "
        << (t.failed == 0 && t.checks > 0 ? "PASS" : "FAIL") << '\n';
  txt << '\n';
  if (s.passed) {
    txt << "overall: PASS\n";
  } else {
    txt << "overall: FAIL\nfailing suites:";
    for (const auto& f : s.failing_suites) txt << ' ' << f;
    txt << '\n';
  }
  s.files = {{"summary.txt", txt.str()},
             {"verdicts.csv", verdicts.str()},
             {"loglog.csv", loglog.str()},
             {"ensemble.csv", ensemble.str()}};
  return s;
}

}  // namespace surfconv::experiment
