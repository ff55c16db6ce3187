#pragma once

// Exact rational arithmetic used for exponents, coefficient matrices and
// determinants. Floating values are produced only at reporting boundaries.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace surfconv {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Rational make_rational(std::int64_t num, std::int64_t den = 1) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  return Rational(BigInt(num), BigInt(den));
}

inline BigInt numerator(const Rational& r) { return boost::multiprecision::numerator(r); }
inline BigInt denominator(const Rational& r) { return boost::multiprecision::denominator(r); }

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

inline std::string to_string(const Rational& r) {
  const BigInt den = denominator(r);
  if (den == 1) return numerator(r).str();
  return numerator(r).str() + "/" + den.str();
}

/// [num, den] pair. Integers that do not fit in 64 bits are emitted as strings.
inline nlohmann::json rational_to_json(const Rational& r) {
  auto part = [](const BigInt& v) -> nlohmann::json {
    if (v >= BigInt(std::numeric_limits<std::int64_t>::min()) &&
        v <= BigInt(std::numeric_limits<std::int64_t>::max()))
      return v.convert_to<std::int64_t>();
    return v.str();
  };
  return nlohmann::json::array({part(numerator(r)), part(denominator(r))});
}

inline Rational rational_from_json(const nlohmann::json& j) {
  auto part = [](const nlohmann::json& v) -> BigInt {
    if (v.is_number_integer()) return BigInt(v.get<std::int64_t>());
    if (v.is_string()) return BigInt(v.get<std::string>());
    throw std::invalid_argument("rational component must be an integer");
  };
  if (j.is_number_integer()) return Rational(part(j));
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("rational must be encoded as [num, den]");
  const BigInt den = part(j[1]);
  if (den == 0) throw std::invalid_argument("rational with zero denominator");
  return Rational(part(j[0]), den);
}

}  // namespace surfconv
