#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace ablrank {

using BigInt = boost::multiprecision::cpp_int;

// Always reduced, denominator positive.
using Rational = boost::multiprecision::cpp_rational;

inline Rational make_rational(long long num, long long den) {
    return Rational(BigInt(num), BigInt(den));
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline std::string to_string(const Rational& r) {
    auto num = boost::multiprecision::numerator(r);
    auto den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

} // namespace ablrank
