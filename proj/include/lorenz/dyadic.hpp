#pragma once

#include <gmpxx.h>

#include <climits>
#include <cmath>
#include <compare>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lorenz/error.hpp"

namespace lorenz {

// Working precision: results of rounded primitives land on the grid 2^-bits.
struct Precision {
  int bits = 64;

  constexpr Precision() = default;
  constexpr explicit Precision(int b) : bits(b) {
    if (b < 2) throw ConfigError("precision must be at least 2 bits");
  }
  constexpr Precision operator+(int extra) const { return Precision(bits + extra); }
};

// Exact binary rational mantissa * 2^exponent, kept canonical (odd mantissa,
// zero stored as 0 * 2^0).
class Dyadic {
 public:
  Dyadic() = default;
  Dyadic(long v) : mant_(v) { canonicalize(); }  // NOLINT(implicit)
  Dyadic(int v) : mant_(v) { canonicalize(); }   // NOLINT(implicit)
  Dyadic(mpz_class m, long e) : mant_(std::move(m)), exp_(e) { canonicalize(); }

  static Dyadic pow2(long e) { return Dyadic(mpz_class(1), e); }

  const mpz_class& mantissa() const { return mant_; }
  long exponent() const { return exp_; }
  int sign() const { return sgn(mant_); }
  bool is_zero() const { return sgn(mant_) == 0; }
  bool is_integer() const { return exp_ >= 0; }

  friend Dyadic operator+(const Dyadic& a, const Dyadic& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.exp_ == b.exp_) return Dyadic(a.mant_ + b.mant_, a.exp_);
    if (a.exp_ < b.exp_) return Dyadic(a.mant_ + shifted(b.mant_, b.exp_ - a.exp_), a.exp_);
    return Dyadic(shifted(a.mant_, a.exp_ - b.exp_) + b.mant_, b.exp_);
  }
  friend Dyadic operator-(const Dyadic& a) {
    Dyadic r;
    r.mant_ = -a.mant_;
    r.exp_ = a.exp_;
    return r;
  }
  friend Dyadic operator-(const Dyadic& a, const Dyadic& b) { return a + (-b); }
  friend Dyadic operator*(const Dyadic& a, const Dyadic& b) {
    if (a.is_zero() || b.is_zero()) return Dyadic();
    Dyadic r;
    r.mant_ = a.mant_ * b.mant_;  // product of odd numbers stays odd
    r.exp_ = a.exp_ + b.exp_;
    return r;
  }
  Dyadic& operator+=(const Dyadic& o) { return *this = *this + o; }
  Dyadic& operator-=(const Dyadic& o) { return *this = *this - o; }
  Dyadic& operator*=(const Dyadic& o) { return *this = *this * o; }

  // Multiplication by 2^k, exact.
  Dyadic scaled(long k) const {
    if (is_zero()) return *this;
    Dyadic r = *this;
    r.exp_ += k;
    return r;
  }

  friend bool operator==(const Dyadic& a, const Dyadic& b) {
    return a.exp_ == b.exp_ && a.mant_ == b.mant_;
  }
  friend std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b) {
    const int sa = a.sign(), sb = b.sign();
    if (sa != sb) return sa <=> sb;
    if (sa == 0) return std::strong_ordering::equal;
    int c;
    if (a.exp_ == b.exp_) {
      c = cmp(a.mant_, b.mant_);
    } else if (a.exp_ < b.exp_) {
      c = cmp(a.mant_, shifted(b.mant_, b.exp_ - a.exp_));
    } else {
      c = cmp(shifted(a.mant_, a.exp_ - b.exp_), b.mant_);
    }
    return c <=> 0;
  }

  // floor(x * 2^p) as an integer.
  mpz_class floor_scaled(long p) const {
    mpz_class r;
    const long s = exp_ + p;
    if (s >= 0) {
      mpz_mul_2exp(r.get_mpz_t(), mant_.get_mpz_t(), static_cast<unsigned long>(s));
    } else {
      mpz_fdiv_q_2exp(r.get_mpz_t(), mant_.get_mpz_t(), static_cast<unsigned long>(-s));
    }
    return r;
  }
  mpz_class ceil_scaled(long p) const {
    mpz_class r;
    const long s = exp_ + p;
    if (s >= 0) {
      mpz_mul_2exp(r.get_mpz_t(), mant_.get_mpz_t(), static_cast<unsigned long>(s));
    } else {
      mpz_cdiv_q_2exp(r.get_mpz_t(), mant_.get_mpz_t(), static_cast<unsigned long>(-s));
    }
    return r;
  }
  // Round to the grid 2^-p.
  Dyadic round_down(long p) const {
    if (exp_ >= -p) return *this;
    return Dyadic(floor_scaled(p), -p);
  }
  Dyadic round_up(long p) const {
    if (exp_ >= -p) return *this;
    return Dyadic(ceil_scaled(p), -p);
  }

  // Number of bits of |mantissa| plus exponent: 2^(ilog2-1) <= |x| < 2^ilog2.
  long magnitude_bits() const {
    if (is_zero()) return LONG_MIN / 4;
    return static_cast<long>(mpz_sizeinbase(mant_.get_mpz_t(), 2)) + exp_;
  }

  double to_double() const {
    if (is_zero()) return 0.0;
    long e = 0;
    const double d = mpz_get_d_2exp(&e, mant_.get_mpz_t());
    return std::ldexp(d, static_cast<int>(e + exp_));
  }
  mpq_class to_rational() const {
    mpq_class q(mant_);
    if (exp_ >= 0) {
      mpq_mul_2exp(q.get_mpq_t(), q.get_mpq_t(), static_cast<unsigned long>(exp_));
    } else {
      mpq_div_2exp(q.get_mpq_t(), q.get_mpq_t(), static_cast<unsigned long>(-exp_));
    }
    return q;
  }

  // "m*2^e", or the plain integer when the exponent is nonnegative.
  std::string to_string() const {
    if (exp_ >= 0) {
      mpz_class v = mant_;
      mpz_mul_2exp(v.get_mpz_t(), v.get_mpz_t(), static_cast<unsigned long>(exp_));
      return v.get_str();
    }
    return mant_.get_str() + "*2^" + std::to_string(exp_);
  }

  // Exact decimal expansion (always finite for dyadics).
  std::string to_decimal() const {
    if (exp_ >= 0) return to_string();
    const unsigned long k = static_cast<unsigned long>(-exp_);
    mpz_class five;
    mpz_ui_pow_ui(five.get_mpz_t(), 5, k);
    mpz_class digits = abs(mant_) * five;  // value = digits / 10^k
    std::string s = digits.get_str();
    if (s.size() <= k) s.insert(0, k - s.size() + 1, '0');
    s.insert(s.size() - k, ".");
    return (sign() < 0 ? "-" : "") + s;
  }

 private:
  static mpz_class shifted(const mpz_class& m, long k) {
    mpz_class r;
    mpz_mul_2exp(r.get_mpz_t(), m.get_mpz_t(), static_cast<unsigned long>(k));
    return r;
  }
  void canonicalize() {
    if (sgn(mant_) == 0) {
      exp_ = 0;
      return;
    }
    const auto tz = mpz_scan1(mant_.get_mpz_t(), 0);
    if (tz > 0) {
      mpz_fdiv_q_2exp(mant_.get_mpz_t(), mant_.get_mpz_t(), tz);
      exp_ += static_cast<long>(tz);
    }
  }

  mpz_class mant_{0};
  long exp_ = 0;
};

inline const Dyadic& min(const Dyadic& a, const Dyadic& b) { return b < a ? b : a; }
inline const Dyadic& max(const Dyadic& a, const Dyadic& b) { return a < b ? b : a; }
inline Dyadic abs(const Dyadic& a) { return a.sign() < 0 ? -a : a; }

inline std::ostream& operator<<(std::ostream& os, const Dyadic& d) { return os << d.to_string(); }

// Parse a decimal string ("-0.6", "1.95e-3", "27") or an "m*2^e" string into
// an exact rational.
inline mpq_class parse_rational(std::string_view text) {
  std::string s(text);
  auto bad = [&] { return ConfigError("malformed number: '" + s + "'"); };
  if (s.empty()) throw bad();
  if (auto star = s.find("*2^"); star != std::string::npos) {
    mpz_class m;
    if (m.set_str(s.substr(0, star), 10) != 0) throw bad();
    long e = 0;
    try {
      e = std::stol(s.substr(star + 3));
    } catch (...) {
      throw bad();
    }
    return Dyadic(m, e).to_rational();
  }
  bool neg = false;
  std::size_t pos = 0;
  if (s[pos] == '+' || s[pos] == '-') neg = s[pos++] == '-';
  std::string digits;
  long frac_digits = 0;
  bool seen_dot = false, seen_digit = false;
  for (; pos < s.size(); ++pos) {
    const char ch = s[pos];
    if (ch >= '0' && ch <= '9') {
      digits.push_back(ch);
      seen_digit = true;
      if (seen_dot) ++frac_digits;
    } else if (ch == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
  }
  if (!seen_digit) throw bad();
  long exp10 = -frac_digits;
  if (pos < s.size()) {
    if (s[pos] != 'e' && s[pos] != 'E') throw bad();
    try {
      std::size_t used = 0;
      exp10 += std::stol(s.substr(pos + 1), &used);
      if (pos + 1 + used != s.size()) throw bad();
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      throw bad();
    }
  }
  mpq_class q{mpz_class(digits, 10)};
  mpz_class ten;
  mpz_ui_pow_ui(ten.get_mpz_t(), 10, static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
  if (exp10 >= 0) {
    q *= ten;
  } else {
    q /= ten;
  }
  q.canonicalize();
  return neg ? mpq_class(-q) : q;
}

// Exact Dyadic from a rational; throws if the denominator is not a power of 2.
inline Dyadic to_dyadic(const mpq_class& q) {
  const mpz_class& den = q.get_den();
  const auto bits = mpz_scan1(den.get_mpz_t(), 0);
  if (mpz_sizeinbase(den.get_mpz_t(), 2) != bits + 1) {
    throw ConfigError("value " + q.get_str() + " is not a dyadic rational");
  }
  return Dyadic(q.get_num(), -static_cast<long>(bits));
}

inline Dyadic parse_dyadic(std::string_view text) { return to_dyadic(parse_rational(text)); }

inline bool is_dyadic(const mpq_class& q) {
  const mpz_class& den = q.get_den();
  return mpz_sizeinbase(den.get_mpz_t(), 2) == mpz_scan1(den.get_mpz_t(), 0) + 1;
}

// Dyadic nearest below / above a rational on the grid 2^-p.
inline Dyadic rational_down(const mpq_class& q, long p) {
  mpz_class num = q.get_num();
  if (p >= 0) {
    mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<unsigned long>(p));
  }
  mpz_class den = q.get_den();
  if (p < 0) mpz_mul_2exp(den.get_mpz_t(), den.get_mpz_t(), static_cast<unsigned long>(-p));
  mpz_class r;
  mpz_fdiv_q(r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  return Dyadic(r, -p);
}
inline Dyadic rational_up(const mpq_class& q, long p) {
  mpz_class num = q.get_num();
  if (p >= 0) {
    mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<unsigned long>(p));
  }
  mpz_class den = q.get_den();
  if (p < 0) mpz_mul_2exp(den.get_mpz_t(), den.get_mpz_t(), static_cast<unsigned long>(-p));
  mpz_class r;
  mpz_cdiv_q(r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  return Dyadic(r, -p);
}

// a / b rounded on the grid 2^-p; b != 0.
inline Dyadic div_down(const Dyadic& a, const Dyadic& b, long p) {
  if (b.is_zero()) throw PreconditionError("division by zero");
  mpz_class num = a.mantissa(), den = b.mantissa();
  const long s = a.exponent() - b.exponent() + p;
  if (s >= 0) {
    mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<unsigned long>(s));
  } else {
    mpz_mul_2exp(den.get_mpz_t(), den.get_mpz_t(), static_cast<unsigned long>(-s));
  }
  mpz_class r;
  mpz_fdiv_q(r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  return Dyadic(r, -p);
}
inline Dyadic div_up(const Dyadic& a, const Dyadic& b, long p) {
  if (b.is_zero()) throw PreconditionError("division by zero");
  mpz_class num = a.mantissa(), den = b.mantissa();
  const long s = a.exponent() - b.exponent() + p;
  if (s >= 0) {
    mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<unsigned long>(s));
  } else {
    mpz_mul_2exp(den.get_mpz_t(), den.get_mpz_t(), static_cast<unsigned long>(-s));
  }
  mpz_class r;
  mpz_cdiv_q(r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  return Dyadic(r, -p);
}

// Exact dyadic value of a finite double.
inline Dyadic from_double(double d) {
  if (d == 0.0) return Dyadic();
  int e = 0;
  const double m = std::frexp(d, &e);
  const auto mi = static_cast<long long>(std::ldexp(m, 53));
  return Dyadic(mpz_class(static_cast<long>(mi)), static_cast<long>(e) - 53);
}

}  // namespace lorenz
