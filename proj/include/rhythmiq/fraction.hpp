#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace rhythmiq {

/// Exact rational number, always stored reduced with a positive denominator.
/// Score-domain durations and positions use this type so that measure sums
/// can be checked without rounding.
class Fraction {
 public:
  constexpr Fraction() = default;
  constexpr Fraction(std::int64_t n) : num_(n), den_(1) {}  // NOLINT(implicit)
  constexpr Fraction(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
    if (d == 0) throw std::domain_error("Fraction with zero denominator");
    normalize();
  }

  constexpr std::int64_t num() const { return num_; }
  constexpr std::int64_t den() const { return den_; }
  constexpr double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }
  constexpr bool is_zero() const { return num_ == 0; }
  constexpr bool is_integer() const { return den_ == 1; }

  constexpr Fraction operator-() const { return Fraction(-num_, den_); }

  friend constexpr Fraction operator+(Fraction a, Fraction b) {
    const std::int64_t g = std::gcd(a.den_, b.den_);
    return Fraction(a.num_ * (b.den_ / g) + b.num_ * (a.den_ / g),
                    a.den_ / g * b.den_);
  }
  friend constexpr Fraction operator-(Fraction a, Fraction b) { return a + (-b); }
  friend constexpr Fraction operator*(Fraction a, Fraction b) {
    const std::int64_t g1 = std::gcd(a.num_, b.den_);
    const std::int64_t g2 = std::gcd(b.num_, a.den_);
    return Fraction((a.num_ / (g1 ? g1 : 1)) * (b.num_ / (g2 ? g2 : 1)),
                    (a.den_ / (g2 ? g2 : 1)) * (b.den_ / (g1 ? g1 : 1)));
  }
  friend constexpr Fraction operator/(Fraction a, Fraction b) {
    if (b.num_ == 0) throw std::domain_error("Fraction division by zero");
    return a * Fraction(b.den_, b.num_);
  }
  Fraction& operator+=(Fraction o) { return *this = *this + o; }
  Fraction& operator-=(Fraction o) { return *this = *this - o; }
  Fraction& operator*=(Fraction o) { return *this = *this * o; }
  Fraction& operator/=(Fraction o) { return *this = *this / o; }

  friend constexpr bool operator==(const Fraction&, const Fraction&) = default;
  friend constexpr std::strong_ordering operator<=>(Fraction a, Fraction b) {
    // Denominators are positive, so cross-multiplication preserves order.
    return static_cast<__int128>(a.num_) * b.den_ <=>
           static_cast<__int128>(b.num_) * a.den_;
  }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_)
                     : std::to_string(num_) + "/" + std::to_string(den_);
  }
  friend std::ostream& operator<<(std::ostream& os, Fraction f) {
    return os << f.str();
  }

 private:
  constexpr void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline constexpr bool is_power_of_two(std::int64_t v) {
  return v > 0 && (v & (v - 1)) == 0;
}

}  // namespace rhythmiq
