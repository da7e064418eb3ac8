#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <span>
#include <string>

namespace moverstayer {

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// log(1 / (1 + exp(-x)))
inline double log_sigmoid(double x) { return -log1pexp(-x); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logsumexp(std::span<const double> args) {
  if (args.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(args.begin(), args.end());
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double a : args) sum += std::exp(a - m);
  return m + std::log(sum);
}

// Three-category softmax with the first category as baseline (logit 0).
struct Softmax3 {
  double p1, p2, p3;
  double log_p1, log_p2, log_p3;

  Softmax3(double eta2, double eta3) {
    const double m = std::max({0.0, eta2, eta3});
    const double e1 = std::exp(-m);
    const double e2 = std::exp(eta2 - m);
    const double e3 = std::exp(eta3 - m);
    const double s = e1 + e2 + e3;
    p1 = e1 / s;
    p2 = e2 / s;
    p3 = e3 / s;
    const double log_norm = m + std::log(s);
    log_p1 = -log_norm;
    log_p2 = eta2 - log_norm;
    log_p3 = eta3 - log_norm;
  }
};

// Neumaier-compensated running sum; result does not depend on anything but
// the order of the terms.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Shortest decimal representation that round-trips.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

inline bool parse_int(std::string_view text, long long& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

}  // namespace moverstayer
