#pragma once

// Helpers shared by the unit and acceptance tests: random inputs and
// oracles written independently of the library's own formulas.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "moverstayer/moverstayer.hpp"

namespace mstest {

using moverstayer::ModelParams;
using moverstayer::RowMatrix;
using moverstayer::Subject;
using moverstayer::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

inline ModelParams setting1_params() {
  return moverstayer::builtin_setting(moverstayer::Setting::s1).true_params;
}

inline ModelParams random_params(std::mt19937_64& rng, Eigen::Index d,
                                 Eigen::Index q, double scale = 1.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto draw = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
  };
  return {draw(d + 1), draw(d + 1), draw(d + 1), draw(q), draw(q)};
}

inline Subject random_subject(std::mt19937_64& rng, Eigen::Index d,
                              Eigen::Index q, int max_y) {
  std::uniform_int_distribution<int> yd(0, max_y);
  std::normal_distribution<double> n01;
  Subject s;
  s.id = "s";
  s.y = yd(rng);
  s.delta = static_cast<int>(rng() % 2);
  s.x.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) s.x[j] = n01(rng);
  s.z.resize(s.y + 1, q);
  for (Eigen::Index t = 0; t <= s.y; ++t)
    for (Eigen::Index j = 0; j < q; ++j) s.z(t, j) = n01(rng);
  return s;
}

// Plain-probability transition matrix out of state 1 at time t.
inline std::array<double, 3> naive_transition(const ModelParams& p,
                                              const Vector& x,
                                              const Vector& zt) {
  double e12 = p.beta12[0], e13 = p.beta13[0];
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    e12 += p.beta12[j + 1] * x[j];
    e13 += p.beta13[j + 1] * x[j];
  }
  for (Eigen::Index j = 0; j < zt.size(); ++j) {
    e12 += p.gamma12[j] * zt[j];
    e13 += p.gamma13[j] * zt[j];
  }
  const double a = std::exp(e12), b = std::exp(e13);
  return {1.0 / (1.0 + a + b), a / (1.0 + a + b), b / (1.0 + a + b)};
}

inline double naive_pi(const Vector& alpha, const Vector& x) {
  double eta = alpha[0];
  for (Eigen::Index j = 0; j < x.size(); ++j) eta += alpha[j + 1] * x[j];
  return 1.0 / (1.0 + std::exp(-eta));
}

// Forward pass of the three-state chain: likelihood of the observation
// (moved during (y, y+1], or not moved by y+1).
inline double forward_likelihood(const ModelParams& p, const Subject& s) {
  const double pi = naive_pi(p.alpha, s.x);
  std::array<double, 3> state{pi, 1.0 - pi, 0.0};
  for (int t = 0; t <= s.y; ++t) {
    const auto tr = naive_transition(p, s.x, s.z.row(t).transpose());
    if (s.delta == 1 && t == s.y) return state[0] * tr[2];
    std::array<double, 3> next{state[0] * tr[0], state[1] + state[0] * tr[1],
                               state[2] + state[0] * tr[2]};
    state = next;
  }
  return state[0] + state[1];
}

// P(S_t = k) by listing every state sequence S_0..S_t.
inline std::array<double, 3> brute_force_occupancy(const ModelParams& p,
                                                   const Vector& x,
                                                   const RowMatrix& z, int t) {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  const double pi = naive_pi(p.alpha, x);
  int paths = 1;
  for (int i = 0; i <= t; ++i) paths *= 3;
  for (int code = 0; code < paths; ++code) {
    int c = code;
    std::vector<int> states(static_cast<std::size_t>(t) + 1);
    for (int i = 0; i <= t; ++i) {
      states[static_cast<std::size_t>(i)] = 1 + c % 3;
      c /= 3;
    }
    double prob = states[0] == 1 ? pi : states[0] == 2 ? 1.0 - pi : 0.0;
    for (int i = 0; i < t && prob > 0.0; ++i) {
      const int from = states[static_cast<std::size_t>(i)];
      const int to = states[static_cast<std::size_t>(i) + 1];
      if (from == 1) {
        const auto tr = naive_transition(p, x, z.row(i).transpose());
        prob *= tr[static_cast<std::size_t>(to - 1)];
      } else {
        prob *= from == to ? 1.0 : 0.0;
      }
    }
    out[static_cast<std::size_t>(states.back() - 1)] += prob;
  }
  return out;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace mstest
