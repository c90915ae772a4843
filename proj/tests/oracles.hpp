#pragma once

// Reference computations shared by the unit tests and the acceptance run.
// They use discretizations independent of the library solvers.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mfgk/flow.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"

namespace mfgk::oracle {

/// Discrete-time dynamic programming on the grid: over one step of length h
/// the chain jumps x -> y with probability lambda h, and the action is the
/// best over an explicit finite action list.
inline std::vector<double> dp_oracle(const ModelSpec& s, const MeasureFlow& m) {
  const TimeGrid& g = m.grid;
  const std::size_t d = s.d;
  std::vector<std::vector<Action>> actions(d);
  for (std::size_t x = 0; x < d; ++x) {
    if (s.family == Family::ControlledRate) {
      actions[x] = discretize_actions(s, x);
    } else {
      for (std::size_t a = 0; a < s.finite.n_actions; ++a) actions[x].push_back(Action{a, {}});
    }
  }
  std::vector<double> V(g.nodes() * d), next(d), cur(d);
  for (std::size_t x = 0; x < d; ++x) next[x] = s.terminal_cost(x, m.at(g.steps()));
  std::copy(next.begin(), next.end(), V.begin() + static_cast<std::ptrdiff_t>(g.steps() * d));
  const double h = g.dt();
  for (std::size_t k = g.steps(); k-- > 0;) {
    const auto p = m.at(k);
    for (std::size_t x = 0; x < d; ++x) {
      double best = INFINITY;
      for (const auto& a : actions[x]) {
        double stay = 1.0;
        double v = s.running_cost(g.time(k), x, a, p) * h;
        for (std::size_t y = 0; y < d; ++y) {
          if (y == x) continue;
          const double prob = s.rate(g.time(k), x, y, a, p) * h;
          v += prob * next[y];
          stay -= prob;
        }
        v += stay * next[x];
        best = std::min(best, v);
      }
      cur[x] = best;
    }
    next = cur;
    std::copy(cur.begin(), cur.end(), V.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return V;
}

inline MeasureFlow wavy_flow(const ModelSpec& s) {
  const TimeGrid g(s);
  MeasureFlow m{g, s.d, std::vector<double>(g.nodes() * s.d)};
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    double sum = 0.0;
    for (std::size_t x = 0; x < s.d; ++x) {
      const double w = s.m0[x] * (1.0 + 0.3 * std::sin(3.0 * g.time(k) + static_cast<double>(x)) * g.time(k));
      m.at(k)[x] = w;
      sum += w;
    }
    for (auto& v : m.at(k)) v /= sum;
  }
  return m;
}

/// Uncompressed N-player chain on S^N. Within a grid interval every action
/// is frozen, so the cost-to-go solves a linear ODE with constant
/// coefficients and one step is exact through the exponential of the
/// generator augmented with the running-cost column.
class ProductChain {
 public:
  using OwnAction = std::function<const Action&(std::size_t k, std::size_t x1, std::span<const int> others)>;

  ProductChain(const ModelSpec& s, const FeedbackPolicy& gamma, std::size_t N)
      : s_(s), gamma_(gamma), N_(N), size_(1) {
    for (std::size_t i = 0; i < N; ++i) size_ *= s.d;
  }

  double cost(const OwnAction& own) const {
    const std::size_t S = size_;
    const TimeGrid& g = gamma_.grid;
    Eigen::VectorXd J(S + 1);
    for (std::size_t st = 0; st < S; ++st) J[static_cast<Eigen::Index>(st)] = s_.terminal_cost(digit(st, 0), mu(st));
    J[static_cast<Eigen::Index>(S)] = 1.0;
    for (std::size_t k = g.steps(); k-- > 0;) {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S + 1), static_cast<Eigen::Index>(S + 1));
      const double t = g.time(k);
      for (std::size_t st = 0; st < S; ++st) {
        const auto p = mu(st);
        const auto i = static_cast<Eigen::Index>(st);
        const auto others = other_counts(st);
        for (std::size_t pl = 0; pl < N_; ++pl) {
          const std::size_t x = digit(st, pl);
          const Action& a = pl == 0 ? own(k, x, others) : gamma_.at(k, x);
          if (pl == 0) A(i, static_cast<Eigen::Index>(S)) = s_.running_cost(t, x, a, p);
          for (std::size_t y = 0; y < s_.d; ++y) {
            if (y == x) continue;
            const double r = s_.rate(t, x, y, a, p);
            A(i, static_cast<Eigen::Index>(with_digit(st, pl, y))) += r;
            A(i, i) -= r;
          }
        }
      }
      J = (g.dt() * A).exp() * J;
    }
    double acc = 0.0;
    for (std::size_t st = 0; st < S; ++st) {
      double w = 1.0;
      for (std::size_t pl = 0; pl < N_; ++pl) w *= s_.m0[digit(st, pl)];
      acc += w * J[static_cast<Eigen::Index>(st)];
    }
    return acc;
  }

 private:
  std::size_t digit(std::size_t st, std::size_t pl) const {
    for (std::size_t i = 0; i < pl; ++i) st /= s_.d;
    return st % s_.d;
  }
  std::size_t with_digit(std::size_t st, std::size_t pl, std::size_t y) const {
    std::size_t place = 1;
    for (std::size_t i = 0; i < pl; ++i) place *= s_.d;
    return st - digit(st, pl) * place + y * place;
  }
  std::vector<double> mu(std::size_t st) const {
    std::vector<double> p(s_.d, 0.0);
    for (std::size_t pl = 0; pl < N_; ++pl) p[digit(st, pl)] += 1.0 / static_cast<double>(N_);
    return p;
  }
  std::vector<int> other_counts(std::size_t st) const {
    std::vector<int> n(s_.d, 0);
    for (std::size_t pl = 1; pl < N_; ++pl) ++n[digit(st, pl)];
    return n;
  }

  const ModelSpec& s_;
  const FeedbackPolicy& gamma_;
  std::size_t N_;
  std::size_t size_;
};

}  // namespace mfgk::oracle
