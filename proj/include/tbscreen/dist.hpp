#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

// Exact finite discrete distributions over counts 0..n.
//
// Everything here is closed-form arithmetic on pmf vectors; no sampling.
// Constructors keep total mass within 1e-12 of one without renormalizing,
// so downstream identities (marginals, convolutions) hold to near machine
// precision.

namespace tbs {

// Probability mass over {0, 1, ..., mass.size()-1}.
struct ProbVec {
  std::vector<double> mass;
};

inline double mean(const ProbVec& d) {
  double m = 0.0;
  for (std::size_t k = 0; k < d.mass.size(); ++k) m += k * d.mass[k];
  return m;
}

// Binomial(n, p).  Forward recurrence from pmf(0) for p <= 1/2, backward from
// pmf(n) otherwise, so the starting term never underflows before the bulk.
inline ProbVec binomial(int n, double p) {
  if (n < 0) throw std::invalid_argument("binomial: negative count");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("binomial: p outside [0,1]");
  ProbVec d;
  d.mass.assign(n + 1, 0.0);
  if (n == 0 || p == 0.0) {
    d.mass[0] = 1.0;
    return d;
  }
  if (p == 1.0) {
    d.mass[n] = 1.0;
    return d;
  }
  if (p <= 0.5) {
    const double ratio = p / (1.0 - p);
    double term = std::pow(1.0 - p, n);
    d.mass[0] = term;
    for (int k = 0; k < n; ++k) {
      term *= ratio * (n - k) / (k + 1);
      d.mass[k + 1] = term;
    }
  } else {
    const double ratio = (1.0 - p) / p;
    double term = std::pow(p, n);
    d.mass[n] = term;
    for (int k = n; k > 0; --k) {
      term *= ratio * k / (n - k + 1);
      d.mass[k - 1] = term;
    }
  }
  return d;
}

// Poisson(rate) with all mass above max collapsed onto max (not renormalized:
// the clamp preserves total mass by construction).
inline ProbVec truncated_poisson(double rate, int max) {
  if (rate < 0.0) throw std::invalid_argument("truncated_poisson: negative rate");
  if (max < 0) throw std::invalid_argument("truncated_poisson: negative max");
  ProbVec d;
  d.mass.assign(max + 1, 0.0);
  if (rate == 0.0) {
    d.mass[0] = 1.0;
    return d;
  }
  double term = std::exp(-rate);
  double below = 0.0;
  for (int k = 0; k < max; ++k) {
    d.mass[k] = term;
    below += term;
    term *= rate / (k + 1);
  }
  d.mass[max] = 1.0 - below;
  return d;
}

// Joint law of category counts (a, b) from n independent trials with
// per-trial probabilities pa and pb (remainder is the third category).
// Stored dense with stride n+1; cells with a+b > n are structurally zero.
struct JointCounts {
  int n = 0;
  std::vector<double> cells;  // cells[a * (n+1) + b]

  double p(int a, int b) const {
    if (a < 0 || b < 0 || a + b > n) return 0.0;
    return cells[static_cast<std::size_t>(a) * (n + 1) + b];
  }
  double& at(int a, int b) {
    return cells[static_cast<std::size_t>(a) * (n + 1) + b];
  }
};

// Trinomial split via composition: A ~ Bin(n, pa), then B | A ~ Bin(n-A, pb').
inline JointCounts split3(int n, double pa, double pb) {
  if (n < 0) throw std::invalid_argument("split3: negative count");
  if (pa < 0.0 || pb < 0.0 || pa + pb > 1.0 + 1e-12)
    throw std::invalid_argument("split3: probabilities outside the simplex");
  JointCounts j;
  j.n = n;
  j.cells.assign(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
  if (pa >= 1.0) {
    j.at(n, 0) = 1.0;
    return j;
  }
  const double pb_given = std::min(1.0, pb / (1.0 - pa));
  const ProbVec da = binomial(n, pa);
  for (int a = 0; a <= n; ++a) {
    if (da.mass[a] == 0.0) continue;
    const ProbVec db = binomial(n - a, pb_given);
    for (int b = 0; b <= n - a; ++b) j.at(a, b) = da.mass[a] * db.mass[b];
  }
  return j;
}

inline ProbVec marginal_a(const JointCounts& j) {
  ProbVec d;
  d.mass.assign(j.n + 1, 0.0);
  for (int a = 0; a <= j.n; ++a)
    for (int b = 0; a + b <= j.n; ++b) d.mass[a] += j.p(a, b);
  return d;
}

inline ProbVec marginal_b(const JointCounts& j) {
  ProbVec d;
  d.mass.assign(j.n + 1, 0.0);
  for (int a = 0; a <= j.n; ++a)
    for (int b = 0; a + b <= j.n; ++b) d.mass[b] += j.p(a, b);
  return d;
}

// Law of the sum of two independent counts.
inline ProbVec convolve(const ProbVec& x, const ProbVec& y) {
  ProbVec d;
  if (x.mass.empty() || y.mass.empty()) return d;
  d.mass.assign(x.mass.size() + y.mass.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.mass.size(); ++i) {
    if (x.mass[i] == 0.0) continue;
    for (std::size_t j = 0; j < y.mass.size(); ++j)
      d.mass[i + j] += x.mass[i] * y.mass[j];
  }
  return d;
}

// Zeroes entries below floor and renormalizes the survivors.
inline ProbVec pruned(const ProbVec& d, double floor = 1e-15) {
  ProbVec out = d;
  double kept = 0.0;
  bool dropped = false;
  for (double& m : out.mass) {
    if (m < floor) {
      if (m != 0.0) dropped = true;
      m = 0.0;
    } else {
      kept += m;
    }
  }
  if (dropped && kept > 0.0)
    for (double& m : out.mass) m /= kept;
  return out;
}

}  // namespace tbs
