#include "hetmac/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace hetmac {
namespace {

void validate(const EstimationParams& p) {
  if (p.T < 2) throw InvalidParameter("estimation params: T must be >= 2");
  if (p.n.size() != static_cast<std::size_t>(p.T))
    throw InvalidParameter("estimation params: need one n per class");
  for (double n : p.n)
    if (n < 0.0 || !std::isfinite(n))
      throw InvalidParameter("estimation params: n must be finite and >= 0");
  if (p.t < 1) throw InvalidParameter("estimation params: t must be >= 1");
  if (p.s_w < 1) throw InvalidParameter("estimation params: s_w must be >= 1");
}

// P(no node of a class of size n picks a slot of probability p), and
// P(exactly one does). Handles p = 1 without relying on pow(0, x).
double u_of(double n, double p) {
  if (p >= 1.0) return n == 0.0 ? 1.0 : 0.0;
  return std::pow(1.0 - p, n);
}

double v_of(double n, double p) {
  if (n == 0.0) return 0.0;
  if (p >= 1.0) return n == 1.0 ? 1.0 : 0.0;
  return n * p * std::pow(1.0 - p, n - 1.0);
}

// Probability that every slot of block i collides: either two or more nodes
// of the shared class land there, or exactly one does and every other class
// contributes, or none does and every other class contributes at least two.
double all_collision_prob(const EstimationParams& p, int i) {
  const double pi = hash_prob(i, p.t);
  const double u1 = u_of(p.n[0], pi), v1 = v_of(p.n[0], pi);
  double q2 = v1, q3 = u1;
  for (int b = 1; b < p.T; ++b) {
    const double ub = u_of(p.n[b], pi), vb = v_of(p.n[b], pi);
    q2 *= 1.0 - ub;
    q3 *= 1.0 - ub - vb;
  }
  const double q1 = 1.0 - u1 - v1;
  return q1 + q2 + q3;
}

int ceil_log2_real(double x) {
  // exact for the integer arguments the bounds are normally used with
  if (x == std::floor(x) && x >= 1.0 && x < 1e18)
    return ceil_log2(static_cast<std::uint64_t>(x));
  return static_cast<int>(std::ceil(std::log2(x)));
}

struct BoundTerms {
  double lead = 0.0;   // clamped ceil(log2 n_r) - 1
  double shared = 0.0; // shared-class collision tail
  bool empty = false;  // n_r = 0
  double n_r = 0.0;
  int s = 0;
};

BoundTerms bound_terms(const EstimationParams& p) {
  validate(p);
  BoundTerms bt;
  bt.n_r = *std::max_element(p.n.begin(), p.n.end());
  if (bt.n_r == 0.0) {
    bt.empty = true;
    return bt;
  }
  const int l = ceil_log2_real(bt.n_r);
  bt.s = p.t - l;
  if (bt.s < 0)
    throw InvalidParameter("bounds need t >= ceil(log2 max(n_b))");
  bt.lead = std::max(l - 1, 0);
  const double ratio1 = p.n[0] / bt.n_r;
  bt.shared = (2.0 / 3.0) * ratio1 * ratio1 *
              (1.0 + 2.0 * std::exp2(-2.0 * bt.s));
  return bt;
}

} // namespace

double hash_prob(int i, int t) {
  if (t < 1) throw InvalidParameter("hash_prob: t must be >= 1");
  if (i < 0 || i >= t) throw InvalidParameter("hash_prob: i out of range");
  return i == t - 1 ? std::exp2(-(t - 1.0)) : std::exp2(-(i + 1.0));
}

double expected_K(const EstimationParams& p) {
  validate(p);
  double sum = 0.0;
  for (int i = 0; i < p.t; ++i) sum += all_collision_prob(p, i);
  return sum;
}

double expected_R(const EstimationParams& p) {
  validate(p);
  double sum = 0.0;
  for (int i = 0; i < p.t; ++i) {
    const double pi = hash_prob(i, p.t);
    sum += 1.0 - u_of(p.n[0], pi) - v_of(p.n[0], pi);
  }
  return sum;
}

double expected_total_method1(const EstimationParams& p) {
  const double ek = expected_K(p);
  const double er = expected_R(p);
  return (p.T - 1.0) * p.t + std::ceil(double(p.t) / p.s_w) + ek +
         std::ceil(ek / p.s_w) + (p.T - 1.0) * er;
}

double bound_K(const EstimationParams& p) {
  const BoundTerms bt = bound_terms(p);
  if (bt.empty) return 0.0;
  const int T = p.T;
  double ratio_rest = 1.0; // (n_2 ... n_T) / n_r^(T-1)
  for (int b = 1; b < T; ++b) ratio_rest *= p.n[b] / bt.n_r;
  const double term2 =
      ratio_rest * ratio_rest /
      (std::exp2(T - 1.0) * (1.0 - std::exp2(-2.0 * (T - 1)))) *
      (1.0 - 2.0 * std::exp2(-2.0 * (T - 1) * bt.s) *
                 (1.0 - std::exp2(2.0 * (T - 1)) / 2.0));
  const double ratio_all = ratio_rest * (p.n[0] / bt.n_r);
  const double term3 =
      ratio_all / (1.0 - std::exp2(double(-T))) *
      (1.0 - 2.0 * std::exp2(-double(T) * bt.s) * (1.0 - std::exp2(T - 1.0)));
  return bt.lead + bt.shared + term2 + term3;
}

double bound_R(const EstimationParams& p) {
  const BoundTerms bt = bound_terms(p);
  return bt.empty ? 0.0 : bt.lead + bt.shared;
}

// ---------------------------------------------------------------------------
// Per-channel contention model

double contention_prob(double n_hat_minus_j) {
  if (n_hat_minus_j <= 1.0) return 1.0;
  return 1.0 / n_hat_minus_j;
}

double success_prob(int x, double p) {
  if (x < 0) throw InvalidParameter("success_prob: x must be >= 0");
  if (p < 0.0 || p > 1.0)
    throw InvalidParameter("success_prob: p must be in [0, 1]");
  if (x == 0) return 0.0;
  if (p >= 1.0) return x == 1 ? 1.0 : 0.0;
  return x * p * std::pow(1.0 - p, x - 1.0);
}

namespace {

void validate(const MacParams& p) {
  if (p.n < 0) throw InvalidParameter("mac params: n must be >= 0");
  if (p.W < 0) throw InvalidParameter("mac params: W must be >= 0");
  if (p.d < 0) throw InvalidParameter("mac params: d must be >= 0");
  if (!(p.n_hat >= 0.0))
    throw InvalidParameter("mac params: n_hat must be >= 0");
}

int pairs_after(const MacParams& p, int m) { return (p.W - m * p.d) / 2; }

int max_m(const MacParams& p) { return p.W / (2 + p.d); }

// Success probability in a slot where j nodes have already exited.
double r_after(const MacParams& p, int j) {
  const int x = p.n - j;
  if (x <= 0) return 0.0;
  return success_prob(x, contention_prob(p.n_hat - j));
}

// Backward table for a fixed target m: future[i][j] is the probability of
// ending the window with exactly m successes, given j successes after slot
// i. future[0][0] recovers P(M=m).
std::vector<std::vector<double>> future_table(const MacParams& p, int m) {
  const int w = pairs_after(p, m);
  std::vector<std::vector<double>> f(w + 1,
                                     std::vector<double>(m + 2, 0.0));
  f[w][m] = 1.0;
  for (int i = w - 1; i >= 0; --i)
    for (int j = 0; j <= m; ++j) {
      const double r = r_after(p, j);
      f[i][j] = (1.0 - r) * f[i + 1][j] + r * f[i + 1][j + 1];
    }
  return f;
}

} // namespace

std::vector<double> pm_distribution(const MacParams& p) {
  validate(p);
  const int mm = max_m(p);
  std::vector<double> pm(mm + 1, 0.0);
  for (int m = 0; m <= mm; ++m) {
    // forward pass over the W_m slot pairs that fit once m grants are booked
    const int w = pairs_after(p, m);
    std::vector<double> g(m + 1, 0.0);
    g[0] = 1.0;
    for (int i = 0; i < w; ++i)
      for (int j = m; j >= 0; --j) {
        const double stay = g[j] * (1.0 - r_after(p, j));
        const double step = j > 0 ? g[j - 1] * r_after(p, j - 1) : 0.0;
        g[j] = stay + step;
      }
    pm[m] = g[m];
  }
  return pm;
}

double expected_M(const MacParams& p) {
  const std::vector<double> pm = pm_distribution(p);
  double e = 0.0;
  for (std::size_t m = 1; m < pm.size(); ++m) e += double(m) * pm[m];
  return e;
}

EnergyBreakdown expected_energy(const MacParams& p) {
  validate(p);
  EnergyBreakdown out;
  const int mm = max_m(p);
  for (int m = 0; m <= mm; ++m) {
    const int w = pairs_after(p, m);
    const auto f = future_table(p, m);
    const double prob_m = f[0][0];
    if (prob_m <= 0.0) continue;

    // Conditioned state chain: cond[j] = P(j successes so far | M = m)
    // before pair i. Conditioning on M = m is exact when each branch is
    // weighted by the probability that the rest of the window still
    // reaches m from the branch's new state, relative to the current
    // state's own reach probability — the pair of terms below then sums
    // to one by the future-table recurrence, so the weights stay a
    // distribution.
    std::vector<double> cond(m + 2, 0.0);
    cond[0] = 1.0;
    double e_ul = 0.0, e_dl = 0.0;
    for (int i = 1; i <= w; ++i) {
      double exp_n = 0.0, exp_l = 0.0;
      for (int j = 0; j <= std::min(m, i - 1); ++j) {
        const double w_j = cond[j];
        if (w_j <= 0.0) continue;
        const int x = std::max(p.n - j, 0);
        exp_n += w_j * x;
        const double given = f[i - 1][j];
        if (given <= 0.0) continue;
        // E[transmitters at pair i | state j, M = m]: only the lone-
        // transmitter outcome moves the success count, so conditioning on
        // the slot result collapses to two future terms.
        const double pc = contention_prob(p.n_hat - j);
        const double r = r_after(p, j);
        const double num = x * pc * f[i][j] + r * (f[i][j + 1] - f[i][j]);
        exp_l += w_j * num / given;
      }
      e_ul += exp_l * p.gamma_T + (p.n - exp_l) * p.gamma_I;
      e_dl += exp_n * p.gamma_R + (p.n - exp_n) * p.gamma_I;
      // Advance the conditioned state across pair i.
      std::vector<double> next(m + 2, 0.0);
      for (int j = 0; j <= std::min(m, i - 1); ++j) {
        if (cond[j] <= 0.0) continue;
        const double given = f[i - 1][j];
        if (given <= 0.0) continue;
        const double r = r_after(p, j);
        next[j + 1] += cond[j] * r * f[i][j + 1] / given;
        next[j] += cond[j] * (1.0 - r) * f[i][j] / given;
      }
      cond.swap(next);
    }
    out.ul += prob_m * e_ul;
    out.dl += prob_m * e_dl;
  }
  out.dt = p.d * expected_M(p) * (p.gamma_T + (p.n - 1.0) * p.gamma_I);
  return out;
}

} // namespace hetmac
