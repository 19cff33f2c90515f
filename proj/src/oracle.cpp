#include "hetmac/oracle.hpp"

#include <cmath>
#include <functional>

namespace hetmac {
namespace oracle {

std::vector<std::vector<Count>> enumerate_consistent_profiles(
    const SymbolMatrix& m, const std::vector<SlotOutcome>& outcome) {
  if (m.T < 1 || m.T > 10)
    throw InvalidParameter("enumerate_consistent_profiles: T out of range");
  if (outcome.size() != static_cast<std::size_t>(m.slots))
    throw InvalidParameter("enumerate_consistent_profiles: bad outcome size");

  std::vector<std::vector<Count>> consistent;
  std::vector<Count> prof(m.T, Count::ZERO);
  long combos = 1;
  for (int b = 0; b < m.T; ++b) combos *= 3;
  for (long c = 0; c < combos; ++c) {
    long v = c;
    for (int b = 0; b < m.T; ++b) {
      prof[b] = static_cast<Count>(v % 3);
      v /= 3;
    }
    bool ok = true;
    for (int s = 0; s < m.slots && ok; ++s) {
      // Materialize the slot's transmissions node by node.
      std::vector<Symbol> tx;
      for (int b = 0; b < m.T; ++b) {
        const Symbol sym = m.rows[b][s];
        if (sym == Symbol::NONE) continue;
        const int copies = static_cast<int>(prof[b]);
        for (int k = 0; k < copies; ++k) tx.push_back(sym);
      }
      if (outcome_of_slot(tx) != outcome[s]) ok = false;
    }
    if (ok) consistent.push_back(prof);
  }
  return consistent;
}

double nested_sum_pm(const MacParams& p, int m) {
  if (p.n < 0 || p.W < 0 || p.d < 0 || m < 0)
    throw InvalidParameter("nested_sum_pm: bad parameters");
  if (m > p.W / (2 + p.d)) return 0.0;
  const int w_m = (p.W - m * p.d) / 2;

  // r_x with x = n - j contenders and the advertised probability after j
  // successes, computed from first principles.
  auto r = [&](int j) {
    const int x = p.n - j;
    if (x <= 0) return 0.0;
    double pc = p.n_hat - j <= 1.0 ? 1.0 : 1.0 / (p.n_hat - j);
    return x * pc * std::pow(1.0 - pc, x - 1.0);
  };

  // Recurse over the ordered success positions k_1 < k_2 < ... < k_m.
  // level j means j successes placed, the last at slot `prev`.
  std::function<double(int, int)> rec = [&](int j, int prev) -> double {
    if (j == m) return std::pow(1.0 - r(m), w_m - prev);
    double sum = 0.0;
    for (int k = prev + 1; k <= w_m - m + j + 1; ++k)
      sum += std::pow(1.0 - r(j), k - prev - 1) * r(j) * rec(j + 1, k);
    return sum;
  };
  return rec(0, 0);
}

ExactKR exact_expected_kr_bruteforce(const std::vector<int>& n, int t) {
  const int T = static_cast<int>(n.size());
  if (T < 2) throw InvalidParameter("brute force: need T >= 2");
  if (t < 1 || t > 4) throw InvalidParameter("brute force: t in [1, 4]");
  int total = 0;
  for (int nb : n) {
    if (nb < 0) throw InvalidParameter("brute force: n must be >= 0");
    total += nb;
  }
  double work = std::pow(double(t), total);
  if (work > 2e6) throw InvalidParameter("brute force: too many assignments");

  // Slot masses are powers of two, so each assignment's probability and all
  // partial sums below are exact in double precision.
  std::vector<double> mass(t);
  for (int i = 0; i < t; ++i)
    mass[i] = i == t - 1 ? std::exp2(-(t - 1.0)) : std::exp2(-(i + 1.0));

  ExactKR out;
  std::vector<int> slot(total, 0); // hash of each node, odometer-style
  while (true) {
    // per-class-per-block occupancy for this assignment
    std::vector<std::vector<int>> occ(T, std::vector<int>(t, 0));
    double prob = 1.0;
    int idx = 0;
    for (int b = 0; b < T; ++b)
      for (int k = 0; k < n[b]; ++k, ++idx) {
        occ[b][slot[idx]] += 1;
        prob *= mass[slot[idx]];
      }
    int k_count = 0, r_count = 0;
    for (int i = 0; i < t; ++i) {
      // all T-1 slots of a block collide iff the shared class has 2+, or 1
      // and every other class present, or 0 and every other class has 2+
      bool all_collide = true;
      for (int b = 1; b < T && all_collide; ++b)
        if (occ[0][i] + occ[b][i] < 2) all_collide = false;
      if (occ[0][i] == 1) {
        for (int b = 1; b < T && all_collide; ++b)
          if (occ[b][i] < 1) all_collide = false;
      } else if (occ[0][i] == 0) {
        for (int b = 1; b < T && all_collide; ++b)
          if (occ[b][i] < 2) all_collide = false;
      }
      if (all_collide) {
        ++k_count;
        if (occ[0][i] >= 2) ++r_count; // second-pass probe collides again
      }
    }
    out.expected_k += prob * k_count;
    out.expected_r += prob * r_count;

    int pos = total - 1;
    while (pos >= 0 && slot[pos] == t - 1) slot[pos--] = 0;
    if (pos < 0) break;
    ++slot[pos];
  }
  return out;
}

McFrameStats mc_frame_process(const MacParams& p, long samples,
                              RandomSource& rng) {
  if (samples < 1) throw InvalidParameter("mc_frame_process: samples >= 1");
  McFrameStats st;
  st.samples = samples;
  const int w0 = p.W / 2;
  const int mm = p.W / (2 + p.d);

  double sum_m = 0, sq_m = 0, sum_ul = 0, sq_ul = 0;
  double sum_dl = 0, sq_dl = 0, sum_dt = 0, sq_dt = 0;
  long bad = 0;

  std::vector<int> l_i(w0), n_i(w0), succ_prefix(w0 + 1);
  for (long s = 0; s < samples; ++s) {
    RandomSource r = rng.stream(0x0f7a, static_cast<std::uint64_t>(s));
    int j = 0;
    succ_prefix[0] = 0;
    for (int i = 0; i < w0; ++i) {
      const int x = p.n - j;
      const double pc = p.n_hat - j <= 1.0 ? 1.0 : 1.0 / (p.n_hat - j);
      int l = 0;
      for (int k = 0; k < x; ++k)
        if (r.bernoulli(pc)) ++l;
      l_i[i] = l;
      n_i[i] = x;
      if (l == 1) ++j;
      succ_prefix[i + 1] = j;
    }
    // the success count consistent with the window it leaves behind
    int m_found = -1;
    for (int m = 0; m <= mm; ++m) {
      const int w_m = (p.W - m * p.d) / 2;
      if (succ_prefix[w_m] == m) { m_found = m; break; }
    }
    double v_m = 0, v_ul = 0, v_dl = 0, v_dt = 0;
    if (m_found < 0) {
      ++bad;
    } else {
      const int w_m = (p.W - m_found * p.d) / 2;
      v_m = m_found;
      for (int i = 0; i < w_m; ++i) {
        v_ul += l_i[i] * p.gamma_T + (p.n - l_i[i]) * p.gamma_I;
        v_dl += n_i[i] * p.gamma_R + (p.n - n_i[i]) * p.gamma_I;
      }
      v_dt = p.d * double(m_found) * (p.gamma_T + (p.n - 1.0) * p.gamma_I);
    }
    sum_m += v_m;   sq_m += v_m * v_m;
    sum_ul += v_ul; sq_ul += v_ul * v_ul;
    sum_dl += v_dl; sq_dl += v_dl * v_dl;
    sum_dt += v_dt; sq_dt += v_dt * v_dt;
  }

  auto finish = [samples](double sum, double sq, double& mean, double& se) {
    mean = sum / double(samples);
    const double var =
        samples > 1 ? (sq - double(samples) * mean * mean) / double(samples - 1)
                    : 0.0;
    se = std::sqrt(std::max(var, 0.0) / double(samples));
  };
  finish(sum_m, sq_m, st.mean_m, st.se_m);
  finish(sum_ul, sq_ul, st.mean_ul, st.se_ul);
  finish(sum_dl, sq_dl, st.mean_dl, st.se_dl);
  finish(sum_dt, sq_dt, st.mean_dt, st.se_dt);
  st.deficit = double(bad) / double(samples);
  return st;
}

} // namespace oracle
} // namespace hetmac
