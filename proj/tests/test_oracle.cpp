#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "hetmac/analysis.hpp"
#include "hetmac/estimators.hpp"
#include "hetmac/oracle.hpp"

using namespace hetmac;
using oracle::Count;

namespace {

std::vector<SlotOutcome> oc(const char* s) {
  std::vector<SlotOutcome> out;
  for (; *s; ++s) {
    switch (*s) {
      case 'E': out.push_back(SlotOutcome::EMPTY); break;
      case 'A': out.push_back(SlotOutcome::ALPHA); break;
      case 'B': out.push_back(SlotOutcome::BETA); break;
      case 'C': out.push_back(SlotOutcome::COLLISION); break;
    }
  }
  return out;
}

} // namespace

TEST_CASE("profile enumeration on unambiguous outcomes") {
  const SymbolMatrix m = symbol_matrix(Protocol::METHOD2, 4);
  const auto idle = oracle::enumerate_consistent_profiles(m, oc("EE"));
  REQUIRE(idle.size() == 1);
  CHECK(idle[0] == std::vector<Count>(4, Count::ZERO));

  // (A, E): exactly one class-1 node, nothing else fits.
  const auto ae = oracle::enumerate_consistent_profiles(m, oc("AE"));
  REQUIRE(ae.size() == 1);
  CHECK(ae[0] ==
        std::vector<Count>{Count::ONE, Count::ZERO, Count::ZERO, Count::ZERO});
}

TEST_CASE("double collision admits exactly the known count combinations") {
  const SymbolMatrix m = symbol_matrix(Protocol::METHOD2, 4);
  const auto got = oracle::enumerate_consistent_profiles(m, oc("CC"));

  // The (C, C) family: many of class 2; or many of class 4; or singles of
  // both 2 and 4; or 2 xor 4 single with both 1 and 3 present; or none of
  // 2 and 4 with several each of 1 and 3.
  std::set<std::vector<Count>> want;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d) {
          const bool many2 = b == 2, many4 = d == 2;
          const bool row3 = b == 1 && d == 1;
          const bool row4 = a >= 1 && b == 1 && c >= 1 && d == 0;
          const bool row5 = a >= 1 && b == 0 && c >= 1 && d == 1;
          const bool row6 = a == 2 && b == 0 && c == 2 && d == 0;
          if (many2 || many4 || row3 || row4 || row5 || row6)
            want.insert({static_cast<Count>(a), static_cast<Count>(b),
                         static_cast<Count>(c), static_cast<Count>(d)});
        }
  CHECK(std::set<std::vector<Count>>(got.begin(), got.end()) == want);
}

TEST_CASE("decoder verdicts agree with enumeration for every outcome") {
  for (Protocol proto : {Protocol::METHOD1, Protocol::METHOD2}) {
    for (int T = 2; T <= 6; ++T) {
      const SymbolMatrix m = symbol_matrix(proto, T);
      std::vector<SlotOutcome> out(m.slots);
      long total = 1;
      for (int s = 0; s < m.slots; ++s) total *= 4;
      for (long code = 0; code < total; ++code) {
        long v = code;
        for (int s = 0; s < m.slots; ++s) {
          out[s] = static_cast<SlotOutcome>(v % 4);
          v /= 4;
        }
        const auto profiles = oracle::enumerate_consistent_profiles(m, out);
        if (profiles.empty()) {
          CHECK_THROWS_AS(decode_block(m, out), ProtocolViolation);
          continue;
        }
        const DecodedBlock d = decode_block(m, out);
        for (int b = 0; b < T; ++b) {
          bool any_zero = false, any_pos = false;
          for (const auto& pr : profiles)
            (pr[b] == Count::ZERO ? any_zero : any_pos) = true;
          const Verdict want = any_zero && any_pos ? Verdict::AMBIGUOUS
                               : any_pos           ? Verdict::ACTIVE
                                                   : Verdict::INACTIVE;
          CHECK(d.verdict[b] == want);
        }
      }
    }
  }
}

TEST_CASE("nested success sum closed cases") {
  MacParams p;
  p.n = 1;
  p.n_hat = 1;
  p.W = 3;
  p.d = 1;
  CHECK(oracle::nested_sum_pm(p, 1) == doctest::Approx(1.0).epsilon(1e-12));

  // No successes: every one of the floor(W/2) slot pairs fails.
  p.n = 3;
  p.n_hat = 3;
  p.W = 10;
  p.d = 2;
  const double pc = 1.0 / 3.0;
  const double r = 3 * pc * (1 - pc) * (1 - pc);
  CHECK(oracle::nested_sum_pm(p, 0) ==
        doctest::Approx(std::pow(1 - r, 5)).epsilon(1e-12));
  CHECK_THROWS_AS(oracle::nested_sum_pm(p, -1), InvalidParameter);
}

TEST_CASE("nested sum equals the forward recursion") {
  double worst = 0;
  for (int W : {3, 6, 10})
    for (int d : {1, 2, 3})
      for (int n : {1, 2, 4}) {
        MacParams p;
        p.n = n;
        p.n_hat = n;
        p.W = W;
        p.d = d;
        const std::vector<double> pm = pm_distribution(p);
        for (int m = 0; m < static_cast<int>(pm.size()); ++m)
          worst = std::max(worst,
                           std::abs(pm[m] - oracle::nested_sum_pm(p, m)));
      }
  CHECK(worst <= 1e-12);
}

TEST_CASE("brute-force block counts: hand-checked case") {
  // Two class-1 nodes, two equal-mass slots: both land together with
  // probability 1/4 + 1/4. That block then collides in every pass.
  const oracle::ExactKR ex = oracle::exact_expected_kr_bruteforce({2, 0}, 2);
  CHECK(ex.expected_k == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ex.expected_r == doctest::Approx(0.5).epsilon(1e-15));

  const oracle::ExactKR idle = oracle::exact_expected_kr_bruteforce({0, 0}, 2);
  CHECK(idle.expected_k == 0.0);
  CHECK(idle.expected_r == 0.0);

  CHECK_THROWS_AS(oracle::exact_expected_kr_bruteforce({2}, 2),
                  InvalidParameter);
  CHECK_THROWS_AS(oracle::exact_expected_kr_bruteforce({2, 0}, 9),
                  InvalidParameter);
}

TEST_CASE("brute-force block counts match the closed forms") {
  double worst = 0;
  for (int t = 1; t <= 3; ++t) {
    for (const auto& n : {std::vector<int>{1, 1}, {3, 2}, {2, 2, 2},
                          {0, 3, 1}, {1, 1, 1, 1}}) {
      EstimationParams p;
      p.T = static_cast<int>(n.size());
      p.n.assign(n.begin(), n.end());
      p.t = t;
      p.s_w = 5;
      const oracle::ExactKR ex = oracle::exact_expected_kr_bruteforce(n, t);
      worst = std::max(worst, std::abs(ex.expected_k - expected_K(p)));
      worst = std::max(worst, std::abs(ex.expected_r - expected_R(p)));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("direct window simulation edge cases") {
  MacParams p;
  p.n = 0;
  p.n_hat = 0;
  p.W = 20;
  p.d = 2;
  p.gamma_I = 0.1;
  p.gamma_T = 1.5;
  p.gamma_R = 1.2;
  RandomSource rng(81);
  const oracle::McFrameStats st = oracle::mc_frame_process(p, 500, rng);
  CHECK(st.mean_m == 0.0);
  CHECK(st.mean_dt == 0.0);
  CHECK(st.samples == 500);
  CHECK_THROWS_AS(oracle::mc_frame_process(p, 0, rng), InvalidParameter);
}
