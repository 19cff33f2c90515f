#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hetmac/analysis.hpp"
#include "hetmac/estimators.hpp"
#include "hetmac/oracle.hpp"

using namespace hetmac;

namespace {

EstimationParams params(int T, std::vector<double> n, int t, int s_w = 5) {
  EstimationParams p;
  p.T = T;
  p.n = std::move(n);
  p.t = t;
  p.s_w = s_w;
  return p;
}

} // namespace

TEST_CASE("hash_prob halves per slot and folds the tail") {
  CHECK(hash_prob(0, 7) == 0.5);
  CHECK(hash_prob(1, 7) == 0.25);
  CHECK(hash_prob(5, 7) == doctest::Approx(0.015625).epsilon(1e-15));
  CHECK(hash_prob(6, 7) == doctest::Approx(0.015625).epsilon(1e-15));
  CHECK(hash_prob(0, 1) == 1.0);
  for (int t = 1; t <= 20; ++t) {
    double sum = 0;
    for (int i = 0; i < t; ++i) sum += hash_prob(i, t);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(hash_prob(7, 7), InvalidParameter);
  CHECK_THROWS_AS(hash_prob(-1, 7), InvalidParameter);
  CHECK_THROWS_AS(hash_prob(0, 0), InvalidParameter);
}

TEST_CASE("expected_K and expected_R trivial cases") {
  CHECK(expected_K(params(3, {0, 0, 0}, 7)) == 0.0);
  CHECK(expected_R(params(3, {0, 0, 0}, 7)) == 0.0);
  // A lone node cannot collide anywhere.
  CHECK(expected_K(params(2, {1, 0}, 4)) == 0.0);
  CHECK(expected_R(params(2, {0, 50}, 4)) == 0.0);
  CHECK_THROWS_AS(expected_K(params(1, {1}, 4)), InvalidParameter);
  CHECK_THROWS_AS(expected_K(params(2, {1, -1}, 4)), InvalidParameter);
}

TEST_CASE("expected_K grows with every class size") {
  for (int b = 0; b < 3; ++b) {
    std::vector<double> n = {4, 4, 4};
    const double base = expected_K(params(3, n, 6));
    n[b] = 9;
    CHECK(expected_K(params(3, n, 6)) > base);
  }
  CHECK(expected_R(params(3, {4, 4, 4}, 6)) <=
        expected_K(params(3, {4, 4, 4}, 6)));
}

TEST_CASE("expected totals reduce to the fixed overhead when idle") {
  CHECK(expected_total_method1(params(3, {0, 0, 0}, 7, 5)) == 16.0);
  CHECK(expected_total_method1(params(4, {0, 0, 0, 0}, 7, 5)) == 23.0);
}

TEST_CASE("expected totals match simulated runs") {
  // The closed form rounds E[K]/s_w up once, the protocol rounds per run;
  // that Jensen gap is below one slot.
  const EstimationParams p = params(3, {3, 3, 3}, 5, 5);
  const double formula = expected_total_method1(p);
  RandomSource rng(61);
  const long reps = 3000;
  double sum = 0, sum2 = 0;
  for (long r = 0; r < reps; ++r) {
    HashRealization hashes(3);
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k)
        hashes[b].push_back(rng.geometric_halving());
    const double tot = run_method1_on(hashes, 5, 5).slots_total;
    sum += tot;
    sum2 += tot * tot;
  }
  const double mean = sum / reps;
  const double se =
      std::sqrt(std::max(0.0, (sum2 - sum * sum / reps) / (reps - 1)) / reps);
  CHECK(std::abs(mean - formula) <= 1.0 + 3 * se);
}

TEST_CASE("bounds dominate the exact expectations") {
  double worst_ratio_k = 0;
  for (int T = 2; T <= 6; ++T)
    for (double nb : {1.0, 10.0, 100.0})
      for (int s = 0; s <= 4; ++s) {
        const int t = ceil_log2(static_cast<std::uint64_t>(nb)) + s;
        const EstimationParams p =
            params(T, std::vector<double>(T, nb), std::max(1, t));
        const double ek = expected_K(p), bk = bound_K(p);
        const double er = expected_R(p), br = bound_R(p);
        CHECK(bk >= ek - 1e-12);
        CHECK(br >= er - 1e-12);
        CHECK(br <= bk + 1e-12);
        if (bk > 0) worst_ratio_k = std::max(worst_ratio_k, ek / bk);
      }
  CHECK(worst_ratio_k <= 1.0);

  CHECK(bound_K(params(3, {0, 0, 0}, 4)) == 0.0);
  CHECK(bound_R(params(3, {0, 0, 0}, 4)) == 0.0);
  // The slack s = t - ceil(log2 n_r) must not be negative.
  CHECK_THROWS_AS(bound_K(params(2, {100, 1}, 3)), InvalidParameter);
}

TEST_CASE("contention_prob caps at one") {
  CHECK(contention_prob(1.0) == 1.0);
  CHECK(contention_prob(2.0) == 0.5);
  CHECK(contention_prob(8.0) == 0.125);
  CHECK(contention_prob(0.5) == 1.0);
  CHECK(contention_prob(-3.0) == 1.0);
}

TEST_CASE("success_prob peaks at p = 1/x") {
  CHECK(success_prob(1, 1.0) == 1.0);
  CHECK(success_prob(2, 0.5) == 0.5);
  CHECK(success_prob(0, 0.7) == 0.0);
  const double at_opt = success_prob(4, 0.25);
  for (double p = 0.05; p < 1.0; p += 0.05)
    CHECK(success_prob(4, p) <= at_opt + 1e-12);
}

TEST_CASE("pm_distribution boundary shapes") {
  MacParams p;
  p.n = 1;
  p.n_hat = 1;
  p.W = 3;
  p.d = 1;
  std::vector<double> pm = pm_distribution(p);
  REQUIRE(pm.size() == 2); // m_max = floor(3/3)
  CHECK(pm[0] == doctest::Approx(0.0));
  CHECK(pm[1] == doctest::Approx(1.0));

  p.W = 0;
  pm = pm_distribution(p);
  REQUIRE(pm.size() == 1);
  CHECK(pm[0] == 1.0);

  p.n = 4;
  p.n_hat = 4;
  p.W = 20;
  p.d = 3;
  pm = pm_distribution(p);
  double mass = 0;
  for (double v : pm) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mass += v;
  }
  CHECK(mass <= 1.0 + 1e-12);
}

TEST_CASE("expected_M vanishes without contenders") {
  MacParams p;
  p.n = 0;
  p.n_hat = 0;
  p.W = 20;
  p.d = 2;
  CHECK(expected_M(p) == 0.0);
}

TEST_CASE("expected_energy structure") {
  MacParams p;
  p.n = 3;
  p.n_hat = 3;
  p.W = 12;
  p.d = 2;
  SUBCASE("zero rates give zero energy") {
    const EnergyBreakdown eb = expected_energy(p);
    CHECK(eb.ul == 0.0);
    CHECK(eb.dl == 0.0);
    CHECK(eb.dt == 0.0);
  }
  SUBCASE("data energy is rate times expected reserved slots") {
    p.gamma_I = 0.1;
    p.gamma_T = 1.5;
    p.gamma_R = 1.2;
    const EnergyBreakdown eb = expected_energy(p);
    const double want =
        p.d * expected_M(p) * (p.gamma_T + (p.n - 1) * p.gamma_I);
    CHECK(eb.dt == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("contention model agrees with direct simulation") {
  MacParams p;
  p.n = 3;
  p.n_hat = 3;
  p.W = 12;
  p.d = 2;
  p.gamma_I = 0.1;
  p.gamma_T = 1.5;
  p.gamma_R = 1.2;
  RandomSource rng(71);
  const oracle::McFrameStats st = oracle::mc_frame_process(p, 20000, rng);
  const double em = expected_M(p);
  const EnergyBreakdown eb = expected_energy(p);
  CHECK(std::abs(em - st.mean_m) <= 3 * st.se_m);
  CHECK(std::abs(eb.ul - st.mean_ul) <= 3 * st.se_ul);
  CHECK(std::abs(eb.dl - st.mean_dl) <= 3 * st.se_dl);
  CHECK(std::abs(eb.dt - st.mean_dt) <= 3 * st.se_dt);
  // The fraction of retrospectively inconsistent samples should match the
  // mass the success-count distribution leaves unassigned.
  double mass = 0;
  for (double v : pm_distribution(p)) mass += v;
  CHECK(st.deficit >= 0.0);
  CHECK(std::abs(st.deficit - (1 - mass)) <=
        3 * std::sqrt(mass * (1 - mass) / 20000));
}
