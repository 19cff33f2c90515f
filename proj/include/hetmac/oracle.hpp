#pragma once
// Independent reference implementations used only by tests. Everything here
// recomputes results through a different mechanism than the production code
// (direct enumeration, literal summation, exact arithmetic, or brute-force
// simulation of the physical process), sharing nothing with it beyond the
// public data types.

#include <vector>

#include "hetmac/analysis.hpp"
#include "hetmac/core.hpp"
#include "hetmac/estimators.hpp"

namespace hetmac {
namespace oracle {

// Multiplicity bucket per class: 0 nodes, exactly 1, or 2+.
enum class Count : int { ZERO = 0, ONE = 1, TWO_PLUS = 2 };

// Every class-count combination that produces `outcome` under the matrix.
// Works by materializing actual transmission lists per slot and reading the
// channel result off them, not by reasoning about the matrix.
std::vector<std::vector<Count>> enumerate_consistent_profiles(
    const SymbolMatrix& m, const std::vector<SlotOutcome>& outcome);

// Literal evaluation of the success-count distribution as an m-fold nested
// sum over the slot indices of the successful contentions. Exponential in
// m; intended for m <= 4, W <= 12.
double nested_sum_pm(const MacParams& p, int m);

// Exact expected second-pass and third-pass block counts by enumerating
// every possible hash assignment of every node, with probabilities kept as
// exact dyadic rationals (doubles are error-free here because every mass is
// a sum of powers of two well within the mantissa).
struct ExactKR {
  double expected_k = 0.0;
  double expected_r = 0.0;
};
ExactKR exact_expected_kr_bruteforce(const std::vector<int>& n, int t);

// Monte Carlo run of the single-channel contention window under the same
// accounting conventions as the closed forms: slot pairs from the left,
// each success booking d slots on the right, a sample's success count m
// being the one consistent with the window it leaves. Samples where no m is
// consistent (possible because the accounting is retrospective) contribute
// zero and are reported as `deficit`.
struct McFrameStats {
  double mean_m = 0.0, se_m = 0.0;
  double mean_ul = 0.0, se_ul = 0.0;
  double mean_dl = 0.0, se_dl = 0.0;
  double mean_dt = 0.0, se_dt = 0.0;
  double deficit = 0.0; // fraction of inconsistent samples
  long samples = 0;
};
McFrameStats mc_frame_process(const MacParams& p, long samples,
                              RandomSource& rng);

} // namespace oracle
} // namespace hetmac
