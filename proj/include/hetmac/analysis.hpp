#pragma once
// Closed-form performance expressions: expected slot counts for the
// multiplexed estimators, upper bounds on them, and the per-channel
// contention/energy model used to predict MAC behaviour.

#include <vector>

#include "hetmac/core.hpp"

namespace hetmac {

// Probability that a node's hash lands in slot i of a t-slot bitmap.
double hash_prob(int i, int t);

// ---------------------------------------------------------------------------
// Estimation slot counts

struct EstimationParams {
  int T = 0;
  std::vector<double> n; // active nodes per class; real-valued so q*D works
  int t = 0;             // blocks in the bitmap
  int s_w = 1;           // feedback bits per broadcast slot
};

// Expected number of blocks whose every first-pass slot collides (the
// second-pass workload).
double expected_K(const EstimationParams& p);

// Expected number of blocks that collide again in the second pass (each
// costs T-1 third-pass slots).
double expected_R(const EstimationParams& p);

// Expected total slots for the three-pass protocol, counting both feedback
// broadcasts. The second feedback broadcast's length is rounded up from the
// expected second-pass size.
double expected_total_method1(const EstimationParams& p);

// Closed-form upper bounds on expected_K / expected_R in terms of the
// largest class size n_r = max n_b and the slack s = t - ceil(log2 n_r).
// Preconditions: every n_b >= 0, n_r >= 1, s >= 0. An all-empty system
// (n_r = 0) returns 0. The leading term is clamped at 0: for n_r = 1 its
// nominal value goes negative and the unclamped expression can dip below
// the true expectation; the clamp keeps the bound valid there and leaves
// every n_r >= 2 value unchanged.
double bound_K(const EstimationParams& p);
double bound_R(const EstimationParams& p);

// ---------------------------------------------------------------------------
// Per-channel contention model
//
// One channel, n contending nodes, estimate n_hat, window of W slots.
// Contention runs in uplink/downlink slot pairs from the left; each success
// reserves d data slots from the right, so after m successes only
// W_m = floor((W - m*d)/2) slot pairs fit. Success probability with x
// contenders is r_x = x * p_x * (1-p_x)^(x-1), where the advertised
// contention probability after j successes is p = min(1/(n_hat - j), 1).

struct MacParams {
  int n = 0;
  double n_hat = 0.0;
  int W = 0;
  int d = 0;
  double gamma_I = 0.0; // energy per idle slot
  double gamma_T = 0.0; // energy per transmitting slot
  double gamma_R = 0.0; // energy per receiving slot
};

// Advertised contention probability with x = n_hat - j nominal contenders.
double contention_prob(double n_hat_minus_j);

// P(success | x contenders each transmitting with probability p); 0 if x=0.
double success_prob(int x, double p);

// Distribution of M, the number of successful contentions in the window:
// index m in [0, floor(W/(2+d))]. The masses need not sum to exactly 1
// (the window-shrinking accounting leaves a small deficit); callers that
// care measure it via the returned vector's sum.
std::vector<double> pm_distribution(const MacParams& p);

double expected_M(const MacParams& p);

struct EnergyBreakdown {
  double ul = 0.0; // uplink (contention) slots
  double dl = 0.0; // downlink (feedback) slots
  double dt = 0.0; // reserved data slots
};

// Expected energy spent by the n nodes over the window, split by slot kind.
EnergyBreakdown expected_energy(const MacParams& p);

} // namespace hetmac
