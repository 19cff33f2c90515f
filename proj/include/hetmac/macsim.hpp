#pragma once
// Frame-level simulator for the three-class cognitive MAC protocol: channel
// sensing, broadcast windows, the striped estimation window, weighted
// channel allocation, and per-channel contention with data-slot booking.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "hetmac/analysis.hpp"
#include "hetmac/core.hpp"
#include "hetmac/estimators.hpp"

namespace hetmac {

enum class MacMode { PROPOSED, IDEAL };

struct MacConfig {
  int num_channels = 30;
  std::vector<double> z;      // PU presence probability per channel;
                              // empty = filled with a default ramp
  int nodes_per_class = 50;
  std::array<double, 3> lambda{0.5, 0.5, 0.5}; // packets/node/frame
  std::array<double, 3> weights{1.0, 1.0, 1.0};
  std::array<int, 3> caps{1, 1, 1}; // k_e, k_p, k_n
  int frame_slots = 50;
  int bw1_cap = 5;      // longest prefix of busy channels nodes will scan
  int bw2_slots = 2;
  int s_w = 5;          // estimation feedback bits per slot
  HashMode hash_mode = HashMode::REDRAW;
  int id_bits = 16;
  int three_empty_limit = 3; // consecutive empty uplinks before a channel
                             // is released; 0 disables the rule
  double gamma_I = 0.1, gamma_T = 1.5, gamma_R = 1.2;
  MacMode mode = MacMode::PROPOSED;
  // Test hook: run the PROPOSED control flow but substitute exact counts
  // for the estimates (which also skips the estimation window, exactly as
  // IDEAL does). Lets tests confirm IDEAL differs only in the estimates.
  bool force_exact_estimates = false;
};

// Normalized, validated copy of MacConfig (z filled and channels ordered).
MacConfig normalize_config(MacConfig cfg);

// ---------------------------------------------------------------------------
// Frame building blocks

// Channels the base station found free this frame, listed in increasing-z
// order. first_free_rank is the 1-based position of the first free channel
// in the full increasing-z list (0 if none): nodes listen that many slots
// in the first broadcast window to catch the channel list.
struct SensedChannels {
  std::vector<int> free;
  int first_free_rank = 0;
};
SensedChannels sense_channels(const std::vector<double>& z_sorted,
                              RandomSource& rng);

// Estimation slots are striped across all free channels: logical slot t
// (1-based) runs on free channel (t-1) mod M_f at window offset
// floor((t-1) / M_f).
struct StripedSlot {
  int channel = 0; // index into the free list
  int offset = 0;  // slot offset within the estimation window
};
StripedSlot schedule_estimation_slot(int t, int m_f);
int estimation_window_slots(int r_s, int m_f); // ceil(r_s / m_f)

// Splits m_f free channels between the classes proportionally to
// n_hat * weight (largest-remainder rounding), giving every class at least
// one channel whenever m_f >= 3. Channels are handed out in increasing-z
// order: emergency first, then periodic, then normal.
struct ChannelAllocation {
  std::array<int, 3> count{0, 0, 0};
  std::array<double, 3> p_hat{0.0, 0.0, 0.0}; // min(count / n_hat, 1)
};
ChannelAllocation allocate_channels(const std::array<double, 3>& n_hat,
                                    const std::array<double, 3>& weights,
                                    int m_f);

// ---------------------------------------------------------------------------
// Per-channel contention + data window

struct CdtwChannelParams {
  int W = 0;              // slots available on this channel
  double p_initial = 0.0; // contention probability from the broadcast
  double nominal = 0.0;   // per-channel estimate n_hat_c / M_fc driving the
                          // post-success probability updates
  int reserved_slots = 0; // data slots already booked from the right
  int three_empty_limit = 3;
  double gamma_I = 0.0, gamma_T = 0.0, gamma_R = 0.0;
  // Model-accounting mode: every success books exactly fixture_d slots
  // (ignoring requests and capacity), no early release, no stop broadcast,
  // and the reported success count is the one consistent with the final
  // window split, as in the closed-form analysis.
  bool fixture = false;
  int fixture_d = 0;
};

struct CdtwGrant {
  int contender = 0; // index into the requests vector
  int slots = 0;
};

struct CdtwOutcome {
  int successes = 0;
  std::vector<CdtwGrant> grants;
  bool released = false;
  int released_slots = 0;
  bool fixture_valid = true; // fixture mode: sample consistent with some m
  // Energy ledger over all contenders, split two ways: by node state and by
  // slot kind (uplink pairs' transmit half, downlink/feedback half, data).
  double energy_T = 0.0, energy_R = 0.0, energy_I = 0.0;
  double ul_energy = 0.0, dl_energy = 0.0, dt_energy = 0.0;
};

// requests[i] is the number of data slots contender i will ask for when it
// wins (already capped by the caller). Contenders with requests[i] == 0 do
// not participate.
CdtwOutcome run_cdtw_channel(const CdtwChannelParams& p,
                             const std::vector<int>& requests,
                             RandomSource& rng);

// Repeated single-channel fixture runs under the analysis accounting; the
// counterpart of the closed forms, but driven through the simulator's slot
// machinery. Inconsistent samples contribute zero, as in the analysis.
struct FixtureStats {
  double mean_m = 0.0, se_m = 0.0;
  double mean_ul = 0.0, se_ul = 0.0;
  double mean_dl = 0.0, se_dl = 0.0;
  double mean_dt = 0.0, se_dt = 0.0;
  double deficit = 0.0;
  long samples = 0;
};
FixtureStats run_cdtw_fixture(const MacParams& model, long samples,
                              RandomSource& rng);

// ---------------------------------------------------------------------------
// Frame pipeline

struct MacNode {
  BinaryId id;
  std::deque<long> packets;  // arrival frame of each queued packet
  int reserved_frames = 0;   // remaining frames with a booked periodic slot
};

struct MacState {
  std::array<std::vector<MacNode>, 3> nodes;
  long frame = 0;
  std::array<long, 3> arrived_total{0, 0, 0};
  std::array<long, 3> delivered_total{0, 0, 0};
};

MacState make_mac_state(const MacConfig& cfg, RandomSource& rng);

struct ClassFrameMetrics {
  long arrivals = 0;
  long deliveries = 0;
  long successes = 0; // successful contentions
  double delay_sum = 0.0; // frames waited, summed over delivered packets
  double energy_T = 0.0, energy_R = 0.0, energy_I = 0.0;
};

struct FrameResult {
  std::array<ClassFrameMetrics, 3> cls;
  int m_f = 0;
  int bw1_slots = 0;
  int ew_slots = 0;
  int cdtw_slots = 0;
  bool degenerate = false; // no reachable free channel this frame
  std::array<int, 3> channels{0, 0, 0};
  std::array<double, 3> n_hat{0.0, 0.0, 0.0};
};

FrameResult run_frame(MacState& state, const MacConfig& cfg,
                      RandomSource& root);

// ---------------------------------------------------------------------------
// Batched simulation

struct MetricsRecord {
  long frames = 0;
  int batches = 0;
  std::array<double, 3> throughput = {};    // deliveries / node / frame
  std::array<double, 3> throughput_ci = {}; // 95% half-width, batch means
  std::array<double, 3> arrivals = {};      // arrivals / node / frame
  std::array<double, 3> delay = {};         // frames / delivered packet
  std::array<double, 3> delay_ci = {};
  std::array<double, 3> energy_T = {}, energy_R = {}, energy_I = {};
  std::array<double, 3> backlog = {};       // packets / node at the end
  std::array<long, 3> arrived = {}, delivered = {};
  double mean_free_channels = 0.0;
  double mean_ew_slots = 0.0;
};

using FrameSink = std::function<void(long frame, const FrameResult&)>;

MetricsRecord run_simulation(const MacConfig& cfg, long frames, long warmup,
                             int batches, std::uint64_t seed,
                             const FrameSink& sink = nullptr);

} // namespace hetmac
