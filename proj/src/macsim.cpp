#include "hetmac/macsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hetmac {

namespace {

// Substream labels; arbitrary distinct constants.
constexpr std::uint64_t kStreamSense = 0x51;
constexpr std::uint64_t kStreamArrival = 0xa1;
constexpr std::uint64_t kStreamEstimate = 0xe5;
constexpr std::uint64_t kStreamChannelPick = 0xc5;
constexpr std::uint64_t kStreamCdtw = 0xcd;
constexpr std::uint64_t kStreamIds = 0x1d;
constexpr std::uint64_t kStreamFixture = 0x0fa7;

int bitmap_len(int n_all) {
  return std::max(1, ceil_log2(static_cast<std::uint64_t>(n_all)));
}

} // namespace

MacConfig normalize_config(MacConfig cfg) {
  if (cfg.num_channels < 1)
    throw InvalidParameter("mac: num_channels must be >= 1");
  if (cfg.nodes_per_class < 1)
    throw InvalidParameter("mac: nodes_per_class must be >= 1");
  if (cfg.frame_slots < 5)
    throw InvalidParameter("mac: frame_slots must be >= 5");
  if (cfg.bw1_cap < 1) throw InvalidParameter("mac: bw1_cap must be >= 1");
  if (cfg.bw2_slots < 0) throw InvalidParameter("mac: bw2_slots must be >= 0");
  if (cfg.s_w < 1) throw InvalidParameter("mac: s_w must be >= 1");
  if (cfg.id_bits < 1 || cfg.id_bits > 64)
    throw InvalidParameter("mac: id_bits must be in [1, 64]");
  if (cfg.three_empty_limit < 0)
    throw InvalidParameter("mac: three_empty_limit must be >= 0");
  for (int b = 0; b < 3; ++b) {
    if (cfg.lambda[b] < 0.0)
      throw InvalidParameter("mac: lambda must be >= 0");
    if (cfg.weights[b] < 0.0)
      throw InvalidParameter("mac: weights must be >= 0");
    if (cfg.caps[b] < 1) throw InvalidParameter("mac: caps must be >= 1");
  }
  if (cfg.gamma_I < 0.0 || cfg.gamma_T < 0.0 || cfg.gamma_R < 0.0)
    throw InvalidParameter("mac: energy rates must be >= 0");
  if (cfg.z.empty()) {
    cfg.z.resize(cfg.num_channels);
    for (int i = 0; i < cfg.num_channels; ++i) cfg.z[i] = 0.1 + 0.01 * i;
  }
  if (static_cast<int>(cfg.z.size()) != cfg.num_channels)
    throw InvalidParameter("mac: z must have one entry per channel");
  for (double zi : cfg.z)
    if (!(zi >= 0.0 && zi <= 1.0))
      throw InvalidParameter("mac: z entries must be in [0, 1]");
  // Channels are always handled in increasing-z order; sort once here so the
  // rest of the pipeline can use plain indices.
  std::stable_sort(cfg.z.begin(), cfg.z.end());
  return cfg;
}

SensedChannels sense_channels(const std::vector<double>& z_sorted,
                              RandomSource& rng) {
  SensedChannels out;
  for (int i = 0; i < static_cast<int>(z_sorted.size()); ++i) {
    if (!rng.bernoulli(z_sorted[i])) {
      if (out.free.empty()) out.first_free_rank = i + 1;
      out.free.push_back(i);
    }
  }
  return out;
}

StripedSlot schedule_estimation_slot(int t, int m_f) {
  if (t < 1) throw InvalidParameter("schedule: slot index must be >= 1");
  if (m_f < 1) throw InvalidParameter("schedule: m_f must be >= 1");
  return StripedSlot{(t - 1) % m_f, (t - 1) / m_f};
}

int estimation_window_slots(int r_s, int m_f) {
  if (r_s < 0) throw InvalidParameter("schedule: r_s must be >= 0");
  if (m_f < 1) throw InvalidParameter("schedule: m_f must be >= 1");
  return (r_s + m_f - 1) / m_f;
}

ChannelAllocation allocate_channels(const std::array<double, 3>& n_hat,
                                    const std::array<double, 3>& weights,
                                    int m_f) {
  if (m_f < 0) throw InvalidParameter("allocate: m_f must be >= 0");
  for (int b = 0; b < 3; ++b)
    if (n_hat[b] < 0.0 || weights[b] < 0.0)
      throw InvalidParameter("allocate: negative share input");
  ChannelAllocation out;
  if (m_f == 0) return out;

  std::array<double, 3> share;
  double total = 0.0;
  for (int b = 0; b < 3; ++b) {
    share[b] = n_hat[b] * weights[b];
    total += share[b];
  }
  if (total <= 0.0) {
    share = {1.0, 1.0, 1.0};
    total = 3.0;
  }
  std::array<double, 3> frac;
  int assigned = 0;
  for (int b = 0; b < 3; ++b) {
    const double quota = share[b] * m_f / total;
    out.count[b] = static_cast<int>(std::floor(quota));
    frac[b] = quota - out.count[b];
    assigned += out.count[b];
  }
  // Largest remainders take the leftover channels; ties favour the more
  // urgent class.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (int i = 0; assigned < m_f; i = (i + 1) % 3) {
    ++out.count[order[i]];
    ++assigned;
  }
  // Every class keeps at least one channel when there are enough to go
  // around, paid for by whichever class currently holds the most.
  if (m_f >= 3) {
    for (int b = 0; b < 3; ++b) {
      while (out.count[b] == 0) {
        int donor = 0;
        for (int c = 1; c < 3; ++c)
          if (out.count[c] > out.count[donor]) donor = c;
        --out.count[donor];
        ++out.count[b];
      }
    }
  }
  for (int b = 0; b < 3; ++b)
    out.p_hat[b] =
        n_hat[b] > 0.0 ? std::min(out.count[b] / n_hat[b], 1.0) : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// CDTW engine

namespace {

// One uplink slot: every still-contending node transmits with probability p.
// Returns the transmitter count; `winner` is set when it is exactly one.
int draw_uplink(RandomSource& rng, double p, const std::vector<char>& active,
                int* winner) {
  int L = 0;
  if (winner) *winner = -1;
  for (int i = 0; i < static_cast<int>(active.size()); ++i) {
    if (!active[i]) continue;
    if (rng.bernoulli(p)) {
      ++L;
      if (winner) *winner = i;
    }
  }
  return L;
}

CdtwOutcome run_fixture_channel(const CdtwChannelParams& p, int n,
                                RandomSource& rng) {
  CdtwOutcome out;
  const int d = p.fixture_d;
  const int w0 = p.W / 2;
  std::vector<char> active(n, 1);
  std::vector<int> ls(w0 + 1, 0), ns(w0 + 1, 0);
  std::vector<int> prefix(w0 + 1, 0);
  int j = 0;
  for (int t = 1; t <= w0; ++t) {
    const double prob = contention_prob(p.nominal - j);
    int winner = -1;
    const int L = draw_uplink(rng, prob, active, &winner);
    ls[t] = L;
    ns[t] = n - j;
    if (L == 1) {
      active[winner] = 0;
      ++j;
    }
    prefix[t] = j;
  }
  // The analysis accounting: the window must split consistently, i.e. there
  // is an m with exactly m successes inside the first floor((W - m*d)/2)
  // pairs (at most one such m exists). Samples without one carry zero weight.
  const int m_cap = std::min(n, p.W / (2 + d));
  int found = -1;
  for (int m = 0; m <= m_cap; ++m) {
    const int wm = (p.W - m * d) / 2; // <= w0 because d >= 0
    if (wm < 0) break;
    if (prefix[wm] == m) {
      found = m;
      break;
    }
  }
  if (found < 0) {
    out.fixture_valid = false;
    return out;
  }
  out.successes = found;
  const int wm = (p.W - found * d) / 2;
  for (int t = 1; t <= wm; ++t) {
    out.ul_energy += ls[t] * p.gamma_T + (n - ls[t]) * p.gamma_I;
    out.dl_energy += ns[t] * p.gamma_R + (n - ns[t]) * p.gamma_I;
  }
  out.dt_energy =
      static_cast<double>(d) * found * (p.gamma_T + (n - 1) * p.gamma_I);
  return out;
}

} // namespace

CdtwOutcome run_cdtw_channel(const CdtwChannelParams& p,
                             const std::vector<int>& requests,
                             RandomSource& rng) {
  if (p.W < 0) throw InvalidParameter("cdtw: W must be >= 0");
  if (p.reserved_slots < 0 || p.reserved_slots > p.W)
    throw InvalidParameter("cdtw: reserved slots out of range");
  if (!(p.p_initial >= 0.0 && p.p_initial <= 1.0))
    throw InvalidParameter("cdtw: p_initial must be in [0, 1]");
  if (p.fixture && p.fixture_d < 0)
    throw InvalidParameter("cdtw: fixture_d must be >= 0");

  const int n =
      static_cast<int>(std::count_if(requests.begin(), requests.end(),
                                     [](int r) { return r > 0; }));
  if (p.fixture) return run_fixture_channel(p, n, rng);

  CdtwOutcome out;
  std::vector<char> active(requests.size(), 0);
  for (std::size_t i = 0; i < requests.size(); ++i) active[i] = requests[i] > 0;

  int left = 0;
  int right = p.W - 1 - p.reserved_slots;
  int succ = 0;
  int empty_run = 0;
  double prob = p.p_initial;

  while (right - left + 1 >= 2) {
    // Uplink half of the pair.
    int winner = -1;
    const int L = draw_uplink(rng, prob, active, &winner);
    out.energy_T += L * p.gamma_T;
    out.energy_I += (n - L) * p.gamma_I;
    out.ul_energy += L * p.gamma_T + (n - L) * p.gamma_I;
    ++left;
    // Downlink half: remaining contenders (including this pair's winner)
    // listen for the verdict, finished nodes doze.
    const int N = n - succ;
    out.energy_R += N * p.gamma_R;
    out.energy_I += (n - N) * p.gamma_I;
    out.dl_energy += N * p.gamma_R + (n - N) * p.gamma_I;
    ++left;

    if (L == 1) {
      const int room = right - left + 1;
      const int g = std::min(requests[winner], room);
      if (g >= 1) {
        out.grants.push_back(CdtwGrant{winner, g});
        right -= g;
        active[winner] = 0;
        ++succ;
        prob = contention_prob(p.nominal - succ);
        out.energy_T += g * p.gamma_T;
        out.energy_I += g * (n - 1) * p.gamma_I;
        out.dt_energy += g * (p.gamma_T + (n - 1) * p.gamma_I);
      }
      // g == 0: the window is full, the win cannot be honoured and the node
      // stays in contention.
      empty_run = 0;
    } else if (L == 0) {
      ++empty_run;
      if (p.three_empty_limit > 0 && empty_run >= p.three_empty_limit) {
        out.released = true;
        out.released_slots = right - left + 1;
        out.successes = succ;
        return out;
      }
    } else {
      empty_run = 0;
    }
  }
  if (right - left + 1 == 1) {
    // One free slot left: the base station closes contention with a stop
    // broadcast that remaining contenders receive.
    const int N = n - succ;
    out.energy_R += N * p.gamma_R;
    out.energy_I += (n - N) * p.gamma_I;
    out.dl_energy += N * p.gamma_R + (n - N) * p.gamma_I;
  }
  out.successes = succ;
  return out;
}

FixtureStats run_cdtw_fixture(const MacParams& model, long samples,
                              RandomSource& rng) {
  if (samples < 1) throw InvalidParameter("fixture: samples must be >= 1");
  CdtwChannelParams params;
  params.W = model.W;
  params.p_initial = contention_prob(model.n_hat);
  params.nominal = model.n_hat;
  params.three_empty_limit = 0;
  params.gamma_I = model.gamma_I;
  params.gamma_T = model.gamma_T;
  params.gamma_R = model.gamma_R;
  params.fixture = true;
  params.fixture_d = model.d;
  const std::vector<int> requests(model.n, 1);

  FixtureStats st;
  st.samples = samples;
  long bad = 0;
  double sm = 0, sm2 = 0, sul = 0, sul2 = 0, sdl = 0, sdl2 = 0, sdt = 0,
         sdt2 = 0;
  for (long s = 0; s < samples; ++s) {
    RandomSource sub = rng.stream(kStreamFixture, static_cast<std::uint64_t>(s));
    const CdtwOutcome out = run_cdtw_channel(params, requests, sub);
    double m = 0, ul = 0, dl = 0, dt = 0;
    if (out.fixture_valid) {
      m = out.successes;
      ul = out.ul_energy;
      dl = out.dl_energy;
      dt = out.dt_energy;
    } else {
      ++bad;
    }
    sm += m;
    sm2 += m * m;
    sul += ul;
    sul2 += ul * ul;
    sdl += dl;
    sdl2 += dl * dl;
    sdt += dt;
    sdt2 += dt * dt;
  }
  const double ns = static_cast<double>(samples);
  auto finish = [&](double sum, double sum2, double* mean, double* se) {
    *mean = sum / ns;
    const double var =
        samples > 1 ? std::max(0.0, (sum2 - sum * sum / ns) / (ns - 1)) : 0.0;
    *se = std::sqrt(var / ns);
  };
  finish(sm, sm2, &st.mean_m, &st.se_m);
  finish(sul, sul2, &st.mean_ul, &st.se_ul);
  finish(sdl, sdl2, &st.mean_dl, &st.se_dl);
  finish(sdt, sdt2, &st.mean_dt, &st.se_dt);
  st.deficit = bad / ns;
  return st;
}

// ---------------------------------------------------------------------------
// Frame pipeline

MacState make_mac_state(const MacConfig& cfg, RandomSource& rng) {
  MacState st;
  RandomSource idr = rng.stream(kStreamIds);
  const NodePopulation pop =
      make_population(3, cfg.nodes_per_class, cfg.id_bits,
                      static_cast<std::uint64_t>(cfg.nodes_per_class), idr);
  for (int b = 0; b < 3; ++b) {
    st.nodes[b].resize(cfg.nodes_per_class);
    for (int k = 0; k < cfg.nodes_per_class; ++k)
      st.nodes[b][k].id = pop.types[b].nodes[k].id;
  }
  return st;
}

namespace {

struct FrameScratch {
  std::array<std::vector<int>, 3> contenders; // node indices
  std::vector<int> holders;                   // periodic node indices
};

void deliver(MacNode& node, long frame, ClassFrameMetrics& m,
             std::array<long, 3>& delivered_total, int b) {
  m.deliveries += 1;
  m.delay_sum += static_cast<double>(frame - node.packets.front());
  node.packets.pop_front();
  delivered_total[b] += 1;
}

} // namespace

FrameResult run_frame(MacState& state, const MacConfig& cfg,
                      RandomSource& root) {
  const long f = state.frame;
  FrameResult res;
  const double gI = cfg.gamma_I, gT = cfg.gamma_T, gR = cfg.gamma_R;

  // Arrivals.
  for (int b = 0; b < 3; ++b) {
    for (int k = 0; k < cfg.nodes_per_class; ++k) {
      RandomSource ar = root.stream(
          kStreamArrival, static_cast<std::uint64_t>(b) * 1000000 + k,
          static_cast<std::uint64_t>(f));
      const int c = cfg.lambda[b] > 0.0 ? ar.poisson(cfg.lambda[b]) : 0;
      for (int i = 0; i < c; ++i) state.nodes[b][k].packets.push_back(f);
      res.cls[b].arrivals += c;
      state.arrived_total[b] += c;
    }
  }

  // Who participates this frame.
  FrameScratch sc;
  std::array<int, 3> act{0, 0, 0};
  for (int b = 0; b < 3; ++b) {
    for (int k = 0; k < cfg.nodes_per_class; ++k) {
      MacNode& nd = state.nodes[b][k];
      if (b == PERIODIC - 1 && nd.reserved_frames > 0) {
        sc.holders.push_back(k);
        ++act[b];
      } else if (!nd.packets.empty()) {
        sc.contenders[b].push_back(k);
        ++act[b];
      }
    }
  }

  // Sensing slot: the base station scans, traffic-holding nodes doze.
  for (int b = 0; b < 3; ++b) res.cls[b].energy_I += act[b] * gI;
  RandomSource srng = root.stream(kStreamSense, 0, static_cast<std::uint64_t>(f));
  const SensedChannels sensed = sense_channels(cfg.z, srng);
  res.m_f = static_cast<int>(sensed.free.size());

  if (res.m_f == 0 || sensed.first_free_rank > cfg.bw1_cap) {
    // No reachable free channel: nodes scan the broadcast window up to the
    // cap, hear nothing, and sleep out the frame. Reservations carry over.
    res.degenerate = true;
    const int doze = std::max(0, cfg.frame_slots - 1 - cfg.bw1_cap);
    for (int b = 0; b < 3; ++b) {
      res.cls[b].energy_R += act[b] * gR * cfg.bw1_cap;
      res.cls[b].energy_I += act[b] * gI * doze;
    }
    state.frame += 1;
    return res;
  }

  res.bw1_slots = sensed.first_free_rank;
  for (int b = 0; b < 3; ++b)
    res.cls[b].energy_R += act[b] * gR * res.bw1_slots;

  // Estimation window (skipped when estimates are exact).
  const bool exact =
      cfg.mode == MacMode::IDEAL || cfg.force_exact_estimates;
  std::array<double, 3> n_hat{0.0, 0.0, 0.0};
  int ew = 0;
  if (exact) {
    for (int b = 0; b < 3; ++b)
      n_hat[b] = static_cast<double>(sc.contenders[b].size());
    // Reservation holders skip contention but still carry traffic, so the
    // oracle count (and the estimate below) includes them.
    n_hat[PERIODIC - 1] += static_cast<double>(sc.holders.size());
  } else {
    const int t = bitmap_len(cfg.nodes_per_class);
    HashRealization hashes(3);
    for (int b = 0; b < 3; ++b) {
      RandomSource hr = root.stream(kStreamEstimate,
                                    static_cast<std::uint64_t>(b),
                                    static_cast<std::uint64_t>(f));
      for (int idx : sc.contenders[b]) {
        hashes[b].push_back(cfg.hash_mode == HashMode::FIXED_ID
                                ? lsz_hash(state.nodes[b][idx].id)
                                : hr.geometric_halving());
      }
      if (b == PERIODIC - 1)
        for (int idx : sc.holders) {
          hashes[b].push_back(cfg.hash_mode == HashMode::FIXED_ID
                                  ? lsz_hash(state.nodes[b][idx].id)
                                  : hr.geometric_halving());
        }
    }
    const EstimateReport rep = run_method1_on(hashes, t, cfg.s_w);
    for (int b = 0; b < 3; ++b) n_hat[b] = rep.n_hat[b];
    ew = estimation_window_slots(rep.slots_total, res.m_f);
    const int avail = cfg.frame_slots - 1 - res.bw1_slots - cfg.bw2_slots;
    if (ew > avail) ew = std::max(0, avail);
    // Logical-slot accounting: a participant transmits its own slots,
    // receives every feedback broadcast, and dozes through the rest of the
    // protocol; reservation holders doze the wall-clock window.
    for (int b = 0; b < 3; ++b) {
      double cont = static_cast<double>(sc.contenders[b].size());
      if (b == PERIODIC - 1) cont += static_cast<double>(sc.holders.size());
      res.cls[b].energy_T += gT * static_cast<double>(rep.tx_counts[b]);
      res.cls[b].energy_R += gR * cont * rep.slots_bp;
      const double idle = cont * (rep.slots_total - rep.slots_bp) -
                          static_cast<double>(rep.tx_counts[b]);
      res.cls[b].energy_I += gI * std::max(0.0, idle);
    }
  }
  res.ew_slots = ew;
  res.n_hat = n_hat;

  // Second broadcast: allocation, contention probabilities, reserved map.
  for (int b = 0; b < 3; ++b)
    res.cls[b].energy_R += act[b] * gR * cfg.bw2_slots;

  const int cdtw = std::max(
      0, cfg.frame_slots - 1 - res.bw1_slots - ew - cfg.bw2_slots);
  res.cdtw_slots = cdtw;

  const ChannelAllocation alloc =
      allocate_channels(n_hat, cfg.weights, res.m_f);
  res.channels = alloc.count;

  // Class owning each free channel, in increasing-z order.
  std::vector<int> channel_class(res.m_f, NORMAL - 1);
  {
    int pos = 0;
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < alloc.count[b]; ++c) channel_class[pos++] = b;
  }

  // Periodic reservation service: each holder owns one data slot on a
  // periodic channel this frame, handed out round-robin.
  std::vector<int> reserved_per_channel(res.m_f, 0);
  std::vector<int> periodic_channels;
  for (int c = 0; c < res.m_f; ++c)
    if (channel_class[c] == PERIODIC - 1) periodic_channels.push_back(c);
  {
    ClassFrameMetrics& pm = res.cls[PERIODIC - 1];
    int rr = 0;
    for (int idx : sc.holders) {
      MacNode& nd = state.nodes[PERIODIC - 1][idx];
      bool served = false;
      if (!periodic_channels.empty() && cdtw > 0) {
        for (std::size_t tries = 0; tries < periodic_channels.size(); ++tries) {
          const int c = periodic_channels[rr % periodic_channels.size()];
          ++rr;
          if (reserved_per_channel[c] < cdtw) {
            ++reserved_per_channel[c];
            served = true;
            break;
          }
        }
      }
      if (served && !nd.packets.empty()) {
        deliver(nd, f, pm, state.delivered_total, PERIODIC - 1);
        nd.reserved_frames -= 1;
        pm.energy_T += gT;
        pm.energy_I += gI * std::max(0, cdtw - 1);
      } else {
        // No periodic capacity this frame; the reservation carries over.
        pm.energy_I += gI * cdtw;
      }
    }
  }

  // Contenders pick a channel uniformly within their class's share.
  std::vector<std::vector<int>> members(res.m_f);
  for (int b = 0; b < 3; ++b) {
    if (alloc.count[b] == 0) {
      // Nothing allocated (fewer free channels than classes): sit out.
      res.cls[b].energy_I += gI * cdtw *
                             static_cast<double>(sc.contenders[b].size());
      continue;
    }
    int base = 0;
    for (int c = 0; c < res.m_f; ++c)
      if (channel_class[c] == b) {
        base = c;
        break;
      }
    for (int idx : sc.contenders[b]) {
      RandomSource pr = root.stream(
          kStreamChannelPick, static_cast<std::uint64_t>(b) * 1000000 + idx,
          static_cast<std::uint64_t>(f));
      const int pick =
          static_cast<int>(pr.uniform_int(static_cast<std::uint64_t>(
              alloc.count[b])));
      members[base + pick].push_back(idx);
    }
  }

  // Contention + data on every channel.
  for (int c = 0; c < res.m_f && cdtw > 0; ++c) {
    const int b = channel_class[c];
    ClassFrameMetrics& cm = res.cls[b];
    std::vector<int> requests;
    requests.reserve(members[c].size());
    for (int idx : members[c]) {
      const MacNode& nd = state.nodes[b][idx];
      const int q = static_cast<int>(nd.packets.size());
      requests.push_back(b == PERIODIC - 1 ? (q > 0 ? 1 : 0)
                                           : std::min(q, cfg.caps[b]));
    }
    CdtwChannelParams params;
    params.W = cdtw;
    params.reserved_slots = std::min(reserved_per_channel[c], cdtw);
    params.p_initial = alloc.p_hat[b];
    params.nominal =
        alloc.count[b] > 0 ? n_hat[b] / alloc.count[b] : n_hat[b];
    params.three_empty_limit = cfg.three_empty_limit;
    params.gamma_I = gI;
    params.gamma_T = gT;
    params.gamma_R = gR;
    RandomSource crng = root.stream(kStreamCdtw,
                                    static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(f));
    const CdtwOutcome out = run_cdtw_channel(params, requests, crng);
    cm.energy_T += out.energy_T;
    cm.energy_R += out.energy_R;
    cm.energy_I += out.energy_I;
    cm.successes += out.successes;
    for (const CdtwGrant& g : out.grants) {
      const int idx = members[c][g.contender];
      MacNode& nd = state.nodes[b][idx];
      if (b == PERIODIC - 1) {
        const int t_r = std::min(static_cast<int>(nd.packets.size()),
                                 cfg.caps[b]);
        deliver(nd, f, cm, state.delivered_total, b);
        nd.reserved_frames = t_r - 1;
      } else {
        for (int s = 0; s < g.slots && !nd.packets.empty(); ++s)
          deliver(nd, f, cm, state.delivered_total, b);
      }
    }
    if (out.released && out.released_slots > 0) {
      // Early contention cutoff: the freed tail of this channel serves the
      // channel's own class — still-queued nodes (from any of its channels)
      // are polled round-robin, one packet per slot. Reservation holders
      // keep their own schedule and are not polled. The channel's members
      // doze through the reassigned span.
      cm.energy_I += gI * out.released_slots *
                     static_cast<double>(members[c].size());
      int slots = out.released_slots;
      while (slots > 0) {
        bool any = false;
        for (int k = 0; k < cfg.nodes_per_class && slots > 0; ++k) {
          MacNode& nd = state.nodes[b][k];
          if (nd.packets.empty()) continue;
          if (b == PERIODIC - 1 && nd.reserved_frames > 0) continue;
          deliver(nd, f, cm, state.delivered_total, b);
          cm.energy_T += gT;
          --slots;
          any = true;
        }
        if (!any) break;
      }
    }
  }

  state.frame += 1;
  return res;
}

// ---------------------------------------------------------------------------
// Batched simulation

namespace {

// Two-sided 97.5% Student t quantiles for small degrees of freedom.
constexpr double kTq[] = {
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};

double t_quantile(int df) {
  if (df < 1) return 0.0;
  if (df <= 30) return kTq[df - 1];
  return 1.96;
}

double half_width(const std::vector<double>& xs) {
  const int b = static_cast<int>(xs.size());
  if (b < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / b;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (b - 1));
  return t_quantile(b - 1) * sd / std::sqrt(static_cast<double>(b));
}

} // namespace

MetricsRecord run_simulation(const MacConfig& cfg0, long frames, long warmup,
                             int batches, std::uint64_t seed,
                             const FrameSink& sink) {
  if (frames < 1) throw InvalidParameter("sim: frames must be >= 1");
  if (warmup < 0) throw InvalidParameter("sim: warmup must be >= 0");
  const MacConfig cfg = normalize_config(cfg0);
  batches = std::max(1, static_cast<int>(std::min<long>(batches, frames)));
  const long batch_len = frames / batches;

  RandomSource root(seed);
  MacState st = make_mac_state(cfg, root);

  MetricsRecord rec;
  rec.frames = frames;
  rec.batches = batches;
  std::array<long, 3> del{0, 0, 0}, arr{0, 0, 0};
  std::array<double, 3> delay_sum{0, 0, 0};
  std::array<double, 3> eT{0, 0, 0}, eR{0, 0, 0}, eI{0, 0, 0};
  std::array<std::vector<long>, 3> bdel;
  std::array<std::vector<double>, 3> bdelay;
  for (int b = 0; b < 3; ++b) {
    bdel[b].assign(batches, 0);
    bdelay[b].assign(batches, 0.0);
  }
  double free_sum = 0.0, ew_sum = 0.0;

  for (long i = 0; i < warmup + frames; ++i) {
    const FrameResult fr = run_frame(st, cfg, root);
    if (sink) sink(st.frame - 1, fr);
    if (i < warmup) continue;
    const long k = std::min<long>((i - warmup) / batch_len, batches - 1);
    free_sum += fr.m_f;
    ew_sum += fr.ew_slots;
    for (int b = 0; b < 3; ++b) {
      arr[b] += fr.cls[b].arrivals;
      del[b] += fr.cls[b].deliveries;
      delay_sum[b] += fr.cls[b].delay_sum;
      eT[b] += fr.cls[b].energy_T;
      eR[b] += fr.cls[b].energy_R;
      eI[b] += fr.cls[b].energy_I;
      bdel[b][k] += fr.cls[b].deliveries;
      bdelay[b][k] += fr.cls[b].delay_sum;
    }
  }

  const double fn = static_cast<double>(frames);
  const double nodes = static_cast<double>(cfg.nodes_per_class);
  for (int b = 0; b < 3; ++b) {
    rec.throughput[b] = del[b] / (fn * nodes);
    rec.arrivals[b] = arr[b] / (fn * nodes);
    rec.delay[b] = del[b] > 0 ? delay_sum[b] / del[b] : 0.0;
    rec.energy_T[b] = eT[b] / fn;
    rec.energy_R[b] = eR[b] / fn;
    rec.energy_I[b] = eI[b] / fn;
    long backlog = 0;
    for (const MacNode& nd : st.nodes[b])
      backlog += static_cast<long>(nd.packets.size());
    rec.backlog[b] = backlog / nodes;
    rec.arrived[b] = st.arrived_total[b];
    rec.delivered[b] = st.delivered_total[b];

    std::vector<double> tmeans, dmeans;
    for (int k = 0; k < batches; ++k) {
      const double len = static_cast<double>(
          k == batches - 1 ? frames - batch_len * (batches - 1) : batch_len);
      tmeans.push_back(bdel[b][k] / (len * nodes));
      if (bdel[b][k] > 0) dmeans.push_back(bdelay[b][k] / bdel[b][k]);
    }
    rec.throughput_ci[b] = half_width(tmeans);
    rec.delay_ci[b] = half_width(dmeans);
  }
  rec.mean_free_channels = free_sum / fn;
  rec.mean_ew_slots = ew_sum / fn;
  return rec;
}

} // namespace hetmac
