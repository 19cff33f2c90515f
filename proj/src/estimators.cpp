#include "hetmac/estimators.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <unordered_map>

namespace hetmac {
namespace {

// Scale factor turning 2^rho into a cardinality estimate.
constexpr double kLofScale = 1.2897;

constexpr int kMaxEnumT = 12; // 3^T profile enumeration guard

int ceil_div(long a, long b) { return static_cast<int>((a + b - 1) / b); }

int bitmap_len_for(std::uint64_t n_all) {
  if (n_all == 0)
    throw InvalidParameter("bitmap length: n_all must be >= 1");
  const int t = ceil_log2(n_all);
  return t < 1 ? 1 : t;
}

// ---------------------------------------------------------------------------
// Profile enumeration used by the decoder. A profile assigns each class a
// multiplicity bucket: absent, exactly one transmitter, or several. Slot
// outcomes cannot distinguish counts beyond two, so three buckets enumerate
// everything the receiver could be looking at.

enum class Mult : std::uint8_t { ZERO, ONE, MANY };

std::vector<Mult> profile_of(int id, int T) {
  std::vector<Mult> p(T);
  for (int b = 0; b < T; ++b) {
    p[b] = static_cast<Mult>(id % 3);
    id /= 3;
  }
  return p;
}

std::vector<SlotOutcome> outcome_of_profile(const SymbolMatrix& m,
                                            const std::vector<Mult>& prof) {
  std::vector<SlotOutcome> out(m.slots);
  for (int s = 0; s < m.slots; ++s) {
    long alpha = 0, beta = 0;
    for (int b = 0; b < m.T; ++b) {
      if (prof[b] == Mult::ZERO) continue;
      const Symbol sym = m.rows[b][s];
      if (sym == Symbol::NONE) continue;
      const long c = prof[b] == Mult::ONE ? 1 : 2;
      (sym == Symbol::ALPHA ? alpha : beta) += c;
    }
    out[s] = outcome_of_counts(alpha, beta);
  }
  return out;
}

std::uint64_t outcome_key(const std::vector<SlotOutcome>& out) {
  std::uint64_t k = 0;
  for (SlotOutcome o : out) k = k * 4 + static_cast<std::uint64_t>(o);
  return k;
}

// Decodes one outcome given every profile that could have produced it.
DecodedBlock decode_from_profiles(int T,
                                  const std::vector<std::vector<Mult>>& prof) {
  assert(!prof.empty());
  DecodedBlock d;
  d.verdict.assign(T, Verdict::INACTIVE);

  std::vector<int> ambiguous; // 0-based classes
  for (int b = 0; b < T; ++b) {
    bool seen_active = false, seen_inactive = false;
    for (const auto& p : prof)
      (p[b] == Mult::ZERO ? seen_inactive : seen_active) = true;
    if (seen_active && seen_inactive) {
      d.verdict[b] = Verdict::AMBIGUOUS;
      ambiguous.push_back(b);
    } else {
      d.verdict[b] = seen_active ? Verdict::ACTIVE : Verdict::INACTIVE;
    }
  }
  if (ambiguous.empty()) return d;

  // Activity patterns over the ambiguous classes, as bitmasks.
  std::set<std::uint32_t> patterns;
  for (const auto& p : prof) {
    std::uint32_t mask = 0;
    for (std::size_t j = 0; j < ambiguous.size(); ++j)
      if (p[ambiguous[j]] != Mult::ZERO) mask |= 1u << j;
    patterns.insert(mask);
  }
  // Whether an ambiguous class, when active, is always a lone transmitter.
  std::vector<bool> always_single(ambiguous.size(), true);
  for (const auto& p : prof)
    for (std::size_t j = 0; j < ambiguous.size(); ++j)
      if (p[ambiguous[j]] == Mult::MANY) always_single[j] = false;

  // Peel off classes whose activity is unconstrained by the rest: the
  // pattern set must look identical whether the class is active or not.
  std::vector<std::size_t> remaining(ambiguous.size());
  for (std::size_t j = 0; j < remaining.size(); ++j) remaining[j] = j;
  std::set<std::uint32_t> cur = patterns;
  bool peeled = true;
  while (peeled) {
    peeled = false;
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      const std::uint32_t bit = 1u << remaining[pos];
      std::set<std::uint32_t> with, without;
      for (std::uint32_t p : cur)
        (p & bit ? with : without).insert(p & ~bit);
      if (!with.empty() && !without.empty() && with == without) {
        d.groups.push_back(
            {AmbiguityGroup::INDEPENDENT, {ambiguous[remaining[pos]] + 1}});
        cur = without;
        remaining.erase(remaining.begin() + pos);
        peeled = true;
        break;
      }
    }
  }
  if (remaining.empty()) {
    std::sort(d.groups.begin(), d.groups.end(),
              [](const auto& a, const auto& b) { return a.classes < b.classes; });
    return d;
  }

  // The residual is resolvable with signature slots only if exactly one of
  // the classes is active and every candidate is a lone transmitter.
  bool one_of = true;
  for (std::uint32_t p : cur)
    if (std::popcount(p) != 1) { one_of = false; break; }
  if (one_of)
    for (std::size_t pos : remaining)
      if (!always_single[pos]) { one_of = false; break; }

  if (one_of) {
    AmbiguityGroup g{AmbiguityGroup::EXACTLY_ONE_OF, {}};
    for (std::size_t pos : remaining) g.classes.push_back(ambiguous[pos] + 1);
    std::sort(g.classes.begin(), g.classes.end());
    d.groups.push_back(std::move(g));
    std::sort(d.groups.begin(), d.groups.end(),
              [](const auto& a, const auto& b) { return a.classes < b.classes; });
  } else {
    // Entangled ambiguity (the all-collision outcome, and for very wide T a
    // few mixed ones): replay the block with the classes split in half.
    d.groups.clear();
    d.needs_split = true;
  }
  return d;
}

void validate_matrix(const SymbolMatrix& m) {
  if (m.T < 2 || m.slots < 1 ||
      m.rows.size() != static_cast<std::size_t>(m.T))
    throw InvalidParameter("decode: malformed symbol matrix");
  if (m.T > kMaxEnumT)
    throw InvalidParameter("decode: T too large to enumerate");
  for (const auto& r : m.rows)
    if (r.size() != static_cast<std::size_t>(m.slots))
      throw InvalidParameter("decode: malformed symbol matrix");
}

} // namespace

// ---------------------------------------------------------------------------
// Single-class bitmap estimator

Bitmap bitmap_from_hashes(const std::vector<int>& hashes, int t) {
  if (t < 1) throw InvalidParameter("bitmap_from_hashes: t must be >= 1");
  Bitmap bm;
  bm.slot.assign(t, 0);
  for (int h : hashes) {
    if (h < 0) throw InvalidParameter("bitmap_from_hashes: negative hash");
    bm.slot[h < t ? h : t - 1] = 1;
  }
  return bm;
}

LofEstimate lof_estimate(const Bitmap& bm) {
  int rho = bm.size();
  for (int i = 0; i < bm.size(); ++i)
    if (!bm.slot[i]) { rho = i; break; }
  return {rho, kLofScale * std::ldexp(1.0, rho)};
}

// ---------------------------------------------------------------------------
// Symbol matrices

SymbolMatrix symbol_matrix(Protocol p, int T) {
  if (T < 2) throw InvalidParameter("symbol_matrix: T must be >= 2");
  SymbolMatrix m;
  m.protocol = p;
  m.T = T;
  // The packed layout needs at least two columns; with T <= 3 the two
  // protocols coincide, so METHOD2 reuses the plain rows there.
  if (p == Protocol::METHOD1 || T <= 3) {
    m.slots = T - 1;
    m.rows.assign(T, std::vector<Symbol>(m.slots, Symbol::NONE));
    for (int s = 0; s < m.slots; ++s) m.rows[0][s] = Symbol::ALPHA;
    for (int b = 2; b <= T; ++b) m.rows[b - 1][b - 2] = Symbol::BETA;
    return m;
  }
  const int eta = T % 2 == 0 ? T / 2 : (T - 1) / 2;
  m.slots = eta;
  m.rows.assign(T, std::vector<Symbol>(eta, Symbol::NONE));
  // ALPHA prefixes: class k marks slots 1..k.
  for (int k = 1; k <= eta; ++k)
    for (int s = 0; s < k; ++s) m.rows[k - 1][s] = Symbol::ALPHA;
  // BETA suffixes: class eta+j marks the last j slots.
  for (int j = 1; j <= eta; ++j)
    for (int s = eta - j; s < eta; ++s) m.rows[eta + j - 1][s] = Symbol::BETA;
  // Odd T gets one extra signature that collides with no prefix or suffix.
  if (T % 2 == 1) {
    m.rows[T - 1].assign(eta, Symbol::NONE);
    m.rows[T - 1][0] = Symbol::BETA;
    m.rows[T - 1][eta - 1] = Symbol::ALPHA;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Decoding

DecodedBlock decode_block(const SymbolMatrix& m,
                          const std::vector<SlotOutcome>& outcome) {
  validate_matrix(m);
  if (outcome.size() != static_cast<std::size_t>(m.slots))
    throw InvalidParameter("decode_block: outcome length != block width");

  int pow3 = 1;
  for (int b = 0; b < m.T; ++b) pow3 *= 3;
  std::vector<std::vector<Mult>> consistent;
  for (int id = 0; id < pow3; ++id) {
    std::vector<Mult> p = profile_of(id, m.T);
    if (outcome_of_profile(m, p) == outcome) consistent.push_back(std::move(p));
  }
  if (consistent.empty())
    throw ProtocolViolation("decode_block: outcome unreachable under matrix");
  return decode_from_profiles(m.T, consistent);
}

const DecodedBlock* DecoderTable::find(
    const std::vector<SlotOutcome>& outcome) const {
  const std::uint64_t key = outcome_key(outcome);
  auto it = std::lower_bound(keys_.begin(), keys_.end(),
                             std::pair<std::uint64_t, int>{key, -1});
  if (it == keys_.end() || it->first != key) return nullptr;
  return &decoded[it->second];
}

namespace {

std::unique_ptr<DecoderTable> build_table(Protocol p, int T) {
  auto table = std::make_unique<DecoderTable>();
  table->matrix = symbol_matrix(p, T);
  validate_matrix(table->matrix);

  int pow3 = 1;
  for (int b = 0; b < T; ++b) pow3 *= 3;
  std::map<std::uint64_t, std::pair<std::vector<SlotOutcome>,
                                    std::vector<std::vector<Mult>>>>
      grouped;
  for (int id = 0; id < pow3; ++id) {
    std::vector<Mult> prof = profile_of(id, T);
    std::vector<SlotOutcome> out = outcome_of_profile(table->matrix, prof);
    auto& slot = grouped[outcome_key(out)];
    slot.first = std::move(out);
    slot.second.push_back(std::move(prof));
  }

  std::set<std::vector<int>> amb_sets;
  int index = 0;
  for (auto& [key, entry] : grouped) {
    DecodedBlock d = decode_from_profiles(T, entry.second);
    std::vector<int> amb;
    for (int b = 0; b < T; ++b)
      if (d.verdict[b] == Verdict::AMBIGUOUS) amb.push_back(b + 1);
    amb_sets.insert(std::move(amb));
    table->outcomes.push_back(entry.first);
    table->decoded.push_back(std::move(d));
    table->keys_.emplace_back(key, index++);
  }
  // grouped is key-ordered, so keys_ is already sorted.
  table->ambiguous_sets.assign(amb_sets.begin(), amb_sets.end());
  const std::size_t n_sets = table->ambiguous_sets.size();
  table->feedback_bits = n_sets <= 1 ? 0 : ceil_log2(n_sets);
  return table;
}

} // namespace

const DecoderTable& decoder_table(Protocol p, int T) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<DecoderTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(static_cast<int>(p), T);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, build_table(p, T)).first;
  return *it->second;
}

// ---------------------------------------------------------------------------
// Protocol runners

namespace {

void push_trace(SlotTrace* trace, int phase, int index, char outcome,
                bool feedback = false) {
  if (trace) trace->push_back({phase, index, outcome, feedback});
}

struct RunState {
  const std::vector<std::vector<long>>& cnt; // [class][block]
  std::vector<std::vector<std::uint8_t>>& bitmap;
  std::vector<long>& tx;
  SlotTrace* trace;
  int phase2_index = 0;
  int slots_phase2 = 0;
};

void finish_report(EstimateReport& rep,
                   const std::vector<std::vector<std::uint8_t>>& bitmap) {
  rep.rho.clear();
  rep.n_hat.clear();
  for (const auto& row : bitmap) {
    Bitmap bm;
    bm.slot = row;
    const LofEstimate e = lof_estimate(bm);
    rep.rho.push_back(e.rho);
    rep.n_hat.push_back(e.n_hat);
  }
  rep.slots_total = rep.slots_phase1 + rep.slots_bp + rep.slots_phase2 +
                    rep.slots_phase3;
}

SlotOutcome probe_slot(RunState& st, int cls, int block) {
  const SlotOutcome o = outcome_of_counts(st.cnt[cls][block], 0);
  st.tx[cls] += st.cnt[cls][block];
  push_trace(st.trace, 2, st.phase2_index++, outcome_char(o));
  ++st.slots_phase2;
  return o;
}

// Resolves an exactly-one-of group with ceil(k/3) signature slots: the j-th
// candidate transmits the base-3 digits of j (1-based, wrapping to 0 at
// 3^slots), digit 1 = ALPHA, digit 2 = BETA, digit 0 = silence. With up to
// three candidates this is one slot carrying ALPHA / BETA / silence. The
// lone active candidate's signature is received verbatim, so matching it
// against the codebook settles the whole group.
void resolve_one_of(RunState& st, const std::vector<int>& classes, int block) {
  const int k = static_cast<int>(classes.size());
  const int slots = ceil_div(k, 3);
  long pow3 = 1;
  for (int s = 0; s < slots; ++s) pow3 *= 3;
  std::vector<std::vector<int>> digits(k, std::vector<int>(slots, 0));
  for (int j = 0; j < k; ++j) {
    long v = (j + 1) % pow3;
    for (int s = 0; s < slots; ++s) { digits[j][s] = v % 3; v /= 3; }
  }
  std::vector<SlotOutcome> observed(slots);
  for (int s = 0; s < slots; ++s) {
    long alpha = 0, beta = 0;
    for (int j = 0; j < k; ++j) {
      const long c = st.cnt[classes[j] - 1][block];
      if (digits[j][s] == 1) alpha += c;
      else if (digits[j][s] == 2) beta += c;
      if (digits[j][s] != 0) st.tx[classes[j] - 1] += c;
    }
    observed[s] = outcome_of_counts(alpha, beta);
    push_trace(st.trace, 2, st.phase2_index++, outcome_char(observed[s]));
    ++st.slots_phase2;
  }
  int winner = -1;
  for (int j = 0; j < k; ++j) {
    bool match = true;
    for (int s = 0; s < slots; ++s) {
      const SlotOutcome want = digits[j][s] == 0   ? SlotOutcome::EMPTY
                               : digits[j][s] == 1 ? SlotOutcome::ALPHA
                                                   : SlotOutcome::BETA;
      if (observed[s] != want) { match = false; break; }
    }
    if (match) { winner = j; break; }
  }
  if (winner < 0)
    throw ProtocolViolation("one-of resolution: no signature matched");
  for (int j = 0; j < k; ++j)
    st.bitmap[classes[j] - 1][block] = j == winner ? 1 : 0;
}

void resolve_classes(RunState& st, const std::vector<int>& classes, int block);

// Applies a decoded block to the bitmap and runs whatever resolution it
// still needs. `classes` maps local matrix rows to global class indices.
void apply_decoded(RunState& st, const std::vector<int>& classes,
                   const DecodedBlock& d, int block) {
  const int T = static_cast<int>(classes.size());
  if (d.needs_split) {
    const int head = (T + 1) / 2;
    resolve_classes(st, {classes.begin(), classes.begin() + head}, block);
    resolve_classes(st, {classes.begin() + head, classes.end()}, block);
    return;
  }
  for (int b = 0; b < T; ++b)
    if (d.verdict[b] != Verdict::AMBIGUOUS)
      st.bitmap[classes[b] - 1][block] = d.verdict[b] == Verdict::ACTIVE;
  for (const AmbiguityGroup& g : d.groups) {
    std::vector<int> mapped;
    mapped.reserve(g.classes.size());
    for (int local : g.classes) mapped.push_back(classes[local - 1]);
    if (g.kind == AmbiguityGroup::INDEPENDENT) {
      const SlotOutcome o = probe_slot(st, mapped[0] - 1, block);
      st.bitmap[mapped[0] - 1][block] = o != SlotOutcome::EMPTY;
    } else {
      resolve_one_of(st, mapped, block);
    }
  }
}

// Replays one block for a subset of classes. Small subsets use the plain
// layout plus its collision follow-up; larger ones rerun the packed layout
// and may split again.
void resolve_classes(RunState& st, const std::vector<int>& classes, int block) {
  const int T = static_cast<int>(classes.size());
  assert(T >= 1);
  if (T == 1) {
    const SlotOutcome o = probe_slot(st, classes[0] - 1, block);
    st.bitmap[classes[0] - 1][block] = o != SlotOutcome::EMPTY;
    return;
  }
  if (T <= 3) {
    std::vector<SlotOutcome> out(T - 1);
    for (int s = 0; s < T - 1; ++s) {
      out[s] = outcome_of_counts(st.cnt[classes[0] - 1][block],
                                 st.cnt[classes[s + 1] - 1][block]);
      push_trace(st.trace, 2, st.phase2_index++, outcome_char(out[s]));
      ++st.slots_phase2;
    }
    st.tx[classes[0] - 1] += st.cnt[classes[0] - 1][block] * (T - 1);
    for (int s = 1; s < T; ++s)
      st.tx[classes[s] - 1] += st.cnt[classes[s] - 1][block];
    const DecodedBlock* d = decoder_table(Protocol::METHOD1, T).find(out);
    if (!d) throw ProtocolViolation("replay: outcome unreachable");
    if (!d->needs_split) {
      apply_decoded(st, classes, *d, block);
      return;
    }
    // All slots collided: probe the shared class, then each other class.
    const SlotOutcome o = probe_slot(st, classes[0] - 1, block);
    if (o == SlotOutcome::EMPTY) {
      // Every collision then needs two of the slot's other class.
      st.bitmap[classes[0] - 1][block] = 0;
      for (int s = 1; s < T; ++s) st.bitmap[classes[s] - 1][block] = 1;
    } else if (o == SlotOutcome::ALPHA) {
      // A lone shared-class node: each collision needs its other class too.
      for (int s = 0; s < T; ++s) st.bitmap[classes[s] - 1][block] = 1;
    } else {
      st.bitmap[classes[0] - 1][block] = 1;
      for (int s = 1; s < T; ++s) {
        const SlotOutcome ps = probe_slot(st, classes[s] - 1, block);
        st.bitmap[classes[s] - 1][block] = ps != SlotOutcome::EMPTY;
      }
    }
    return;
  }
  const DecoderTable& table = decoder_table(Protocol::METHOD2, T);
  const SymbolMatrix& m = table.matrix;
  std::vector<SlotOutcome> out(m.slots);
  for (int s = 0; s < m.slots; ++s) {
    long alpha = 0, beta = 0;
    for (int b = 0; b < T; ++b) {
      const long c = st.cnt[classes[b] - 1][block];
      if (m.rows[b][s] == Symbol::ALPHA) alpha += c;
      else if (m.rows[b][s] == Symbol::BETA) beta += c;
    }
    out[s] = outcome_of_counts(alpha, beta);
    push_trace(st.trace, 2, st.phase2_index++, outcome_char(out[s]));
    ++st.slots_phase2;
  }
  for (int b = 0; b < T; ++b) {
    int weight = 0;
    for (int s = 0; s < m.slots; ++s)
      if (m.rows[b][s] != Symbol::NONE) ++weight;
    st.tx[classes[b] - 1] += st.cnt[classes[b] - 1][block] * weight;
  }
  const DecodedBlock* d = table.find(out);
  if (!d) throw ProtocolViolation("replay: outcome unreachable");
  apply_decoded(st, classes, *d, block);
}

std::vector<std::vector<long>> block_counts(const HashRealization& hashes,
                                            int t) {
  std::vector<std::vector<long>> cnt(hashes.size(),
                                     std::vector<long>(t, 0));
  for (std::size_t b = 0; b < hashes.size(); ++b)
    for (int h : hashes[b]) {
      if (h < 0) throw InvalidParameter("negative hash value");
      ++cnt[b][h < t ? h : t - 1];
    }
  return cnt;
}

} // namespace

EstimateReport run_lof_on(const std::vector<int>& hashes, int t,
                          SlotTrace* trace) {
  if (t < 1) throw InvalidParameter("run_lof_on: t must be >= 1");
  std::vector<long> cnt(t, 0);
  for (int h : hashes) {
    if (h < 0) throw InvalidParameter("run_lof_on: negative hash");
    ++cnt[h < t ? h : t - 1];
  }
  EstimateReport rep;
  rep.tx_counts.assign(1, static_cast<long>(hashes.size()));
  std::vector<std::vector<std::uint8_t>> bitmap(1,
                                                std::vector<std::uint8_t>(t));
  for (int i = 0; i < t; ++i) {
    bitmap[0][i] = cnt[i] > 0;
    push_trace(trace, 1, i, outcome_char(outcome_of_counts(cnt[i], 0)));
  }
  rep.slots_phase1 = t;
  finish_report(rep, bitmap);
  return rep;
}

EstimateReport run_t_lof_baseline_on(const HashRealization& hashes,
                                     const std::vector<int>& t_per_class,
                                     SlotTrace* trace) {
  if (hashes.size() != t_per_class.size())
    throw InvalidParameter("baseline: need one bitmap length per class");
  EstimateReport rep;
  rep.tx_counts.assign(hashes.size(), 0);
  std::vector<std::vector<std::uint8_t>> bitmap;
  int index = 0;
  for (std::size_t b = 0; b < hashes.size(); ++b) {
    const int t = t_per_class[b];
    if (t < 1) throw InvalidParameter("baseline: t must be >= 1");
    std::vector<long> cnt(t, 0);
    for (int h : hashes[b]) {
      if (h < 0) throw InvalidParameter("baseline: negative hash");
      ++cnt[h < t ? h : t - 1];
    }
    std::vector<std::uint8_t> row(t);
    for (int i = 0; i < t; ++i) {
      row[i] = cnt[i] > 0;
      push_trace(trace, 1, index++, outcome_char(outcome_of_counts(cnt[i], 0)));
    }
    bitmap.push_back(std::move(row));
    rep.tx_counts[b] = static_cast<long>(hashes[b].size());
    rep.slots_phase1 += t;
  }
  finish_report(rep, bitmap);
  return rep;
}

EstimateReport run_method1_on(const HashRealization& hashes, int t, int s_w,
                              SlotTrace* trace) {
  const int T = static_cast<int>(hashes.size());
  if (T < 2) throw InvalidParameter("run_method1_on: need T >= 2 classes");
  if (t < 1) throw InvalidParameter("run_method1_on: t must be >= 1");
  if (s_w < 1) throw InvalidParameter("run_method1_on: s_w must be >= 1");

  const auto cnt = block_counts(hashes, t);
  const DecoderTable& table = decoder_table(Protocol::METHOD1, T);
  EstimateReport rep;
  rep.tx_counts.assign(T, 0);
  std::vector<std::vector<std::uint8_t>> bitmap(
      T, std::vector<std::uint8_t>(t, 0));

  // First pass: every block, T-1 slots each. The shared class transmits in
  // all of them, each other class in its own slot.
  std::vector<int> collided; // blocks where every slot collided
  for (int i = 0; i < t; ++i) {
    std::vector<SlotOutcome> out(T - 1);
    for (int s = 0; s < T - 1; ++s) {
      out[s] = outcome_of_counts(cnt[0][i], cnt[s + 1][i]);
      push_trace(trace, 1, i * (T - 1) + s, outcome_char(out[s]));
    }
    rep.tx_counts[0] += cnt[0][i] * (T - 1);
    for (int b = 1; b < T; ++b) rep.tx_counts[b] += cnt[b][i];
    const DecodedBlock* d = table.find(out);
    if (!d) throw ProtocolViolation("run_method1_on: unreachable outcome");
    if (d->needs_split) {
      collided.push_back(i);
    } else {
      // Anything short of all-collision decodes completely here.
      assert(d->groups.empty());
      for (int b = 0; b < T; ++b)
        bitmap[b][i] = d->verdict[b] == Verdict::ACTIVE;
    }
  }
  rep.slots_phase1 = t * (T - 1);
  const int bp1 = ceil_div(t, s_w);
  for (int i = 0; i < bp1; ++i) push_trace(trace, 1, i, '-', true);

  // Second pass: the shared class probes each fully collided block alone.
  std::vector<int> still; // blocks collided again
  int p2 = 0;
  for (int i : collided) {
    const SlotOutcome o = outcome_of_counts(cnt[0][i], 0);
    rep.tx_counts[0] += cnt[0][i];
    push_trace(trace, 2, p2++, outcome_char(o));
    if (o == SlotOutcome::EMPTY) {
      // Each first-pass collision then needs two of the slot's own class.
      bitmap[0][i] = 0;
      for (int b = 1; b < T; ++b) bitmap[b][i] = 1;
    } else if (o == SlotOutcome::ALPHA) {
      // One shared-class node: every other class must have contributed.
      for (int b = 0; b < T; ++b) bitmap[b][i] = 1;
    } else {
      bitmap[0][i] = 1;
      still.push_back(i);
    }
  }
  rep.slots_phase2 = static_cast<int>(collided.size());
  const int bp2 = ceil_div(static_cast<long>(collided.size()), s_w);
  for (int i = 0; i < bp2; ++i) push_trace(trace, 2, i, '-', true);

  // Third pass: remaining blocks get one slot per non-shared class.
  int p3 = 0;
  for (int i : still) {
    for (int b = 1; b < T; ++b) {
      const SlotOutcome o = outcome_of_counts(0, cnt[b][i]);
      rep.tx_counts[b] += cnt[b][i];
      push_trace(trace, 3, p3++, outcome_char(o));
      bitmap[b][i] = o != SlotOutcome::EMPTY;
    }
  }
  rep.slots_phase3 = (T - 1) * static_cast<int>(still.size());
  rep.slots_bp = bp1 + bp2;
  finish_report(rep, bitmap);
  return rep;
}

EstimateReport run_method2_on(const HashRealization& hashes, int t, int s_w,
                              SlotTrace* trace) {
  const int T = static_cast<int>(hashes.size());
  if (T < 2) throw InvalidParameter("run_method2_on: need T >= 2 classes");
  if (T <= 3) return run_method1_on(hashes, t, s_w, trace);
  if (t < 1) throw InvalidParameter("run_method2_on: t must be >= 1");
  if (s_w < 1) throw InvalidParameter("run_method2_on: s_w must be >= 1");

  const auto cnt = block_counts(hashes, t);
  const DecoderTable& table = decoder_table(Protocol::METHOD2, T);
  const SymbolMatrix& m = table.matrix;
  EstimateReport rep;
  rep.tx_counts.assign(T, 0);
  std::vector<std::vector<std::uint8_t>> bitmap(
      T, std::vector<std::uint8_t>(t, 0));
  std::vector<int> row_weight(T, 0);
  for (int b = 0; b < T; ++b)
    for (int s = 0; s < m.slots; ++s)
      if (m.rows[b][s] != Symbol::NONE) ++row_weight[b];

  RunState st{cnt, bitmap, rep.tx_counts, trace};
  std::vector<int> all_classes(T);
  for (int b = 0; b < T; ++b) all_classes[b] = b + 1;

  std::vector<std::pair<int, const DecodedBlock*>> pending;
  for (int i = 0; i < t; ++i) {
    std::vector<SlotOutcome> out(m.slots);
    for (int s = 0; s < m.slots; ++s) {
      long alpha = 0, beta = 0;
      for (int b = 0; b < T; ++b) {
        if (m.rows[b][s] == Symbol::ALPHA) alpha += cnt[b][i];
        else if (m.rows[b][s] == Symbol::BETA) beta += cnt[b][i];
      }
      out[s] = outcome_of_counts(alpha, beta);
      push_trace(trace, 1, i * m.slots + s, outcome_char(out[s]));
    }
    for (int b = 0; b < T; ++b) rep.tx_counts[b] += cnt[b][i] * row_weight[b];
    const DecodedBlock* d = table.find(out);
    if (!d) throw ProtocolViolation("run_method2_on: unreachable outcome");
    for (int b = 0; b < T; ++b)
      if (d->verdict[b] != Verdict::AMBIGUOUS)
        bitmap[b][i] = d->verdict[b] == Verdict::ACTIVE;
    if (d->needs_split || !d->groups.empty()) pending.emplace_back(i, d);
  }
  rep.slots_phase1 = t * m.slots;

  // One feedback broadcast tells every node its block's ambiguity case;
  // cases are indexed, so each block costs feedback_bits bits.
  const int bp = ceil_div(static_cast<long>(table.feedback_bits) * t, s_w);
  for (int i = 0; i < bp; ++i) push_trace(trace, 1, i, '-', true);
  rep.slots_bp = bp;

  for (const auto& [i, d] : pending) apply_decoded(st, all_classes, *d, i);
  rep.slots_phase2 = st.slots_phase2;
  finish_report(rep, bitmap);
  return rep;
}

// ---------------------------------------------------------------------------
// Population wrappers

namespace {

std::vector<int> active_hashes(const TypePopulation& pop, HashMode mode,
                               RandomSource& rng) {
  std::vector<int> hashes;
  for (const auto& node : pop.nodes) {
    if (!node.active) continue;
    hashes.push_back(mode == HashMode::FIXED_ID ? lsz_hash(node.id)
                                                : rng.geometric_halving());
  }
  return hashes;
}

int widest_bitmap(const NodePopulation& pop) {
  if (pop.types.empty())
    throw InvalidParameter("population has no classes");
  std::uint64_t widest = 0;
  for (const auto& tp : pop.types)
    widest = std::max(widest, tp.n_all);
  return bitmap_len_for(widest);
}

} // namespace

EstimateReport run_lof(const TypePopulation& pop, HashMode mode,
                       RandomSource& rng, SlotTrace* trace) {
  return run_lof_on(active_hashes(pop, mode, rng), bitmap_len_for(pop.n_all),
                    trace);
}

EstimateReport run_t_lof_baseline(const NodePopulation& pop, HashMode mode,
                                  RandomSource& rng, SlotTrace* trace) {
  std::vector<int> t_per_class;
  for (const auto& tp : pop.types)
    t_per_class.push_back(bitmap_len_for(tp.n_all));
  return run_t_lof_baseline_on(draw_realization(pop, mode, rng), t_per_class,
                               trace);
}

EstimateReport run_method1(const NodePopulation& pop, int T, int s_w,
                           HashMode mode, RandomSource& rng, SlotTrace* trace) {
  if (T != pop.T())
    throw InvalidParameter("run_method1: T does not match population");
  return run_method1_on(draw_realization(pop, mode, rng), widest_bitmap(pop),
                        s_w, trace);
}

EstimateReport run_method2(const NodePopulation& pop, int T, int s_w,
                           HashMode mode, RandomSource& rng, SlotTrace* trace) {
  if (T != pop.T())
    throw InvalidParameter("run_method2: T does not match population");
  return run_method2_on(draw_realization(pop, mode, rng), widest_bitmap(pop),
                        s_w, trace);
}

} // namespace hetmac
