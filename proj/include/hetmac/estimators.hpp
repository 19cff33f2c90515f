#pragma once
// Cardinality estimation over a shared slotted channel.
//
// Three protocols are implemented against the same hash realizations:
//   * a single-class bitmap estimator (run_lof),
//   * its T-repetition baseline (run_t_lof_baseline),
//   * two multiplexed schemes (run_method1 / run_method2) that let T traffic
//     classes share one bitmap pass and then resolve the ambiguous blocks.
// All three consume HashRealization produced by core, so estimates can be
// compared on identical draws.

#include <cstdint>
#include <optional>
#include <vector>

#include "hetmac/core.hpp"

namespace hetmac {

// ---------------------------------------------------------------------------
// Single-class bitmap estimator

struct Bitmap {
  std::vector<std::uint8_t> slot; // 1 = at least one node marked this slot
  int size() const { return static_cast<int>(slot.size()); }
};

Bitmap bitmap_from_hashes(const std::vector<int>& hashes, int t);

struct LofEstimate {
  int rho = 0;        // index of the first unmarked slot (t if none)
  double n_hat = 0.0; // 1.2897 * 2^rho
};

LofEstimate lof_estimate(const Bitmap& bm);

// ---------------------------------------------------------------------------
// Symbol matrices

enum class Protocol { METHOD1, METHOD2 };

// Per-class transmission pattern inside one block. rows[b-1][s] is what an
// active class-b node holding this block's hash sends in block slot s.
struct SymbolMatrix {
  Protocol protocol;
  int T = 0;
  int slots = 0; // block width: T-1 for METHOD1, ceil(T/2) or (T-1)/2 for METHOD2
  std::vector<std::vector<Symbol>> rows;
};

// METHOD1: class 1 sends ALPHA in every block slot; class b >= 2 sends BETA
// in slot b-1 only. METHOD2 packs two classes per slot column (ALPHA
// prefixes meeting BETA suffixes) so the block shrinks to about T/2 slots.
// METHOD2 with T in {2, 3} degenerates to the METHOD1 pattern.
SymbolMatrix symbol_matrix(Protocol p, int T);

// ---------------------------------------------------------------------------
// Block decoding

enum class Verdict : std::uint8_t { INACTIVE, ACTIVE, AMBIGUOUS };

// A residual constraint on the AMBIGUOUS classes of one block, produced when
// the observed outcome narrows the possibilities without settling them.
//   INDEPENDENT      one class whose activity is unconstrained by the rest;
//                    resolvable with a single probe slot.
//   EXACTLY_ONE_OF   exactly one of `classes` is active, and every candidate
//                    is known to hold a single node; resolvable with
//                    ceil(k/3) slots of three-way signatures.
struct AmbiguityGroup {
  enum Kind : std::uint8_t { INDEPENDENT, EXACTLY_ONE_OF } kind;
  std::vector<int> classes; // 1-based class indices, ascending
};

struct DecodedBlock {
  std::vector<Verdict> verdict;       // size T, index b-1
  std::vector<AmbiguityGroup> groups; // partitions the AMBIGUOUS classes
  // Set when the ambiguity does not factor into the groups above (the
  // all-collision outcome): the block must be replayed with the classes
  // split into halves.
  bool needs_split = false;
};

// Decodes one block outcome by intersecting it with every population profile
// the matrix could have produced. Outcomes no profile can produce throw
// ProtocolViolation.
DecodedBlock decode_block(const SymbolMatrix& m,
                          const std::vector<SlotOutcome>& outcome);

// Decode table for a matrix: every reachable outcome, its decoding, and the
// distinct ambiguous-class sets (used to size the feedback broadcast).
struct DecoderTable {
  SymbolMatrix matrix;
  std::vector<std::vector<SlotOutcome>> outcomes; // reachable, lexicographic
  std::vector<DecodedBlock> decoded;              // parallel to `outcomes`
  std::vector<std::vector<int>> ambiguous_sets;   // distinct, incl. empty set
  int feedback_bits = 0; // ceil_log2(#ambiguous_sets), min 1 set

  const DecodedBlock* find(const std::vector<SlotOutcome>& outcome) const;

  // sorted (encoded outcome, index) pairs backing find()
  std::vector<std::pair<std::uint64_t, int>> keys_;
};

const DecoderTable& decoder_table(Protocol p, int T);

// ---------------------------------------------------------------------------
// Protocol runners

// Optional per-slot trace. One record per channel slot, feedback slots
// included (their outcome is '-'), so records.size() == slots_total.
struct SlotTraceRecord {
  int phase = 0;   // 1..3; feedback slots carry the phase they follow
  int index = 0;   // slot index within the phase, 0-based
  char outcome = '-';
  bool feedback = false;
};
using SlotTrace = std::vector<SlotTraceRecord>;

struct EstimateReport {
  std::vector<int> rho;        // per class
  std::vector<double> n_hat;   // per class
  int slots_phase1 = 0;
  int slots_bp = 0;            // feedback broadcasts, all phases
  int slots_phase2 = 0;
  int slots_phase3 = 0;
  int slots_total = 0;
  // Channel transmissions made by each class (energy accounting).
  std::vector<long> tx_counts;
};

// Pure runners: hash values in, report out. `t` is the bitmap length in
// blocks; `s_w` the number of per-block feedback flags that fit in one
// broadcast slot. Hashes are clamped to t-1 internally.
EstimateReport run_lof_on(const std::vector<int>& hashes, int t,
                          SlotTrace* trace = nullptr);
EstimateReport run_t_lof_baseline_on(const HashRealization& hashes,
                                     const std::vector<int>& t_per_class,
                                     SlotTrace* trace = nullptr);
EstimateReport run_method1_on(const HashRealization& hashes, int t, int s_w,
                              SlotTrace* trace = nullptr);
EstimateReport run_method2_on(const HashRealization& hashes, int t, int s_w,
                              SlotTrace* trace = nullptr);

// Population-level wrappers: draw one realization from the active nodes and
// run the protocol. Bitmap lengths come from the per-class n_all fields
// (methods use the widest class).
EstimateReport run_lof(const TypePopulation& pop, HashMode mode,
                       RandomSource& rng, SlotTrace* trace = nullptr);
EstimateReport run_t_lof_baseline(const NodePopulation& pop, HashMode mode,
                                  RandomSource& rng, SlotTrace* trace = nullptr);
EstimateReport run_method1(const NodePopulation& pop, int T, int s_w,
                           HashMode mode, RandomSource& rng,
                           SlotTrace* trace = nullptr);
EstimateReport run_method2(const NodePopulation& pop, int T, int s_w,
                           HashMode mode, RandomSource& rng,
                           SlotTrace* trace = nullptr);

} // namespace hetmac
