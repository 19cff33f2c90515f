#pragma once
// Shared vocabulary for the estimation protocols and the MAC simulator:
// node identifiers, the least-significant-zero hash, slot outcomes, and
// population containers.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hetmac/rng.hpp"

namespace hetmac {

// Thrown when an operation is called with arguments outside its contract.
class InvalidParameter : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when an observed channel outcome cannot be produced by any node
// population under the protocol in effect (malformed input, not a bug in
// the caller's parameters).
class ProtocolViolation : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Smallest k with 2^k >= x, for x >= 1.
inline int ceil_log2(std::uint64_t x) {
  if (x == 0) throw InvalidParameter("ceil_log2: x must be >= 1");
  return std::bit_width(x - 1);
}

// ---------------------------------------------------------------------------
// Identifiers and hashes

struct BinaryId {
  std::uint64_t bits = 0; // bit k holds the k-th least significant ID bit
  int width = 0;          // number of ID bits, 1..64
};

// Position of the least significant zero bit of the ID; an all-ones ID maps
// to `width`. This is the slot index a node would mark in a bitmap.
int lsz_hash(const BinaryId& id);

// Convenience for tests and fixtures: parse an MSB-first bit string.
BinaryId id_from_string(std::string_view msb_first);

// Random slot index for a bitmap of t slots: P(i) = 2^-(i+1) for i < t-1,
// and the whole geometric tail lands in the last slot, P(t-1) = 2^-(t-1).
int draw_hash(RandomSource& rng, int t);

// ---------------------------------------------------------------------------
// Slot semantics

enum class Symbol : std::uint8_t { NONE, ALPHA, BETA };
enum class SlotOutcome : std::uint8_t { EMPTY, ALPHA, BETA, COLLISION };

// Outcome seen by the receiver when `transmissions` are sent in one slot.
// Entries must be ALPHA or BETA; order is irrelevant.
SlotOutcome outcome_of_slot(const std::vector<Symbol>& transmissions);

// Count-based equivalent used on hot paths.
inline SlotOutcome outcome_of_counts(long alpha, long beta) {
  const long total = alpha + beta;
  if (total == 0) return SlotOutcome::EMPTY;
  if (total > 1) return SlotOutcome::COLLISION;
  return alpha == 1 ? SlotOutcome::ALPHA : SlotOutcome::BETA;
}

char outcome_char(SlotOutcome o); // 'E', 'A', 'B', 'C'

// ---------------------------------------------------------------------------
// Traffic classes and populations

// Class index b runs 1..T. With T = 3 the MAC layer reads them as:
enum TrafficType : int { EMERGENCY = 1, PERIODIC = 2, NORMAL = 3 };

// How per-realization hash values are produced. REDRAW gives every node a
// fresh geometric draw each realization (the statistical model under which
// the closed forms hold); FIXED_ID hashes the node's permanent ID, so a
// node's slot never changes between realizations.
enum class HashMode { REDRAW, FIXED_ID };

struct NodeRecord {
  BinaryId id;
  bool active = false;
  int queue = 0; // backlogged packets (MAC experiments only)
};

struct TypePopulation {
  // Size of the ID space the estimator's bitmap must cover; bitmap length
  // for this class is ceil_log2(n_all).
  std::uint64_t n_all = 0;
  std::vector<NodeRecord> nodes;
};

struct NodePopulation {
  std::vector<TypePopulation> types;
  int T() const { return static_cast<int>(types.size()); }
};

// Population of T classes, D nodes each, with distinct ids of `id_bits` bits.
// n_all is the bitmap-sizing figure stored on every class.
NodePopulation make_population(int T, int D, int id_bits, std::uint64_t n_all,
                               RandomSource& rng);

// Marks each node active with its class probability q[b-1], independently.
void apply_bernoulli_activity(NodePopulation& pop, const std::vector<double>& q,
                              RandomSource& rng);

// One realization of the hash process: hashes[b-1] holds the (unclamped)
// hash of every *active* node of class b. Protocol runners clamp values to
// their own bitmap length, so one realization can feed several protocols.
using HashRealization = std::vector<std::vector<int>>;

HashRealization draw_realization(const NodePopulation& pop, HashMode mode,
                                 RandomSource& rng);

} // namespace hetmac
