#include "hetmac/core.hpp"

#include <bit>

namespace hetmac {

int lsz_hash(const BinaryId& id) {
  if (id.width < 1 || id.width > 64)
    throw InvalidParameter("lsz_hash: id width must be in [1, 64]");
  // Mask off everything above the ID, then count trailing ones. If all
  // `width` bits are set the count lands exactly on `width`.
  const std::uint64_t mask =
      id.width == 64 ? ~0ULL : ((1ULL << id.width) - 1);
  const int h = std::countr_one(id.bits & mask);
  return h > id.width ? id.width : h;
}

BinaryId id_from_string(std::string_view msb_first) {
  if (msb_first.empty() || msb_first.size() > 64)
    throw InvalidParameter("id_from_string: need 1..64 bits");
  BinaryId id;
  id.width = static_cast<int>(msb_first.size());
  for (char c : msb_first) {
    if (c != '0' && c != '1')
      throw InvalidParameter("id_from_string: bits must be 0 or 1");
    id.bits = (id.bits << 1) | (c == '1' ? 1u : 0u);
  }
  return id;
}

int draw_hash(RandomSource& rng, int t) {
  if (t < 1) throw InvalidParameter("draw_hash: bitmap length must be >= 1");
  const int h = rng.geometric_halving();
  return h < t ? h : t - 1;
}

SlotOutcome outcome_of_slot(const std::vector<Symbol>& transmissions) {
  long alpha = 0, beta = 0;
  for (Symbol s : transmissions) {
    if (s == Symbol::ALPHA)
      ++alpha;
    else if (s == Symbol::BETA)
      ++beta;
    else
      throw InvalidParameter("outcome_of_slot: NONE is not transmittable");
  }
  return outcome_of_counts(alpha, beta);
}

char outcome_char(SlotOutcome o) {
  switch (o) {
    case SlotOutcome::EMPTY: return 'E';
    case SlotOutcome::ALPHA: return 'A';
    case SlotOutcome::BETA: return 'B';
    case SlotOutcome::COLLISION: return 'C';
  }
  return '?';
}

NodePopulation make_population(int T, int D, int id_bits, std::uint64_t n_all,
                               RandomSource& rng) {
  if (T < 1) throw InvalidParameter("make_population: T must be >= 1");
  if (D < 0) throw InvalidParameter("make_population: D must be >= 0");
  if (id_bits < 1 || id_bits > 64)
    throw InvalidParameter("make_population: id_bits must be in [1, 64]");
  if (static_cast<std::uint64_t>(D) > (id_bits == 64 ? ~0ULL : (1ULL << id_bits)))
    throw InvalidParameter("make_population: D exceeds the ID space");

  NodePopulation pop;
  pop.types.resize(T);
  RandomSource ids = rng.stream(/*kind=*/0x1d5, 0, 0);
  for (int b = 0; b < T; ++b) {
    pop.types[b].n_all = n_all;
    pop.types[b].nodes.resize(D);
    // IDs only need to be distinct within a class; draw-and-retry is fine
    // because the ID space is configured much larger than D.
    std::vector<std::uint64_t> used;
    used.reserve(D);
    for (int k = 0; k < D; ++k) {
      const std::uint64_t mask =
          id_bits == 64 ? ~0ULL : ((1ULL << id_bits) - 1);
      std::uint64_t bits;
      bool fresh;
      do {
        bits = ids.next_u64() & mask;
        fresh = true;
        for (std::uint64_t u : used)
          if (u == bits) { fresh = false; break; }
      } while (!fresh);
      used.push_back(bits);
      pop.types[b].nodes[k].id = BinaryId{bits, id_bits};
    }
  }
  return pop;
}

void apply_bernoulli_activity(NodePopulation& pop, const std::vector<double>& q,
                              RandomSource& rng) {
  if (q.size() != pop.types.size())
    throw InvalidParameter("apply_bernoulli_activity: need one q per class");
  for (std::size_t b = 0; b < pop.types.size(); ++b) {
    for (auto& node : pop.types[b].nodes)
      node.active = rng.bernoulli(q[b]);
  }
}

HashRealization draw_realization(const NodePopulation& pop, HashMode mode,
                                 RandomSource& rng) {
  HashRealization hashes(pop.types.size());
  for (std::size_t b = 0; b < pop.types.size(); ++b) {
    for (const auto& node : pop.types[b].nodes) {
      if (!node.active) continue;
      const int h = mode == HashMode::FIXED_ID ? lsz_hash(node.id)
                                               : rng.geometric_halving();
      hashes[b].push_back(h);
    }
  }
  return hashes;
}

} // namespace hetmac
