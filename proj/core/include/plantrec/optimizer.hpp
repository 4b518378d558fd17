#pragma once

#include <cstdint>

#include "plantrec/objective.hpp"
#include "plantrec/rng.hpp"

namespace plantrec {

enum class MoveKind {
  ReassignComponent,
  SplitSection,
  MergeSections,
  RelabelComponent,
  RelabelSection,
  RelabelLine,
  MoveSectionToLine,
  SplitLine,
  MergeLines,
};

/// One local-search step. Moves that would empty a section or line are
/// repaired during application by deleting the emptied group, so a Move
/// applied to a valid structure always yields a valid structure.
struct Move {
  MoveKind kind{};
  int a = -1;               // component / section / line id, by kind
  int b = -1;               // target id or new class index, by kind
  std::uint64_t subset = 0;  // split moves: bitmask over members sorted ascending
};

struct SearchReport {
  HierarchicalStructure best;
  EnergyBreakdown best_score;
  std::uint64_t iterations = 0;
  int restarts = 0;
  std::uint64_t accepted_moves = 0;
  std::uint64_t seed = 0;
};

/// Sections = connected components of {(i,j) : g_conn[i,j] >= threshold},
/// component classes by argmax probability, section class by argmax mean
/// relation evidence, everything in a single line of class 0.
HierarchicalStructure initial_solution(const PlantInstance& inst, const Rulebook& rulebook,
                                       double threshold);

Move propose_move(const HierarchicalStructure& s, const PlantInstance& inst, Rng& rng);
HierarchicalStructure apply_move(const HierarchicalStructure& s, const Move& m);

/// Seeded Metropolis annealing with restarts; deterministic given
/// (instance, config). Never returns anything scoring below the initial
/// solution.
SearchReport anneal(const PlantInstance& inst, const Rulebook& rulebook,
                    const PlausibilityModel& model, const RunConfig& cfg);

/// Exact maximizer over all (T, L, y). Enumerates component partitions,
/// section classes, and line partitions explicitly; component classes are
/// maximized exactly per section through a dominance frontier, which keeps
/// desk-scale instances fast without giving up exactness. Ties resolve to
/// the lexicographically smallest canonical form. Throws when the implied
/// enumeration exceeds the size guards.
SearchReport brute_force(const PlantInstance& inst, const Rulebook& rulebook,
                         const PlausibilityModel& model, const RunConfig& cfg);

}  // namespace plantrec
