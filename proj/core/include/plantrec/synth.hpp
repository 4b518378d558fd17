#pragma once

#include <cstdint>

#include "plantrec/objective.hpp"
#include "plantrec/rng.hpp"

namespace plantrec {

struct NoiseSpec {
  double sigma_prob = 0.0;   // >= 0, class-probability corruption strength
  double p_edge_flip = 0.0;  // [0,1], per-entry flip chance on g_conn / g_rel
  std::uint64_t seed = 0;
};

struct SyntheticPlant {
  HierarchicalStructure truth;
  PlantInstance instance;  // one-hot probabilities, exact graphs
};

/// Draws line count (1..3), line types, section compositions and component
/// classes from the model's observed registry counts. The emitted instance
/// has one-hot class probabilities, complete connectivity inside sections,
/// and one-hot relation evidence at the true section class.
SyntheticPlant sample_structure(const PlausibilityModel& model, const ClassVocabularies& vocab,
                                Rng& rng);

/// Mixes each probability vector with the uniform distribution at weight
/// sigma_prob/(1+sigma_prob) and resets graph entries to 0.5 with
/// probability p_edge_flip. Deterministic given spec.seed.
PlantInstance corrupt_instance(const PlantInstance& inst, const NoiseSpec& spec);

}  // namespace plantrec
