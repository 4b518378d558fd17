#pragma once

#include <optional>
#include <vector>

#include "plantrec/ingest.hpp"
#include "plantrec/model.hpp"

namespace plantrec {

struct CodeAssignment {
  struct Pair {
    int code_index;
    int detection_id;
    double distance;
  };
  std::vector<Pair> pairs;              // sorted by code_index
  std::vector<int> unmatched_codes;     // code indices
  std::vector<int> unmatched_detections;
};

/// One-to-one code/detection assignment: maximum cardinality, then minimum
/// total Euclidean distance from code point to bbox centroid, every pair at
/// distance <= cutoff_factor * median bbox diagonal. Ties broken by
/// lexicographic (code index, detection id) pair lists. Exhaustive below
/// 8x8, shortest augmenting path above.
CodeAssignment match_codes(const std::vector<OcrCode>& codes, const PlantInstance& inst,
                           double cutoff_factor);

/// Class distribution carried by an equipment-list row: probability gamma on
/// the catalogue-resolved class, the remainder spread evenly. Rows that do
/// not resolve (or nullopt) give the uniform distribution.
std::vector<double> equip_distribution(const std::optional<EquipmentRow>& row,
                                       const Rulebook& rulebook,
                                       const ClassVocabularies& vocab, double gamma);

/// normalize(beta * p_sgg + (1-beta) * p_equip)
std::vector<double> fuse_probs(const std::vector<double>& p_sgg,
                               const std::vector<double>& p_equip, double beta);

/// Full modulation step: match codes to detections, look codes up in the
/// equipment list, and fuse each detection's class probabilities.
PlantInstance fuse_instance(const PlantInstance& inst,
                            const std::vector<EquipmentRow>& equipment,
                            const std::vector<OcrCode>& codes, const Rulebook& rulebook,
                            const RunConfig& cfg,
                            CodeAssignment* assignment_out = nullptr);

}  // namespace plantrec
