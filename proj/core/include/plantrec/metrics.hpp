#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "plantrec/model.hpp"

namespace plantrec {

struct EvalReport {
  double component_accuracy = 0.0;
  double section_score = 0.0;
  std::optional<double> regulation_section_acc;
  std::optional<double> measurement_section_acc;
  std::map<int, double> recall_at_k;
};

/// Fraction of components whose predicted (type, subtype) class matches.
double component_accuracy(const HierarchicalStructure& pred, const HierarchicalStructure& truth);

/// Per true section: overlap with the best-matching predicted section
/// (maximum intersection, ties to the lower predicted id), weighted by true
/// section size.
double section_score(const HierarchicalStructure& pred, const HierarchicalStructure& truth);

/// Fraction of true sections on lines of `line_type` whose best-match
/// predicted section carries the right section class at overlap >= 0.5.
/// Absent when the truth has no such line.
std::optional<double> typed_section_accuracy(const HierarchicalStructure& pred,
                                             const HierarchicalStructure& truth, int line_type);

/// (i, j, section class) for every ordered within-section pair of the truth.
std::vector<std::tuple<int, int, int>> truth_triplets(const HierarchicalStructure& truth);

/// Rank all (i,j,k) scores descending (ties by index order); recall of the
/// truth set within the top K.
double recall_at_k(const Tensor3& g_rel_pred,
                   const std::vector<std::tuple<int, int, int>>& truth, int k);

std::string serialize_eval_report(const EvalReport& report);

}  // namespace plantrec
