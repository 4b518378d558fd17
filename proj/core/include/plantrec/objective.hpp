#pragma once

#include <map>
#include <string>
#include <vector>

#include "plantrec/ingest.hpp"
#include "plantrec/model.hpp"

namespace plantrec {

using ClassMultiset = std::vector<int>;  // class indices, sorted ascending

/// Laplace-smoothed conditional frequency of one composition multiset given
/// a type. Raw counts are kept alongside the probabilities: the synthetic
/// generator samples from them.
struct FreqTable {
  std::map<ClassMultiset, double> probs;
  std::map<ClassMultiset, int> counts;
  double unseen = 1.0;  // shared probability of any unobserved multiset
  int total = 0;
};

struct PlausibilityModel {
  ClassVocabularies vocab;
  std::vector<FreqTable> section_tables;  // indexed by Y_T; keys are Y_C multisets
  std::vector<FreqTable> line_tables;     // indexed by Y_L; keys are Y_T multisets
  std::vector<int> line_type_counts;      // marginal line-type observations
  double smoothing = 1.0;
  double epsilon = 1e-9;

  double section_prob(int section_class, const ClassMultiset& ms) const;
  double line_prob(int line_class, const ClassMultiset& ms) const;
};

struct EnergyBreakdown {
  double e_node = 0, e_edge = 0, e_struct = 0, e_norm = 0, e_reg = 0;
  double total = 0;

  bool operator==(const EnergyBreakdown&) const = default;
};

double e_node(const HierarchicalStructure& s, const PlantInstance& inst, double eps);
double e_edge(const HierarchicalStructure& s, const PlantInstance& inst, double eps);

/// Compliance of a section composition with the Regulations: fraction of
/// mandatory classes present, minus 0.1 per present class that is neither
/// mandatory nor optional, clamped to [0,1]. Section types without a rule
/// are unconstrained and score 1.
double phi_section(int section_class, const ClassMultiset& component_classes,
                   const Rulebook& rulebook);

/// Same shape as phi_section with the line rule's min_sections as a
/// multiplicity-aware mandatory multiset.
double phi_line(int line_class, const ClassMultiset& section_classes,
                const Rulebook& rulebook);

double e_norm(const HierarchicalStructure& s, const PlantInstance& inst,
              const Rulebook& rulebook, double eps);
double e_reg(const HierarchicalStructure& s, const std::array<double, 3>& alphas);

PlausibilityModel fit_plausibility(const std::vector<RegistryRecord>& records,
                                   const ClassVocabularies& vocab, double smoothing = 1.0,
                                   double epsilon = 1e-9);

double e_struct(const HierarchicalStructure& s, const PlantInstance& inst,
                const PlausibilityModel& model);

EnergyBreakdown score(const HierarchicalStructure& s, const PlantInstance& inst,
                      const Rulebook& rulebook, const PlausibilityModel& model,
                      const RunConfig& cfg);

PlausibilityModel parse_plausibility(const std::string& bytes);
std::string serialize_plausibility(const PlausibilityModel& model);

/// Composition multisets of a structure, grouped and ordered by id.
std::vector<std::pair<int, ClassMultiset>> section_compositions(const HierarchicalStructure& s);
std::vector<std::pair<int, ClassMultiset>> line_compositions(const HierarchicalStructure& s);

}  // namespace plantrec
