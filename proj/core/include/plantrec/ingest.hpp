#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plantrec/model.hpp"

namespace plantrec {

struct EquipmentRow {
  std::string code;  // identifier as printed on the diagram
  std::string type_label;
  std::string subtype_label;
  std::string description;
  std::map<std::string, std::string> specs;

  bool operator==(const EquipmentRow&) const = default;
};

struct OcrCode {
  std::string code;
  double x = 0;
  double y = 0;

  bool operator==(const OcrCode&) const = default;
};

struct SectionRule {
  std::vector<int> mandatory;  // component-class indices, sorted, unique
  std::vector<int> optional;
};

struct LineRule {
  std::vector<int> min_sections;  // section-type indices, sorted, with multiplicity
};

struct CatalogueEntry {
  int class_index = -1;  // index into Y_C
  std::vector<std::string> mandatory_characteristics;
};

struct Rulebook {
  std::map<int, SectionRule> section_rules;        // keyed by Y_T index
  std::map<int, LineRule> line_rules;              // keyed by Y_L index
  std::map<ComponentClass, CatalogueEntry> catalogue;
};

struct RegistrySection {
  int section_type = 0;             // Y_T index
  std::vector<int> component_classes;  // Y_C indices, sorted multiset
};

struct RegistryLine {
  int line_type = 0;  // Y_L index
  std::vector<RegistrySection> sections;
};

struct RegistryRecord {
  std::string plant_id;
  std::vector<RegistryLine> lines;
};

struct AnnealParams {
  double t0 = 1.0;
  double cooling = 0.995;
  int iters = 20000;
  int restarts = 8;
};

struct RunConfig {
  std::array<double, 5> lambdas{1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<double, 3> alphas{0.05, 0.05, 0.01};
  double beta = 0.5;
  double gamma = 0.9;
  double epsilon = 1e-9;
  double match_cutoff_factor = 1.5;
  AnnealParams annealing;
  std::uint64_t seed = 0;

  void validate() const;  // throws ParseError on out-of-range values
};

/// "type/subtype" <-> ComponentClass; the registry and regulations documents
/// reference component classes in this form.
std::string format_component_class(const ComponentClass& c);
ComponentClass split_component_class(const std::string& s);

PlantInstance parse_scene_graph(const std::string& bytes);
std::string serialize_scene_graph(const PlantInstance& inst);

/// Reads just the three class lists; accepts a scene-graph document or a
/// bare vocabulary document.
ClassVocabularies parse_vocab(const std::string& bytes);
std::string serialize_vocab(const ClassVocabularies& vocab);

std::vector<EquipmentRow> parse_equipment(const std::string& bytes,
                                          std::vector<std::string>* warnings = nullptr);
std::string serialize_equipment(const std::vector<EquipmentRow>& rows);

std::vector<OcrCode> parse_ocr_codes(const std::string& bytes);
std::string serialize_ocr_codes(const std::vector<OcrCode>& codes);

Rulebook parse_regulations(const std::string& bytes, const ClassVocabularies& vocab);
std::string serialize_regulations(const Rulebook& rb, const ClassVocabularies& vocab);

std::vector<RegistryRecord> parse_registry(const std::string& bytes,
                                           const ClassVocabularies& vocab);
std::string serialize_registry(const std::vector<RegistryRecord>& records,
                               const ClassVocabularies& vocab);

RunConfig parse_config(const std::string& bytes);
std::string serialize_config(const RunConfig& cfg);

/// Hierarchy documents; accepts either a bare hierarchy or a full result
/// document (the hierarchy lives under "hierarchy" there).
StructureGroups parse_structure(const std::string& bytes, const ClassVocabularies& vocab);
std::string serialize_structure(const HierarchicalStructure& s,
                                const ClassVocabularies& vocab);

}  // namespace plantrec
