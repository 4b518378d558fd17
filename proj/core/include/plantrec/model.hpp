#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "plantrec/tensor.hpp"

namespace plantrec {

/// Raised when an input document cannot be parsed; `where` points at the
/// offending element (file-relative JSON/CSV path).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Raised when an internal invariant is broken; maps to process exit code 3.
class InvariantError : public std::logic_error {
  using std::logic_error::logic_error;
};

using ComponentClass = std::pair<std::string, std::string>;  // (type, subtype)

struct ClassVocabularies {
  std::vector<ComponentClass> component_classes;
  std::vector<std::string> section_classes;
  std::vector<std::string> line_classes;

  ClassVocabularies() = default;
  ClassVocabularies(std::vector<ComponentClass> comp, std::vector<std::string> sec,
                    std::vector<std::string> line);

  int component_index(const ComponentClass& c) const;  // -1 if absent
  int section_index(const std::string& s) const;
  int line_index(const std::string& s) const;

  bool operator==(const ClassVocabularies&) const = default;
};

struct Detection {
  int id = 0;
  double x = 0, y = 0, w = 0, h = 0;
  std::vector<double> probs;  // over Y_C, sums to 1

  Detection() = default;
  /// Renormalizes probs when the sum is within 1e-3 of 1, rejects otherwise.
  Detection(int id, double x, double y, double w, double h, std::vector<double> probs);

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double diagonal() const;
};

struct PlantInstance {
  ClassVocabularies vocab;
  std::vector<Detection> detections;
  Eigen::MatrixXd g_conn;  // N x N, diagonal 0
  Tensor3 g_rel;           // N x N x |Y_T|

  PlantInstance() = default;
  /// Validates dimensions and value ranges; forces the g_conn diagonal to 0.
  PlantInstance(ClassVocabularies vocab, std::vector<Detection> detections,
                Eigen::MatrixXd g_conn, Tensor3 g_rel);

  int size() const { return static_cast<int>(detections.size()); }
};

/// The triplet (T, L, y): component->section and section->line partitions
/// plus the class assignment at every level. Ids are opaque small integers;
/// equality of structures is defined on canonical forms.
struct HierarchicalStructure {
  std::map<int, int> section_of;       // component id -> section id
  std::map<int, int> line_of;          // section id -> line id
  std::map<int, int> component_class;  // component id -> index into Y_C
  std::map<int, int> section_class;    // section id -> index into Y_T
  std::map<int, int> line_class;       // line id -> index into Y_L

  bool operator==(const HierarchicalStructure&) const = default;

  std::vector<int> section_members(int section_id) const;
  std::vector<int> line_sections(int line_id) const;
  std::vector<int> section_ids() const;
  std::vector<int> line_ids() const;
};

/// Set-of-sets form in which partition axioms (overlap, coverage) can
/// actually be violated; structure files parse into this before checking.
struct StructureGroups {
  struct Section {
    int id = 0;
    int cls = 0;
    std::vector<int> components;
  };
  struct Line {
    int id = 0;
    int cls = 0;
    std::vector<Section> sections;
  };
  std::vector<Line> lines;
  std::map<int, int> component_class;  // component id -> index into Y_C
};

/// Empty list means the structure satisfies every partition axiom.
std::vector<std::string> validate_structure(const HierarchicalStructure& s,
                                            const PlantInstance& inst);
std::vector<std::string> validate_structure(const StructureGroups& g,
                                            const PlantInstance& inst);

/// Builds the map form; throws InvariantError when the groups fail validation.
HierarchicalStructure structure_from_groups(const StructureGroups& g,
                                            const PlantInstance& inst);
StructureGroups groups_from_structure(const HierarchicalStructure& s);

/// Renumbers section and line ids by ascending smallest member component id.
/// Idempotent; semantically equal structures map to the same canonical form.
HierarchicalStructure canonicalize(const HierarchicalStructure& s);

/// Total order on canonical forms, used for deterministic tie-breaking among
/// equal-score optima. Input must be valid; canonicalizes internally.
std::vector<int> canonical_key(const HierarchicalStructure& s);

}  // namespace plantrec
