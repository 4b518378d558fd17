#include "plantrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace plantrec {

ClassVocabularies::ClassVocabularies(std::vector<ComponentClass> comp,
                                     std::vector<std::string> sec,
                                     std::vector<std::string> line)
    : component_classes(std::move(comp)),
      section_classes(std::move(sec)),
      line_classes(std::move(line)) {
  if (component_classes.empty() || section_classes.empty() || line_classes.empty()) {
    throw InvariantError("class vocabularies must be non-empty");
  }
  auto check_unique = [](const auto& v, const char* name) {
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvariantError(std::string("duplicate label in ") + name);
    }
  };
  check_unique(component_classes, "component_classes");
  check_unique(section_classes, "section_classes");
  check_unique(line_classes, "line_classes");
}

int ClassVocabularies::component_index(const ComponentClass& c) const {
  auto it = std::find(component_classes.begin(), component_classes.end(), c);
  return it == component_classes.end()
             ? -1
             : static_cast<int>(it - component_classes.begin());
}

int ClassVocabularies::section_index(const std::string& s) const {
  auto it = std::find(section_classes.begin(), section_classes.end(), s);
  return it == section_classes.end() ? -1 : static_cast<int>(it - section_classes.begin());
}

int ClassVocabularies::line_index(const std::string& s) const {
  auto it = std::find(line_classes.begin(), line_classes.end(), s);
  return it == line_classes.end() ? -1 : static_cast<int>(it - line_classes.begin());
}

Detection::Detection(int id_, double x_, double y_, double w_, double h_,
                     std::vector<double> probs_)
    : id(id_), x(x_), y(y_), w(w_), h(h_), probs(std::move(probs_)) {
  if (!(w > 0.0) || !(h > 0.0)) {
    throw InvariantError("detection " + std::to_string(id) + ": bbox w/h must be > 0");
  }
  double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-3) {
    throw InvariantError("detection " + std::to_string(id) +
                         ": probs sum deviates from 1 by more than 1e-3");
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    for (double& p : probs) p /= sum;
  }
}

double Detection::diagonal() const { return std::sqrt(w * w + h * h); }

PlantInstance::PlantInstance(ClassVocabularies vocab_, std::vector<Detection> detections_,
                             Eigen::MatrixXd g_conn_, Tensor3 g_rel_)
    : vocab(std::move(vocab_)),
      detections(std::move(detections_)),
      g_conn(std::move(g_conn_)),
      g_rel(std::move(g_rel_)) {
  const int n = static_cast<int>(detections.size());
  const int yt = static_cast<int>(vocab.section_classes.size());
  if (g_conn.rows() != n || g_conn.cols() != n) {
    throw InvariantError("g_conn dimensions do not match detection count");
  }
  if (g_rel.d0 != n || g_rel.d1 != n || g_rel.d2 != yt) {
    throw InvariantError("g_rel dimensions do not match (N, N, |Y_T|)");
  }
  for (int i = 0; i < n; ++i) {
    if (detections[i].id != i) {
      throw InvariantError("detection ids must be 0..N-1 in order");
    }
    if (static_cast<int>(detections[i].probs.size()) !=
        static_cast<int>(vocab.component_classes.size())) {
      throw InvariantError("detection " + std::to_string(i) + ": probs length != |Y_C|");
    }
  }
  for (int i = 0; i < n; ++i) g_conn(i, i) = 0.0;
}

std::vector<int> HierarchicalStructure::section_members(int section_id) const {
  std::vector<int> out;
  for (const auto& [comp, sec] : section_of) {
    if (sec == section_id) out.push_back(comp);
  }
  return out;
}

std::vector<int> HierarchicalStructure::line_sections(int line_id) const {
  std::vector<int> out;
  for (const auto& [sec, line] : line_of) {
    if (line == line_id) out.push_back(sec);
  }
  return out;
}

std::vector<int> HierarchicalStructure::section_ids() const {
  std::vector<int> out;
  for (const auto& [sec, _] : line_of) out.push_back(sec);
  return out;
}

std::vector<int> HierarchicalStructure::line_ids() const {
  std::set<int> ids;
  for (const auto& [_, line] : line_of) ids.insert(line);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> validate_structure(const HierarchicalStructure& s,
                                            const PlantInstance& inst) {
  std::vector<std::string> v;
  const int n = inst.size();
  const int yc = static_cast<int>(inst.vocab.component_classes.size());
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  const int yl = static_cast<int>(inst.vocab.line_classes.size());

  for (int i = 0; i < n; ++i) {
    if (!s.section_of.count(i)) {
      v.push_back("partition not covering: component " + std::to_string(i) + " unassigned");
    }
  }
  for (const auto& [comp, sec] : s.section_of) {
    if (comp < 0 || comp >= n) {
      v.push_back("unknown component id " + std::to_string(comp));
    }
    if (!s.line_of.count(sec)) {
      v.push_back("section " + std::to_string(sec) + " not assigned to a line");
    }
  }
  std::set<int> referenced_sections;
  for (const auto& [comp, sec] : s.section_of) referenced_sections.insert(sec);
  for (const auto& [sec, line] : s.line_of) {
    if (!referenced_sections.count(sec)) {
      v.push_back("empty section " + std::to_string(sec));
    }
    if (!s.line_class.count(line)) {
      v.push_back("line " + std::to_string(line) + " has no class");
    }
  }
  for (const auto& [comp, _] : s.section_of) {
    auto it = s.component_class.find(comp);
    if (it == s.component_class.end()) {
      v.push_back("component " + std::to_string(comp) + " has no class");
    } else if (it->second < 0 || it->second >= yc) {
      v.push_back("component " + std::to_string(comp) + " class out of range");
    }
  }
  for (int sec : referenced_sections) {
    auto it = s.section_class.find(sec);
    if (it == s.section_class.end()) {
      v.push_back("section " + std::to_string(sec) + " has no class");
    } else if (it->second < 0 || it->second >= yt) {
      v.push_back("section " + std::to_string(sec) + " class out of range");
    }
  }
  std::set<int> referenced_lines;
  for (const auto& [_, line] : s.line_of) referenced_lines.insert(line);
  for (const auto& [line, cls] : s.line_class) {
    if (referenced_lines.count(line) && (cls < 0 || cls >= yl)) {
      v.push_back("line " + std::to_string(line) + " class out of range");
    }
  }
  for (const auto& [line, _] : s.line_class) {
    if (!referenced_lines.count(line)) {
      v.push_back("empty line " + std::to_string(line));
    }
  }
  return v;
}

std::vector<std::string> validate_structure(const StructureGroups& g,
                                            const PlantInstance& inst) {
  std::vector<std::string> v;
  const int n = inst.size();
  std::map<int, int> seen_in;  // component -> section id
  std::set<int> section_ids, line_ids;
  for (const auto& line : g.lines) {
    if (!line_ids.insert(line.id).second) {
      v.push_back("duplicate line id " + std::to_string(line.id));
    }
    if (line.cls < 0 || line.cls >= static_cast<int>(inst.vocab.line_classes.size())) {
      v.push_back("line " + std::to_string(line.id) + " class out of range");
    }
    if (line.sections.empty()) {
      v.push_back("empty line " + std::to_string(line.id));
    }
    for (const auto& sec : line.sections) {
      if (!section_ids.insert(sec.id).second) {
        v.push_back("duplicate section id " + std::to_string(sec.id));
      }
      if (sec.cls < 0 || sec.cls >= static_cast<int>(inst.vocab.section_classes.size())) {
        v.push_back("section " + std::to_string(sec.id) + " class out of range");
      }
      if (sec.components.empty()) {
        v.push_back("empty section " + std::to_string(sec.id));
      }
      for (int comp : sec.components) {
        if (comp < 0 || comp >= n) {
          v.push_back("unknown component id " + std::to_string(comp));
          continue;
        }
        auto [it, fresh] = seen_in.emplace(comp, sec.id);
        if (!fresh) {
          v.push_back("overlap: component " + std::to_string(comp) + " in sections " +
                      std::to_string(it->second) + " and " + std::to_string(sec.id));
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!seen_in.count(i)) {
      v.push_back("partition not covering: component " + std::to_string(i) + " unassigned");
    }
    auto it = g.component_class.find(i);
    if (it == g.component_class.end()) {
      v.push_back("component " + std::to_string(i) + " has no class");
    } else if (it->second < 0 ||
               it->second >= static_cast<int>(inst.vocab.component_classes.size())) {
      v.push_back("component " + std::to_string(i) + " class out of range");
    }
  }
  return v;
}

HierarchicalStructure structure_from_groups(const StructureGroups& g,
                                            const PlantInstance& inst) {
  auto violations = validate_structure(g, inst);
  if (!violations.empty()) {
    throw InvariantError("invalid structure: " + violations.front());
  }
  HierarchicalStructure s;
  s.component_class = g.component_class;
  for (const auto& line : g.lines) {
    s.line_class[line.id] = line.cls;
    for (const auto& sec : line.sections) {
      s.section_class[sec.id] = sec.cls;
      s.line_of[sec.id] = line.id;
      for (int comp : sec.components) s.section_of[comp] = sec.id;
    }
  }
  return s;
}

StructureGroups groups_from_structure(const HierarchicalStructure& s) {
  StructureGroups g;
  g.component_class = s.component_class;
  std::map<int, StructureGroups::Line> lines;
  for (const auto& [sec, line] : s.line_of) {
    auto& l = lines[line];
    l.id = line;
    l.cls = s.line_class.count(line) ? s.line_class.at(line) : 0;
    StructureGroups::Section sc;
    sc.id = sec;
    sc.cls = s.section_class.count(sec) ? s.section_class.at(sec) : 0;
    sc.components = s.section_members(sec);
    l.sections.push_back(std::move(sc));
  }
  for (auto& [_, l] : lines) g.lines.push_back(std::move(l));
  return g;
}

HierarchicalStructure canonicalize(const HierarchicalStructure& s) {
  // Smallest member component id per section / per line drives the numbering.
  std::map<int, int> section_min, line_min;
  for (const auto& [comp, sec] : s.section_of) {
    auto it = section_min.find(sec);
    if (it == section_min.end() || comp < it->second) section_min[sec] = comp;
  }
  for (const auto& [sec, line] : s.line_of) {
    if (!section_min.count(sec)) continue;  // empty section: invalid, skip
    int m = section_min[sec];
    auto it = line_min.find(line);
    if (it == line_min.end() || m < it->second) line_min[line] = m;
  }
  std::vector<std::pair<int, int>> sec_order;  // (min member, old id)
  for (const auto& [sec, m] : section_min) sec_order.push_back({m, sec});
  std::sort(sec_order.begin(), sec_order.end());
  std::vector<std::pair<int, int>> line_order;
  for (const auto& [line, m] : line_min) line_order.push_back({m, line});
  std::sort(line_order.begin(), line_order.end());

  std::map<int, int> sec_new, line_new;
  for (std::size_t i = 0; i < sec_order.size(); ++i) sec_new[sec_order[i].second] = static_cast<int>(i);
  for (std::size_t i = 0; i < line_order.size(); ++i) line_new[line_order[i].second] = static_cast<int>(i);

  HierarchicalStructure out;
  out.component_class = s.component_class;
  for (const auto& [comp, sec] : s.section_of) out.section_of[comp] = sec_new.at(sec);
  for (const auto& [sec, line] : s.line_of) {
    if (!sec_new.count(sec)) continue;
    out.line_of[sec_new.at(sec)] = line_new.at(line);
  }
  for (const auto& [sec, cls] : s.section_class) {
    if (sec_new.count(sec)) out.section_class[sec_new.at(sec)] = cls;
  }
  for (const auto& [line, cls] : s.line_class) {
    if (line_new.count(line)) out.line_class[line_new.at(line)] = cls;
  }
  return out;
}

std::vector<int> canonical_key(const HierarchicalStructure& s) {
  HierarchicalStructure c = canonicalize(s);
  std::vector<int> key;
  key.push_back(static_cast<int>(c.section_of.size()));
  for (const auto& [comp, sec] : c.section_of) {
    key.push_back(sec);
    key.push_back(c.component_class.count(comp) ? c.component_class.at(comp) : -1);
  }
  for (const auto& [sec, line] : c.line_of) {
    key.push_back(line);
    key.push_back(c.section_class.count(sec) ? c.section_class.at(sec) : -1);
  }
  for (const auto& [line, cls] : c.line_class) {
    key.push_back(cls);
  }
  return key;
}

}  // namespace plantrec
