#include "plantrec/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace plantrec {

using ojson = nlohmann::ordered_json;

std::vector<std::pair<int, ClassMultiset>> section_compositions(const HierarchicalStructure& s) {
  std::map<int, ClassMultiset> by_section;
  for (const auto& [comp, sec] : s.section_of) {
    by_section[sec].push_back(s.component_class.at(comp));
  }
  std::vector<std::pair<int, ClassMultiset>> out;
  for (auto& [sec, ms] : by_section) {
    std::sort(ms.begin(), ms.end());
    out.push_back({sec, std::move(ms)});
  }
  return out;
}

std::vector<std::pair<int, ClassMultiset>> line_compositions(const HierarchicalStructure& s) {
  std::set<int> nonempty;
  for (const auto& [comp, sec] : s.section_of) nonempty.insert(sec);
  std::map<int, ClassMultiset> by_line;
  for (const auto& [sec, line] : s.line_of) {
    if (!nonempty.count(sec)) continue;
    by_line[line].push_back(s.section_class.at(sec));
  }
  std::vector<std::pair<int, ClassMultiset>> out;
  for (auto& [line, ms] : by_line) {
    std::sort(ms.begin(), ms.end());
    out.push_back({line, std::move(ms)});
  }
  return out;
}

double e_node(const HierarchicalStructure& s, const PlantInstance& inst, double eps) {
  double sum = 0.0;
  for (const auto& [comp, cls] : s.component_class) {
    sum += std::log(std::max(inst.detections.at(comp).probs.at(cls), eps));
  }
  return sum;
}

double e_edge(const HierarchicalStructure& s, const PlantInstance& inst, double eps) {
  std::map<int, std::vector<int>> members;
  for (const auto& [comp, sec] : s.section_of) members[sec].push_back(comp);
  double sum = 0.0;
  for (const auto& [sec, comps] : members) {
    if (comps.size() < 2) continue;
    const int t = s.section_class.at(sec);
    for (int i : comps) {
      for (int j : comps) {
        if (i == j) continue;
        sum += std::log(std::max(inst.g_conn(i, j), eps) *
                        std::max(inst.g_rel.at(i, j, t), eps));
      }
    }
  }
  return sum;
}

namespace {

double coverage_minus_extras(const ClassMultiset& present, const std::vector<int>& mandatory,
                             const std::vector<int>& optional, bool multiplicity_aware) {
  double coverage = 1.0;
  if (!mandatory.empty()) {
    if (multiplicity_aware) {
      std::size_t covered = 0, mi = 0, pi = 0;
      // both sorted; count multiset intersection size
      while (mi < mandatory.size() && pi < present.size()) {
        if (mandatory[mi] == present[pi]) {
          ++covered; ++mi; ++pi;
        } else if (mandatory[mi] < present[pi]) {
          ++mi;
        } else {
          ++pi;
        }
      }
      coverage = static_cast<double>(covered) / static_cast<double>(mandatory.size());
    } else {
      std::size_t covered = 0;
      for (int m : mandatory) {
        if (std::binary_search(present.begin(), present.end(), m)) ++covered;
      }
      coverage = static_cast<double>(covered) / static_cast<double>(mandatory.size());
    }
  }
  std::set<int> distinct(present.begin(), present.end());
  int extras = 0;
  for (int c : distinct) {
    bool allowed = std::binary_search(mandatory.begin(), mandatory.end(), c) ||
                   std::binary_search(optional.begin(), optional.end(), c);
    if (!allowed) ++extras;
  }
  return std::clamp(coverage - 0.1 * extras, 0.0, 1.0);
}

}  // namespace

double phi_section(int section_class, const ClassMultiset& component_classes,
                   const Rulebook& rulebook) {
  if (section_class < 0) throw InvariantError("phi_section: unknown section class");
  auto it = rulebook.section_rules.find(section_class);
  if (it == rulebook.section_rules.end()) return 1.0;
  return coverage_minus_extras(component_classes, it->second.mandatory, it->second.optional,
                               /*multiplicity_aware=*/false);
}

double phi_line(int line_class, const ClassMultiset& section_classes,
                const Rulebook& rulebook) {
  if (line_class < 0) throw InvariantError("phi_line: unknown line class");
  auto it = rulebook.line_rules.find(line_class);
  if (it == rulebook.line_rules.end()) return 1.0;
  return coverage_minus_extras(section_classes, it->second.min_sections, {},
                               /*multiplicity_aware=*/true);
}

double e_norm(const HierarchicalStructure& s, const PlantInstance& inst,
              const Rulebook& rulebook, double eps) {
  (void)inst;
  auto sections = section_compositions(s);
  auto lines = line_compositions(s);
  if (sections.empty() || lines.empty()) {
    throw InvariantError("e_norm: structure has no sections or no lines");
  }
  double phi_t_sum = 0.0;
  for (const auto& [sec, ms] : sections) {
    phi_t_sum += phi_section(s.section_class.at(sec), ms, rulebook);
  }
  double phi_l_sum = 0.0;
  for (const auto& [line, ms] : lines) {
    phi_l_sum += phi_line(s.line_class.at(line), ms, rulebook);
  }
  double mean = 0.5 * phi_t_sum / static_cast<double>(sections.size()) +
                0.5 * phi_l_sum / static_cast<double>(lines.size());
  return -std::log(std::max(mean, eps));
}

double e_reg(const HierarchicalStructure& s, const std::array<double, 3>& alphas) {
  std::map<int, int> section_sizes;
  for (const auto& [comp, sec] : s.section_of) ++section_sizes[sec];
  std::set<int> lines;
  for (const auto& [sec, line] : s.line_of) {
    if (section_sizes.count(sec)) lines.insert(line);
  }
  double sq = 0.0;
  for (const auto& [sec, size] : section_sizes) sq += static_cast<double>(size) * size;
  return alphas[0] * static_cast<double>(section_sizes.size()) +
         alphas[1] * static_cast<double>(lines.size()) + alphas[2] * sq;
}

// ---------------------------------------------------------------------------
// plausibility model

namespace {

void finalize_table(FreqTable& t, double smoothing) {
  const double v = static_cast<double>(t.counts.size()) + 1.0;
  const double denom = static_cast<double>(t.total) + smoothing * v;
  t.probs.clear();
  for (const auto& [ms, c] : t.counts) {
    t.probs[ms] = (static_cast<double>(c) + smoothing) / denom;
  }
  t.unseen = smoothing / denom;
}

}  // namespace

double PlausibilityModel::section_prob(int section_class, const ClassMultiset& ms) const {
  const FreqTable& t = section_tables.at(section_class);
  auto it = t.probs.find(ms);
  return it == t.probs.end() ? t.unseen : it->second;
}

double PlausibilityModel::line_prob(int line_class, const ClassMultiset& ms) const {
  const FreqTable& t = line_tables.at(line_class);
  auto it = t.probs.find(ms);
  return it == t.probs.end() ? t.unseen : it->second;
}

PlausibilityModel fit_plausibility(const std::vector<RegistryRecord>& records,
                                   const ClassVocabularies& vocab, double smoothing,
                                   double epsilon) {
  if (records.empty()) throw InvariantError("fit_plausibility: empty registry");
  PlausibilityModel m;
  m.vocab = vocab;
  m.smoothing = smoothing;
  m.epsilon = epsilon;
  m.section_tables.resize(vocab.section_classes.size());
  m.line_tables.resize(vocab.line_classes.size());
  m.line_type_counts.assign(vocab.line_classes.size(), 0);

  for (const auto& rec : records) {
    for (const auto& line : rec.lines) {
      ++m.line_type_counts.at(line.line_type);
      ClassMultiset line_ms;
      for (const auto& sec : line.sections) {
        line_ms.push_back(sec.section_type);
        FreqTable& st = m.section_tables.at(sec.section_type);
        ++st.counts[sec.component_classes];
        ++st.total;
      }
      std::sort(line_ms.begin(), line_ms.end());
      FreqTable& lt = m.line_tables.at(line.line_type);
      ++lt.counts[line_ms];
      ++lt.total;
    }
  }
  for (auto& t : m.section_tables) finalize_table(t, smoothing);
  for (auto& t : m.line_tables) finalize_table(t, smoothing);
  return m;
}

double e_struct(const HierarchicalStructure& s, const PlantInstance& inst,
                const PlausibilityModel& model) {
  (void)inst;
  auto sections = section_compositions(s);
  auto lines = line_compositions(s);
  if (sections.empty() || lines.empty()) {
    throw InvariantError("e_struct: structure has no sections or no lines");
  }
  double sec_sum = 0.0;
  for (const auto& [sec, ms] : sections) {
    sec_sum += std::log(std::max(model.section_prob(s.section_class.at(sec), ms), model.epsilon));
  }
  double line_sum = 0.0;
  for (const auto& [line, ms] : lines) {
    line_sum += std::log(std::max(model.line_prob(s.line_class.at(line), ms), model.epsilon));
  }
  return sec_sum / static_cast<double>(sections.size()) +
         line_sum / static_cast<double>(lines.size());
}

EnergyBreakdown score(const HierarchicalStructure& s, const PlantInstance& inst,
                      const Rulebook& rulebook, const PlausibilityModel& model,
                      const RunConfig& cfg) {
  EnergyBreakdown b;
  b.e_node = e_node(s, inst, cfg.epsilon);
  b.e_edge = e_edge(s, inst, cfg.epsilon);
  b.e_struct = e_struct(s, inst, model);
  b.e_norm = e_norm(s, inst, rulebook, cfg.epsilon);
  b.e_reg = e_reg(s, cfg.alphas);
  b.total = cfg.lambdas[0] * b.e_node + cfg.lambdas[1] * b.e_edge +
            cfg.lambdas[2] * b.e_struct - cfg.lambdas[3] * b.e_norm -
            cfg.lambdas[4] * b.e_reg;
  return b;
}

// ---------------------------------------------------------------------------
// model document

namespace {

ojson table_to_json(const FreqTable& t, const std::vector<std::string>& labels) {
  ojson entries = ojson::array();
  for (const auto& [ms, c] : t.counts) {
    ojson e;
    ojson key = ojson::array();
    for (int idx : ms) key.push_back(labels.at(idx));
    e["multiset"] = std::move(key);
    e["count"] = c;
    e["p"] = t.probs.at(ms);
    entries.push_back(std::move(e));
  }
  ojson j;
  j["total"] = t.total;
  j["entries"] = std::move(entries);
  j["unseen"] = t.unseen;
  return j;
}

FreqTable table_from_json(const ojson& j, const std::map<std::string, int>& index,
                          const std::string& path) {
  FreqTable t;
  if (!j.contains("total") || !j.contains("entries") || !j.contains("unseen")) {
    throw ParseError(path, "missing table field");
  }
  t.total = j["total"].get<int>();
  t.unseen = j["unseen"].get<double>();
  for (std::size_t i = 0; i < j["entries"].size(); ++i) {
    const auto& e = j["entries"][i];
    std::string ep = path + ".entries[" + std::to_string(i) + "]";
    ClassMultiset ms;
    for (const auto& label : e["multiset"]) {
      auto it = index.find(label.get<std::string>());
      if (it == index.end()) {
        throw ParseError(ep, "unknown class label '" + label.get<std::string>() + "'");
      }
      ms.push_back(it->second);
    }
    std::sort(ms.begin(), ms.end());
    t.counts[ms] = e["count"].get<int>();
    t.probs[ms] = e["p"].get<double>();
  }
  return t;
}

}  // namespace

std::string serialize_plausibility(const PlausibilityModel& model) {
  ojson j;
  j["component_classes"] = ojson::array();
  for (const auto& [t, s] : model.vocab.component_classes) {
    j["component_classes"].push_back(ojson::array({t, s}));
  }
  j["section_classes"] = model.vocab.section_classes;
  j["line_classes"] = model.vocab.line_classes;
  j["smoothing"] = model.smoothing;
  j["epsilon"] = model.epsilon;

  std::vector<std::string> comp_labels;
  for (const auto& cc : model.vocab.component_classes) {
    comp_labels.push_back(format_component_class(cc));
  }
  ojson sec = ojson::array();
  for (std::size_t t = 0; t < model.section_tables.size(); ++t) {
    ojson e = table_to_json(model.section_tables[t], comp_labels);
    ojson wrapped;
    wrapped["class"] = model.vocab.section_classes[t];
    wrapped.update(e);
    sec.push_back(std::move(wrapped));
  }
  j["section_tables"] = std::move(sec);
  ojson lin = ojson::array();
  for (std::size_t t = 0; t < model.line_tables.size(); ++t) {
    ojson e = table_to_json(model.line_tables[t], model.vocab.section_classes);
    ojson wrapped;
    wrapped["class"] = model.vocab.line_classes[t];
    wrapped.update(e);
    lin.push_back(std::move(wrapped));
  }
  j["line_tables"] = std::move(lin);
  j["line_type_counts"] = model.line_type_counts;
  return j.dump(2) + "\n";
}

PlausibilityModel parse_plausibility(const std::string& bytes) {
  ojson j = ojson::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw ParseError("model", "not valid JSON");
  PlausibilityModel m;
  m.vocab = parse_vocab(bytes);
  m.smoothing = j.value("smoothing", 1.0);
  m.epsilon = j.value("epsilon", 1e-9);

  std::map<std::string, int> comp_index, sec_index;
  for (std::size_t i = 0; i < m.vocab.component_classes.size(); ++i) {
    comp_index[format_component_class(m.vocab.component_classes[i])] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < m.vocab.section_classes.size(); ++i) {
    sec_index[m.vocab.section_classes[i]] = static_cast<int>(i);
  }

  if (!j.contains("section_tables") || !j.contains("line_tables")) {
    throw ParseError("model", "missing tables");
  }
  m.section_tables.resize(m.vocab.section_classes.size());
  for (std::size_t i = 0; i < j["section_tables"].size(); ++i) {
    const auto& e = j["section_tables"][i];
    std::string path = "model.section_tables[" + std::to_string(i) + "]";
    int t = -1;
    if (e.contains("class")) {
      auto it = sec_index.find(e["class"].get<std::string>());
      if (it != sec_index.end()) t = it->second;
    }
    if (t < 0) throw ParseError(path, "unknown section class");
    m.section_tables[t] = table_from_json(e, comp_index, path);
  }
  m.line_tables.resize(m.vocab.line_classes.size());
  for (std::size_t i = 0; i < j["line_tables"].size(); ++i) {
    const auto& e = j["line_tables"][i];
    std::string path = "model.line_tables[" + std::to_string(i) + "]";
    int t = -1;
    if (e.contains("class")) {
      int li = m.vocab.line_index(e["class"].get<std::string>());
      if (li >= 0) t = li;
    }
    if (t < 0) throw ParseError(path, "unknown line class");
    m.line_tables[t] = table_from_json(e, sec_index, path);
  }
  if (j.contains("line_type_counts")) {
    m.line_type_counts = j["line_type_counts"].get<std::vector<int>>();
  }
  m.line_type_counts.resize(m.vocab.line_classes.size(), 0);
  return m;
}

}  // namespace plantrec
