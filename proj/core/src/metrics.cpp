#include "plantrec/metrics.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace plantrec {

namespace {

void check_same_components(const HierarchicalStructure& pred,
                           const HierarchicalStructure& truth) {
  if (pred.section_of.size() != truth.section_of.size()) {
    throw InvariantError("metrics: component id spaces differ");
  }
  for (const auto& [comp, _] : truth.section_of) {
    if (!pred.section_of.count(comp)) {
      throw InvariantError("metrics: component id spaces differ");
    }
  }
}

std::map<int, std::set<int>> sections_as_sets(const HierarchicalStructure& s) {
  std::map<int, std::set<int>> out;
  for (const auto& [comp, sec] : s.section_of) out[sec].insert(comp);
  return out;
}

// best-match predicted section id for a true member set; ties to lower id
std::pair<int, std::size_t> best_match(const std::set<int>& true_members,
                                       const std::map<int, std::set<int>>& pred_sections) {
  int best_id = -1;
  std::size_t best_overlap = 0;
  for (const auto& [id, members] : pred_sections) {
    std::size_t overlap = 0;
    for (int c : true_members) overlap += members.count(c);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best_id = id;
    } else if (best_id < 0) {
      best_id = id;
    }
  }
  return {best_id, best_overlap};
}

}  // namespace

double component_accuracy(const HierarchicalStructure& pred, const HierarchicalStructure& truth) {
  check_same_components(pred, truth);
  if (truth.section_of.empty()) return 1.0;
  std::size_t correct = 0;
  for (const auto& [comp, cls] : truth.component_class) {
    auto it = pred.component_class.find(comp);
    if (it != pred.component_class.end() && it->second == cls) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.component_class.size());
}

double section_score(const HierarchicalStructure& pred, const HierarchicalStructure& truth) {
  check_same_components(pred, truth);
  auto pred_sections = sections_as_sets(pred);
  auto true_sections = sections_as_sets(truth);
  double weighted = 0.0, weight = 0.0;
  for (const auto& [_, members] : true_sections) {
    auto [best_id, overlap] = best_match(members, pred_sections);
    (void)best_id;
    double frac = static_cast<double>(overlap) / static_cast<double>(members.size());
    weighted += frac * static_cast<double>(members.size());
    weight += static_cast<double>(members.size());
  }
  return weight > 0.0 ? weighted / weight : 1.0;
}

std::optional<double> typed_section_accuracy(const HierarchicalStructure& pred,
                                             const HierarchicalStructure& truth,
                                             int line_type) {
  check_same_components(pred, truth);
  auto pred_sections = sections_as_sets(pred);
  auto true_sections = sections_as_sets(truth);
  int considered = 0, identified = 0;
  for (const auto& [sec, members] : true_sections) {
    int line = truth.line_of.at(sec);
    if (truth.line_class.at(line) != line_type) continue;
    ++considered;
    auto [best_id, overlap] = best_match(members, pred_sections);
    if (best_id < 0) continue;
    double frac = static_cast<double>(overlap) / static_cast<double>(members.size());
    if (frac >= 0.5 && pred.section_class.at(best_id) == truth.section_class.at(sec)) {
      ++identified;
    }
  }
  if (considered == 0) return std::nullopt;
  return static_cast<double>(identified) / static_cast<double>(considered);
}

std::vector<std::tuple<int, int, int>> truth_triplets(const HierarchicalStructure& truth) {
  std::vector<std::tuple<int, int, int>> out;
  auto sections = sections_as_sets(truth);
  for (const auto& [sec, members] : sections) {
    int cls = truth.section_class.at(sec);
    for (int i : members) {
      for (int j : members) {
        if (i != j) out.push_back({i, j, cls});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double recall_at_k(const Tensor3& g_rel_pred,
                   const std::vector<std::tuple<int, int, int>>& truth, int k) {
  if (truth.empty()) throw InvariantError("recall_at_k: empty truth set");
  struct Entry {
    double score;
    int i, j, t;
  };
  std::vector<Entry> entries;
  entries.reserve(g_rel_pred.size());
  for (int i = 0; i < g_rel_pred.d0; ++i) {
    for (int j = 0; j < g_rel_pred.d1; ++j) {
      for (int t = 0; t < g_rel_pred.d2; ++t) {
        entries.push_back({g_rel_pred.at(i, j, t), i, j, t});
      }
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.score > b.score;  // stable: ties keep (i, j, t) index order
  });
  std::set<std::tuple<int, int, int>> truth_set(truth.begin(), truth.end());
  std::size_t hits = 0;
  const std::size_t top = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < top; ++r) {
    if (truth_set.count({entries[r].i, entries[r].j, entries[r].t})) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth_set.size());
}

std::string serialize_eval_report(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["component_accuracy"] = report.component_accuracy;
  j["section_score"] = report.section_score;
  if (report.regulation_section_acc) {
    j["regulation_section_acc"] = *report.regulation_section_acc;
  } else {
    j["regulation_section_acc"] = nullptr;
  }
  if (report.measurement_section_acc) {
    j["measurement_section_acc"] = *report.measurement_section_acc;
  } else {
    j["measurement_section_acc"] = nullptr;
  }
  nlohmann::ordered_json rk;
  for (const auto& [k, v] : report.recall_at_k) rk["R@" + std::to_string(k)] = v;
  j["recall_at_k"] = std::move(rk);
  return j.dump(2) + "\n";
}

}  // namespace plantrec
