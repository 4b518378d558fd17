#include "plantrec/synth.hpp"

#include <algorithm>

namespace plantrec {

namespace {

// categorical draw over ordered (key, count) pairs
template <typename K>
const K& draw_from_counts(const std::map<K, int>& counts, Rng& rng) {
  int total = 0;
  for (const auto& [_, c] : counts) total += c;
  if (total <= 0) throw InvariantError("sample_structure: empty frequency table");
  int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total)));
  for (const auto& [k, c] : counts) {
    if (pick < c) return k;
    pick -= c;
  }
  return counts.rbegin()->first;  // unreachable
}

int draw_line_type(const std::vector<int>& counts, Rng& rng) {
  int total = 0;
  for (int c : counts) total += c;
  if (total <= 0) throw InvariantError("sample_structure: model has no line observations");
  int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(total)));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (pick < counts[i]) return static_cast<int>(i);
    pick -= counts[i];
  }
  return static_cast<int>(counts.size()) - 1;
}

}  // namespace

SyntheticPlant sample_structure(const PlausibilityModel& model, const ClassVocabularies& vocab,
                                Rng& rng) {
  if (model.vocab != vocab) {
    throw InvariantError("sample_structure: model was fitted on a different vocabulary");
  }
  const int yt = static_cast<int>(vocab.section_classes.size());

  SyntheticPlant plant;
  const int n_lines = 1 + static_cast<int>(rng.uniform_int(3));
  int next_comp = 0, next_sec = 0;
  std::vector<int> comp_class, comp_section, comp_line;

  for (int li = 0; li < n_lines; ++li) {
    int line_type = draw_line_type(model.line_type_counts, rng);
    plant.truth.line_class[li] = line_type;
    const ClassMultiset& section_types =
        draw_from_counts(model.line_tables.at(line_type).counts, rng);
    for (int st : section_types) {
      const ClassMultiset& comp_classes =
          draw_from_counts(model.section_tables.at(st).counts, rng);
      const int sec = next_sec++;
      plant.truth.section_class[sec] = st;
      plant.truth.line_of[sec] = li;
      for (int cc : comp_classes) {
        const int comp = next_comp++;
        plant.truth.section_of[comp] = sec;
        plant.truth.component_class[comp] = cc;
        comp_class.push_back(cc);
        comp_section.push_back(sec);
        comp_line.push_back(li);
      }
    }
  }

  const int n = next_comp;
  const int yc = static_cast<int>(vocab.component_classes.size());
  std::vector<Detection> detections;
  for (int i = 0; i < n; ++i) {
    std::vector<double> probs(yc, 0.0);
    probs[comp_class[i]] = 1.0;
    detections.emplace_back(i, 20.0 + 60.0 * i, 20.0 + 60.0 * comp_line[i], 40.0, 40.0,
                            std::move(probs));
  }
  Eigen::MatrixXd g_conn = Eigen::MatrixXd::Zero(n, n);
  Tensor3 g_rel(n, n, yt);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || comp_section[i] != comp_section[j]) continue;
      g_conn(i, j) = 1.0;
      g_rel.at(i, j, plant.truth.section_class.at(comp_section[i])) = 1.0;
    }
  }
  plant.instance =
      PlantInstance(vocab, std::move(detections), std::move(g_conn), std::move(g_rel));
  return plant;
}

PlantInstance corrupt_instance(const PlantInstance& inst, const NoiseSpec& spec) {
  if (spec.sigma_prob < 0.0 || spec.p_edge_flip < 0.0 || spec.p_edge_flip > 1.0) {
    throw InvariantError("corrupt_instance: noise parameters out of range");
  }
  const int n = inst.size();
  const int yc = static_cast<int>(inst.vocab.component_classes.size());
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  const double w = spec.sigma_prob / (1.0 + spec.sigma_prob);
  const double uniform = 1.0 / yc;

  std::vector<Detection> detections;
  for (const Detection& d : inst.detections) {
    std::vector<double> probs(d.probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c) {
      probs[c] = (1.0 - w) * d.probs[c] + w * uniform;
    }
    detections.emplace_back(d.id, d.x, d.y, d.w, d.h, std::move(probs));
  }

  Rng rng(Rng::derive(spec.seed, "corrupt"));
  Eigen::MatrixXd g_conn = inst.g_conn;
  Tensor3 g_rel = inst.g_rel;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (rng.bernoulli(spec.p_edge_flip)) g_conn(i, j) = 0.5;
      for (int t = 0; t < yt; ++t) {
        if (rng.bernoulli(spec.p_edge_flip)) g_rel.at(i, j, t) = 0.5;
      }
    }
  }
  return PlantInstance(inst.vocab, std::move(detections), std::move(g_conn), std::move(g_rel));
}

}  // namespace plantrec
