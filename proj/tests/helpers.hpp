#pragma once

// Shared fixtures and independent oracles for the test suite. Everything in
// here recomputes expectations from first principles; nothing calls back
// into the implementation path under test.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "plantrec/fusion.hpp"
#include "plantrec/ingest.hpp"
#include "plantrec/model.hpp"
#include "plantrec/objective.hpp"
#include "plantrec/rng.hpp"

namespace testutil {

using namespace plantrec;

inline std::string fixture_path(const std::string& name) {
  return std::string(PLANTREC_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ClassVocabularies tiny_vocab(int yc = 4, int yt = 3, int yl = 2) {
  std::vector<ComponentClass> cc;
  const char* names[] = {"filter", "valve", "meter", "regulator", "heater", "sensor"};
  for (int i = 0; i < yc; ++i) cc.push_back({names[i % 6], "t" + std::to_string(i)});
  std::vector<std::string> sc;
  const char* secs[] = {"filtering", "metering", "reduction", "preheat"};
  for (int i = 0; i < yt; ++i) sc.push_back(secs[i % 4]);
  std::vector<std::string> lc = {"measurement", "regulation"};
  lc.resize(yl, "extra");
  return ClassVocabularies(cc, sc, lc);
}

/// Uniform-random instance with normalized probs and [0,1] graphs.
inline PlantInstance random_instance(int n, const ClassVocabularies& vocab, Rng& rng) {
  const int yc = static_cast<int>(vocab.component_classes.size());
  const int yt = static_cast<int>(vocab.section_classes.size());
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    std::vector<double> p(yc);
    double sum = 0.0;
    for (double& v : p) {
      v = 0.05 + rng.uniform();
      sum += v;
    }
    for (double& v : p) v /= sum;
    dets.emplace_back(i, 10.0 * i, 5.0, 8.0, 6.0, std::move(p));
  }
  Eigen::MatrixXd gc(n, n);
  Tensor3 gr(n, n, yt);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      gc(i, j) = i == j ? 0.0 : rng.uniform();
      for (int t = 0; t < yt; ++t) gr.at(i, j, t) = rng.uniform();
    }
  }
  return PlantInstance(vocab, std::move(dets), std::move(gc), std::move(gr));
}

/// Random but always-valid structure over n components.
inline HierarchicalStructure random_structure(int n, const ClassVocabularies& vocab, Rng& rng) {
  const int yc = static_cast<int>(vocab.component_classes.size());
  const int yt = static_cast<int>(vocab.section_classes.size());
  const int yl = static_cast<int>(vocab.line_classes.size());
  HierarchicalStructure s;
  int n_sections = 1 + static_cast<int>(rng.uniform_int(n));
  for (int i = 0; i < n; ++i) {
    int sec = i < n_sections ? i : static_cast<int>(rng.uniform_int(n_sections));
    s.section_of[i] = sec;
    s.component_class[i] = static_cast<int>(rng.uniform_int(yc));
  }
  int n_lines = 1 + static_cast<int>(rng.uniform_int(n_sections));
  for (int k = 0; k < n_sections; ++k) {
    s.section_class[k] = static_cast<int>(rng.uniform_int(yt));
    s.line_of[k] = k < n_lines ? k : static_cast<int>(rng.uniform_int(n_lines));
  }
  std::set<int> used_lines;
  for (const auto& [_, l] : s.line_of) used_lines.insert(l);
  for (int l : used_lines) s.line_class[l] = static_cast<int>(rng.uniform_int(yl));
  return s;
}

/// Rulebook + registry pair for randomized optimizer tests.
inline Rulebook random_rulebook(const ClassVocabularies& vocab, Rng& rng) {
  Rulebook rb;
  const int yc = static_cast<int>(vocab.component_classes.size());
  for (std::size_t t = 0; t < vocab.section_classes.size(); ++t) {
    SectionRule rule;
    for (int c = 0; c < yc; ++c) {
      double u = rng.uniform();
      if (u < 0.3) rule.mandatory.push_back(c);
      else if (u < 0.6) rule.optional.push_back(c);
    }
    rb.section_rules[static_cast<int>(t)] = rule;
  }
  for (std::size_t l = 0; l < vocab.line_classes.size(); ++l) {
    LineRule rule;
    for (std::size_t t = 0; t < vocab.section_classes.size(); ++t) {
      if (rng.uniform() < 0.4) rule.min_sections.push_back(static_cast<int>(t));
    }
    rb.line_rules[static_cast<int>(l)] = rule;
  }
  for (std::size_t c = 0; c < vocab.component_classes.size(); ++c) {
    CatalogueEntry e;
    e.class_index = static_cast<int>(c);
    rb.catalogue[vocab.component_classes[c]] = e;
  }
  return rb;
}

inline std::vector<RegistryRecord> random_registry(const ClassVocabularies& vocab, Rng& rng,
                                                   int n_records = 4) {
  const int yc = static_cast<int>(vocab.component_classes.size());
  const int yt = static_cast<int>(vocab.section_classes.size());
  const int yl = static_cast<int>(vocab.line_classes.size());
  std::vector<RegistryRecord> out;
  for (int r = 0; r < n_records; ++r) {
    RegistryRecord rec;
    rec.plant_id = "P" + std::to_string(r);
    int n_lines = 1 + static_cast<int>(rng.uniform_int(2));
    for (int l = 0; l < n_lines; ++l) {
      RegistryLine line;
      line.line_type = static_cast<int>(rng.uniform_int(yl));
      int n_secs = 1 + static_cast<int>(rng.uniform_int(2));
      for (int sidx = 0; sidx < n_secs; ++sidx) {
        RegistrySection sec;
        sec.section_type = static_cast<int>(rng.uniform_int(yt));
        int sz = 1 + static_cast<int>(rng.uniform_int(3));
        for (int c = 0; c < sz; ++c) {
          sec.component_classes.push_back(static_cast<int>(rng.uniform_int(yc)));
        }
        std::sort(sec.component_classes.begin(), sec.component_classes.end());
        line.sections.push_back(std::move(sec));
      }
      rec.lines.push_back(std::move(line));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// --------------------------------------------------------------------------
// independent oracles

/// Exhaustive matching oracle: recursive enumeration of every feasible
/// partial matching; maximum cardinality, then minimum total distance, then
/// lexicographically smallest pair list.
struct MatchOracleResult {
  int count = 0;
  double total = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

inline void match_oracle_rec(const std::vector<std::vector<double>>& dist, double cutoff,
                             std::size_t code, std::vector<int>& det_used,
                             std::vector<std::pair<int, int>>& current, double total,
                             MatchOracleResult& best) {
  if (code == dist.size()) {
    int count = static_cast<int>(current.size());
    // recompute totals by summing in code-index order so the comparison with
    // the implementation is bit-stable
    double t = 0.0;
    for (const auto& [c, d] : current) t += dist[c][d];
    bool better = count > best.count || (count == best.count && t < best.total) ||
                  (count == best.count && t == best.total && current < best.pairs);
    if (better) best = {count, t, current};
    return;
  }
  for (std::size_t d = 0; d < det_used.size(); ++d) {
    if (det_used[d] || dist[code][d] > cutoff) continue;
    det_used[d] = 1;
    current.push_back({static_cast<int>(code), static_cast<int>(d)});
    match_oracle_rec(dist, cutoff, code + 1, det_used, current, total + dist[code][d], best);
    current.pop_back();
    det_used[d] = 0;
  }
  match_oracle_rec(dist, cutoff, code + 1, det_used, current, total, best);
}

inline MatchOracleResult match_oracle(const std::vector<OcrCode>& codes,
                                      const PlantInstance& inst, double cutoff_factor) {
  std::vector<double> diags;
  for (const auto& d : inst.detections) {
    diags.push_back(std::sqrt(d.w * d.w + d.h * d.h));
  }
  std::sort(diags.begin(), diags.end());
  double median = diags.empty()
                      ? 0.0
                      : (diags.size() % 2 ? diags[diags.size() / 2]
                                          : 0.5 * (diags[diags.size() / 2 - 1] +
                                                   diags[diags.size() / 2]));
  double cutoff = cutoff_factor * median;
  std::vector<std::vector<double>> dist(codes.size(),
                                        std::vector<double>(inst.detections.size()));
  for (std::size_t c = 0; c < codes.size(); ++c) {
    for (std::size_t d = 0; d < inst.detections.size(); ++d) {
      double dx = codes[c].x - (inst.detections[d].x + inst.detections[d].w / 2);
      double dy = codes[c].y - (inst.detections[d].y + inst.detections[d].h / 2);
      dist[c][d] = std::sqrt(dx * dx + dy * dy);
    }
  }
  MatchOracleResult best;
  best.count = -1;
  std::vector<int> det_used(inst.detections.size(), 0);
  std::vector<std::pair<int, int>> current;
  match_oracle_rec(dist, cutoff, 0, det_used, current, 0.0, best);
  return best;
}

/// Naive term-by-term objective, written directly from the energy formulas
/// with plain loops over explicit section/line member sets.
inline double naive_total(const HierarchicalStructure& s, const PlantInstance& inst,
                          const Rulebook& rb, const PlausibilityModel& model,
                          const RunConfig& cfg) {
  std::map<int, std::vector<int>> secs;
  for (const auto& [c, k] : s.section_of) secs[k].push_back(c);
  std::map<int, std::vector<int>> lines;
  for (const auto& [k, l] : s.line_of) {
    if (secs.count(k)) lines[l].push_back(k);
  }

  double en = 0.0;
  for (const auto& [c, cls] : s.component_class) {
    en += std::log(std::max(inst.detections[c].probs[cls], cfg.epsilon));
  }
  double ee = 0.0;
  for (const auto& [k, mem] : secs) {
    for (int i : mem) {
      for (int j : mem) {
        if (i == j) continue;
        ee += std::log(std::max(inst.g_conn(i, j), cfg.epsilon) *
                       std::max(inst.g_rel.at(i, j, s.section_class.at(k)), cfg.epsilon));
      }
    }
  }
  double es_sec = 0.0;
  double phi_t = 0.0;
  for (const auto& [k, mem] : secs) {
    ClassMultiset ms;
    for (int c : mem) ms.push_back(s.component_class.at(c));
    std::sort(ms.begin(), ms.end());
    es_sec += std::log(std::max(model.section_prob(s.section_class.at(k), ms), model.epsilon));
    phi_t += phi_section(s.section_class.at(k), ms, rb);
  }
  double es_line = 0.0;
  double phi_l = 0.0;
  for (const auto& [l, ks] : lines) {
    ClassMultiset ms;
    for (int k : ks) ms.push_back(s.section_class.at(k));
    std::sort(ms.begin(), ms.end());
    es_line += std::log(std::max(model.line_prob(s.line_class.at(l), ms), model.epsilon));
    phi_l += phi_line(s.line_class.at(l), ms, rb);
  }
  double es = es_sec / secs.size() + es_line / lines.size();
  double mean = 0.5 * phi_t / secs.size() + 0.5 * phi_l / lines.size();
  double enorm = -std::log(std::max(mean, cfg.epsilon));
  double sq = 0.0;
  for (const auto& [k, mem] : secs) sq += double(mem.size()) * mem.size();
  double ereg = cfg.alphas[0] * secs.size() + cfg.alphas[1] * lines.size() + cfg.alphas[2] * sq;
  return cfg.lambdas[0] * en + cfg.lambdas[1] * ee + cfg.lambdas[2] * es -
         cfg.lambdas[3] * enorm - cfg.lambdas[4] * ereg;
}

/// Exhaustive argmax by explicit enumeration of every (T, L, y); usable only
/// for very small instances. Independent of the production brute force.
inline std::pair<double, std::uint64_t> naive_opt(const PlantInstance& inst, const Rulebook& rb,
                                                  const PlausibilityModel& model,
                                                  const RunConfig& cfg) {
  const int n = inst.size();
  const int yc = static_cast<int>(inst.vocab.component_classes.size());
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  const int yl = static_cast<int>(inst.vocab.line_classes.size());

  std::vector<std::vector<int>> comp_parts;
  std::vector<int> rgs(n, 0);
  std::function<void(int, int)> rec = [&](int i, int maxg) {
    if (i == n) {
      comp_parts.push_back(rgs);
      return;
    }
    for (int g = 0; g <= maxg + 1; ++g) {
      rgs[i] = g;
      rec(i + 1, std::max(maxg, g));
    }
  };
  rec(1, 0);

  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t candidates = 0;
  for (const auto& part : comp_parts) {
    int k = 1 + *std::max_element(part.begin(), part.end());
    std::vector<std::vector<int>> line_parts;
    std::vector<int> lrgs(k, 0);
    std::function<void(int, int)> lrec = [&](int i, int maxg) {
      if (i == k) {
        line_parts.push_back(lrgs);
        return;
      }
      for (int g = 0; g <= maxg + 1; ++g) {
        lrgs[i] = g;
        lrec(i + 1, std::max(maxg, g));
      }
    };
    lrec(1, 0);

    std::vector<int> ycls(n, 0);
    for (;;) {  // component classes
      std::vector<int> tcls(k, 0);
      for (;;) {  // section classes
        for (const auto& lpart : line_parts) {
          int m = 1 + *std::max_element(lpart.begin(), lpart.end());
          std::vector<int> lcls(m, 0);
          for (;;) {  // line classes
            ++candidates;
            HierarchicalStructure s;
            for (int i = 0; i < n; ++i) {
              s.section_of[i] = part[i];
              s.component_class[i] = ycls[i];
            }
            for (int q = 0; q < k; ++q) {
              s.section_class[q] = tcls[q];
              s.line_of[q] = lpart[q];
            }
            for (int l = 0; l < m; ++l) s.line_class[l] = lcls[l];
            best = std::max(best, naive_total(s, inst, rb, model, cfg));
            int d = m - 1;
            while (d >= 0 && ++lcls[d] == yl) lcls[d--] = 0;
            if (d < 0) break;
          }
        }
        int d = k - 1;
        while (d >= 0 && ++tcls[d] == yt) tcls[d--] = 0;
        if (d < 0) break;
      }
      int d = n - 1;
      while (d >= 0 && ++ycls[d] == yc) ycls[d--] = 0;
      if (d < 0) break;
    }
  }
  return {best, candidates};
}

}  // namespace testutil
