#include "plantrec/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

namespace plantrec {

namespace {

std::vector<int> sorted_section_ids(const HierarchicalStructure& s) {
  std::set<int> ids;
  for (const auto& [_, sec] : s.section_of) ids.insert(sec);
  return {ids.begin(), ids.end()};
}

std::vector<int> sorted_line_ids(const HierarchicalStructure& s) {
  std::set<int> ids;
  for (const auto& [_, line] : s.line_of) ids.insert(line);
  return {ids.begin(), ids.end()};
}

void drop_section_if_empty(HierarchicalStructure& s, int sec) {
  for (const auto& [_, other] : s.section_of) {
    if (other == sec) return;
  }
  int line = s.line_of.at(sec);
  s.line_of.erase(sec);
  s.section_class.erase(sec);
  for (const auto& [_, other] : s.line_of) {
    if (other == line) return;
  }
  s.line_class.erase(line);
}

}  // namespace

HierarchicalStructure initial_solution(const PlantInstance& inst, const Rulebook& rulebook,
                                       double threshold) {
  (void)rulebook;
  const int n = inst.size();
  if (n < 1) throw InvariantError("initial_solution: empty instance");
  const int yt = static_cast<int>(inst.vocab.section_classes.size());

  // connected components over the thresholded connectivity graph
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (inst.g_conn(i, j) >= threshold || inst.g_conn(j, i) >= threshold) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::map<int, int> root_to_section;
  HierarchicalStructure s;
  for (int i = 0; i < n; ++i) {
    int r = find(i);
    auto [it, fresh] = root_to_section.emplace(r, static_cast<int>(root_to_section.size()));
    s.section_of[i] = it->second;
    const auto& p = inst.detections[i].probs;
    s.component_class[i] =
        static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  std::map<int, std::vector<int>> members;
  for (const auto& [comp, sec] : s.section_of) members[sec].push_back(comp);
  for (const auto& [sec, comps] : members) {
    int best_t = 0;
    if (comps.size() > 1) {
      double best_mean = -1.0;
      for (int t = 0; t < yt; ++t) {
        double sum = 0.0;
        int pairs = 0;
        for (int i : comps) {
          for (int j : comps) {
            if (i == j) continue;
            sum += inst.g_rel.at(i, j, t);
            ++pairs;
          }
        }
        double mean = sum / pairs;
        if (mean > best_mean) {
          best_mean = mean;
          best_t = t;
        }
      }
    }
    s.section_class[sec] = best_t;
    s.line_of[sec] = 0;
  }
  s.line_class[0] = 0;
  return s;
}

// ---------------------------------------------------------------------------
// moves

Move propose_move(const HierarchicalStructure& s, const PlantInstance& inst, Rng& rng) {
  static constexpr double kWeights[] = {0.30, 0.10, 0.10, 0.15, 0.10, 0.05, 0.10, 0.05, 0.05};
  const int yc = static_cast<int>(inst.vocab.component_classes.size());
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  const int yl = static_cast<int>(inst.vocab.line_classes.size());

  auto sections = sorted_section_ids(s);
  auto lines = sorted_line_ids(s);
  std::map<int, std::vector<int>> members;
  for (const auto& [comp, sec] : s.section_of) members[sec].push_back(comp);
  std::map<int, std::vector<int>> line_members;
  for (const auto& [sec, line] : s.line_of) line_members[line].push_back(sec);

  for (;;) {
    double u = rng.uniform();
    int kind = 0;
    double acc = 0.0;
    for (; kind < 8; ++kind) {
      acc += kWeights[kind];
      if (u < acc) break;
    }
    Move m;
    m.kind = static_cast<MoveKind>(kind);
    switch (m.kind) {
      case MoveKind::ReassignComponent: {
        if (sections.size() < 2) continue;
        std::vector<std::pair<int, int>> options;
        for (const auto& [comp, sec] : s.section_of) {
          for (int target : sections) {
            if (target != sec) options.push_back({comp, target});
          }
        }
        auto [comp, target] = options[rng.uniform_int(options.size())];
        m.a = comp;
        m.b = target;
        return m;
      }
      case MoveKind::SplitSection: {
        std::vector<int> eligible;
        for (int sec : sections) {
          if (members.at(sec).size() >= 2) eligible.push_back(sec);
        }
        if (eligible.empty()) continue;
        m.a = eligible[rng.uniform_int(eligible.size())];
        const auto sz = members.at(m.a).size();
        m.subset = 1 + rng.uniform_int((1ULL << sz) - 2);  // proper, non-empty
        return m;
      }
      case MoveKind::MergeSections: {
        if (sections.size() < 2) continue;
        std::vector<std::pair<int, int>> options;
        for (int a : sections) {
          for (int b : sections) {
            if (a != b) options.push_back({a, b});
          }
        }
        auto [a, b] = options[rng.uniform_int(options.size())];
        m.a = a;
        m.b = b;
        return m;
      }
      case MoveKind::RelabelComponent: {
        m.a = static_cast<int>(rng.uniform_int(s.section_of.size()));
        m.b = static_cast<int>(rng.uniform_int(yc));
        return m;
      }
      case MoveKind::RelabelSection: {
        m.a = sections[rng.uniform_int(sections.size())];
        m.b = static_cast<int>(rng.uniform_int(yt));
        return m;
      }
      case MoveKind::RelabelLine: {
        m.a = lines[rng.uniform_int(lines.size())];
        m.b = static_cast<int>(rng.uniform_int(yl));
        return m;
      }
      case MoveKind::MoveSectionToLine: {
        if (lines.size() < 2) continue;
        std::vector<std::pair<int, int>> options;
        for (const auto& [sec, line] : s.line_of) {
          for (int target : lines) {
            if (target != line) options.push_back({sec, target});
          }
        }
        auto [sec, target] = options[rng.uniform_int(options.size())];
        m.a = sec;
        m.b = target;
        return m;
      }
      case MoveKind::SplitLine: {
        std::vector<int> eligible;
        for (int line : lines) {
          if (line_members.at(line).size() >= 2) eligible.push_back(line);
        }
        if (eligible.empty()) continue;
        m.a = eligible[rng.uniform_int(eligible.size())];
        const auto sz = line_members.at(m.a).size();
        m.subset = 1 + rng.uniform_int((1ULL << sz) - 2);
        return m;
      }
      case MoveKind::MergeLines: {
        if (lines.size() < 2) continue;
        std::vector<std::pair<int, int>> options;
        for (int a : lines) {
          for (int b : lines) {
            if (a != b) options.push_back({a, b});
          }
        }
        auto [a, b] = options[rng.uniform_int(options.size())];
        m.a = a;
        m.b = b;
        return m;
      }
    }
  }
}

HierarchicalStructure apply_move(const HierarchicalStructure& s, const Move& m) {
  HierarchicalStructure out = s;
  switch (m.kind) {
    case MoveKind::ReassignComponent: {
      int old = out.section_of.at(m.a);
      if (old == m.b) break;
      out.section_of[m.a] = m.b;
      drop_section_if_empty(out, old);
      break;
    }
    case MoveKind::SplitSection: {
      std::vector<int> comps;
      for (const auto& [comp, sec] : out.section_of) {
        if (sec == m.a) comps.push_back(comp);
      }
      int fresh = sorted_section_ids(out).back() + 1;
      bool moved_all = true;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        if (m.subset & (1ULL << i)) {
          out.section_of[comps[i]] = fresh;
        } else {
          moved_all = false;
        }
      }
      if (moved_all) {  // degenerate mask: nothing actually split
        for (int c : comps) out.section_of[c] = m.a;
        break;
      }
      out.line_of[fresh] = out.line_of.at(m.a);
      out.section_class[fresh] = out.section_class.at(m.a);
      break;
    }
    case MoveKind::MergeSections: {
      for (auto& [comp, sec] : out.section_of) {
        if (sec == m.b) sec = m.a;
      }
      int line = out.line_of.at(m.b);
      out.line_of.erase(m.b);
      out.section_class.erase(m.b);
      bool line_used = false;
      for (const auto& [_, l] : out.line_of) {
        if (l == line) line_used = true;
      }
      if (!line_used) out.line_class.erase(line);
      break;
    }
    case MoveKind::RelabelComponent:
      out.component_class.at(m.a) = m.b;
      break;
    case MoveKind::RelabelSection:
      out.section_class.at(m.a) = m.b;
      break;
    case MoveKind::RelabelLine:
      out.line_class.at(m.a) = m.b;
      break;
    case MoveKind::MoveSectionToLine: {
      int old = out.line_of.at(m.a);
      if (old == m.b) break;
      out.line_of[m.a] = m.b;
      bool used = false;
      for (const auto& [_, l] : out.line_of) {
        if (l == old) used = true;
      }
      if (!used) out.line_class.erase(old);
      break;
    }
    case MoveKind::SplitLine: {
      std::vector<int> secs;
      for (const auto& [sec, line] : out.line_of) {
        if (line == m.a) secs.push_back(sec);
      }
      int fresh = sorted_line_ids(out).back() + 1;
      bool moved_all = true;
      for (std::size_t i = 0; i < secs.size(); ++i) {
        if (m.subset & (1ULL << i)) {
          out.line_of[secs[i]] = fresh;
        } else {
          moved_all = false;
        }
      }
      if (moved_all) {
        for (int sec : secs) out.line_of[sec] = m.a;
        break;
      }
      out.line_class[fresh] = out.line_class.at(m.a);
      break;
    }
    case MoveKind::MergeLines: {
      for (auto& [sec, line] : out.line_of) {
        if (line == m.b) line = m.a;
      }
      out.line_class.erase(m.b);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// annealing

SearchReport anneal(const PlantInstance& inst, const Rulebook& rulebook,
                    const PlausibilityModel& model, const RunConfig& cfg) {
  SearchReport report;
  report.seed = cfg.seed;
  report.restarts = cfg.annealing.restarts;

  bool have_best = false;
  double best_total = 0.0;
  std::vector<int> best_key;
  HierarchicalStructure best;

  auto offer = [&](const HierarchicalStructure& cand, double total) {
    if (!have_best || total > best_total) {
      best = cand;
      best_total = total;
      best_key = canonical_key(cand);
      have_best = true;
      return;
    }
    if (total == best_total) {
      auto key = canonical_key(cand);
      if (key < best_key) {
        best = cand;
        best_key = std::move(key);
      }
    }
  };

  for (int r = 0; r < cfg.annealing.restarts; ++r) {
    Rng rng(Rng::derive(cfg.seed, "search", static_cast<std::uint64_t>(r)));
    HierarchicalStructure cur = initial_solution(inst, rulebook, 0.5);
    double cur_total = score(cur, inst, rulebook, model, cfg).total;
    offer(cur, cur_total);

    double t = cfg.annealing.t0;
    for (int it = 0; it < cfg.annealing.iters; ++it) {
      Move m = propose_move(cur, inst, rng);
      HierarchicalStructure next = apply_move(cur, m);
      double next_total = score(next, inst, rulebook, model, cfg).total;
      double delta = next_total - cur_total;
      bool accept = delta >= 0.0;
      if (!accept) {
        accept = rng.uniform() < std::exp(delta / t);
      }
      if (accept) {
        cur = std::move(next);
        cur_total = next_total;
        ++report.accepted_moves;
        offer(cur, cur_total);
      }
      t *= cfg.annealing.cooling;
      ++report.iterations;
    }
  }

  report.best = canonicalize(best);
  report.best_score = score(report.best, inst, rulebook, model, cfg);
  return report;
}

// ---------------------------------------------------------------------------
// exact enumeration

namespace {

// Frontier entry: compliance sum phi, partial objective a, and the component
// class vector (concatenated over sections in enumeration order).
struct FrontierEntry {
  double phi = 0.0;
  double a = 0.0;
  std::vector<int> classes;
};

// Keep, per distinct phi, the best a (lex-smallest classes on exact ties),
// then drop entries dominated by a higher-phi entry with a >= theirs. Exact
// for lambda4 >= 0 because the total is nondecreasing in both coordinates.
std::vector<FrontierEntry> skyline(std::vector<FrontierEntry> entries) {
  std::map<double, FrontierEntry> by_phi;
  for (auto& e : entries) {
    auto it = by_phi.find(e.phi);
    if (it == by_phi.end() || e.a > it->second.a ||
        (e.a == it->second.a && e.classes < it->second.classes)) {
      by_phi[e.phi] = std::move(e);
    }
  }
  std::vector<FrontierEntry> kept;
  double best_a = -std::numeric_limits<double>::infinity();
  for (auto it = by_phi.rbegin(); it != by_phi.rend(); ++it) {
    if (it->second.a > best_a) {
      best_a = it->second.a;
      kept.push_back(std::move(it->second));
    }
  }
  std::reverse(kept.begin(), kept.end());  // phi ascending
  return kept;
}

// All restricted-growth strings over n items; each maps item -> group where
// groups are numbered by first appearance (ascending smallest member).
std::vector<std::vector<int>> all_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> rgs(n, 0);
  std::function<void(int, int)> rec = [&](int i, int maxg) {
    if (i == n) {
      out.push_back(rgs);
      return;
    }
    for (int g = 0; g <= maxg + 1; ++g) {
      rgs[i] = g;
      rec(i + 1, std::max(maxg, g));
    }
  };
  if (n > 0) rec(1, 0);
  if (n == 0) out.push_back({});
  return out;
}

std::uint64_t ipow(std::uint64_t b, int e) {
  std::uint64_t r = 1;
  while (e-- > 0) r *= b;
  return r;
}

}  // namespace

SearchReport brute_force(const PlantInstance& inst, const Rulebook& rulebook,
                         const PlausibilityModel& model, const RunConfig& cfg) {
  const int n = inst.size();
  const int yc = static_cast<int>(inst.vocab.component_classes.size());
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  const int yl = static_cast<int>(inst.vocab.line_classes.size());
  if (n < 1 || n > 7) throw InvariantError("brute_force: instance too large (N must be 1..7)");

  // size guards: Stirling / Bell arithmetic bounds the enumeration upfront
  std::vector<std::vector<double>> stirling(n + 1, std::vector<double>(n + 1, 0.0));
  stirling[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    for (int k = 1; k <= i; ++k) {
      stirling[i][k] = stirling[i - 1][k - 1] + k * stirling[i - 1][k];
    }
  }
  double bell_n = 0.0;
  double outer = 0.0;
  for (int k = 1; k <= n; ++k) {
    bell_n += stirling[n][k];
    double bk = 0.0;
    for (int m = 1; m <= k; ++m) bk += stirling[k][m] * std::pow(yl, m);
    outer += stirling[n][k] * std::pow(yt, k) * bk;
  }
  const double inner_work = bell_n * std::pow(yc, n);
  if (outer > 2e7 || inner_work > 1e8) {
    throw InvariantError("brute_force: instance too large for exhaustive enumeration");
  }

  const double eps = cfg.epsilon;
  const double l1 = cfg.lambdas[0], l2 = cfg.lambdas[1], l3 = cfg.lambdas[2];
  const double l4 = cfg.lambdas[3], l5 = cfg.lambdas[4];

  std::vector<std::vector<double>> logp(n, std::vector<double>(yc));
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < yc; ++c) {
      logp[i][c] = std::log(std::max(inst.detections[i].probs[c], eps));
    }
  }

  SearchReport report;
  report.seed = cfg.seed;
  bool have_best = false;
  double best_total = 0.0;
  std::vector<int> best_key;
  HierarchicalStructure best;
  std::uint64_t logical = 0;

  const auto partitions = all_partitions(n);
  std::vector<std::vector<std::vector<int>>> line_partitions_by_k(n + 1);
  for (int k = 1; k <= n; ++k) line_partitions_by_k[k] = all_partitions(k);

  for (const auto& rgs : partitions) {
    const int k = n ? 1 + *std::max_element(rgs.begin(), rgs.end()) : 0;
    std::vector<std::vector<int>> members(k);
    for (int i = 0; i < n; ++i) members[rgs[i]].push_back(i);

    double sq = 0.0;
    for (const auto& ms : members) sq += static_cast<double>(ms.size()) * ms.size();

    // edge evidence depends on (section, section class) only
    std::vector<std::vector<double>> edge(k, std::vector<double>(yt, 0.0));
    for (int s = 0; s < k; ++s) {
      for (int t = 0; t < yt; ++t) {
        double sum = 0.0;
        for (int i : members[s]) {
          for (int j : members[s]) {
            if (i == j) continue;
            sum += std::log(std::max(inst.g_conn(i, j), eps) *
                            std::max(inst.g_rel.at(i, j, t), eps));
          }
        }
        edge[s][t] = sum;
      }
    }

    // per (section, section class): frontier over component class vectors
    std::vector<std::vector<std::vector<FrontierEntry>>> pareto(
        k, std::vector<std::vector<FrontierEntry>>(yt));
    for (int s = 0; s < k; ++s) {
      const auto& comps = members[s];
      const int sz = static_cast<int>(comps.size());
      std::map<ClassMultiset, std::pair<std::vector<double>, std::vector<double>>> ms_info;
      std::vector<std::vector<FrontierEntry>> raw(yt);
      std::vector<int> cls(sz, 0);
      for (;;) {
        double node = 0.0;
        for (int i = 0; i < sz; ++i) node += logp[comps[i]][cls[i]];
        ClassMultiset ms(cls.begin(), cls.end());
        std::sort(ms.begin(), ms.end());
        auto it = ms_info.find(ms);
        if (it == ms_info.end()) {
          std::vector<double> phis(yt), lsec(yt);
          for (int t = 0; t < yt; ++t) {
            phis[t] = phi_section(t, ms, rulebook);
            lsec[t] = std::log(std::max(model.section_prob(t, ms), model.epsilon));
          }
          it = ms_info.emplace(std::move(ms), std::make_pair(std::move(phis), std::move(lsec)))
                   .first;
        }
        for (int t = 0; t < yt; ++t) {
          FrontierEntry e;
          e.phi = it->second.first[t];
          e.a = l1 * node + l2 * edge[s][t] + (l3 / k) * it->second.second[t];
          e.classes = cls;
          raw[t].push_back(std::move(e));
        }
        int d = sz - 1;
        while (d >= 0 && ++cls[d] == yc) cls[d--] = 0;
        if (d < 0) break;
      }
      for (int t = 0; t < yt; ++t) pareto[s][t] = skyline(std::move(raw[t]));
    }

    // section classes, then line partitions and line classes
    std::vector<int> yT(k, 0);
    for (;;) {
      std::vector<FrontierEntry> frontier = {{0.0, 0.0, {}}};
      for (int s = 0; s < k; ++s) {
        std::vector<FrontierEntry> merged;
        for (const auto& state : frontier) {
          for (const auto& e : pareto[s][yT[s]]) {
            FrontierEntry ne;
            ne.phi = state.phi + e.phi;
            ne.a = state.a + e.a;
            ne.classes = state.classes;
            ne.classes.insert(ne.classes.end(), e.classes.begin(), e.classes.end());
            merged.push_back(std::move(ne));
          }
        }
        frontier = skyline(std::move(merged));
      }

      for (const auto& lrgs : line_partitions_by_k[k]) {
        const int mlines = 1 + *std::max_element(lrgs.begin(), lrgs.end());
        std::vector<ClassMultiset> line_ms(mlines);
        for (int s = 0; s < k; ++s) line_ms[lrgs[s]].push_back(yT[s]);
        for (auto& ms : line_ms) std::sort(ms.begin(), ms.end());

        std::vector<int> yL(mlines, 0);
        for (;;) {
          logical += ipow(yc, n);
          double lsum = 0.0, phl = 0.0;
          for (int j = 0; j < mlines; ++j) {
            lsum += std::log(std::max(model.line_prob(yL[j], line_ms[j]), model.epsilon));
            phl += phi_line(yL[j], line_ms[j], rulebook);
          }
          const double line_struct = l3 * lsum / mlines;
          const double reg =
              l5 * (cfg.alphas[0] * k + cfg.alphas[1] * mlines + cfg.alphas[2] * sq);

          for (const auto& entry : frontier) {
            double mean = 0.5 * entry.phi / k + 0.5 * phl / mlines;
            double total = entry.a + line_struct + l4 * std::log(std::max(mean, eps)) - reg;
            if (have_best && total < best_total) continue;

            HierarchicalStructure cand;
            int ci = 0;
            for (int s = 0; s < k; ++s) {
              for (int comp : members[s]) {
                cand.section_of[comp] = s;
                cand.component_class[comp] = entry.classes[ci++];
              }
              cand.section_class[s] = yT[s];
              cand.line_of[s] = lrgs[s];
            }
            for (int j = 0; j < mlines; ++j) cand.line_class[j] = yL[j];

            if (!have_best || total > best_total) {
              best = cand;
              best_total = total;
              best_key = canonical_key(cand);
              have_best = true;
            } else if (total == best_total) {
              auto key = canonical_key(cand);
              if (key < best_key) {
                best = std::move(cand);
                best_key = std::move(key);
              }
            }
          }

          int d = mlines - 1;
          while (d >= 0 && ++yL[d] == yl) yL[d--] = 0;
          if (d < 0) break;
        }
      }

      int d = k - 1;
      while (d >= 0 && ++yT[d] == yt) yT[d--] = 0;
      if (d < 0) break;
    }
  }

  report.best = canonicalize(best);
  report.best_score = score(report.best, inst, rulebook, model, cfg);
  report.iterations = logical;
  report.restarts = 0;
  report.accepted_moves = 0;
  return report;
}

}  // namespace plantrec
