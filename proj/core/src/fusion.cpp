#include "plantrec/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace plantrec {

namespace {

double median_bbox_diagonal(const PlantInstance& inst) {
  std::vector<double> diags;
  diags.reserve(inst.detections.size());
  for (const auto& d : inst.detections) diags.push_back(d.diagonal());
  if (diags.empty()) return 0.0;
  std::sort(diags.begin(), diags.end());
  std::size_t n = diags.size();
  return n % 2 ? diags[n / 2] : 0.5 * (diags[n / 2 - 1] + diags[n / 2]);
}

struct Candidate {
  int count = 0;
  double total = 0.0;
  std::vector<std::pair<int, int>> pairs;  // (code index, detection id)

  // more pairs, then smaller total, then lexicographically smaller pair list
  bool better_than(const Candidate& o) const {
    if (count != o.count) return count > o.count;
    if (total != o.total) return total < o.total;
    return pairs < o.pairs;
  }
};

// Exhaustive regime: dynamic program over (code index, used-detection mask).
// Considers every feasible partial matching; preference order (detection
// ascending before skip) yields the lexicographically smallest optimum.
void solve_exhaustive(const std::vector<std::vector<double>>& dist, double cutoff,
                      Candidate& best) {
  const int nc = static_cast<int>(dist.size());
  const int nd = nc ? static_cast<int>(dist[0].size()) : 0;

  struct Value {
    int count = 0;
    double total = 0.0;
  };
  const int masks = 1 << nd;
  // dp[i][mask]: best value for codes i.. given detections in mask are taken
  std::vector<std::vector<Value>> dp(nc + 1, std::vector<Value>(masks));
  for (int i = nc - 1; i >= 0; --i) {
    for (int mask = 0; mask < masks; ++mask) {
      Value v = dp[i + 1][mask];  // skip code i
      for (int j = 0; j < nd; ++j) {
        if (mask & (1 << j)) continue;
        if (dist[i][j] > cutoff) continue;
        const Value& next = dp[i + 1][mask | (1 << j)];
        Value cand{next.count + 1, dist[i][j] + next.total};
        if (cand.count > v.count || (cand.count == v.count && cand.total < v.total)) {
          v = cand;
        }
      }
      dp[i][mask] = v;
    }
  }

  Candidate out;
  int mask = 0;
  for (int i = 0; i < nc; ++i) {
    const Value& here = dp[i][mask];
    bool advanced = false;
    for (int j = 0; j < nd && !advanced; ++j) {
      if (mask & (1 << j)) continue;
      if (dist[i][j] > cutoff) continue;
      const Value& next = dp[i + 1][mask | (1 << j)];
      if (next.count + 1 == here.count && dist[i][j] + next.total == here.total) {
        out.pairs.push_back({i, j});
        mask |= 1 << j;
        advanced = true;
      }
    }
    // otherwise code i stays unmatched
  }
  out.count = static_cast<int>(out.pairs.size());
  for (const auto& [c, d] : out.pairs) out.total += dist[c][d];
  best = out;
}

// Shortest augmenting path assignment with potentials on a square matrix;
// infeasible and padding cells carry a cost larger than any feasible total,
// which makes minimum cost imply maximum cardinality.
void solve_augmenting(const std::vector<std::vector<double>>& dist, double cutoff,
                      Candidate& best) {
  const int nc = static_cast<int>(dist.size());
  const int nd = nc ? static_cast<int>(dist[0].size()) : 0;
  const int n = std::max(nc, nd);
  double maxd = 0.0;
  for (const auto& row : dist) {
    for (double v : row) maxd = std::max(maxd, v);
  }
  const double big = (maxd + 1.0) * (n + 1);

  auto cost = [&](int i, int j) {
    if (i >= nc || j >= nd) return big;
    return dist[i][j] <= cutoff ? dist[i][j] : big;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, n), way(n + 1, 0);  // p[j]: row matched to column j
  for (int i = 0; i < n; ++i) {
    p[n] = i;
    int j0 = n;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != n);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != n);
  }

  Candidate out;
  for (int j = 0; j < nd; ++j) {
    int i = p[j];
    if (i < nc && dist[i][j] <= cutoff) out.pairs.push_back({i, j});
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.count = static_cast<int>(out.pairs.size());
  for (const auto& [c, d] : out.pairs) out.total += dist[c][d];
  best = out;
}

}  // namespace

CodeAssignment match_codes(const std::vector<OcrCode>& codes, const PlantInstance& inst,
                           double cutoff_factor) {
  const int nc = static_cast<int>(codes.size());
  const int nd = inst.size();
  CodeAssignment out;
  if (nc == 0 || nd == 0) {
    for (int i = 0; i < nc; ++i) out.unmatched_codes.push_back(i);
    for (int j = 0; j < nd; ++j) out.unmatched_detections.push_back(j);
    return out;
  }

  const double cutoff = cutoff_factor * median_bbox_diagonal(inst);
  std::vector<std::vector<double>> dist(nc, std::vector<double>(nd));
  for (int i = 0; i < nc; ++i) {
    for (int j = 0; j < nd; ++j) {
      double dx = codes[i].x - inst.detections[j].cx();
      double dy = codes[i].y - inst.detections[j].cy();
      dist[i][j] = std::sqrt(dx * dx + dy * dy);
    }
  }

  Candidate best;
  if (nc <= 8 && nd <= 8) {
    solve_exhaustive(dist, cutoff, best);
  } else {
    solve_augmenting(dist, cutoff, best);
  }

  std::vector<char> code_used(nc, false), det_used(nd, false);
  for (const auto& [c, d] : best.pairs) {
    out.pairs.push_back({c, d, dist[c][d]});
    code_used[c] = true;
    det_used[d] = true;
  }
  for (int i = 0; i < nc; ++i) {
    if (!code_used[i]) out.unmatched_codes.push_back(i);
  }
  for (int j = 0; j < nd; ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

std::vector<double> equip_distribution(const std::optional<EquipmentRow>& row,
                                       const Rulebook& rulebook,
                                       const ClassVocabularies& vocab, double gamma) {
  const int yc = static_cast<int>(vocab.component_classes.size());
  if (yc == 1) return {1.0};
  std::vector<double> p(yc, 1.0 / yc);
  if (!row) return p;
  auto it = rulebook.catalogue.find({row->type_label, row->subtype_label});
  if (it == rulebook.catalogue.end()) return p;
  const int c = it->second.class_index;
  std::fill(p.begin(), p.end(), (1.0 - gamma) / (yc - 1));
  p[c] = gamma;
  return p;
}

std::vector<double> fuse_probs(const std::vector<double>& p_sgg,
                               const std::vector<double>& p_equip, double beta) {
  if (p_sgg.size() != p_equip.size()) {
    throw InvariantError("fuse_probs: length mismatch");
  }
  std::vector<double> q(p_sgg.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = beta * p_sgg[i] + (1.0 - beta) * p_equip[i];
  }
  double sum = std::accumulate(q.begin(), q.end(), 0.0);
  if (!(sum > 0.0)) throw InvariantError("fuse_probs: degenerate zero-mass fusion");
  for (double& v : q) v /= sum;
  return q;
}

PlantInstance fuse_instance(const PlantInstance& inst,
                            const std::vector<EquipmentRow>& equipment,
                            const std::vector<OcrCode>& codes, const Rulebook& rulebook,
                            const RunConfig& cfg, CodeAssignment* assignment_out) {
  CodeAssignment assignment = match_codes(codes, inst, cfg.match_cutoff_factor);

  std::map<std::string, const EquipmentRow*> by_code;
  for (const auto& row : equipment) by_code.emplace(row.code, &row);  // first wins

  std::map<int, int> code_of_detection;
  for (const auto& p : assignment.pairs) code_of_detection[p.detection_id] = p.code_index;

  std::vector<Detection> fused;
  fused.reserve(inst.detections.size());
  for (const Detection& d : inst.detections) {
    std::optional<EquipmentRow> row;
    auto ci = code_of_detection.find(d.id);
    if (ci != code_of_detection.end()) {
      auto ei = by_code.find(codes[ci->second].code);
      if (ei != by_code.end()) row = *ei->second;
    }
    auto p_equip = equip_distribution(row, rulebook, inst.vocab, cfg.gamma);
    auto probs = fuse_probs(d.probs, p_equip, cfg.beta);
    fused.emplace_back(d.id, d.x, d.y, d.w, d.h, std::move(probs));
  }
  if (assignment_out) *assignment_out = std::move(assignment);
  return PlantInstance(inst.vocab, std::move(fused), inst.g_conn, inst.g_rel);
}

}  // namespace plantrec
