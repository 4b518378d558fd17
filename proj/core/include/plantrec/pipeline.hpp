#pragma once

#include <string>
#include <vector>

#include "plantrec/fusion.hpp"
#include "plantrec/metrics.hpp"
#include "plantrec/optimizer.hpp"
#include "plantrec/synth.hpp"

namespace plantrec {

inline constexpr const char* kToolName = "plantrec";
inline constexpr const char* kToolVersion = "0.1.0";

/// Provenance block for every output document: tool version, config hash,
/// input digests. Nothing time- or host-dependent, so outputs stay
/// byte-identical across runs.
struct MetaInfo {
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> inputs;  // (name, digest)
};

std::string digest_hex(const std::string& bytes);
MetaInfo make_meta(const RunConfig& cfg,
                   const std::vector<std::pair<std::string, std::string>>& named_inputs);

struct ReconstructResult {
  PlantInstance fused;
  CodeAssignment assignment;
  SearchReport report;
};

/// match_codes -> equip_distribution -> fuse_probs -> anneal
ReconstructResult reconstruct_pipeline(const PlantInstance& inst,
                                       const std::vector<EquipmentRow>& equipment,
                                       const std::vector<OcrCode>& codes,
                                       const Rulebook& rulebook, const PlausibilityModel& model,
                                       const RunConfig& cfg);

std::string serialize_result(const SearchReport& report, const ClassVocabularies& vocab,
                             const MetaInfo& meta);

/// Scene-graph document with a provenance header prepended.
std::string serialize_scene_graph_with_meta(const PlantInstance& inst, const MetaInfo& meta);

struct BenchRow {
  int instance_idx = 0;
  double sigma_prob = 0.0;
  double p_edge_flip = 0.0;
  EvalReport eval;
};

/// Noise sweep: sample `count` plants from the model, corrupt at each sigma
/// level, reconstruct with annealing, and evaluate against the ground truth.
std::vector<BenchRow> run_bench(const PlausibilityModel& model, const ClassVocabularies& vocab,
                                const Rulebook& rulebook, const RunConfig& cfg, int count,
                                const std::vector<double>& sigma_levels, double p_edge_flip);

std::string serialize_bench_csv(const std::vector<BenchRow>& rows, const MetaInfo& meta);

}  // namespace plantrec
