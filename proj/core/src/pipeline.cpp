#include "plantrec/pipeline.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "plantrec/ingest.hpp"
#include "plantrec/rng.hpp"

namespace plantrec {

using ojson = nlohmann::ordered_json;

std::string digest_hex(const std::string& bytes) {
  std::ostringstream os;
  os << "fnv1a:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

MetaInfo make_meta(const RunConfig& cfg,
                   const std::vector<std::pair<std::string, std::string>>& named_inputs) {
  MetaInfo meta;
  meta.config_hash = digest_hex(serialize_config(cfg));
  for (const auto& [name, bytes] : named_inputs) {
    meta.inputs.push_back({name, digest_hex(bytes)});
  }
  return meta;
}

namespace {

ojson meta_to_json(const MetaInfo& meta) {
  ojson j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["config_hash"] = meta.config_hash;
  ojson inputs;
  for (const auto& [name, digest] : meta.inputs) inputs[name] = digest;
  j["inputs"] = std::move(inputs);
  return j;
}

}  // namespace

ReconstructResult reconstruct_pipeline(const PlantInstance& inst,
                                       const std::vector<EquipmentRow>& equipment,
                                       const std::vector<OcrCode>& codes,
                                       const Rulebook& rulebook, const PlausibilityModel& model,
                                       const RunConfig& cfg) {
  ReconstructResult out;
  out.fused = fuse_instance(inst, equipment, codes, rulebook, cfg, &out.assignment);
  out.report = anneal(out.fused, rulebook, model, cfg);
  return out;
}

std::string serialize_result(const SearchReport& report, const ClassVocabularies& vocab,
                             const MetaInfo& meta) {
  ojson j;
  j["meta"] = meta_to_json(meta);
  j["hierarchy"] = ojson::parse(serialize_structure(report.best, vocab));
  ojson energy;
  energy["e_node"] = report.best_score.e_node;
  energy["e_edge"] = report.best_score.e_edge;
  energy["e_struct"] = report.best_score.e_struct;
  energy["e_norm"] = report.best_score.e_norm;
  energy["e_reg"] = report.best_score.e_reg;
  energy["total"] = report.best_score.total;
  j["energy"] = std::move(energy);
  ojson search;
  search["iterations"] = report.iterations;
  search["restarts"] = report.restarts;
  search["accepted_moves"] = report.accepted_moves;
  search["seed"] = report.seed;
  j["search"] = std::move(search);
  return j.dump(2) + "\n";
}

std::string serialize_scene_graph_with_meta(const PlantInstance& inst, const MetaInfo& meta) {
  ojson j;
  j["meta"] = meta_to_json(meta);
  ojson body = ojson::parse(serialize_scene_graph(inst));
  for (auto& [key, value] : body.items()) j[key] = std::move(value);
  return j.dump(2) + "\n";
}

std::vector<BenchRow> run_bench(const PlausibilityModel& model, const ClassVocabularies& vocab,
                                const Rulebook& rulebook, const RunConfig& cfg, int count,
                                const std::vector<double>& sigma_levels, double p_edge_flip) {
  const int reg_line = vocab.line_index("regulation");
  const int meas_line = vocab.line_index("measurement");

  std::vector<BenchRow> rows;
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::derive(cfg.seed, "synth", static_cast<std::uint64_t>(i)));
    SyntheticPlant plant = sample_structure(model, vocab, rng);
    auto triplets = truth_triplets(plant.truth);

    for (std::size_t li = 0; li < sigma_levels.size(); ++li) {
      NoiseSpec spec;
      spec.sigma_prob = sigma_levels[li];
      spec.p_edge_flip = p_edge_flip;
      spec.seed = Rng::derive(cfg.seed, "noise",
                              static_cast<std::uint64_t>(i) * 1000 + li);
      PlantInstance corrupted = corrupt_instance(plant.instance, spec);
      SearchReport report = anneal(corrupted, rulebook, model, cfg);

      BenchRow row;
      row.instance_idx = i;
      row.sigma_prob = spec.sigma_prob;
      row.p_edge_flip = spec.p_edge_flip;
      row.eval.component_accuracy = component_accuracy(report.best, plant.truth);
      row.eval.section_score = section_score(report.best, plant.truth);
      if (reg_line >= 0) {
        row.eval.regulation_section_acc =
            typed_section_accuracy(report.best, plant.truth, reg_line);
      }
      if (meas_line >= 0) {
        row.eval.measurement_section_acc =
            typed_section_accuracy(report.best, plant.truth, meas_line);
      }
      if (!triplets.empty()) {
        for (int k : {20, 50, 100}) {
          row.eval.recall_at_k[k] = recall_at_k(corrupted.g_rel, triplets, k);
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string serialize_bench_csv(const std::vector<BenchRow>& rows, const MetaInfo& meta) {
  std::ostringstream os;
  os << "# tool=" << kToolName << " version=" << kToolVersion << "\n";
  os << "# config_hash=" << meta.config_hash << "\n";
  for (const auto& [name, digest] : meta.inputs) {
    os << "# input " << name << "=" << digest << "\n";
  }
  os << "instance,sigma_prob,p_edge_flip,component_accuracy,section_score,"
        "regulation_section_acc,measurement_section_acc,r20,r50,r100\n";
  os.precision(17);
  for (const auto& row : rows) {
    os << row.instance_idx << "," << row.sigma_prob << "," << row.p_edge_flip << ","
       << row.eval.component_accuracy << "," << row.eval.section_score << ",";
    if (row.eval.regulation_section_acc) os << *row.eval.regulation_section_acc;
    os << ",";
    if (row.eval.measurement_section_acc) os << *row.eval.measurement_section_acc;
    for (int k : {20, 50, 100}) {
      os << ",";
      auto it = row.eval.recall_at_k.find(k);
      if (it != row.eval.recall_at_k.end()) os << it->second;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace plantrec
