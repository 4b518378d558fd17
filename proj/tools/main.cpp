#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plantrec/egrtr.hpp"
#include "plantrec/ingest.hpp"
#include "plantrec/pipeline.hpp"

namespace fs = std::filesystem;
using namespace plantrec;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitInternal = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot read file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path, "cannot write file");
  out << content;
}

std::string with_meta(const std::string& doc, const MetaInfo& meta) {
  using ojson = nlohmann::ordered_json;
  ojson body = ojson::parse(doc);
  ojson j;
  ojson m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["config_hash"] = meta.config_hash;
  ojson inputs;
  for (const auto& [name, digest] : meta.inputs) inputs[name] = digest;
  m["inputs"] = std::move(inputs);
  j["meta"] = std::move(m);
  for (auto& [key, value] : body.items()) j[key] = std::move(value);
  return j.dump(2) + "\n";
}

struct CommonInputs {
  std::string scene_graph, equipment, ocr, regulations, model, config;
};

struct LoadedInputs {
  PlantInstance inst;
  std::vector<EquipmentRow> equipment;
  std::vector<OcrCode> codes;
  Rulebook rulebook;
  PlausibilityModel model;
  RunConfig cfg;
  MetaInfo meta;
};

LoadedInputs load_reconstruct_inputs(const CommonInputs& paths, bool seed_set,
                                     std::uint64_t seed) {
  LoadedInputs in;
  std::string sg = read_file(paths.scene_graph);
  std::string eq = read_file(paths.equipment);
  std::string oc = read_file(paths.ocr);
  std::string rg = read_file(paths.regulations);
  std::string md = read_file(paths.model);
  in.cfg = paths.config.empty() ? RunConfig{} : parse_config(read_file(paths.config));
  if (seed_set) in.cfg.seed = seed;
  in.inst = parse_scene_graph(sg);
  std::vector<std::string> warnings;
  in.equipment = parse_equipment(eq, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  in.codes = parse_ocr_codes(oc);
  in.rulebook = parse_regulations(rg, in.inst.vocab);
  in.model = parse_plausibility(md);
  if (!(in.model.vocab == in.inst.vocab)) {
    throw ParseError(paths.model, "model vocabulary differs from the scene graph's");
  }
  in.meta = make_meta(in.cfg, {{"scene_graph", sg},
                               {"equipment", eq},
                               {"ocr", oc},
                               {"regulations", rg},
                               {"model", md}});
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plant hierarchy reconstruction from scene-graph evidence"};
  app.require_subcommand(1);

  CommonInputs paths;
  std::string out_path, out_dir, vocab_path, structure_path, registry_path;
  std::string noise_csv = "0,0.1,0.3,1.0";
  std::string emit_state_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double smoothing = 1.0, epsilon = 1e-9;
  double sigma_prob = 0.0, p_edge_flip = 0.0;
  int count = 20;
  int demo_n = 4, demo_d = 8, demo_dec_layers = 2, demo_rel_layers = 2, demo_heads = 4;
  int demo_hidden = 0, demo_rel_classes = 3, demo_enc_tokens = 6;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Override the run seed")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  CLI::App* reconstruct = app.add_subcommand("reconstruct", "Reconstruct a plant hierarchy");
  reconstruct->add_option("--scene-graph", paths.scene_graph)->required();
  reconstruct->add_option("--equipment", paths.equipment)->required();
  reconstruct->add_option("--ocr", paths.ocr)->required();
  reconstruct->add_option("--regulations", paths.regulations)->required();
  reconstruct->add_option("--model", paths.model)->required();
  reconstruct->add_option("--config", paths.config);
  reconstruct->add_option("--out", out_path);
  add_seed(reconstruct);

  CLI::App* fuse = app.add_subcommand("fuse", "Fuse equipment evidence into the scene graph");
  fuse->add_option("--scene-graph", paths.scene_graph)->required();
  fuse->add_option("--equipment", paths.equipment)->required();
  fuse->add_option("--ocr", paths.ocr)->required();
  fuse->add_option("--regulations", paths.regulations)->required();
  fuse->add_option("--config", paths.config);
  fuse->add_option("--out", out_path);

  CLI::App* oracle = app.add_subcommand("oracle", "Exact optimum by exhaustive enumeration");
  oracle->add_option("--scene-graph", paths.scene_graph)->required();
  oracle->add_option("--equipment", paths.equipment)->required();
  oracle->add_option("--ocr", paths.ocr)->required();
  oracle->add_option("--regulations", paths.regulations)->required();
  oracle->add_option("--model", paths.model)->required();
  oracle->add_option("--config", paths.config);
  oracle->add_option("--out", out_path);
  add_seed(oracle);

  CLI::App* fit = app.add_subcommand("fit-model", "Fit the plausibility model from a registry");
  fit->add_option("--registry", registry_path)->required();
  fit->add_option("--vocab", vocab_path)->required();
  fit->add_option("--smoothing", smoothing);
  fit->add_option("--epsilon", epsilon);
  fit->add_option("--out", out_path);

  CLI::App* synth = app.add_subcommand("synth", "Sample ground-truth plants and corrupt them");
  synth->add_option("--model", paths.model)->required();
  synth->add_option("--count", count);
  synth->add_option("--sigma-prob", sigma_prob);
  synth->add_option("--p-edge-flip", p_edge_flip);
  synth->add_option("--out-dir", out_dir)->required();
  add_seed(synth);

  CLI::App* bench = app.add_subcommand("bench", "Noise sweep with reconstruction metrics");
  bench->add_option("--model", paths.model)->required();
  bench->add_option("--regulations", paths.regulations)->required();
  bench->add_option("--config", paths.config);
  bench->add_option("--count", count);
  bench->add_option("--noise", noise_csv, "Comma-separated sigma_prob levels");
  bench->add_option("--p-edge-flip", p_edge_flip);
  bench->add_option("--out", out_path);
  add_seed(bench);

  CLI::App* demo = app.add_subcommand("egrtr-demo", "Relation head forward pass demo");
  demo->add_option("--n", demo_n);
  demo->add_option("--d-model", demo_d);
  demo->add_option("--dec-layers", demo_dec_layers);
  demo->add_option("--rel-layers", demo_rel_layers);
  demo->add_option("--heads", demo_heads);
  demo->add_option("--hidden", demo_hidden, "Defaults to 2*d_model");
  demo->add_option("--rel-classes", demo_rel_classes);
  demo->add_option("--enc-tokens", demo_enc_tokens);
  demo->add_option("--emit-state", emit_state_path);
  demo->add_option("--out", out_path);
  add_seed(demo);

  CLI::App* validate = app.add_subcommand("validate", "Check a structure file against an instance");
  validate->add_option("--scene-graph", paths.scene_graph)->required();
  validate->add_option("--structure", structure_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitParse;
  }

  try {
    if (reconstruct->parsed()) {
      LoadedInputs in = load_reconstruct_inputs(paths, seed_set, seed);
      ReconstructResult result = reconstruct_pipeline(in.inst, in.equipment, in.codes,
                                                      in.rulebook, in.model, in.cfg);
      write_output(out_path, serialize_result(result.report, in.inst.vocab, in.meta));
    } else if (fuse->parsed()) {
      std::string sg = read_file(paths.scene_graph);
      std::string eq = read_file(paths.equipment);
      std::string oc = read_file(paths.ocr);
      std::string rg = read_file(paths.regulations);
      RunConfig cfg = paths.config.empty() ? RunConfig{} : parse_config(read_file(paths.config));
      PlantInstance inst = parse_scene_graph(sg);
      std::vector<std::string> warnings;
      auto equipment = parse_equipment(eq, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      auto codes = parse_ocr_codes(oc);
      Rulebook rulebook = parse_regulations(rg, inst.vocab);
      PlantInstance fused = fuse_instance(inst, equipment, codes, rulebook, cfg);
      MetaInfo meta = make_meta(
          cfg, {{"scene_graph", sg}, {"equipment", eq}, {"ocr", oc}, {"regulations", rg}});
      write_output(out_path, serialize_scene_graph_with_meta(fused, meta));
    } else if (oracle->parsed()) {
      LoadedInputs in = load_reconstruct_inputs(paths, seed_set, seed);
      PlantInstance fused = fuse_instance(in.inst, in.equipment, in.codes, in.rulebook, in.cfg);
      SearchReport report = brute_force(fused, in.rulebook, in.model, in.cfg);
      write_output(out_path, serialize_result(report, in.inst.vocab, in.meta));
    } else if (fit->parsed()) {
      std::string reg = read_file(registry_path);
      std::string vb = read_file(vocab_path);
      ClassVocabularies vocab = parse_vocab(vb);
      auto records = parse_registry(reg, vocab);
      PlausibilityModel model = fit_plausibility(records, vocab, smoothing, epsilon);
      MetaInfo meta;
      std::ostringstream cfgs;
      cfgs << "smoothing=" << smoothing << " epsilon=" << epsilon;
      meta.config_hash = digest_hex(cfgs.str());
      meta.inputs = {{"registry", digest_hex(reg)}, {"vocab", digest_hex(vb)}};
      write_output(out_path, with_meta(serialize_plausibility(model), meta));
    } else if (synth->parsed()) {
      std::string md = read_file(paths.model);
      PlausibilityModel model = parse_plausibility(md);
      fs::create_directories(out_dir);
      MetaInfo meta;
      std::ostringstream cfgs;
      cfgs << "seed=" << seed << " sigma_prob=" << sigma_prob
           << " p_edge_flip=" << p_edge_flip;
      meta.config_hash = digest_hex(cfgs.str());
      meta.inputs = {{"model", digest_hex(md)}};
      for (int i = 0; i < count; ++i) {
        Rng rng(Rng::derive(seed, "synth", static_cast<std::uint64_t>(i)));
        SyntheticPlant plant = sample_structure(model, model.vocab, rng);
        NoiseSpec spec{sigma_prob, p_edge_flip,
                       Rng::derive(seed, "noise", static_cast<std::uint64_t>(i))};
        PlantInstance noisy = corrupt_instance(plant.instance, spec);
        std::ostringstream stem;
        stem << std::setw(4) << std::setfill('0') << i;
        write_output(out_dir + "/" + stem.str() + "_truth.json",
                     with_meta(serialize_structure(plant.truth, model.vocab), meta));
        write_output(out_dir + "/" + stem.str() + "_clean.json",
                     with_meta(serialize_scene_graph(plant.instance), meta));
        write_output(out_dir + "/" + stem.str() + "_noisy.json",
                     with_meta(serialize_scene_graph(noisy), meta));
      }
    } else if (bench->parsed()) {
      std::string md = read_file(paths.model);
      std::string rg = read_file(paths.regulations);
      RunConfig cfg = paths.config.empty() ? RunConfig{} : parse_config(read_file(paths.config));
      if (seed_set) cfg.seed = seed;
      PlausibilityModel model = parse_plausibility(md);
      Rulebook rulebook = parse_regulations(rg, model.vocab);
      std::vector<double> sigmas;
      std::stringstream ss(noise_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) sigmas.push_back(std::stod(tok));
      }
      if (sigmas.empty()) throw ParseError("--noise", "no noise levels given");
      auto rows = run_bench(model, model.vocab, rulebook, cfg, count, sigmas, p_edge_flip);
      MetaInfo meta = make_meta(cfg, {{"model", md}, {"regulations", rg}});
      write_output(out_path, serialize_bench_csv(rows, meta));
    } else if (demo->parsed()) {
      using namespace egrtr;
      const int hidden = demo_hidden > 0 ? demo_hidden : 2 * demo_d;
      RelationHeadState state = init_state(demo_n, demo_d, demo_dec_layers, demo_rel_layers,
                                           demo_heads, hidden, demo_rel_classes, seed);
      DecoderTrace trace =
          random_trace(demo_n, demo_enc_tokens, demo_d, demo_dec_layers, seed);
      RelationTensors tensors = head_forward(trace, state);
      if (!emit_state_path.empty()) {
        write_output(emit_state_path, serialize_head_state(state));
      }

      double rel_min = 1.0, rel_max = 0.0;
      for (double v : tensors.graphs.g_rel.v) {
        rel_min = std::min(rel_min, v);
        rel_max = std::max(rel_max, v);
      }
      bool broadcast_ok = true;
      for (const auto& rp : tensors.r_prime) {
        for (Eigen::Index r = 1; r < rp.rows(); ++r) {
          if (rp.row(r) != rp.row(0)) broadcast_ok = false;
        }
      }
      double grad_err = gradient_check(state, tensors.fusion.r_tilde, 1e-5);

      nlohmann::ordered_json j;
      j["meta"] = {{"tool", kToolName},
                   {"version", kToolVersion},
                   {"config_hash", digest_hex("seed=" + std::to_string(seed))},
                   {"inputs", nlohmann::ordered_json::object()}};
      j["dims"] = {{"n", demo_n},          {"d_model", demo_d},
                   {"dec_layers", demo_dec_layers}, {"rel_layers", demo_rel_layers},
                   {"heads", demo_heads},  {"hidden", hidden},
                   {"rel_classes", demo_rel_classes}, {"enc_tokens", demo_enc_tokens}};
      j["shapes"] = {
          {"g_rel", {demo_n, demo_n, demo_rel_classes}},
          {"g_conn", {demo_n, demo_n}},
          {"experts", {demo_dec_layers + 1, demo_d}},
          {"fused", {demo_n * demo_n, 3 * demo_d}},
      };
      j["ranges"] = {{"g_rel_min", rel_min},
                     {"g_rel_max", rel_max},
                     {"g_conn_min", tensors.graphs.g_conn.minCoeff()},
                     {"g_conn_max", tensors.graphs.g_conn.maxCoeff()},
                     {"gates_min", tensors.fusion.gates.minCoeff()},
                     {"gates_max", tensors.fusion.gates.maxCoeff()}};
      j["broadcast_constant"] = broadcast_ok;
      j["gradient_check_max_rel_err"] = grad_err;
      j["gradient_check_pass"] = grad_err < 1e-4;
      write_output(out_path, j.dump(2) + "\n");
    } else if (validate->parsed()) {
      PlantInstance inst = parse_scene_graph(read_file(paths.scene_graph));
      StructureGroups groups = parse_structure(read_file(structure_path), inst.vocab);
      auto violations = validate_structure(groups, inst);
      if (violations.empty()) {
        std::cout << "ok\n";
        return 0;
      }
      for (const auto& v : violations) std::cout << "violation: " << v << "\n";
      return 1;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
