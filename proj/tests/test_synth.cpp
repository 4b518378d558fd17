#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "plantrec/metrics.hpp"
#include "plantrec/synth.hpp"

#include "helpers.hpp"

using namespace plantrec;
using testutil::tiny_vocab;

namespace {

std::vector<RegistryRecord> single_composition_registry() {
  // one plant shape only: measurement line [filtering{0}, metering{1,2}]
  RegistryRecord rec;
  rec.plant_id = "P";
  RegistryLine line;
  line.line_type = 0;
  line.sections.push_back({0, {0}});
  line.sections.push_back({1, {1, 2}});
  rec.lines.push_back(line);
  return {rec};
}

}  // namespace

TEST_CASE("degenerate registry always yields the same composition") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  PlausibilityModel m = fit_plausibility(single_composition_registry(), vocab);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    SyntheticPlant p = sample_structure(m, vocab, rng);
    auto secs = section_compositions(p.truth);
    for (const auto& [sec, ms] : secs) {
      int cls = p.truth.section_class.at(sec);
      if (cls == 0) CHECK(ms == ClassMultiset{0});
      if (cls == 1) CHECK(ms == ClassMultiset{1, 2});
    }
    CHECK(validate_structure(p.truth, p.instance).empty());
  }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  Rng data_rng(5);
  PlausibilityModel m =
      fit_plausibility(testutil::random_registry(vocab, data_rng, 6), vocab);
  Rng a(42), b(42);
  SyntheticPlant pa = sample_structure(m, vocab, a);
  SyntheticPlant pb = sample_structure(m, vocab, b);
  CHECK(pa.truth == pb.truth);
  CHECK(pa.instance.g_conn == pb.instance.g_conn);
  CHECK(pa.instance.g_rel == pb.instance.g_rel);
}

TEST_CASE("sampled line types follow the registry frequencies") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  // 3 measurement lines, 1 regulation line observed
  std::vector<RegistryRecord> records;
  for (int i = 0; i < 3; ++i) {
    RegistryRecord rec;
    rec.plant_id = "m" + std::to_string(i);
    RegistryLine line;
    line.line_type = 0;
    line.sections.push_back({0, {0}});
    rec.lines.push_back(line);
    records.push_back(rec);
  }
  RegistryRecord reg;
  reg.plant_id = "r";
  RegistryLine rline;
  rline.line_type = 1;
  rline.sections.push_back({1, {1}});
  reg.lines.push_back(rline);
  records.push_back(reg);

  PlausibilityModel m = fit_plausibility(records, vocab);
  Rng rng(7);
  int lines_total = 0, measurement = 0;
  for (int i = 0; i < 1000; ++i) {
    SyntheticPlant p = sample_structure(m, vocab, rng);
    for (const auto& [_, cls] : p.truth.line_class) {
      ++lines_total;
      if (cls == 0) ++measurement;
    }
  }
  double expect = 0.75;
  double sigma = std::sqrt(lines_total * expect * (1 - expect));
  CHECK(std::abs(measurement - lines_total * expect) <= 3.0 * sigma);
}

TEST_CASE("corruption basics") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  PlausibilityModel m = fit_plausibility(single_composition_registry(), vocab);
  Rng rng(11);
  SyntheticPlant p = sample_structure(m, vocab, rng);

  SUBCASE("zero noise is the identity") {
    PlantInstance same = corrupt_instance(p.instance, {0.0, 0.0, 9});
    CHECK(same.g_conn == p.instance.g_conn);
    CHECK(same.g_rel == p.instance.g_rel);
    for (std::size_t i = 0; i < same.detections.size(); ++i) {
      CHECK(same.detections[i].probs == p.instance.detections[i].probs);
    }
  }
  SUBCASE("huge sigma approaches the uniform distribution") {
    PlantInstance noisy = corrupt_instance(p.instance, {1e12, 0.0, 9});
    for (const auto& d : noisy.detections) {
      for (double v : d.probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
  }
  SUBCASE("seeded corruption reproduces byte-for-byte") {
    PlantInstance a = corrupt_instance(p.instance, {0.3, 0.4, 1234});
    PlantInstance b = corrupt_instance(p.instance, {0.3, 0.4, 1234});
    CHECK(serialize_scene_graph(a) == serialize_scene_graph(b));
    PlantInstance c = corrupt_instance(p.instance, {0.3, 0.4, 1235});
    CHECK(serialize_scene_graph(a) != serialize_scene_graph(c));
  }
  SUBCASE("flips land exactly on one half") {
    PlantInstance noisy = corrupt_instance(p.instance, {0.0, 1.0, 5});
    for (int i = 0; i < noisy.size(); ++i) {
      for (int j = 0; j < noisy.size(); ++j) {
        if (i != j) CHECK(noisy.g_conn(i, j) == 0.5);
      }
    }
  }
}

TEST_CASE("component accuracy") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  PlausibilityModel m = fit_plausibility(single_composition_registry(), vocab);
  Rng rng(13);
  SyntheticPlant p = sample_structure(m, vocab, rng);

  CHECK(component_accuracy(p.truth, p.truth) == 1.0);

  HierarchicalStructure wrong = p.truth;
  for (auto& [_, cls] : wrong.component_class) cls = (cls + 1) % 3;
  CHECK(component_accuracy(wrong, p.truth) == 0.0);

  // 3 of 4 correct
  HierarchicalStructure four;
  four.section_of = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  four.component_class = {{0, 0}, {1, 1}, {2, 2}, {3, 0}};
  four.section_class = {{0, 0}};
  four.line_of = {{0, 0}};
  four.line_class = {{0, 0}};
  HierarchicalStructure pred = four;
  pred.component_class[3] = 1;
  CHECK(component_accuracy(pred, four) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("section score formulas") {
  auto structure_with = [](const std::vector<int>& section_of) {
    HierarchicalStructure s;
    std::set<int> secs;
    for (std::size_t i = 0; i < section_of.size(); ++i) {
      s.section_of[static_cast<int>(i)] = section_of[i];
      s.component_class[static_cast<int>(i)] = 0;
      secs.insert(section_of[i]);
    }
    for (int k : secs) {
      s.section_class[k] = 0;
      s.line_of[k] = 0;
    }
    s.line_class[0] = 0;
    return s;
  };

  HierarchicalStructure truth = structure_with({0, 0, 0, 1});
  CHECK(section_score(truth, truth) == 1.0);

  // true sections sizes 3 and 1; overlaps 2/3 and 1
  HierarchicalStructure pred = structure_with({0, 0, 1, 1});
  CHECK(section_score(pred, truth) == doctest::Approx(0.75).epsilon(1e-12));

  // all-in-one prediction vs all-singleton truth over 4 components
  HierarchicalStructure singletons = structure_with({0, 1, 2, 3});
  HierarchicalStructure lumped = structure_with({0, 0, 0, 0});
  CHECK(section_score(lumped, singletons) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("typed section accuracy") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  PlausibilityModel m = fit_plausibility(single_composition_registry(), vocab);
  Rng rng(17);
  SyntheticPlant p = sample_structure(m, vocab, rng);

  CHECK(typed_section_accuracy(p.truth, p.truth, 0) == 1.0);

  // correct grouping, wrong section class drops to zero
  HierarchicalStructure relabeled = p.truth;
  for (auto& [_, cls] : relabeled.section_class) cls = (cls + 1) % 2;
  CHECK(typed_section_accuracy(relabeled, p.truth, 0) == 0.0);

  // no line of the queried type: absent, not zero
  int missing_type = 1;
  bool truth_has = false;
  for (const auto& [_, cls] : p.truth.line_class) {
    if (cls == missing_type) truth_has = true;
  }
  if (!truth_has) {
    CHECK(!typed_section_accuracy(p.truth, p.truth, missing_type).has_value());
  }
}

TEST_CASE("recall at K") {
  // single truth triplet ranked first
  Tensor3 pred(2, 2, 2);
  pred.at(0, 1, 1) = 0.9;
  pred.at(1, 0, 1) = 0.8;
  std::vector<std::tuple<int, int, int>> truth = {{0, 1, 1}, {1, 0, 1}};
  CHECK(recall_at_k(pred, {{0, 1, 1}}, 1) == 1.0);
  CHECK(recall_at_k(pred, truth, 2) == 1.0);
  CHECK(recall_at_k(pred, truth, 1) == 0.5);
  // K covering the whole tensor always reaches 1
  CHECK(recall_at_k(pred, truth, 8) == 1.0);
  CHECK_THROWS_AS(recall_at_k(pred, {}, 5), InvariantError);
}

TEST_CASE("recall is monotone in K") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(4));
    int yt = 1 + static_cast<int>(rng.uniform_int(3));
    Tensor3 pred(n, n, yt);
    for (double& v : pred.v) v = rng.uniform();
    std::vector<std::tuple<int, int, int>> truth;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int t = 0; t < yt; ++t) {
          if (i != j && rng.uniform() < 0.2) truth.push_back({i, j, t});
        }
      }
    }
    if (truth.empty()) truth.push_back({0, 1, 0});
    double prev = 0.0;
    for (int k = 1; k <= n * n * yt; ++k) {
      double r = recall_at_k(pred, truth, k);
      CHECK(r >= prev);
      prev = r;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("metrics are invariant under canonicalization of either side") {
  ClassVocabularies vocab = tiny_vocab(3, 2, 2);
  Rng rng(23);
  PlausibilityModel m = fit_plausibility(testutil::random_registry(vocab, rng, 5), vocab);
  for (int trial = 0; trial < 10; ++trial) {
    SyntheticPlant p = sample_structure(m, vocab, rng);
    int n = p.instance.size();
    HierarchicalStructure pred = testutil::random_structure(n, vocab, rng);
    double s1 = section_score(pred, p.truth);
    CHECK(section_score(canonicalize(pred), p.truth) == s1);
    CHECK(section_score(pred, canonicalize(p.truth)) == s1);
    double c1 = component_accuracy(pred, p.truth);
    CHECK(component_accuracy(canonicalize(pred), canonicalize(p.truth)) == c1);
    CHECK(component_accuracy(p.truth, p.truth) == 1.0);
    CHECK(section_score(p.truth, p.truth) == 1.0);
  }
}

TEST_CASE("eval report serializes absent metrics as null") {
  EvalReport r;
  r.component_accuracy = 1.0;
  r.section_score = 0.5;
  r.recall_at_k[20] = 0.25;
  std::string doc = serialize_eval_report(r);
  CHECK(doc.find("\"regulation_section_acc\": null") != std::string::npos);
  CHECK(doc.find("\"R@20\": 0.25") != std::string::npos);
}
