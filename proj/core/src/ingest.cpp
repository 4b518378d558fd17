#include "plantrec/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <set>
#include <sstream>

#include <json.hpp>

namespace plantrec {

using ojson = nlohmann::ordered_json;

namespace {

ojson parse_json(const std::string& bytes, const char* doc) {
  ojson j = ojson::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw ParseError(doc, "not valid JSON");
  return j;
}

const ojson& field(const ojson& j, const char* name, const std::string& path) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(path + "." + name, "missing field");
  return *it;
}

double number_in_unit_range(const ojson& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  double v = j.get<double>();
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ParseError(path, "value " + std::to_string(v) + " out of [0,1]");
  }
  return v;
}

double finite_number(const ojson& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "value must be finite");
  return v;
}

std::string str(const ojson& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

// Minimal RFC-4180-style CSV. Quoted fields may contain commas, newlines and
// doubled quotes.
std::vector<std::vector<std::string>> read_csv(const std::string& bytes) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    char c = bytes[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < bytes.size() && bytes[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',': row.push_back(cell); cell.clear(); any = true; break;
      case '\r': break;
      case '\n':
        if (any || !cell.empty() || !row.empty()) {
          row.push_back(cell);
          rows.push_back(row);
        }
        row.clear(); cell.clear(); any = false;
        break;
      default: cell += c; any = true; break;
    }
  }
  if (any || !cell.empty() || !row.empty()) {
    row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

int parse_int_field(const std::string& s, const std::string& path) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(path, "expected an integer, got '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_component_class(const ComponentClass& c) {
  return c.first + "/" + c.second;
}

ComponentClass split_component_class(const std::string& s) {
  auto pos = s.find('/');
  if (pos == std::string::npos) return {s, ""};
  return {s.substr(0, pos), s.substr(pos + 1)};
}

// ---------------------------------------------------------------------------
// vocabulary

static ClassVocabularies vocab_from_json(const ojson& j, const std::string& root) {
  const ojson& comp = field(j, "component_classes", root);
  const ojson& sec = field(j, "section_classes", root);
  const ojson& line = field(j, "line_classes", root);
  if (!comp.is_array() || !sec.is_array() || !line.is_array()) {
    throw ParseError(root, "class lists must be arrays");
  }
  std::vector<ComponentClass> cc;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const auto& e = comp[i];
    std::string path = root + ".component_classes[" + std::to_string(i) + "]";
    if (!e.is_array() || e.size() != 2) throw ParseError(path, "expected [type, subtype]");
    cc.push_back({str(e[0], path), str(e[1], path)});
  }
  std::vector<std::string> sc, lc;
  for (std::size_t i = 0; i < sec.size(); ++i) {
    sc.push_back(str(sec[i], root + ".section_classes[" + std::to_string(i) + "]"));
  }
  for (std::size_t i = 0; i < line.size(); ++i) {
    lc.push_back(str(line[i], root + ".line_classes[" + std::to_string(i) + "]"));
  }
  try {
    return ClassVocabularies(std::move(cc), std::move(sc), std::move(lc));
  } catch (const InvariantError& e) {
    throw ParseError(root, e.what());
  }
}

static ojson vocab_to_json(const ClassVocabularies& vocab) {
  ojson j;
  ojson comp = ojson::array();
  for (const auto& [t, s] : vocab.component_classes) comp.push_back(ojson::array({t, s}));
  j["component_classes"] = std::move(comp);
  j["section_classes"] = vocab.section_classes;
  j["line_classes"] = vocab.line_classes;
  return j;
}

ClassVocabularies parse_vocab(const std::string& bytes) {
  return vocab_from_json(parse_json(bytes, "vocab"), "vocab");
}

std::string serialize_vocab(const ClassVocabularies& vocab) {
  return vocab_to_json(vocab).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// scene graph

PlantInstance parse_scene_graph(const std::string& bytes) {
  ojson j = parse_json(bytes, "scene_graph");
  ClassVocabularies vocab = vocab_from_json(j, "scene_graph");
  const int yt = static_cast<int>(vocab.section_classes.size());

  const ojson& dets = field(j, "detections", "scene_graph");
  if (!dets.is_array()) throw ParseError("scene_graph.detections", "expected an array");
  const int n = static_cast<int>(dets.size());

  std::vector<Detection> detections;
  for (int i = 0; i < n; ++i) {
    std::string path = "scene_graph.detections[" + std::to_string(i) + "]";
    const ojson& d = dets[i];
    const ojson& idv = field(d, "id", path);
    if (!idv.is_number_integer() || idv.get<int>() != i) {
      throw ParseError(path + ".id", "detection ids must be 0..N-1 in order");
    }
    const ojson& bbox = field(d, "bbox", path);
    if (!bbox.is_array() || bbox.size() != 4) {
      throw ParseError(path + ".bbox", "expected [x, y, w, h]");
    }
    double x = finite_number(bbox[0], path + ".bbox[0]");
    double y = finite_number(bbox[1], path + ".bbox[1]");
    double w = finite_number(bbox[2], path + ".bbox[2]");
    double h = finite_number(bbox[3], path + ".bbox[3]");
    if (!(w > 0.0) || !(h > 0.0)) throw ParseError(path + ".bbox", "w and h must be > 0");
    const ojson& probs = field(d, "probs", path);
    if (!probs.is_array() || probs.size() != vocab.component_classes.size()) {
      throw ParseError(path + ".probs", "expected |Y_C| probabilities");
    }
    std::vector<double> p;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      p.push_back(number_in_unit_range(probs[k], path + ".probs[" + std::to_string(k) + "]"));
    }
    try {
      detections.emplace_back(i, x, y, w, h, std::move(p));
    } catch (const InvariantError& e) {
      throw ParseError(path, e.what());
    }
  }

  const ojson& gc = field(j, "g_conn", "scene_graph");
  if (!gc.is_array() || static_cast<int>(gc.size()) != n) {
    throw ParseError("scene_graph.g_conn", "expected " + std::to_string(n) + " rows");
  }
  Eigen::MatrixXd g_conn(n, n);
  for (int i = 0; i < n; ++i) {
    std::string rp = "scene_graph.g_conn[" + std::to_string(i) + "]";
    if (!gc[i].is_array() || static_cast<int>(gc[i].size()) != n) {
      throw ParseError(rp, "expected " + std::to_string(n) + " columns");
    }
    for (int k = 0; k < n; ++k) {
      g_conn(i, k) = number_in_unit_range(gc[i][k], rp + "[" + std::to_string(k) + "]");
    }
  }

  const ojson& gr = field(j, "g_rel", "scene_graph");
  if (!gr.is_array() || static_cast<int>(gr.size()) != n) {
    throw ParseError("scene_graph.g_rel", "expected " + std::to_string(n) + " rows");
  }
  Tensor3 g_rel(n, n, yt);
  for (int i = 0; i < n; ++i) {
    std::string rp = "scene_graph.g_rel[" + std::to_string(i) + "]";
    if (!gr[i].is_array() || static_cast<int>(gr[i].size()) != n) {
      throw ParseError(rp, "expected " + std::to_string(n) + " columns");
    }
    for (int k = 0; k < n; ++k) {
      std::string cp = rp + "[" + std::to_string(k) + "]";
      if (!gr[i][k].is_array() || static_cast<int>(gr[i][k].size()) != yt) {
        throw ParseError(cp, "expected |Y_T| entries");
      }
      for (int t = 0; t < yt; ++t) {
        g_rel.at(i, k, t) = number_in_unit_range(gr[i][k][t], cp + "[" + std::to_string(t) + "]");
      }
    }
  }

  return PlantInstance(std::move(vocab), std::move(detections), std::move(g_conn),
                       std::move(g_rel));
}

std::string serialize_scene_graph(const PlantInstance& inst) {
  const int n = inst.size();
  const int yt = static_cast<int>(inst.vocab.section_classes.size());
  ojson j = vocab_to_json(inst.vocab);
  ojson dets = ojson::array();
  for (const Detection& d : inst.detections) {
    ojson e;
    e["id"] = d.id;
    e["bbox"] = ojson::array({d.x, d.y, d.w, d.h});
    e["probs"] = d.probs;
    dets.push_back(std::move(e));
  }
  j["detections"] = std::move(dets);
  ojson gc = ojson::array();
  for (int i = 0; i < n; ++i) {
    ojson row = ojson::array();
    for (int k = 0; k < n; ++k) row.push_back(inst.g_conn(i, k));
    gc.push_back(std::move(row));
  }
  j["g_conn"] = std::move(gc);
  ojson gr = ojson::array();
  for (int i = 0; i < n; ++i) {
    ojson row = ojson::array();
    for (int k = 0; k < n; ++k) {
      ojson cell = ojson::array();
      for (int t = 0; t < yt; ++t) cell.push_back(inst.g_rel.at(i, k, t));
      row.push_back(std::move(cell));
    }
    gr.push_back(std::move(row));
  }
  j["g_rel"] = std::move(gr);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// equipment list

std::vector<EquipmentRow> parse_equipment(const std::string& bytes,
                                          std::vector<std::string>* warnings) {
  auto rows = read_csv(bytes);
  if (rows.empty()) throw ParseError("equipment", "missing header row");
  const auto& header = rows[0];
  const std::vector<std::string> mandatory = {"code", "type", "subtype", "description"};
  for (std::size_t i = 0; i < mandatory.size(); ++i) {
    if (header.size() <= i || header[i] != mandatory[i]) {
      throw ParseError("equipment.header", "missing mandatory column '" + mandatory[i] + "'");
    }
  }
  std::vector<EquipmentRow> out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    std::string path = "equipment.row[" + std::to_string(r) + "]";
    if (cells.size() < mandatory.size()) throw ParseError(path, "too few columns");
    EquipmentRow row;
    row.code = cells[0];
    row.type_label = cells[1];
    row.subtype_label = cells[2];
    row.description = cells[3];
    if (row.code.empty()) throw ParseError(path + ".code", "code must be non-empty");
    for (std::size_t c = 4; c < cells.size() && c < header.size(); ++c) {
      row.specs[header[c]] = cells[c];
    }
    if (!seen.insert(row.code).second && warnings) {
      warnings->push_back("equipment: duplicate code '" + row.code + "', both rows kept");
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string serialize_equipment(const std::vector<EquipmentRow>& rows) {
  std::set<std::string> spec_cols;
  for (const auto& r : rows) {
    for (const auto& [k, _] : r.specs) spec_cols.insert(k);
  }
  std::ostringstream os;
  os << "code,type,subtype,description";
  for (const auto& c : spec_cols) os << "," << csv_escape(c);
  os << "\n";
  for (const auto& r : rows) {
    os << csv_escape(r.code) << "," << csv_escape(r.type_label) << ","
       << csv_escape(r.subtype_label) << "," << csv_escape(r.description);
    for (const auto& c : spec_cols) {
      auto it = r.specs.find(c);
      os << "," << csv_escape(it == r.specs.end() ? "" : it->second);
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// OCR codes

std::vector<OcrCode> parse_ocr_codes(const std::string& bytes) {
  ojson j = parse_json(bytes, "ocr_codes");
  if (!j.is_array()) throw ParseError("ocr_codes", "expected a top-level array");
  std::vector<OcrCode> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    std::string path = "ocr_codes[" + std::to_string(i) + "]";
    const ojson& e = j[i];
    OcrCode c;
    c.code = str(field(e, "code", path), path + ".code");
    c.x = finite_number(field(e, "x", path), path + ".x");
    c.y = finite_number(field(e, "y", path), path + ".y");
    out.push_back(std::move(c));
  }
  return out;
}

std::string serialize_ocr_codes(const std::vector<OcrCode>& codes) {
  ojson j = ojson::array();
  for (const auto& c : codes) {
    ojson e;
    e["code"] = c.code;
    e["x"] = c.x;
    e["y"] = c.y;
    j.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// regulations

Rulebook parse_regulations(const std::string& bytes, const ClassVocabularies& vocab) {
  ojson j = parse_json(bytes, "regulations");
  Rulebook rb;

  auto component_index = [&](const std::string& label, const std::string& path) {
    int idx = vocab.component_index(split_component_class(label));
    if (idx < 0) throw ParseError(path, "unknown component class '" + label + "'");
    return idx;
  };

  const ojson& sections = field(j, "sections", "regulations");
  for (std::size_t i = 0; i < sections.size(); ++i) {
    std::string path = "regulations.sections[" + std::to_string(i) + "]";
    const ojson& e = sections[i];
    std::string type = str(field(e, "type", path), path + ".type");
    int ti = vocab.section_index(type);
    if (ti < 0) throw ParseError(path + ".type", "unknown section class '" + type + "'");
    SectionRule rule;
    for (const auto& m : field(e, "mandatory", path)) {
      rule.mandatory.push_back(component_index(str(m, path + ".mandatory"), path + ".mandatory"));
    }
    for (const auto& o : field(e, "optional", path)) {
      rule.optional.push_back(component_index(str(o, path + ".optional"), path + ".optional"));
    }
    std::sort(rule.mandatory.begin(), rule.mandatory.end());
    rule.mandatory.erase(std::unique(rule.mandatory.begin(), rule.mandatory.end()),
                         rule.mandatory.end());
    std::sort(rule.optional.begin(), rule.optional.end());
    rule.optional.erase(std::unique(rule.optional.begin(), rule.optional.end()),
                        rule.optional.end());
    rb.section_rules[ti] = std::move(rule);
  }

  const ojson& lines = field(j, "lines", "regulations");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string path = "regulations.lines[" + std::to_string(i) + "]";
    const ojson& e = lines[i];
    std::string type = str(field(e, "type", path), path + ".type");
    int li = vocab.line_index(type);
    if (li < 0) throw ParseError(path + ".type", "unknown line class '" + type + "'");
    LineRule rule;
    for (const auto& m : field(e, "min_sections", path)) {
      std::string sl = str(m, path + ".min_sections");
      int si = vocab.section_index(sl);
      if (si < 0) throw ParseError(path + ".min_sections", "unknown section class '" + sl + "'");
      rule.min_sections.push_back(si);
    }
    std::sort(rule.min_sections.begin(), rule.min_sections.end());
    rb.line_rules[li] = std::move(rule);
  }

  const ojson& cat = field(j, "catalogue", "regulations");
  for (std::size_t i = 0; i < cat.size(); ++i) {
    std::string path = "regulations.catalogue[" + std::to_string(i) + "]";
    const ojson& e = cat[i];
    ComponentClass cc{str(field(e, "type", path), path + ".type"),
                      str(field(e, "subtype", path), path + ".subtype")};
    int idx = vocab.component_index(cc);
    if (idx < 0) {
      throw ParseError(path, "unknown component class '" + format_component_class(cc) + "'");
    }
    CatalogueEntry entry;
    entry.class_index = idx;
    for (const auto& k : field(e, "mandatory_characteristics", path)) {
      entry.mandatory_characteristics.push_back(str(k, path + ".mandatory_characteristics"));
    }
    rb.catalogue[cc] = std::move(entry);
  }
  return rb;
}

std::string serialize_regulations(const Rulebook& rb, const ClassVocabularies& vocab) {
  ojson j;
  ojson sections = ojson::array();
  for (const auto& [ti, rule] : rb.section_rules) {
    ojson e;
    e["type"] = vocab.section_classes.at(ti);
    ojson mand = ojson::array(), opt = ojson::array();
    for (int c : rule.mandatory) mand.push_back(format_component_class(vocab.component_classes.at(c)));
    for (int c : rule.optional) opt.push_back(format_component_class(vocab.component_classes.at(c)));
    e["mandatory"] = std::move(mand);
    e["optional"] = std::move(opt);
    sections.push_back(std::move(e));
  }
  j["sections"] = std::move(sections);
  ojson lines = ojson::array();
  for (const auto& [li, rule] : rb.line_rules) {
    ojson e;
    e["type"] = vocab.line_classes.at(li);
    ojson mins = ojson::array();
    for (int s : rule.min_sections) mins.push_back(vocab.section_classes.at(s));
    e["min_sections"] = std::move(mins);
    lines.push_back(std::move(e));
  }
  j["lines"] = std::move(lines);
  ojson cat = ojson::array();
  for (const auto& [cc, entry] : rb.catalogue) {
    ojson e;
    e["type"] = cc.first;
    e["subtype"] = cc.second;
    e["mandatory_characteristics"] = entry.mandatory_characteristics;
    cat.push_back(std::move(e));
  }
  j["catalogue"] = std::move(cat);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// registry

std::vector<RegistryRecord> parse_registry(const std::string& bytes,
                                           const ClassVocabularies& vocab) {
  auto rows = read_csv(bytes);
  if (rows.empty()) throw ParseError("registry", "missing header row");
  const std::vector<std::string> expect = {"plant_id", "line_idx", "line_type",
                                           "section_idx", "section_type", "component_classes"};
  if (rows[0] != expect) {
    throw ParseError("registry.header",
                     "expected 'plant_id,line_idx,line_type,section_idx,section_type,"
                     "component_classes'");
  }

  // plant order = first appearance; lines and sections ordered by index
  std::vector<std::string> plant_order;
  std::map<std::string, std::map<int, std::pair<int, std::map<int, RegistrySection>>>> plants;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    std::string path = "registry.row[" + std::to_string(r) + "]";
    if (cells.size() != expect.size()) throw ParseError(path, "wrong column count");
    const std::string& plant_id = cells[0];
    if (plant_id.empty()) throw ParseError(path + ".plant_id", "must be non-empty");
    int line_idx = parse_int_field(cells[1], path + ".line_idx");
    int line_type = vocab.line_index(cells[2]);
    if (line_type < 0) throw ParseError(path + ".line_type", "unknown line class '" + cells[2] + "'");
    int section_idx = parse_int_field(cells[3], path + ".section_idx");
    int section_type = vocab.section_index(cells[4]);
    if (section_type < 0) {
      throw ParseError(path + ".section_type", "unknown section class '" + cells[4] + "'");
    }
    RegistrySection sec;
    sec.section_type = section_type;
    std::stringstream ss(cells[5]);
    std::string token;
    while (std::getline(ss, token, ';')) {
      if (token.empty()) continue;
      int ci = vocab.component_index(split_component_class(token));
      if (ci < 0) {
        throw ParseError(path + ".component_classes", "unknown component class '" + token + "'");
      }
      sec.component_classes.push_back(ci);
    }
    if (sec.component_classes.empty()) {
      throw ParseError(path + ".component_classes", "section composition must be non-empty");
    }
    std::sort(sec.component_classes.begin(), sec.component_classes.end());

    if (!plants.count(plant_id)) plant_order.push_back(plant_id);
    auto& line = plants[plant_id][line_idx];
    if (line.second.empty()) {
      line.first = line_type;
    } else if (line.first != line_type) {
      throw ParseError(path + ".line_type", "conflicting line type within line " +
                                                std::to_string(line_idx));
    }
    if (line.second.count(section_idx)) {
      throw ParseError(path + ".section_idx", "duplicate section index " +
                                                  std::to_string(section_idx));
    }
    line.second[section_idx] = std::move(sec);
  }

  std::vector<RegistryRecord> out;
  for (const auto& pid : plant_order) {
    RegistryRecord rec;
    rec.plant_id = pid;
    for (const auto& [_, line] : plants[pid]) {
      RegistryLine rl;
      rl.line_type = line.first;
      for (const auto& [_, sec] : line.second) rl.sections.push_back(sec);
      rec.lines.push_back(std::move(rl));
    }
    if (rec.lines.empty()) throw ParseError("registry", "plant '" + pid + "' has no lines");
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw ParseError("registry", "no records");
  return out;
}

std::string serialize_registry(const std::vector<RegistryRecord>& records,
                               const ClassVocabularies& vocab) {
  std::ostringstream os;
  os << "plant_id,line_idx,line_type,section_idx,section_type,component_classes\n";
  for (const auto& rec : records) {
    for (std::size_t l = 0; l < rec.lines.size(); ++l) {
      const auto& line = rec.lines[l];
      for (std::size_t s = 0; s < line.sections.size(); ++s) {
        const auto& sec = line.sections[s];
        std::string classes;
        for (std::size_t c = 0; c < sec.component_classes.size(); ++c) {
          if (c) classes += ";";
          classes += format_component_class(vocab.component_classes.at(sec.component_classes[c]));
        }
        os << csv_escape(rec.plant_id) << "," << l << ","
           << vocab.line_classes.at(line.line_type) << "," << s << ","
           << vocab.section_classes.at(sec.section_type) << "," << csv_escape(classes) << "\n";
      }
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// run configuration

void RunConfig::validate() const {
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ParseError("config", "lambdas must be >= 0");
  }
  for (double a : alphas) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ParseError("config", "alphas must be >= 0");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw ParseError("config.beta", "must be in [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParseError("config.gamma", "must be in (0,1)");
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw ParseError("config.epsilon", "must be in (0, 1e-3]");
  }
  if (!(match_cutoff_factor > 0.0)) {
    throw ParseError("config.match_cutoff_factor", "must be > 0");
  }
  if (!(annealing.cooling > 0.0 && annealing.cooling < 1.0)) {
    throw ParseError("config.cooling", "must be in (0,1)");
  }
  if (annealing.iters < 1) throw ParseError("config.iters", "must be >= 1");
  if (annealing.restarts < 1) throw ParseError("config.restarts", "must be >= 1");
  if (!(annealing.t0 > 0.0)) throw ParseError("config.t0", "must be > 0");
}

RunConfig parse_config(const std::string& bytes) {
  RunConfig cfg;
  std::istringstream is(bytes);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    std::string path = "config:line " + std::to_string(lineno);
    if (eq == std::string::npos) throw ParseError(path, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ParseError(path, "empty value for '" + key + "'");

    auto as_double = [&]() {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (...) {
        throw ParseError(path, "expected a number for '" + key + "'");
      }
      if (used != value.size()) throw ParseError(path, "trailing junk after number");
      return v;
    };
    auto as_int = [&]() {
      return parse_int_field(value, path);
    };

    if (key == "lambda1") cfg.lambdas[0] = as_double();
    else if (key == "lambda2") cfg.lambdas[1] = as_double();
    else if (key == "lambda3") cfg.lambdas[2] = as_double();
    else if (key == "lambda4") cfg.lambdas[3] = as_double();
    else if (key == "lambda5") cfg.lambdas[4] = as_double();
    else if (key == "alpha1") cfg.alphas[0] = as_double();
    else if (key == "alpha2") cfg.alphas[1] = as_double();
    else if (key == "alpha3") cfg.alphas[2] = as_double();
    else if (key == "beta") cfg.beta = as_double();
    else if (key == "gamma") cfg.gamma = as_double();
    else if (key == "epsilon") cfg.epsilon = as_double();
    else if (key == "match_cutoff_factor") cfg.match_cutoff_factor = as_double();
    else if (key == "t0") cfg.annealing.t0 = as_double();
    else if (key == "cooling") cfg.annealing.cooling = as_double();
    else if (key == "iters") cfg.annealing.iters = as_int();
    else if (key == "restarts") cfg.annealing.restarts = as_int();
    else if (key == "seed") {
      unsigned long long v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) {
        throw ParseError(path, "expected a non-negative integer for 'seed'");
      }
      cfg.seed = v;
    } else {
      throw ParseError(path, "unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < 5; ++i) os << "lambda" << (i + 1) << " = " << cfg.lambdas[i] << "\n";
  for (int i = 0; i < 3; ++i) os << "alpha" << (i + 1) << " = " << cfg.alphas[i] << "\n";
  os << "beta = " << cfg.beta << "\n";
  os << "gamma = " << cfg.gamma << "\n";
  os << "epsilon = " << cfg.epsilon << "\n";
  os << "match_cutoff_factor = " << cfg.match_cutoff_factor << "\n";
  os << "t0 = " << cfg.annealing.t0 << "\n";
  os << "cooling = " << cfg.annealing.cooling << "\n";
  os << "iters = " << cfg.annealing.iters << "\n";
  os << "restarts = " << cfg.annealing.restarts << "\n";
  os << "seed = " << cfg.seed << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// hierarchy documents

StructureGroups parse_structure(const std::string& bytes, const ClassVocabularies& vocab) {
  ojson j = parse_json(bytes, "structure");
  if (j.contains("hierarchy")) j = j["hierarchy"];
  StructureGroups g;
  const ojson& lines = field(j, "lines", "structure");
  if (!lines.is_array()) throw ParseError("structure.lines", "expected an array");
  for (std::size_t l = 0; l < lines.size(); ++l) {
    std::string lp = "structure.lines[" + std::to_string(l) + "]";
    const ojson& le = lines[l];
    StructureGroups::Line line;
    line.id = field(le, "id", lp).get<int>();
    std::string lcls = str(field(le, "class", lp), lp + ".class");
    line.cls = vocab.line_index(lcls);
    if (line.cls < 0) throw ParseError(lp + ".class", "unknown line class '" + lcls + "'");
    const ojson& sections = field(le, "sections", lp);
    for (std::size_t s = 0; s < sections.size(); ++s) {
      std::string sp = lp + ".sections[" + std::to_string(s) + "]";
      const ojson& se = sections[s];
      StructureGroups::Section sec;
      sec.id = field(se, "id", sp).get<int>();
      std::string scls = str(field(se, "class", sp), sp + ".class");
      sec.cls = vocab.section_index(scls);
      if (sec.cls < 0) throw ParseError(sp + ".class", "unknown section class '" + scls + "'");
      const ojson& comps = field(se, "components", sp);
      for (std::size_t c = 0; c < comps.size(); ++c) {
        std::string cp = sp + ".components[" + std::to_string(c) + "]";
        const ojson& ce = comps[c];
        int id = field(ce, "id", cp).get<int>();
        const ojson& cls = field(ce, "class", cp);
        if (!cls.is_array() || cls.size() != 2) throw ParseError(cp + ".class", "expected [type, subtype]");
        ComponentClass cc{str(cls[0], cp), str(cls[1], cp)};
        int ci = vocab.component_index(cc);
        if (ci < 0) {
          throw ParseError(cp + ".class",
                           "unknown component class '" + format_component_class(cc) + "'");
        }
        sec.components.push_back(id);
        g.component_class[id] = ci;
      }
      line.sections.push_back(std::move(sec));
    }
    g.lines.push_back(std::move(line));
  }
  return g;
}

std::string serialize_structure(const HierarchicalStructure& s,
                                const ClassVocabularies& vocab) {
  HierarchicalStructure c = canonicalize(s);
  ojson j;
  ojson lines = ojson::array();
  for (int line : c.line_ids()) {
    ojson le;
    le["id"] = line;
    le["class"] = vocab.line_classes.at(c.line_class.at(line));
    ojson sections = ojson::array();
    for (int sec : c.line_sections(line)) {
      ojson se;
      se["id"] = sec;
      se["class"] = vocab.section_classes.at(c.section_class.at(sec));
      ojson comps = ojson::array();
      for (int comp : c.section_members(sec)) {
        ojson ce;
        ce["id"] = comp;
        const auto& cc = vocab.component_classes.at(c.component_class.at(comp));
        ce["class"] = ojson::array({cc.first, cc.second});
        comps.push_back(std::move(ce));
      }
      se["components"] = std::move(comps);
      sections.push_back(std::move(se));
    }
    le["sections"] = std::move(sections);
    lines.push_back(std::move(le));
  }
  j["lines"] = std::move(lines);
  return j.dump(2) + "\n";
}

}  // namespace plantrec
