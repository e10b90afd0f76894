#include "cbctseg/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbctseg/errors.hpp"

namespace cbctseg {

std::string_view to_string(Source s) { return s == Source::F ? "F" : "P"; }

Source parse_source(std::string_view s) {
  if (s == "F") return Source::F;
  if (s == "P") return Source::P;
  throw ValidationError("unknown case source '" + std::string(s) + "' (expected \"F\" or \"P\")");
}

namespace {

std::optional<std::filesystem::path> optional_path(const nlohmann::json& c, const char* key,
                                                   const std::filesystem::path& base) {
  if (!c.contains(key) || c[key].is_null()) return std::nullopt;
  if (!c[key].is_string()) throw ValidationError(std::string("\"") + key + "\" must be a string path");
  std::filesystem::path p = c[key].get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

Manifest Manifest::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("cases") || !j["cases"].is_array()) {
    throw ValidationError("manifest needs a \"cases\" array");
  }
  Manifest m;
  std::set<std::string> seen;
  for (const auto& c : j["cases"]) {
    if (!c.is_object()) throw ValidationError("manifest cases must be objects");
    if (!c.contains("case_id") || !c["case_id"].is_string()) throw ValidationError("case is missing \"case_id\"");
    CaseRecord r;
    r.case_id = c["case_id"].get<std::string>();
    if (!seen.insert(r.case_id).second) throw ValidationError("duplicate case_id '" + r.case_id + "'");
    if (!c.contains("source") || !c["source"].is_string()) {
      throw ValidationError("case '" + r.case_id + "' is missing \"source\"");
    }
    r.source = parse_source(c["source"].get<std::string>());
    if (c.contains("fold") && !c["fold"].is_null()) {
      if (!c["fold"].is_number_integer()) throw ValidationError("fold must be an integer");
      int fold = c["fold"].get<int>();
      if (fold < 0 || fold > 4) {
        throw ValidationError("case '" + r.case_id + "' has fold " + std::to_string(fold) + " outside [0,4]");
      }
      r.fold = fold;
    }
    r.image = optional_path(c, "image", base_dir);
    r.labels = optional_path(c, "labels", base_dir);
    r.prediction = optional_path(c, "prediction", base_dir);
    m.cases.push_back(std::move(r));
  }
  if (m.cases.empty()) throw ValidationError("manifest has no cases");
  m.class_table = optional_path(j, "class_table", base_dir);
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::vector<CaseRecord> Manifest::filter(std::optional<Source> source) const {
  std::vector<CaseRecord> out;
  for (const auto& c : cases) {
    if (!source || c.source == *source) out.push_back(c);
  }
  return out;
}

}  // namespace cbctseg
