#include "cbctseg/class_table.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "toothfairy2_classes.inc"

namespace cbctseg {

namespace {

constexpr std::pair<ClassGroup, std::string_view> kGroupNames[] = {
    {ClassGroup::tooth, "tooth"}, {ClassGroup::bone, "bone"},       {ClassGroup::canal, "canal"},
    {ClassGroup::sinus, "sinus"}, {ClassGroup::implant, "implant"}, {ClassGroup::other, "other"},
};

}  // namespace

std::string_view to_string(ClassGroup g) {
  for (auto [group, name] : kGroupNames) {
    if (group == g) return name;
  }
  return "other";
}

ClassGroup parse_class_group(std::string_view s) {
  for (auto [group, name] : kGroupNames) {
    if (name == s) return group;
  }
  throw ValidationError("unknown class group '" + std::string(s) + "'");
}

ClassTable::ClassTable(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Label id = entries_[i].label_id;
    if (id == 0) throw ValidationError("class table may not contain label 0");
    if (id >= lookup_.size()) lookup_.resize(std::size_t{id} + 1, -1);
    if (lookup_[id] >= 0) throw ValidationError("duplicate label id " + std::to_string(id) + " in class table");
    lookup_[id] = static_cast<int>(i);
  }
}

bool ClassTable::contains(Label id) const { return position(id).has_value(); }

std::optional<std::size_t> ClassTable::position(Label id) const {
  if (id >= lookup_.size() || lookup_[id] < 0) return std::nullopt;
  return static_cast<std::size_t>(lookup_[id]);
}

std::vector<Label> ClassTable::label_ids() const {
  std::vector<Label> ids;
  ids.reserve(entries_.size());
  for (const auto& e : entries_) ids.push_back(e.label_id);
  return ids;
}

Label ClassTable::max_label() const { return lookup_.empty() ? Label{0} : static_cast<Label>(lookup_.size() - 1); }

ClassTable ClassTable::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("class table is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("class table must be a JSON array");
  std::vector<ClassEntry> entries;
  try {
    for (const auto& item : j) {
      if (!item.is_object() || !item.contains("label") || !item.contains("name")) {
        throw ValidationError("class table entries need \"label\" and \"name\"");
      }
      const auto& lbl = item["label"];
      if (!lbl.is_number_integer() || lbl.get<long long>() <= 0 || lbl.get<long long>() > 65535) {
        throw ValidationError("class label must be an integer in [1, 65535]");
      }
      ClassGroup group = item.contains("group") ? parse_class_group(item["group"].get<std::string>()) : ClassGroup::other;
      entries.push_back({static_cast<Label>(lbl.get<long long>()), item["name"].get<std::string>(), group});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed class table: ") + e.what());
  }
  return ClassTable(std::move(entries));
}

ClassTable ClassTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ClassTable::to_json_text() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries_) {
    j.push_back({{"label", e.label_id}, {"name", e.name}, {"group", std::string(to_string(e.group))}});
  }
  return j.dump(2) + "\n";
}

ClassTable ClassTable::toothfairy2() {
  static const ClassTable table = from_json_text(kToothFairy2ClassesJson);
  return table;
}

void check_labels_in_table(const LabelVolume& vol, const ClassTable& table, std::string_view what) {
  auto hist = label_histogram(vol);
  for (std::size_t v = 1; v < hist.size(); ++v) {
    if (hist[v] > 0 && !table.contains(static_cast<Label>(v))) {
      throw ValidationError(std::string(what) + " contains label " + std::to_string(v) +
                            " which is not in the class table");
    }
  }
}

}  // namespace cbctseg
