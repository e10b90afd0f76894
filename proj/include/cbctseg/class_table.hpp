#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg {

enum class ClassGroup { tooth, bone, canal, sinus, implant, other };

std::string_view to_string(ClassGroup g);
ClassGroup parse_class_group(std::string_view s);

struct ClassEntry {
  Label label_id;
  std::string name;
  ClassGroup group;
  friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

// Ordered list of foreground classes; label ids unique and non-zero.
class ClassTable {
 public:
  ClassTable() = default;
  explicit ClassTable(std::vector<ClassEntry> entries);

  const std::vector<ClassEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(Label id) const;
  std::optional<std::size_t> position(Label id) const;
  std::vector<Label> label_ids() const;
  Label max_label() const;

  static ClassTable from_json_text(std::string_view text);
  static ClassTable load(const std::filesystem::path& path);
  std::string to_json_text() const;

  // The 42-class coding of the ToothFairy2 release (jaws, canals, sinuses,
  // pharynx, bridge, crown, implant and 32 FDI teeth).
  static ClassTable toothfairy2();

  friend bool operator==(const ClassTable&, const ClassTable&) = default;

 private:
  std::vector<ClassEntry> entries_;
  std::vector<int> lookup_;  // label -> position or -1
};

// Throws ValidationError naming the first label not in `table` (0 is always allowed).
void check_labels_in_table(const LabelVolume& vol, const ClassTable& table, std::string_view what);

}  // namespace cbctseg
