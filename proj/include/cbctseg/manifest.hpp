#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cbctseg {

// 'F' cases share the test-set field of view; 'P' cases have a reduced one.
enum class Source { F, P };

std::string_view to_string(Source s);
Source parse_source(std::string_view s);

struct CaseRecord {
  std::string case_id;
  std::optional<std::filesystem::path> image;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> prediction;
  Source source = Source::F;
  std::optional<int> fold;  // 0..4
};

struct Manifest {
  std::vector<CaseRecord> cases;
  std::optional<std::filesystem::path> class_table;

  // Relative paths are resolved against `base_dir`.
  static Manifest parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
  static Manifest load(const std::filesystem::path& path);

  // nullopt keeps every case.
  std::vector<CaseRecord> filter(std::optional<Source> source) const;
};

}  // namespace cbctseg
