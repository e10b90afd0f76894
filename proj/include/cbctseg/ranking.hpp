#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg {

// NaN marks a class the algorithm has no score for.
struct ClassScore {
  Label label_id = 0;
  double mean_dice = 0.0;
  double mean_hd95 = 0.0;
};

struct AlgorithmScores {
  std::string algorithm_id;
  std::vector<ClassScore> classes;
};

enum class RankMetric { dice, hd95 };

struct RankColumn {
  Label label_id;
  RankMetric metric;
  std::string name() const;  // e.g. "11_dice"
};

struct RankTable {
  std::vector<std::string> algorithms;
  std::vector<RankColumn> columns;          // per class ascending: dice, hd95
  std::vector<std::vector<double>> ranks;   // [algorithm][column]
  std::vector<double> mean_rank;            // per algorithm
  std::vector<Label> excluded_classes;      // no algorithm has scores for these

  // Algorithm indices ordered by mean rank, ties by input order.
  std::vector<std::size_t> order() const;
  std::string to_csv() const;
  // {"algorithm_id": mean_rank, ...} in ascending mean-rank order.
  std::string mean_ranks_json() const;
};

// Dice columns rank descending, HD95 ascending; tied values share the
// average of their rank positions; mean over all columns.
RankTable compute_mean_ranks(const std::vector<AlgorithmScores>& scores);

// CSV with header algorithm_id,label_id,mean_dice,mean_hd95.
std::vector<AlgorithmScores> parse_scores_csv(std::string_view text);
std::vector<AlgorithmScores> load_scores_csv(const std::filesystem::path& path);

}  // namespace cbctseg
