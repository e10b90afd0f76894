#include "cbctseg/ranking.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbctseg/errors.hpp"
#include "format.hpp"

namespace cbctseg {

std::string RankColumn::name() const {
  return std::to_string(label_id) + (metric == RankMetric::dice ? "_dice" : "_hd95");
}

namespace {

// Average-tie ranks of `values`; `descending` ranks larger values first.
std::vector<double> tied_ranks(const std::vector<double>& values, bool descending) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

bool missing(const ClassScore& s) { return std::isnan(s.mean_dice) && std::isnan(s.mean_hd95); }

}  // namespace

RankTable compute_mean_ranks(const std::vector<AlgorithmScores>& scores) {
  if (scores.empty()) throw ValidationError("ranking needs at least one algorithm");
  if (scores.size() < 2) throw ValidationError("ranking needs at least two algorithms");

  std::vector<std::map<Label, ClassScore>> by_label(scores.size());
  std::set<std::string> ids;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (!ids.insert(scores[a].algorithm_id).second) {
      throw ValidationError("duplicate algorithm '" + scores[a].algorithm_id + "'");
    }
    for (const auto& c : scores[a].classes) {
      if (!by_label[a].emplace(c.label_id, c).second) {
        throw ValidationError("algorithm '" + scores[a].algorithm_id + "' lists class " +
                              std::to_string(c.label_id) + " twice");
      }
    }
  }
  for (std::size_t a = 1; a < scores.size(); ++a) {
    bool same = by_label[a].size() == by_label[0].size() &&
                std::equal(by_label[a].begin(), by_label[a].end(), by_label[0].begin(),
                           [](const auto& x, const auto& y) { return x.first == y.first; });
    if (!same) {
      throw ValidationError("algorithms '" + scores[0].algorithm_id + "' and '" + scores[a].algorithm_id +
                            "' cover different class sets");
    }
  }

  RankTable t;
  for (const auto& s : scores) t.algorithms.push_back(s.algorithm_id);
  t.ranks.assign(scores.size(), {});
  for (const auto& [label, first] : by_label[0]) {
    std::size_t absent = 0;
    for (const auto& m : by_label) absent += missing(m.at(label));
    if (absent == scores.size()) {
      t.excluded_classes.push_back(label);
      continue;
    }
    if (absent > 0) {
      throw ValidationError("class " + std::to_string(label) + " is scored for some algorithms but not others");
    }
    for (RankMetric metric : {RankMetric::dice, RankMetric::hd95}) {
      std::vector<double> values;
      for (const auto& m : by_label) {
        const ClassScore& s = m.at(label);
        double v = metric == RankMetric::dice ? s.mean_dice : s.mean_hd95;
        if (!std::isfinite(v)) {
          throw ValidationError("non-finite score for class " + std::to_string(label));
        }
        values.push_back(v);
      }
      auto r = tied_ranks(values, metric == RankMetric::dice);
      for (std::size_t a = 0; a < scores.size(); ++a) t.ranks[a].push_back(r[a]);
      t.columns.push_back({label, metric});
    }
  }
  if (t.columns.empty()) throw ValidationError("no class has scores to rank");
  for (const auto& row : t.ranks) {
    t.mean_rank.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
  }
  return t;
}

std::vector<std::size_t> RankTable::order() const {
  std::vector<std::size_t> idx(algorithms.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return mean_rank[a] < mean_rank[b]; });
  return idx;
}

std::string RankTable::to_csv() const {
  std::string out = "algorithm_id";
  for (const auto& c : columns) out += "," + c.name();
  out += ",mean_rank\n";
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    out += algorithms[a];
    for (double r : ranks[a]) out += "," + format_double(r);
    out += "," + format_double(mean_rank[a]) + "\n";
  }
  return out;
}

std::string RankTable::mean_ranks_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t a : order()) j[algorithms[a]] = mean_rank[a];
  return j.dump(2) + "\n";
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.empty() || lower == "nan") return std::nan("");
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
}

}  // namespace

std::vector<AlgorithmScores> parse_scores_csv(std::string_view text) {
  std::vector<AlgorithmScores> out;
  std::map<std::string, std::size_t> index;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != 4 || cells[0] != "algorithm_id" || cells[1] != "label_id" || cells[2] != "mean_dice" ||
          cells[3] != "mean_hd95") {
        throw ValidationError("scores CSV header must be algorithm_id,label_id,mean_dice,mean_hd95");
      }
      continue;
    }
    if (cells.size() != 4) throw ValidationError("line " + std::to_string(line_no) + ": expected 4 columns");
    long label = 0;
    auto [ptr, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), label);
    if (ec != std::errc{} || ptr != cells[1].data() + cells[1].size() || label <= 0 || label > 65535) {
      throw ValidationError("line " + std::to_string(line_no) + ": bad label_id '" + cells[1] + "'");
    }
    auto [it, inserted] = index.emplace(cells[0], out.size());
    if (inserted) out.push_back({cells[0], {}});
    out[it->second].classes.push_back(
        {static_cast<Label>(label), parse_number(cells[2], line_no), parse_number(cells[3], line_no)});
  }
  if (!header_seen) throw ValidationError("scores CSV is empty");
  return out;
}

std::vector<AlgorithmScores> load_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scores_csv(ss.str());
}

}  // namespace cbctseg
