#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "cbctseg/class_table.hpp"
#include "cbctseg/errors.hpp"
#include "cbctseg/ranking.hpp"

using namespace cbctseg;

namespace {

AlgorithmScores algo(std::string id, std::vector<ClassScore> cs) { return {std::move(id), std::move(cs)}; }

std::vector<AlgorithmScores> random_scores(std::mt19937_64& rng, std::size_t n, const std::vector<Label>& labels) {
  std::uniform_int_distribution<int> coarse(0, 4);  // small range forces ties
  std::vector<AlgorithmScores> out;
  for (std::size_t a = 0; a < n; ++a) {
    AlgorithmScores s{"alg" + std::to_string(a), {}};
    for (Label l : labels) s.classes.push_back({l, 0.5 + 0.1 * coarse(rng), 1.0 + coarse(rng)});
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("mean ranks on hand-built tables") {
  SUBCASE("identical scores tie everywhere") {
    auto t = compute_mean_ranks({algo("a", {{1, 0.9, 2.0}, {2, 0.8, 3.0}}), algo("b", {{1, 0.9, 2.0}, {2, 0.8, 3.0}})});
    CHECK(t.mean_rank == std::vector<double>{1.5, 1.5});
  }
  SUBCASE("dominance") {
    auto t = compute_mean_ranks({algo("b", {{1, 0.7, 5.0}}), algo("a", {{1, 0.9, 2.0}})});
    CHECK(t.mean_rank == std::vector<double>{2.0, 1.0});
    CHECK(t.order() == std::vector<std::size_t>{1, 0});
  }
  SUBCASE("three algorithms, two classes") {
    // A best Dice, B best HD95, C last in every column
    auto t = compute_mean_ranks({algo("A", {{1, 0.95, 4.0}, {2, 0.90, 6.0}}),
                                 algo("B", {{1, 0.93, 2.0}, {2, 0.88, 3.0}}),
                                 algo("C", {{1, 0.50, 9.0}, {2, 0.40, 9.5}})});
    REQUIRE(t.columns.size() == 4);
    CHECK(t.ranks[0] == std::vector<double>{1, 2, 1, 2});
    CHECK(t.ranks[1] == std::vector<double>{2, 1, 2, 1});
    CHECK(t.mean_rank == std::vector<double>{1.5, 1.5, 3.0});
  }
  SUBCASE("average ties within a column") {
    auto t = compute_mean_ranks({algo("a", {{1, 0.8, 1.0}}), algo("b", {{1, 0.8, 2.0}}), algo("c", {{1, 0.9, 2.0}})});
    CHECK(t.ranks[0] == std::vector<double>{2.5, 1.0});
    CHECK(t.ranks[1] == std::vector<double>{2.5, 2.5});
    CHECK(t.ranks[2] == std::vector<double>{1.0, 2.5});
  }
}

TEST_CASE("column count follows the class table") {
  auto labels = ClassTable::toothfairy2().label_ids();
  std::mt19937_64 rng(3);
  auto t = compute_mean_ranks(random_scores(rng, 5, labels));
  CHECK(t.columns.size() == 84);
  CHECK(t.columns.front().name() == "1_dice");
  CHECK(t.columns[1].name() == "1_hd95");
  for (std::size_t a = 0; a < 5; ++a) {
    double s = std::accumulate(t.ranks[a].begin(), t.ranks[a].end(), 0.0);
    CHECK(t.mean_rank[a] == doctest::Approx(s / 84.0));
  }
}

TEST_CASE("rank properties") {
  std::mt19937_64 rng(11);
  std::vector<Label> labels{1, 2, 3, 4};
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng() % 5;
    auto scores = random_scores(rng, n, labels);
    auto t = compute_mean_ranks(scores);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      double sum = 0;
      for (std::size_t a = 0; a < n; ++a) sum += t.ranks[a][c];
      CHECK(sum == static_cast<double>(n * (n + 1)) / 2.0);
    }
    for (double m : t.mean_rank) {
      CHECK(m >= 1.0);
      CHECK(m <= static_cast<double>(n));
    }

    // strictly increasing transform of Dice keeps the table
    auto warped = scores;
    for (auto& s : warped)
      for (auto& c : s.classes) c.mean_dice = std::exp(3.0 * c.mean_dice) - 7.0;
    auto tw = compute_mean_ranks(warped);
    CHECK(tw.ranks == t.ranks);

    // a strictly dominated newcomer keeps the existing order
    auto extended = scores;
    AlgorithmScores worst{"worst", {}};
    for (Label l : labels) worst.classes.push_back({l, 0.0, 1000.0});
    extended.push_back(worst);
    auto te = compute_mean_ranks(extended);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) CHECK((t.mean_rank[a] < t.mean_rank[b]) == (te.mean_rank[a] < te.mean_rank[b]));
    CHECK(te.mean_rank.back() == static_cast<double>(n + 1));
  }
}

TEST_CASE("ranking errors and exclusions") {
  CHECK_THROWS_AS(compute_mean_ranks({}), ValidationError);
  CHECK_THROWS_AS(compute_mean_ranks({algo("a", {{1, 0.9, 1.0}})}), ValidationError);
  CHECK_THROWS_AS(compute_mean_ranks({algo("a", {{1, 0.9, 1.0}}), algo("b", {{2, 0.9, 1.0}})}), ValidationError);
  CHECK_THROWS_AS(compute_mean_ranks({algo("a", {{1, 0.9, 1.0}}), algo("a", {{1, 0.9, 1.0}})}), ValidationError);

  double nan = std::nan("");
  auto t = compute_mean_ranks({algo("a", {{1, 0.9, 1.0}, {7, nan, nan}}), algo("b", {{1, 0.8, 2.0}, {7, nan, nan}})});
  CHECK(t.excluded_classes == std::vector<Label>{7});
  CHECK(t.columns.size() == 2);
  CHECK_THROWS_AS(
      compute_mean_ranks({algo("a", {{1, 0.9, 1.0}, {7, 0.5, 1.0}}), algo("b", {{1, 0.8, 2.0}, {7, nan, nan}})}),
      ValidationError);
}

TEST_CASE("scores CSV and outputs") {
  auto scores = parse_scores_csv(
      "algorithm_id,label_id,mean_dice,mean_hd95\n"
      "A,1,0.95,4\nA,2,0.90,6\n"
      "B,1,0.93,2\nB,2,0.88,3\n"
      "C,1,0.5,9\nC,2,0.4,9.5\n");
  REQUIRE(scores.size() == 3);
  auto t = compute_mean_ranks(scores);
  CHECK(t.to_csv() ==
        "algorithm_id,1_dice,1_hd95,2_dice,2_hd95,mean_rank\n"
        "A,1,2,1,2,1.5\nB,2,1,2,1,1.5\nC,3,3,3,3,3\n");
  auto j = nlohmann::ordered_json::parse(t.mean_ranks_json());
  std::vector<std::string> keys;
  for (auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"A", "B", "C"});

  CHECK_THROWS_AS(parse_scores_csv("algo,label\n"), ValidationError);
  CHECK_THROWS_AS(parse_scores_csv("algorithm_id,label_id,mean_dice,mean_hd95\nA,x,1,1\n"), ValidationError);
  CHECK_THROWS_AS(parse_scores_csv("algorithm_id,label_id,mean_dice,mean_hd95\nA,1,abc,1\n"), ValidationError);
  CHECK_THROWS_AS(load_scores_csv("/nonexistent/scores.csv"), IoError);
}
