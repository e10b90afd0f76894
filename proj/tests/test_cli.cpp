#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cbctseg/cli.hpp"
#include "cbctseg/dataset.hpp"
#include "cbctseg/ensemble.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/planner.hpp"
#include "support/cutoff_oracle.hpp"
#include "support/instances.hpp"
#include "support/temp.hpp"

using namespace cbctseg;
using cbctseg::testing::temp_dir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cbctseg");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small dataset with a 5-class table; returns the manifest path.
fs::path make_dataset(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  synth::Rng rng(seed);
  std::vector<Label> labels{1, 2, 3, 4, 5};
  auto cases = synth::tuning_set(rng, n, Dims{18, 16, 14}, Spacing(0.3, 0.3, 0.6), labels);
  std::ofstream(dir / "classes.json") << R"([
    {"label": 1, "name": "a", "group": "bone"}, {"label": 2, "name": "b", "group": "bone"},
    {"label": 3, "name": "c", "group": "tooth"}, {"label": 4, "name": "d", "group": "tooth"},
    {"label": 5, "name": "e", "group": "other"}])";
  nlohmann::json m;
  m["class_table"] = "classes.json";
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  for (auto& c : cases) {
    nifti::write_label_volume(c.gt, dir / "gt" / (c.case_id + ".nii"));
    nifti::write_label_volume(c.pred, dir / "pred" / (c.case_id + ".nii"));
    m["cases"].push_back({{"case_id", c.case_id},
                          {"labels", "gt/" + c.case_id + ".nii"},
                          {"prediction", "pred/" + c.case_id + ".nii"},
                          {"source", std::string(to_string(c.source))}});
  }
  std::ofstream(dir / "manifest.json") << m.dump(2);
  return dir / "manifest.json";
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run_cli({}).code == 1);
  auto r = run_cli({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run_cli({"plan", "--patch", "64,64,64", "--out", "x.json", "--bogus"}).code == 1);
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"evaluate"}).code == 1);  // missing required flags
  CHECK(run_cli({"bordercore"}).code == 1);
}

TEST_CASE("evaluate, optimize and postprocess") {
  auto dir = temp_dir("cli_pipeline");
  auto manifest = make_dataset(dir, 9, 101).string();

  auto r1 = run_cli({"evaluate", "--manifest", manifest, "--out", (dir / "eval1.csv").string(), "--threads", "1"});
  REQUIRE(r1.code == 0);
  auto r3 = run_cli({"--threads", "3", "--json", "evaluate", "--manifest", manifest, "--out", (dir / "eval3.csv").string()});
  REQUIRE(r3.code == 0);
  CHECK(slurp(dir / "eval1.csv") == slurp(dir / "eval3.csv"));
  CHECK(slurp(dir / "eval1.json") == slurp(dir / "eval3.json"));
  CHECK(r3.out == slurp(dir / "eval3.json"));

  // rows agree with a direct library call
  auto m = Manifest::load(manifest);
  auto table = ClassTable::load(dir / "classes.json");
  auto evals = evaluate_dataset(scored_cases(m, std::nullopt), table);
  CHECK(slurp(dir / "eval1.csv") == evaluation_csv(evals));
  std::istringstream csv(slurp(dir / "eval1.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 1 + 9 * 5);

  auto o1 = run_cli({"optimize-cutoffs", "--manifest", manifest, "--source", "F", "--mode", "per-component", "--out",
                 (dir / "cut1.json").string()});
  REQUIRE(o1.code == 0);
  auto o3 = run_cli({"optimize-cutoffs", "--manifest", manifest, "--out", (dir / "cut3.json").string(), "--threads", "3"});
  REQUIRE(o3.code == 0);
  CHECK(slurp(dir / "cut1.json") == slurp(dir / "cut3.json"));

  // F-only tuning equals the library path on the F subset
  std::vector<TuningCase> f_cases;
  for (const auto& c : m.cases)
    f_cases.push_back({c.case_id, c.source, nifti::read_label_volume(*c.prediction), nifti::read_label_volume(*c.labels)});
  OptimizerOptions opts;
  CHECK(CutoffTable::load(dir / "cut1.json") == optimize_cutoffs(f_cases, table, opts, Source::F));

  auto p = run_cli({"--json", "postprocess", "--manifest", manifest, "--cutoffs", (dir / "cut1.json").string(), "--out-dir",
                (dir / "post").string()});
  REQUIRE(p.code == 0);
  auto summary = nlohmann::json::parse(p.out);
  CHECK(summary["written"] == 9);
  CHECK(summary["evaluated_cases"] == 9);
  auto cuts = CutoffTable::load(dir / "cut1.json");
  for (const auto& c : m.cases) {
    auto out = nifti::read_label_volume(dir / "post" / (c.case_id + ".nii"));
    CHECK(out == apply_cutoffs(nifti::read_label_volume(*c.prediction), cuts));
  }

  CHECK(run_cli({"evaluate", "--manifest", (dir / "nope.json").string(), "--out", (dir / "e.csv").string()}).code == 2);
  CHECK(run_cli({"evaluate", "--manifest", manifest, "--out", (dir / "e.csv").string(), "--source", "X"}).code == 1);
  CHECK(run_cli({"optimize-cutoffs", "--manifest", manifest, "--out", (dir / "c.json").string(), "--mode", "odd"}).code == 1);
  fs::remove(dir / "pred" / "case_0.nii");
  CHECK(run_cli({"evaluate", "--manifest", manifest, "--out", (dir / "e.csv").string()}).code == 2);
}

TEST_CASE("rank") {
  auto dir = temp_dir("cli_rank");
  std::ofstream(dir / "scores.csv") << "algorithm_id,label_id,mean_dice,mean_hd95\n"
                                       "A,1,0.95,4\nA,2,0.90,6\nB,1,0.93,2\nB,2,0.88,3\nC,1,0.5,9\nC,2,0.4,9.5\n";
  auto r = run_cli({"--json", "rank", "--scores", (dir / "scores.csv").string(), "--out", (dir / "ranks.csv").string()});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(slurp(dir / "ranks.json"));
  CHECK(j["A"] == 1.5);
  CHECK(j["C"] == 3.0);
  CHECK(r.out == slurp(dir / "ranks.json"));
  std::ofstream(dir / "bad.csv") << "algorithm_id,label_id,mean_dice,mean_hd95\nA,1,0.9,1\n";
  CHECK(run_cli({"rank", "--scores", (dir / "bad.csv").string(), "--out", (dir / "r.csv").string()}).code == 1);
  CHECK(run_cli({"rank", "--scores", (dir / "none.csv").string(), "--out", (dir / "r.csv").string()}).code == 2);
}

TEST_CASE("ensemble") {
  auto dir = temp_dir("cli_ensemble");
  LabelVolume a(Dims{2, 2, 1}, isotropic(1.0), std::vector<Label>{3, 3, 1, 0});
  LabelVolume b(Dims{2, 2, 1}, isotropic(1.0), std::vector<Label>{5, 3, 2, 0});
  nifti::write_label_volume(a, dir / "a.nii");
  nifti::write_label_volume(b, dir / "b.nii");
  auto vote = [&](std::string prio) {
    std::vector<std::string> args{"ensemble", "--mode", "vote", "--inputs", (dir / "a.nii").string(),
                                  (dir / "b.nii").string(), "--out", (dir / "v.nii").string()};
    if (!prio.empty()) args.insert(args.end(), {"--priority", prio});
    return run_cli(args);
  };
  REQUIRE(vote("m1,m2").code == 0);
  CHECK(nifti::read_label_volume(dir / "v.nii").vector() == std::vector<Label>{3, 3, 1, 0});
  REQUIRE(vote("m2,m1").code == 0);
  CHECK(nifti::read_label_volume(dir / "v.nii").vector() == std::vector<Label>{5, 3, 2, 0});
  CHECK(vote("m1,m3").code == 1);
  CHECK(vote("m1,m1").code == 1);

  ProbabilityStack p(Dims{2, 1, 1}, isotropic(1.0), 2), q = p;
  p.at(0, 0) = 0.6, p.at(1, 0) = 0.4, p.at(0, 1) = 0.2, p.at(1, 1) = 0.8;
  q.at(0, 0) = 0.4, q.at(1, 0) = 0.6, q.at(0, 1) = 0.3, q.at(1, 1) = 0.7;
  write_probability_stack(p, dir / "p.nii");
  write_probability_stack(q, dir / "q.nii");
  auto r = run_cli({"ensemble", "--mode", "prob", "--inputs", (dir / "p.nii").string(), (dir / "q.nii").string(), "--out",
                (dir / "pr.nii").string()});
  REQUIRE(r.code == 0);
  CHECK(nifti::read_label_volume(dir / "pr.nii").vector() == std::vector<Label>{0, 1});
  CHECK(run_cli({"ensemble", "--mode", "mean", "--inputs", (dir / "p.nii").string(), "--out", (dir / "x.nii").string()})
            .code == 1);
}

TEST_CASE("plan") {
  auto dir = temp_dir("cli_plan");
  auto r = run_cli({"plan", "--patch", "160,320,320", "--mirror-axes", "0,1", "--out", (dir / "plan.json").string()});
  REQUIRE(r.code == 0);
  auto plan = NetworkPlan::load(dir / "plan.json");
  CHECK(plan.n_stages == 7);
  CHECK(plan.bottleneck_stride == Extent3{32, 64, 64});
  CHECK(plan.mirror_axes == std::vector<int>{0, 1});
  REQUIRE(run_cli({"plan", "--preset", "toothfairy2", "--out", (dir / "preset.json").string()}).code == 0);
  CHECK(NetworkPlan::load(dir / "preset.json") == plan_topology(toothfairy2_request()));
  REQUIRE(run_cli({"plan", "--preset", "baseline", "--out", (dir / "base.json").string()}).code == 0);
  CHECK(NetworkPlan::load(dir / "base.json").mirror_axes == std::vector<int>{0, 1, 2});
  auto w = run_cli({"plan", "--patch", "192,320,320", "--median", "169,347,371", "--out", (dir / "w.json").string()});
  CHECK(w.code == 0);
  CHECK(w.err.find("warning: axis 0") != std::string::npos);
  CHECK(run_cli({"plan", "--patch", "2,64,64", "--out", (dir / "x.json").string()}).code == 1);
  CHECK(run_cli({"plan", "--patch", "64,64", "--out", (dir / "x.json").string()}).code == 1);
}

TEST_CASE("bordercore, normalize and info") {
  auto dir = temp_dir("cli_misc");
  synth::Rng rng(7);
  auto inst = synth::instance_map(rng, Dims{20, 18, 16}, 5);
  nifti::write_label_volume(inst, dir / "inst.nii");
  REQUIRE(run_cli({"bordercore", "encode", "--in", (dir / "inst.nii").string(), "--out", (dir / "bc.nii").string()}).code ==
          0);
  auto d = run_cli({"--json", "bordercore", "decode", "--in", (dir / "bc.nii").string(), "--out",
                (dir / "back.nii").string()});
  REQUIRE(d.code == 0);
  CHECK(nlohmann::json::parse(d.out)["dropped_orphans"] == 0);
  auto back = nifti::read_label_volume(dir / "back.nii");
  CHECK(oracle::same_partition(inst.vector(), back.vector(), Label{0}, Label{0}));

  ScalarVolume ct(Dims{3, 1, 1}, isotropic(0.3), std::vector<double>{811, 5000, -2000});
  nifti::write_scalar_volume(ct, dir / "ct.nii");
  REQUIRE(run_cli({"normalize", "--in", (dir / "ct.nii").string(), "--out", (dir / "n.nii").string()}).code == 0);
  auto n = nifti::read_scalar_volume(dir / "n.nii");
  CHECK(n[0] == 0.0);
  CHECK(n[1] == (3513.0 - 811.0) / 1001.0);
  CHECK(run_cli({"normalize", "--in", (dir / "ct.nii").string(), "--out", (dir / "n.nii").string(), "--scale", "0"}).code ==
        1);

  auto info = run_cli({"--json", "info", (dir / "inst.nii").string()});
  REQUIRE(info.code == 0);
  auto j = nlohmann::json::parse(info.out);
  CHECK(j["dims"] == nlohmann::json({20, 18, 16}));
  CHECK(j.contains("labels"));
  CHECK(run_cli({"info", (dir / "missing.nii").string()}).code == 2);
  CHECK(nlohmann::json::parse(run_cli({"--json", "info"}).out)["classes"] == 42);
}
