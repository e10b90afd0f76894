// Acceptance checks. One PASS/FAIL line per criterion; exit status reflects
// the hard criteria (1-10). Criterion 11 is a soft performance target.
//
//   acceptance [--seed N] [--only K] [--skip-perf]

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cbctseg/bordercore.hpp"
#include "cbctseg/class_table.hpp"
#include "cbctseg/core.hpp"
#include "cbctseg/metrics.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/parallel.hpp"
#include "cbctseg/planner.hpp"
#include "cbctseg/postprocess.hpp"
#include "cbctseg/ranking.hpp"
#include "support/cutoff_oracle.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace cbctseg;
using synth::Rng;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no time limit
  bool soft;
  std::function<Outcome(Rng&)> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Mask nonempty_mask(Rng& rng, const Dims& d, const Spacing& s) {
  for (;;) {
    Mask m = synth::random_structured_mask(rng, d, s);
    for (auto v : m.values())
      if (v) return m;
  }
}

// ---------------------------------------------------------------------------

Outcome planner_fixtures(Rng&) {
  auto t0 = Clock::now();
  NetworkPlan a = plan_topology(baseline_request());
  NetworkPlan b = plan_topology(toothfairy2_request());
  double us = seconds_since(t0) * 1e6;
  Outcome o;
  o.pass = a.n_stages == 6 && a.bottleneck_stride == Extent3{16, 32, 32} && a.patch_size == Extent3{112, 224, 256} &&
           b.n_stages == 7 && b.bottleneck_stride == Extent3{32, 64, 64} && b.patch_size == Extent3{160, 320, 320};
  std::size_t enc_a = 0, enc_b = 0;
  for (auto v : a.encoder_blocks) enc_a += v;
  for (auto v : b.encoder_blocks) enc_b += v;
  long dec_delta = static_cast<long>(b.decoder_convs.size()) - static_cast<long>(a.decoder_convs.size());
  o.pass = o.pass && enc_b - enc_a == 6 && dec_delta == 1 && us < 1000.0;
  o.detail = fmt("stages %zu/%zu, +%zu encoder blocks, +%ld decoder conv, %.0f us", a.n_stages, b.n_stages,
                 enc_b - enc_a, dec_delta, us);
  return o;
}

Outcome normalization(Rng& rng) {
  const auto& s = kToothFairy2Ct;
  double e1 = std::abs(s.apply(811.0) - 0.0);
  double e2 = std::abs(s.apply(5000.0) - (3513.0 - 811.0) / 1001.0);
  double e3 = std::abs(s.apply(-2000.0) - (-992.0 - 811.0) / 1001.0);
  Outcome o;
  o.pass = e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12;

  ScalarVolume vol(Dims{100, 100, 10}, isotropic(0.3));
  std::uniform_real_distribution<double> u(-6000.0, 9000.0);
  for (auto& x : vol.mutable_values()) x = u(rng);
  ScalarVolume out = normalize_ct(vol, s);
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < vol.size(); ++i) pairs.emplace_back(vol[i], out[i]);
  std::sort(pairs.begin(), pairs.end());
  std::size_t violations = 0;
  for (std::size_t i = 1; i < pairs.size(); ++i) violations += pairs[i].second < pairs[i - 1].second;
  o.pass = o.pass && violations == 0;
  o.detail = fmt("max example error %.1e, %zu monotonicity violations in %zu inputs", std::max({e1, e2, e3}),
                 violations, pairs.size());
  return o;
}

Outcome metric_edges(Rng&) {
  ClassTable table({{1, "both_empty", ClassGroup::tooth},
                    {2, "gt_only", ClassGroup::tooth},
                    {3, "pred_only", ClassGroup::tooth},
                    {4, "both", ClassGroup::tooth}});
  const Dims d{10, 8, 6};
  const Spacing sp{0.5, 0.5, 1.0};
  LabelVolume gt(d, sp, Label{0}), pred(d, sp, Label{0});
  gt.at(1, 1, 1) = 2;
  pred.at(8, 6, 4) = 3;
  gt.at(5, 5, 3) = 4;
  pred.at(5, 5, 3) = 4;
  const double diagonal = std::sqrt(25.0 + 16.0 + 36.0);

  Outcome o;
  std::size_t checks = 0, failed = 0;
  auto expect = [&](bool ok) {
    ++checks;
    failed += !ok;
  };
  for (int mode = 0; mode < 2; ++mode) {
    MetricOptions opts;
    double penalty = diagonal;
    if (mode == 1) {
      opts.penalty_mode = PenaltyMode::fixed;
      opts.fixed_penalty_mm = 37.5;
      penalty = 37.5;
    }
    CaseEvaluation ev = evaluate_case(pred, gt, table, opts, "edge");
    const auto& c = ev.classes;
    expect(c[0].dice == 1.0 && c[0].hd95 == 0.0 && c[0].gt_empty && c[0].pred_empty);
    expect(c[1].dice == 0.0 && c[1].hd95 == penalty && c[1].pred_empty && !c[1].gt_empty);
    expect(c[2].dice == 0.0 && c[2].hd95 == penalty && c[2].gt_empty && !c[2].pred_empty);
    expect(c[3].dice == 1.0 && c[3].hd95 == 0.0);

    Mask empty(d, sp), one(d, sp);
    one.at(2, 2, 2) = 1;
    expect(dice(empty, empty) == 1.0 && hd95(empty, empty, opts) == 0.0);
    expect(dice(one, empty) == 0.0 && hd95(one, empty, opts) == penalty);
    expect(dice(empty, one) == 0.0 && hd95(empty, one, opts) == penalty);
  }
  o.pass = failed == 0;
  o.detail = fmt("%zu/%zu exact checks, both penalty modes", checks - failed, checks);
  return o;
}

Outcome edt_oracle(Rng& rng) {
  const Spacing spacings[3] = {{0.3, 0.3, 0.5}, {1.0, 0.25, 2.0}, {0.7, 1.3, 0.35}};
  std::size_t exact = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    Dims d = synth::random_dims(rng, 1, 12);
    Mask m = nonempty_mask(rng, d, isotropic(1.0));
    for (const auto& s : spacings) {
      ScalarVolume fast = edt_sq(m, s);
      auto slow = oracle::edt_sq(m, s);
      ++total;
      exact += std::equal(slow.begin(), slow.end(), fast.values().begin(), fast.values().end());
    }
  }
  return {exact == total, fmt("%zu/%zu masks bit-exact", exact, total)};
}

Outcome hd95_oracle(Rng& rng) {
  std::size_t ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    Dims d = synth::random_dims(rng, 2, 10);
    Spacing s{synth::uniform_real(rng, 0.2, 1.5), synth::uniform_real(rng, 0.2, 1.5), synth::uniform_real(rng, 0.2, 1.5)};
    Mask a = nonempty_mask(rng, d, s), b = nonempty_mask(rng, d, s);
    double fast = hd95(a, b, {});
    double slow = oracle::hd(a, b, 0.95);
    double err = std::abs(fast - slow);
    worst = std::max(worst, err);
    ok += err <= 1e-9;
  }
  return {ok == 200, fmt("%zu/200 pairs within 1e-9 (max error %.1e)", ok, worst)};
}

Outcome ccl_oracle(Rng& rng) {
  std::size_t ok = 0, total = 0, components = 0;
  for (int i = 0; i < 100; ++i) {
    Mask m = synth::random_structured_mask(rng, Dims{20, 20, 20}, isotropic(1.0));
    for (int conn : {6, 26}) {
      ComponentLabeling lab = label_components(m.values(), m.dims(), conn);
      auto ref = oracle::flood_fill(m, conn);
      ++total;
      ok += lab.ids == std::vector<std::int32_t>(ref.begin(), ref.end()) &&
            oracle::same_partition(lab.ids, ref, std::int32_t{-1}, -1);
      components += lab.sizes.size();
    }
  }
  return {ok == total, fmt("%zu/%zu labelings identical to flood fill (%zu components)", ok, total, components)};
}

Outcome optimizer_oracle(Rng& rng) {
  const std::vector<Label> labels{1, 2, 3, 4, 5};
  ClassTable table({{1, "a", ClassGroup::bone},
                    {2, "b", ClassGroup::bone},
                    {3, "c", ClassGroup::tooth},
                    {4, "d", ClassGroup::tooth},
                    {5, "e", ClassGroup::tooth}});
  auto cases = synth::tuning_set(rng, 30, Dims{16, 16, 12}, Spacing{0.3, 0.3, 0.5}, labels);
  std::vector<oracle::PairCase> pairs;
  for (const auto& c : cases) pairs.push_back({c.pred, c.gt});

  std::size_t tables_ok = 0, tables = 0, classes_ok = 0, classes_total = 0;
  double min_gain = std::numeric_limits<double>::infinity();
  for (auto mode : {CutoffMode::per_component, CutoffMode::whole_class}) {
    for (int conn : {6, 26}) {
      OptimizerOptions opts{mode, conn, {}};
      CutoffTable fast = optimize_cutoffs(cases, table, opts, std::nullopt);
      CutoffTable slow = oracle::exhaustive_cutoffs(pairs, table, mode, conn, {});
      ++tables;
      tables_ok += fast.mode == slow.mode && fast.connectivity == slow.connectivity && fast.classes == slow.classes;

      std::vector<CaseEvaluation> before, after;
      for (const auto& c : cases) {
        before.push_back(evaluate_case(c.pred, c.gt, table, {}, c.case_id));
        after.push_back(evaluate_case(apply_cutoffs(c.pred, fast), c.gt, table, {}, c.case_id));
      }
      auto mb = class_means(before, table), ma = class_means(after, table);
      for (std::size_t k = 0; k < mb.size(); ++k) {
        ++classes_total;
        classes_ok += ma[k].dice >= mb[k].dice;
        min_gain = std::min(min_gain, ma[k].dice - mb[k].dice);
      }
    }
  }
  return {tables_ok == tables && classes_ok == classes_total,
          fmt("%zu/%zu tables equal exhaustive search, %zu/%zu class means non-decreasing (min Dice gain %+.4f)",
              tables_ok, tables, classes_ok, classes_total, min_gain)};
}

Outcome ranking(Rng& rng) {
  Outcome o;
  auto t = compute_mean_ranks({{"A", {{1, 0.95, 4.0}, {2, 0.90, 6.0}}},
                               {"B", {{1, 0.93, 2.0}, {2, 0.90, 3.0}}},
                               {"C", {{1, 0.50, 4.0}, {2, 0.40, 9.5}}}});
  // columns 1_dice 1_hd95 2_dice 2_hd95; ties averaged
  const std::vector<std::vector<double>> expected{{1, 2.5, 1.5, 2}, {2, 1, 1.5, 1}, {3, 2.5, 3, 3}};
  const std::vector<double> expected_mean{7.0 / 4, 5.5 / 4, 11.5 / 4};
  bool hand = t.columns.size() == 4 && t.ranks == expected && t.mean_rank == expected_mean;

  std::vector<AlgorithmScores> many;
  for (int a = 0; a < 3; ++a) {
    AlgorithmScores s{"alg" + std::to_string(a), {}};
    for (Label l : ClassTable::toothfairy2().label_ids())
      s.classes.push_back({l, synth::uniform_real(rng, 0.5, 1.0), synth::uniform_real(rng, 0.0, 50.0)});
    many.push_back(std::move(s));
  }
  auto big = compute_mean_ranks(many);
  o.pass = hand && big.columns.size() == 84;
  o.detail = fmt("hand table %s, %zu rank columns for %zu classes", hand ? "matches" : "differs", big.columns.size(),
                 ClassTable::toothfairy2().size());
  return o;
}

Outcome bordercore_roundtrip(Rng& rng) {
  std::size_t ok = 0, instances = 0, dropped = 0;
  for (int i = 0; i < 100; ++i) {
    LabelVolume inst = synth::instance_map(rng, Dims{24, 24, 20}, static_cast<int>(synth::uniform(rng, 3, 10)));
    DecodeResult r = decode_border_core(encode_border_core(inst));
    dropped += r.dropped_orphans;
    std::set<Label> ids(inst.values().begin(), inst.values().end());
    instances += ids.size() - ids.count(0);
    std::vector<Label> a(inst.values().begin(), inst.values().end()), b(r.instances.values().begin(), r.instances.values().end());
    ok += r.dropped_orphans == 0 && oracle::same_partition(a, b, Label{0}, Label{0});
  }
  return {ok == 100 && dropped == 0,
          fmt("%zu/100 maps restored (%zu instances), %zu dropped orphans", ok, instances, dropped)};
}

std::vector<std::uint8_t> gzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY);
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 64);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

Outcome io_roundtrip(Rng& rng) {
  auto dir = std::filesystem::temp_directory_path() / ("cbctseg_acceptance_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  std::size_t plain_ok = 0, gz_ok = 0;
  for (int i = 0; i < 50; ++i) {
    Dims d = synth::random_dims(rng, 1, 24);
    auto f = [&] { return static_cast<double>(static_cast<float>(synth::uniform_real(rng, 0.1, 2.0))); };
    LabelVolume v(d, Spacing{f(), f(), f()}, Label{0});
    Label top = i % 2 ? Label{65535} : Label{255};
    for (auto& x : v.mutable_values()) x = static_cast<Label>(synth::uniform(rng, 0, top));
    auto path = dir / ("v" + std::to_string(i) + ".nii");
    nifti::write_label_volume(v, path);
    plain_ok += nifti::read_label_volume(path) == v;
    auto bytes = nifti::read_file_bytes(path);
    auto gz = dir / ("v" + std::to_string(i) + ".nii.gz");
    nifti::write_bytes(gz, gzip(bytes));
    gz_ok += nifti::read_label_volume(gz) == v;
  }
  std::filesystem::remove_all(dir);
  return {plain_ok == 50 && gz_ok == 50, fmt("%zu/50 bit-identical, %zu/50 gzip reads match", plain_ok, gz_ok)};
}

bool same_bits(const CaseEvaluation& a, const CaseEvaluation& b) {
  if (a.case_id != b.case_id || a.classes.size() != b.classes.size()) return false;
  for (std::size_t k = 0; k < a.classes.size(); ++k) {
    const auto &x = a.classes[k], &y = b.classes[k];
    if (x.label_id != y.label_id || x.gt_empty != y.gt_empty || x.pred_empty != y.pred_empty ||
        std::memcmp(&x.dice, &y.dice, sizeof(double)) != 0 || std::memcmp(&x.hd95, &y.hd95, sizeof(double)) != 0)
      return false;
  }
  return true;
}

Outcome performance(Rng& rng) {
  const ClassTable table = ClassTable::toothfairy2();
  const auto labels = table.label_ids();
  const Dims d{169, 347, 371};
  const Spacing sp = isotropic(0.3);
  const std::size_t n_cases = 20, n_gt = 4;
  std::vector<LabelVolume> gts;
  for (std::size_t g = 0; g < n_gt; ++g) gts.push_back(synth::random_anatomy(rng, d, sp, labels));
  std::vector<LabelVolume> preds;
  for (std::size_t i = 0; i < n_cases; ++i) preds.push_back(synth::perturb(rng, gts[i % n_gt], labels, 6));

  auto t0 = Clock::now();
  evaluate_case(preds[0], gts[0], table, {}, "single");
  double single = seconds_since(t0);

  auto run = [&](unsigned threads) {
    std::vector<CaseEvaluation> out(n_cases);
    parallel_for(n_cases, threads, [&](std::size_t i) {
      out[i] = evaluate_case(preds[i], gts[i % n_gt], table, {}, "case_" + std::to_string(i));
    });
    return out;
  };
  t0 = Clock::now();
  auto serial = run(1);
  double t_serial = seconds_since(t0);
  t0 = Clock::now();
  auto parallel = run(8);
  double t_parallel = seconds_since(t0);

  bool identical = true;
  for (std::size_t i = 0; i < n_cases; ++i) identical &= same_bits(serial[i], parallel[i]);
  double speedup = t_serial / t_parallel;
  return {single <= 10.0 && speedup >= 4.0 && identical,
          fmt("single case %.2f s (<= 10 s), 20 cases serial %.1f s / 8 threads %.1f s = %.2fx (>= 4x), "
              "outputs %s, hardware threads %u",
              single, t_serial, t_parallel, speedup, identical ? "identical" : "DIFFER",
              std::thread::hardware_concurrency())};
}

}  // namespace

int main(int argc, char** argv) {
  std::uint64_t seed = 20240917;
  int only = 0;
  bool skip_perf = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--seed" && i + 1 < argc) {
      seed = std::stoull(argv[++i]);
    } else if (a == "--only" && i + 1 < argc) {
      only = std::stoi(argv[++i]);
    } else if (a == "--skip-perf") {
      skip_perf = true;
    } else {
      std::cerr << "usage: acceptance [--seed N] [--only K] [--skip-perf]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "planner fixtures", 0.0, false, planner_fixtures},
      {2, "CT normalization", 1.0, false, normalization},
      {3, "metric edge rules", 0.0, false, metric_edges},
      {4, "EDT vs brute force", 10.0, false, edt_oracle},
      {5, "HD95 vs pairwise oracle", 30.0, false, hd95_oracle},
      {6, "CCL vs flood fill", 10.0, false, ccl_oracle},
      {7, "cutoff optimizer vs exhaustive search", 120.0, false, optimizer_oracle},
      {8, "mean-rank aggregation", 1.0, false, ranking},
      {9, "border-core round trip", 30.0, false, bordercore_roundtrip},
      {10, "NIfTI round trip", 0.0, false, io_roundtrip},
      {11, "evaluation throughput (soft)", 0.0, true, performance},
  };

  std::cout << "seed " << seed << "\n";
  int hard_failed = 0, soft_failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    if (c.id == 11 && skip_perf) {
      std::cout << "[SKIP] 11 " << c.name << "\n";
      continue;
    }
    Rng rng(seed + static_cast<std::uint64_t>(c.id));
    Outcome o;
    auto t0 = Clock::now();
    try {
      o = c.run(rng);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = seconds_since(t0);
    bool in_budget = c.budget_s <= 0.0 || secs <= c.budget_s;
    bool pass = o.pass && in_budget;
    std::string budget = c.budget_s > 0.0 ? fmt(", budget %.0f s", c.budget_s) : std::string();
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << c.id << " " << c.name << ": " << o.detail << " ("
              << fmt("%.2f s", secs) << budget << (in_budget ? "" : ", over budget") << ")\n"
              << std::flush;
    ++ran;
    if (!pass) ++(c.soft ? soft_failed : hard_failed);
  }
  std::cout << "summary: " << ran << " run, " << hard_failed << " hard failures, " << soft_failed
            << " soft failures\n";
  return hard_failed == 0 ? 0 : 1;
}
