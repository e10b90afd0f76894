#include "cbctseg/cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cbctseg/bordercore.hpp"
#include "cbctseg/dataset.hpp"
#include "cbctseg/ensemble.hpp"
#include "cbctseg/errors.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/planner.hpp"
#include "cbctseg/postprocess.hpp"
#include "cbctseg/ranking.hpp"

namespace cbctseg::cli {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool json = false;
  unsigned threads = 1;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError("bad " + what + " value '" + s + "'");
  return v;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_size(part, what));
  return out;
}

Extent3 parse_extent(const std::string& s, const std::string& what) {
  auto v = parse_sizes(s, what);
  if (v.size() != 3) throw ValidationError(what + " needs three comma-separated values");
  return {v[0], v[1], v[2]};
}

std::optional<Source> parse_source_filter(const std::string& s) {
  if (s == "all") return std::nullopt;
  return parse_source(s);
}

MetricOptions metric_options(const std::string& penalty, double percentile) {
  MetricOptions m;
  m.percentile = percentile;
  if (penalty != "diagonal") {
    m.penalty_mode = PenaltyMode::fixed;
    try {
      std::size_t pos = 0;
      m.fixed_penalty_mm = std::stod(penalty, &pos);
      if (pos != penalty.size()) throw std::invalid_argument(penalty);
    } catch (const std::exception&) {
      throw ValidationError("--penalty must be 'diagonal' or a distance in mm");
    }
  }
  m.validate();
  return m;
}

ClassTable resolve_classes(const std::string& flag, const std::optional<fs::path>& from_manifest) {
  if (!flag.empty()) return ClassTable::load(flag);
  if (from_manifest) return ClassTable::load(*from_manifest);
  return ClassTable::toothfairy2();
}

fs::path with_extension(const fs::path& p, const std::string& ext) {
  fs::path q = p;
  q.replace_extension(ext);
  return q == p ? fs::path(p.string() + ext) : q;
}

std::string source_label(const std::optional<Source>& s) { return s ? std::string(to_string(*s)) : "all"; }

// -- subcommands ------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest, out, summary, classes, source = "all", penalty = "diagonal";
  double percentile = 0.95;
};

void do_evaluate(Context& ctx, const EvaluateArgs& a) {
  Manifest m = Manifest::load(a.manifest);
  ClassTable classes = resolve_classes(a.classes, m.class_table);
  MetricOptions opts = metric_options(a.penalty, a.percentile);
  auto source = parse_source_filter(a.source);
  auto cases = scored_cases(m, source);
  auto evals = evaluate_dataset(cases, classes, opts, ctx.threads);
  auto means = class_means(evals, classes);
  fs::path summary = a.summary.empty() ? with_extension(a.out, ".json") : fs::path(a.summary);
  std::string summary_text = class_means_json(means, classes, evals.size());
  write_text(a.out, evaluation_csv(evals));
  write_text(summary, summary_text);
  ctx.err << "evaluated " << evals.size() << " case(s) over " << classes.size() << " classes -> " << a.out << "\n";
  if (ctx.json) ctx.out << summary_text;
}

struct OptimizeArgs {
  std::string manifest, out, classes, source = "F", mode = "per-component", penalty = "diagonal";
  int connectivity = 26;
  double percentile = 0.95;
};

void do_optimize(Context& ctx, const OptimizeArgs& a) {
  Manifest m = Manifest::load(a.manifest);
  ClassTable classes = resolve_classes(a.classes, m.class_table);
  OptimizerOptions opts;
  opts.mode = parse_cutoff_mode(a.mode);
  opts.connectivity = a.connectivity;
  opts.metrics = metric_options(a.penalty, a.percentile);
  auto source = parse_source_filter(a.source);
  auto cases = scored_cases(m, source);
  CutoffTable t = optimize_cutoffs_dataset(cases, classes, opts, ctx.threads);
  std::string text = t.to_json_text();
  write_text(a.out, text);
  ctx.err << "tuned cutoffs on " << cases.size() << " case(s) (source " << source_label(source) << ") -> " << a.out
          << "\n";
  if (ctx.json) ctx.out << text;
}

struct PostprocessArgs {
  std::string manifest, cutoffs, out_dir, summary, classes, source = "all", penalty = "diagonal";
  double percentile = 0.95;
};

ojson means_array(const std::vector<ClassMeans>& means) {
  ojson arr = ojson::array();
  for (const auto& m : means) arr.push_back({{"label_id", m.label_id}, {"mean_dice", m.dice}, {"mean_hd95", m.hd95}});
  return arr;
}

void do_postprocess(Context& ctx, const PostprocessArgs& a) {
  Manifest m = Manifest::load(a.manifest);
  ClassTable classes = resolve_classes(a.classes, m.class_table);
  CutoffTable cut = CutoffTable::load(a.cutoffs);
  MetricOptions opts = metric_options(a.penalty, a.percentile);
  Manifest selected = m;
  selected.cases = m.filter(parse_source_filter(a.source));
  if (selected.cases.empty()) throw ValidationError("no cases match the source filter");
  PostprocessSummary s = postprocess_dataset(selected, cut, classes, a.out_dir, opts, ctx.threads);
  ojson j;
  j["written"] = s.written.size();
  j["evaluated_cases"] = s.evaluated_cases;
  if (s.evaluated_cases > 0) {
    j["before"] = means_array(s.before);
    j["after"] = means_array(s.after);
  }
  std::string text = j.dump(2) + "\n";
  if (!a.summary.empty()) write_text(a.summary, text);
  ctx.err << "wrote " << s.written.size() << " postprocessed volume(s) to " << a.out_dir << "\n";
  if (ctx.json) ctx.out << text;
}

struct RankArgs {
  std::string scores, out, mean_ranks;
};

void do_rank(Context& ctx, const RankArgs& a) {
  RankTable t = compute_mean_ranks(load_scores_csv(a.scores));
  fs::path mean_path = a.mean_ranks.empty() ? with_extension(a.out, ".json") : fs::path(a.mean_ranks);
  std::string json = t.mean_ranks_json();
  write_text(a.out, t.to_csv());
  write_text(mean_path, json);
  ctx.err << "ranked " << t.algorithms.size() << " algorithms over " << t.columns.size() << " columns";
  if (!t.excluded_classes.empty()) {
    ctx.err << "; excluded classes without scores:";
    for (Label l : t.excluded_classes) ctx.err << " " << l;
  }
  ctx.err << "\n";
  if (ctx.json) ctx.out << json;
}

struct EnsembleArgs {
  std::string mode = "vote", out, priority;
  std::vector<std::string> inputs;
};

void do_ensemble(Context& ctx, const EnsembleArgs& a) {
  if (a.inputs.empty()) throw ValidationError("ensemble needs --inputs");
  LabelVolume result;
  if (a.mode == "vote") {
    std::vector<std::size_t> prio;
    if (a.priority.empty()) {
      for (std::size_t i = 0; i < a.inputs.size(); ++i) prio.push_back(i);
    } else {
      for (const auto& name : split(a.priority, ',')) {
        if (name.size() < 2 || name[0] != 'm') throw ValidationError("priority entries are m1..mN, got '" + name + "'");
        std::size_t k = parse_size(name.substr(1), "priority");
        if (k < 1 || k > a.inputs.size()) throw ValidationError("priority entry '" + name + "' names no input");
        prio.push_back(k - 1);
      }
    }
    std::vector<LabelVolume> preds;
    for (const auto& p : a.inputs) preds.push_back(nifti::read_label_volume(p));
    result = majority_vote(preds, prio, ctx.threads);
  } else if (a.mode == "prob") {
    if (!a.priority.empty()) throw ValidationError("--priority applies to --mode vote only");
    std::vector<ProbabilityStack> stacks;
    for (const auto& p : a.inputs) stacks.push_back(read_probability_stack(p));
    result = average_argmax(stacks, ctx.threads);
  } else {
    throw ValidationError("--mode must be vote or prob");
  }
  nifti::write_label_volume(result, a.out);
  ctx.err << "ensembled " << a.inputs.size() << " input(s) -> " << a.out << "\n";
  if (ctx.json) {
    ojson j{{"mode", a.mode}, {"inputs", a.inputs.size()}, {"output", a.out}};
    ctx.out << j.dump(2) << "\n";
  }
}

struct PlanArgs {
  std::string preset, patch, median, mirror_axes, encoder_blocks, out;
  std::optional<std::size_t> min_edge, base_features, max_features, batch_size, epochs;
};

void do_plan(Context& ctx, const PlanArgs& a) {
  PlanRequest req;
  if (a.preset == "baseline") {
    req = baseline_request();
  } else if (a.preset == "toothfairy2") {
    req = toothfairy2_request();
  } else if (!a.preset.empty()) {
    throw ValidationError("--preset must be baseline or toothfairy2");
  } else if (a.patch.empty()) {
    throw ValidationError("plan needs --patch or --preset");
  }
  if (!a.patch.empty()) req.patch_size = parse_extent(a.patch, "--patch");
  if (!a.median.empty()) req.median_image_size = parse_extent(a.median, "--median");
  if (a.mirror_axes == "none") {
    req.mirror_axes.clear();
  } else if (!a.mirror_axes.empty()) {
    req.mirror_axes.clear();
    for (auto v : parse_sizes(a.mirror_axes, "--mirror-axes")) req.mirror_axes.push_back(static_cast<int>(v));
  }
  if (!a.encoder_blocks.empty()) req.encoder_blocks_schedule = parse_sizes(a.encoder_blocks, "--encoder-blocks");
  if (a.min_edge) req.min_edge = *a.min_edge;
  if (a.base_features) req.base_features = *a.base_features;
  if (a.max_features) req.max_features = *a.max_features;
  if (a.batch_size) req.batch_size = *a.batch_size;
  if (a.epochs) req.epochs = *a.epochs;

  NetworkPlan plan = plan_topology(req);
  if (plan.patch_size != req.patch_size) {
    ctx.err << "note: patch rounded up to " << plan.patch_size[0] << "," << plan.patch_size[1] << ","
            << plan.patch_size[2] << " to be divisible by the bottleneck stride\n";
  }
  if (req.median_image_size) {
    for (const auto& w : validate_patch_size(plan.patch_size, *req.median_image_size)) ctx.err << "warning: " << w << "\n";
  }
  emit_plan(plan, a.out);
  ctx.err << "planned " << plan.n_stages << " stages, bottleneck stride " << plan.bottleneck_stride[0] << ","
          << plan.bottleneck_stride[1] << "," << plan.bottleneck_stride[2] << " -> " << a.out << "\n";
  if (ctx.json) ctx.out << plan.to_json_text();
}

struct BorderCoreArgs {
  std::string in, out;
  std::size_t width = 1;
  std::size_t min_orphan_size = 10;
};

void do_bc_encode(Context& ctx, const BorderCoreArgs& a) {
  LabelVolume inst = nifti::read_label_volume(a.in);
  LabelVolume bc = encode_border_core(inst, a.width, ctx.threads);
  nifti::write_label_volume(bc, a.out);
  std::size_t core = 0, border = 0;
  for (Label v : bc.values()) core += v == kCore, border += v == kBorder;
  ctx.err << "encoded " << core << " core and " << border << " border voxels -> " << a.out << "\n";
  if (ctx.json) ctx.out << ojson{{"core_voxels", core}, {"border_voxels", border}}.dump(2) << "\n";
}

void do_bc_decode(Context& ctx, const BorderCoreArgs& a) {
  LabelVolume bc = nifti::read_label_volume(a.in);
  DecodeResult r = decode_border_core(bc, {a.min_orphan_size});
  nifti::write_label_volume(r.instances, a.out);
  ctx.err << "decoded " << r.core_instances + r.promoted_orphans << " instance(s); dropped " << r.dropped_orphans
          << " orphan border component(s) (" << r.dropped_voxels << " voxels) -> " << a.out << "\n";
  if (ctx.json) {
    ojson j{{"core_instances", r.core_instances},
            {"promoted_orphans", r.promoted_orphans},
            {"dropped_orphans", r.dropped_orphans},
            {"dropped_voxels", r.dropped_voxels}};
    ctx.out << j.dump(2) << "\n";
  }
}

struct NormalizeArgs {
  std::string in, out;
  NormalizationScheme scheme = kToothFairy2Ct;
};

void do_normalize(Context& ctx, const NormalizeArgs& a) {
  a.scheme.validate();
  ScalarVolume v = nifti::read_scalar_volume(a.in);
  ScalarVolume n = normalize_ct(v, a.scheme);
  nifti::write_scalar_volume(n, a.out);
  ctx.err << "normalized " << n.size() << " voxels -> " << a.out << "\n";
  if (ctx.json) {
    ojson j{{"clip_lower", a.scheme.clip_lower},
            {"clip_upper", a.scheme.clip_upper},
            {"shift", a.scheme.shift},
            {"scale", a.scheme.scale},
            {"voxels", n.size()}};
    ctx.out << j.dump(2) << "\n";
  }
}

struct InfoArgs {
  std::string path, classes;
};

void do_info(Context& ctx, const InfoArgs& a) {
  ojson j;
  if (a.path.empty()) {
    ClassTable t = a.classes.empty() ? ClassTable::toothfairy2() : ClassTable::load(a.classes);
    j["classes"] = t.size();
    j["max_label"] = t.max_label();
    if (ctx.json) {
      ctx.out << j.dump(2) << "\n";
    } else {
      for (const auto& e : t.entries()) ctx.out << e.label_id << "\t" << to_string(e.group) << "\t" << e.name << "\n";
    }
    return;
  }
  nifti::Image img = nifti::read_image(a.path);
  const auto& h = img.header;
  std::vector<std::size_t> dims(h.dim.begin(), h.dim.begin() + h.ndim);
  j["path"] = a.path;
  j["dims"] = dims;
  j["spacing"] = {h.pixdim[0], h.pixdim[1], h.pixdim[2]};
  j["datatype"] = static_cast<int>(h.datatype);
  j["scl_slope"] = h.scl_slope;
  j["scl_inter"] = h.scl_inter;
  auto [mn, mx] = std::minmax_element(img.raw.begin(), img.raw.end());
  if (mn != img.raw.end()) {
    j["min"] = *mn;
    j["max"] = *mx;
  }
  if (h.ndim == 3 && nifti::is_integer(h.datatype) && (h.scl_slope == 0.0f || h.scl_slope == 1.0f) &&
      h.scl_inter == 0.0f && *mn >= 0 && *mx <= 65535) {
    std::map<long, std::size_t> hist;
    for (double v : img.raw) ++hist[static_cast<long>(v)];
    ojson labels = ojson::object();
    for (auto [l, c] : hist) labels[std::to_string(l)] = c;
    j["labels"] = labels;
  }
  if (ctx.json) {
    ctx.out << j.dump(2) << "\n";
  } else {
    ctx.out << "dims     ";
    for (auto d : dims) ctx.out << " " << d;
    ctx.out << "\nspacing   " << h.pixdim[0] << " " << h.pixdim[1] << " " << h.pixdim[2] << "\n";
    ctx.out << "datatype  " << static_cast<int>(h.datatype) << "\n";
    if (j.contains("labels")) ctx.out << "labels    " << j["labels"].size() << " distinct values\n";
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  CLI::App app{"CBCT multi-class segmentation toolkit: metrics, postprocessing, ranking, ensembling, planning",
               "cbctseg"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", ctx.json, "Print a machine-readable summary to stdout");
  app.add_option("--threads", ctx.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::function<void()> action;

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Per-case per-class Dice and HD95");
  evaluate->add_option("--manifest", ev.manifest, "Manifest JSON")->required();
  evaluate->add_option("--out", ev.out, "Output CSV")->required();
  evaluate->add_option("--summary", ev.summary, "Per-class means JSON (default: --out with .json)");
  evaluate->add_option("--classes", ev.classes, "Class table JSON");
  evaluate->add_option("--source", ev.source, "F, P or all");
  evaluate->add_option("--penalty", ev.penalty, "HD95 for one-sided empty classes: diagonal or mm");
  evaluate->add_option("--percentile", ev.percentile, "Surface distance percentile");
  evaluate->callback([&] { action = [&] { do_evaluate(ctx, ev); }; });

  OptimizeArgs op;
  auto* optimize = app.add_subcommand("optimize-cutoffs", "Tune per-class removal cutoffs");
  optimize->add_option("--manifest", op.manifest, "Manifest JSON")->required();
  optimize->add_option("--out", op.out, "Output cutoff table JSON")->required();
  optimize->add_option("--classes", op.classes, "Class table JSON");
  optimize->add_option("--source", op.source, "F, P or all (default F)");
  optimize->add_option("--mode", op.mode, "per-component or whole-class");
  optimize->add_option("--connectivity", op.connectivity, "6 or 26")->check(CLI::IsMember({6, 26}));
  optimize->add_option("--penalty", op.penalty, "HD95 for one-sided empty classes: diagonal or mm");
  optimize->add_option("--percentile", op.percentile, "Surface distance percentile");
  optimize->callback([&] { action = [&] { do_optimize(ctx, op); }; });

  PostprocessArgs pp;
  auto* post = app.add_subcommand("postprocess", "Apply a cutoff table to predictions");
  post->add_option("--manifest", pp.manifest, "Manifest JSON")->required();
  post->add_option("--cutoffs", pp.cutoffs, "Cutoff table JSON")->required();
  post->add_option("--out-dir", pp.out_dir, "Output directory")->required();
  post->add_option("--summary", pp.summary, "Before/after means JSON");
  post->add_option("--classes", pp.classes, "Class table JSON");
  post->add_option("--source", pp.source, "F, P or all");
  post->add_option("--penalty", pp.penalty, "HD95 for one-sided empty classes: diagonal or mm");
  post->add_option("--percentile", pp.percentile, "Surface distance percentile");
  post->callback([&] { action = [&] { do_postprocess(ctx, pp); }; });

  RankArgs rk;
  auto* rank = app.add_subcommand("rank", "Mean-rank aggregation over class x metric columns");
  rank->add_option("--scores", rk.scores, "CSV algorithm_id,label_id,mean_dice,mean_hd95")->required();
  rank->add_option("--out", rk.out, "Rank matrix CSV")->required();
  rank->add_option("--mean-ranks", rk.mean_ranks, "Mean ranks JSON (default: --out with .json)");
  rank->callback([&] { action = [&] { do_rank(ctx, rk); }; });

  EnsembleArgs en;
  auto* ensemble = app.add_subcommand("ensemble", "Combine model outputs");
  ensemble->add_option("--mode", en.mode, "vote or prob");
  ensemble->add_option("--inputs", en.inputs, "Label maps (vote) or probability stacks (prob); named m1..mN")
      ->required();
  ensemble->add_option("--priority", en.priority, "Tie-break order for voting, e.g. m2,m1");
  ensemble->add_option("--out", en.out, "Output label map")->required();
  ensemble->callback([&] { action = [&] { do_ensemble(ctx, en); }; });

  PlanArgs pl;
  auto* plan = app.add_subcommand("plan", "Derive network topology from a patch size");
  plan->add_option("--preset", pl.preset, "baseline or toothfairy2");
  plan->add_option("--patch", pl.patch, "Patch size px,py,pz");
  plan->add_option("--median", pl.median, "Median image size for patch warnings");
  plan->add_option("--mirror-axes", pl.mirror_axes, "Mirrored axes, e.g. 0,1 (or none)");
  plan->add_option("--encoder-blocks", pl.encoder_blocks, "Encoder block schedule, e.g. 1,3,4,6,6,6");
  plan->add_option("--min-edge", pl.min_edge, "Smallest bottleneck edge");
  plan->add_option("--base-features", pl.base_features, "Features at stage 0");
  plan->add_option("--max-features", pl.max_features, "Feature cap");
  plan->add_option("--batch-size", pl.batch_size, "Batch size metadata");
  plan->add_option("--epochs", pl.epochs, "Epoch count metadata");
  plan->add_option("--out", pl.out, "Plan JSON")->required();
  plan->callback([&] { action = [&] { do_plan(ctx, pl); }; });

  BorderCoreArgs bca;
  auto* bc = app.add_subcommand("bordercore", "Border-core instance representation");
  bc->require_subcommand(1);
  auto* enc = bc->add_subcommand("encode", "Instance map to border-core map");
  enc->add_option("--in", bca.in, "Instance map")->required();
  enc->add_option("--out", bca.out, "Border-core map")->required();
  enc->add_option("--width", bca.width, "Border width in voxels")->check(CLI::PositiveNumber);
  enc->callback([&] { action = [&] { do_bc_encode(ctx, bca); }; });
  auto* dec = bc->add_subcommand("decode", "Border-core map to instance map");
  dec->add_option("--in", bca.in, "Border-core map")->required();
  dec->add_option("--out", bca.out, "Instance map")->required();
  dec->add_option("--min-orphan-size", bca.min_orphan_size, "Smallest unreached border component kept");
  dec->callback([&] { action = [&] { do_bc_decode(ctx, bca); }; });

  NormalizeArgs nm;
  auto* norm = app.add_subcommand("normalize", "CT intensity normalization");
  norm->add_option("--in", nm.in, "Intensity volume")->required();
  norm->add_option("--out", nm.out, "Normalized volume (f64)")->required();
  norm->add_option("--clip-lower", nm.scheme.clip_lower, "Lower clip");
  norm->add_option("--clip-upper", nm.scheme.clip_upper, "Upper clip");
  norm->add_option("--shift", nm.scheme.shift, "Subtracted after clipping");
  norm->add_option("--scale", nm.scheme.scale, "Divisor after shifting");
  norm->callback([&] { action = [&] { do_normalize(ctx, nm); }; });

  InfoArgs in;
  auto* info = app.add_subcommand("info", "Describe a NIfTI file or the class table");
  info->add_option("path", in.path, "NIfTI file (omit to list the class table)");
  info->add_option("--classes", in.classes, "Class table JSON");
  info->callback([&] { action = [&] { do_info(ctx, in); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (!action) throw ValidationError("no subcommand given");
    action();
    return 0;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cbctseg::cli
