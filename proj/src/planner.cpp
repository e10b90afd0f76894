#include "cbctseg/planner.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbctseg/errors.hpp"

namespace cbctseg {

namespace {

void check_mirror_axes(const std::vector<int>& axes) {
  std::set<int> seen;
  for (int a : axes) {
    if (a < 0 || a > 2) throw ValidationError("mirror axis " + std::to_string(a) + " is not 0, 1 or 2");
    if (!seen.insert(a).second) throw ValidationError("mirror axis " + std::to_string(a) + " listed twice");
  }
}

std::string extent_string(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

}  // namespace

void PlanRequest::validate() const {
  if (min_edge == 0 || max_features == 0 || base_features == 0 || batch_size == 0 || epochs == 0) {
    throw ValidationError("plan parameters must be positive");
  }
  for (int a = 0; a < 3; ++a) {
    if (patch_size[a] < min_edge) {
      throw ValidationError("patch " + extent_string(patch_size) + " is smaller than the minimum edge " +
                            std::to_string(min_edge) + " on axis " + std::to_string(a));
    }
    if (median_image_size && (*median_image_size)[a] == 0) throw ValidationError("median image size must be positive");
  }
  if (encoder_blocks_schedule.empty()) throw ValidationError("encoder block schedule is empty");
  for (auto b : encoder_blocks_schedule)
    if (b == 0) throw ValidationError("encoder block counts must be positive");
  check_mirror_axes(mirror_axes);
  normalization.validate();
}

PlanRequest baseline_request() {
  PlanRequest r;
  r.patch_size = {112, 224, 256};
  r.median_image_size = Extent3{169, 347, 371};
  return r;
}

PlanRequest toothfairy2_request() {
  PlanRequest r = baseline_request();
  r.patch_size = {160, 320, 320};
  r.mirror_axes = {0, 1};
  r.epochs = 1500;
  return r;
}

Extent3 pool_counts(const Extent3& patch, std::size_t min_edge) {
  Extent3 pools{};
  for (int a = 0; a < 3; ++a) {
    std::size_t e = patch[a];
    while (e > 2 * min_edge) {
      e /= 2;
      ++pools[a];
    }
  }
  return pools;
}

NetworkPlan plan_topology(const PlanRequest& req) {
  req.validate();
  const Extent3 pools = pool_counts(req.patch_size, req.min_edge);
  NetworkPlan p;
  p.patch_size = req.patch_size;
  p.n_stages = 1 + *std::max_element(pools.begin(), pools.end());
  p.bottleneck_stride = {1, 1, 1};
  for (std::size_t s = 0; s < p.n_stages; ++s) {
    Extent3 st{1, 1, 1};
    for (int a = 0; a < 3; ++a) {
      if (s >= 1 && s <= pools[a]) st[a] = 2;
      p.bottleneck_stride[a] *= st[a];
    }
    p.strides.push_back(st);
    std::size_t f = req.base_features;
    for (std::size_t k = 0; k < s && f < req.max_features; ++k) f *= 2;
    p.features_per_stage.push_back(std::min(f, req.max_features));
    const auto& sched = req.encoder_blocks_schedule;
    p.encoder_blocks.push_back(s < sched.size() ? sched[s] : sched.back());
  }
  for (int a = 0; a < 3; ++a) {
    std::size_t st = p.bottleneck_stride[a];
    p.patch_size[a] = (req.patch_size[a] + st - 1) / st * st;
  }
  p.decoder_convs.assign(p.n_stages - 1, 1);
  p.mirror_axes = req.mirror_axes;
  std::sort(p.mirror_axes.begin(), p.mirror_axes.end());
  p.normalization = req.normalization;
  p.batch_size = req.batch_size;
  p.epochs = req.epochs;
  return p;
}

std::vector<std::string> validate_patch_size(const Extent3& patch, const Extent3& median) {
  std::vector<std::string> warnings;
  for (int a = 0; a < 3; ++a) {
    if (patch[a] > median[a]) {
      warnings.push_back("axis " + std::to_string(a) + ": patch " + std::to_string(patch[a]) +
                         " exceeds the median image size " + std::to_string(median[a]) +
                         "; instance normalization statistics may suffer");
    }
  }
  return warnings;
}

void NetworkPlan::validate() const {
  if (n_stages == 0) throw ValidationError("plan has no stages");
  if (strides.size() != n_stages || features_per_stage.size() != n_stages || encoder_blocks.size() != n_stages ||
      decoder_convs.size() != n_stages - 1) {
    throw ValidationError("plan stage lists do not match n_stages");
  }
  for (int a = 0; a < 3; ++a) {
    std::size_t prod = 1;
    for (const auto& s : strides) {
      if (s[a] != 1 && s[a] != 2) throw ValidationError("plan strides must be 1 or 2");
      prod *= s[a];
    }
    if (prod != bottleneck_stride[a]) throw ValidationError("bottleneck stride is not the product of stage strides");
    if (patch_size[a] == 0 || patch_size[a] % bottleneck_stride[a] != 0) {
      throw ValidationError("patch size is not divisible by the bottleneck stride");
    }
  }
  check_mirror_axes(mirror_axes);
  normalization.validate();
  if (batch_size == 0 || epochs == 0) throw ValidationError("batch size and epochs must be positive");
}

std::string NetworkPlan::to_json_text() const {
  validate();
  nlohmann::json j;  // std::map storage: keys come out sorted
  j["patch_size"] = patch_size;
  j["n_stages"] = n_stages;
  j["strides"] = strides;
  j["bottleneck_stride"] = bottleneck_stride;
  j["features_per_stage"] = features_per_stage;
  j["encoder_blocks"] = encoder_blocks;
  j["decoder_convs"] = decoder_convs;
  j["mirror_axes"] = mirror_axes;
  j["normalization"] = {{"scheme", "CT"},
                        {"clip_lower", normalization.clip_lower},
                        {"clip_upper", normalization.clip_upper},
                        {"shift", normalization.shift},
                        {"scale", normalization.scale}};
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  return j.dump(2) + "\n";
}

NetworkPlan NetworkPlan::from_json_text(std::string_view text) {
  NetworkPlan p;
  try {
    auto j = nlohmann::json::parse(text);
    p.patch_size = j.at("patch_size").get<Extent3>();
    p.n_stages = j.at("n_stages").get<std::size_t>();
    p.strides = j.at("strides").get<std::vector<Extent3>>();
    p.bottleneck_stride = j.at("bottleneck_stride").get<Extent3>();
    p.features_per_stage = j.at("features_per_stage").get<std::vector<std::size_t>>();
    p.encoder_blocks = j.at("encoder_blocks").get<std::vector<std::size_t>>();
    p.decoder_convs = j.at("decoder_convs").get<std::vector<std::size_t>>();
    p.mirror_axes = j.at("mirror_axes").get<std::vector<int>>();
    const auto& n = j.at("normalization");
    p.normalization = {n.at("clip_lower").get<double>(), n.at("clip_upper").get<double>(), n.at("shift").get<double>(),
                       n.at("scale").get<double>()};
    p.batch_size = j.at("batch_size").get<std::size_t>();
    p.epochs = j.at("epochs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid plan JSON: ") + e.what());
  }
  p.validate();
  return p;
}

NetworkPlan NetworkPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void emit_plan(const NetworkPlan& plan, const std::filesystem::path& path) {
  std::string text = plan.to_json_text();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cbctseg
