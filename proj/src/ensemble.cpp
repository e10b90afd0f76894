#include "cbctseg/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbctseg/errors.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/parallel.hpp"

namespace cbctseg {

ProbabilityStack::ProbabilityStack(const Dims& d, const Spacing& s, std::size_t c)
    : dims(d), spacing(s), channels(c), data(d.count() * c, 0.0) {}

namespace {

constexpr std::size_t kBlock = 1 << 16;

template <typename Fn>
void for_blocks(std::size_t n, unsigned threads, Fn&& fn) {
  std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::size_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
    fn(lo, hi);
  });
}

}  // namespace

LabelVolume majority_vote(std::span<const LabelVolume> preds, std::span<const std::size_t> priority,
                          unsigned threads) {
  if (preds.size() < 2) throw ValidationError("majority vote needs at least two volumes");
  for (const auto& p : preds.subspan(1)) {
    if (!p.same_geometry(preds[0])) throw ValidationError("majority vote: volumes differ in dims or spacing");
  }
  if (priority.size() != preds.size()) throw ValidationError("priority must list every input exactly once");
  std::vector<bool> seen(preds.size(), false);
  for (std::size_t i : priority) {
    if (i >= preds.size() || seen[i]) throw ValidationError("priority must list every input exactly once");
    seen[i] = true;
  }

  LabelVolume out(preds[0].dims(), preds[0].spacing());
  const std::size_t n = preds.size();
  for_blocks(out.size(), threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<Label> votes(n);
    for (std::size_t v = lo; v < hi; ++v) {
      for (std::size_t k = 0; k < n; ++k) votes[k] = preds[priority[k]][v];
      Label best = votes[0];
      std::size_t best_count = 0;
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t c = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), votes[k]));
        if (c > best_count) best_count = c, best = votes[k];
      }
      out[v] = best;
    }
  });
  return out;
}

void check_normalized(const ProbabilityStack& s, double tolerance) {
  const std::size_t n = s.dims.count();
  if (s.channels == 0 || s.data.size() != n * s.channels) throw ValidationError("probability stack has a bad shape");
  for (std::size_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) sum += s.at(c, v);
    if (!(std::abs(sum - 1.0) <= tolerance)) {
      auto xyz = s.dims.coords(v);
      throw ValidationError("probabilities at voxel (" + std::to_string(xyz[0]) + "," + std::to_string(xyz[1]) + "," +
                            std::to_string(xyz[2]) + ") sum to " + std::to_string(sum));
    }
  }
}

LabelVolume average_argmax(std::span<const ProbabilityStack> stacks, unsigned threads) {
  if (stacks.empty()) throw ValidationError("probability averaging needs at least one stack");
  const auto& ref = stacks[0];
  if (ref.channels > 65536) throw ValidationError("too many channels for a label volume");
  for (const auto& s : stacks) {
    if (s.dims != ref.dims || s.spacing != ref.spacing || s.channels != ref.channels) {
      throw ValidationError("probability stacks differ in dims, spacing or channel count");
    }
    check_normalized(s);
  }
  LabelVolume out(ref.dims, ref.spacing);
  const double m = static_cast<double>(stacks.size());
  for_blocks(out.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t v = lo; v < hi; ++v) {
      std::size_t best = 0;
      double best_p = -1.0;
      for (std::size_t c = 0; c < ref.channels; ++c) {
        double sum = 0.0;
        for (const auto& s : stacks) sum += s.at(c, v);
        double p = sum / m;
        if (p > best_p) best_p = p, best = c;
      }
      out[v] = static_cast<Label>(best);
    }
  });
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& image) {
  std::string name = image.filename().string();
  for (std::string_view ext : {".nii.gz", ".nii"}) {
    if (name.size() > ext.size() && name.ends_with(ext)) {
      name.resize(name.size() - ext.size());
      break;
    }
  }
  return image.parent_path() / (name + ".json");
}

ProbabilityStack read_probability_stack(const std::filesystem::path& path) {
  auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw IoError("cannot open sidecar " + side.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(side.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("layout", "") != "channel-major" || !j.contains("channels") ||
      !j["channels"].is_number_unsigned()) {
    throw ValidationError(side.string() + ": expected {\"layout\": \"channel-major\", \"channels\": C}");
  }
  std::size_t channels = j["channels"].get<std::size_t>();

  nifti::Image img = nifti::read_image(path);
  const auto& h = img.header;
  if (h.ndim != 4 || h.dim[3] != channels) {
    throw ValidationError(path.string() + ": expected a 4D image with " + std::to_string(channels) + " channels");
  }
  ProbabilityStack s;
  s.dims = Dims{h.dim[0], h.dim[1], h.dim[2]};
  s.spacing = Spacing{h.pixdim[0], h.pixdim[1], h.pixdim[2]};
  s.channels = channels;
  s.data = std::move(img.raw);
  if (h.scl_slope != 0.0f) {
    for (double& v : s.data) v = h.scl_slope * v + h.scl_inter;
  }
  return s;
}

void write_probability_stack(const ProbabilityStack& s, const std::filesystem::path& path) {
  if (s.data.size() != s.dims.count() * s.channels || s.channels == 0) {
    throw ValidationError("probability stack has a bad shape");
  }
  nifti::Header h;
  h.ndim = 4;
  h.dim = {s.dims.nx, s.dims.ny, s.dims.nz, s.channels, 1, 1, 1};
  h.datatype = nifti::DataType::f64;
  h.pixdim = {static_cast<float>(s.spacing.sx()), static_cast<float>(s.spacing.sy()),
              static_cast<float>(s.spacing.sz())};
  h.scl_slope = 1.0f;
  nifti::write_image_bytes(path, nifti::encode_image(h, s.data));
  nlohmann::ordered_json j{{"layout", "channel-major"}, {"channels", s.channels}};
  auto side = sidecar_path(path);
  std::ofstream out(side);
  if (!out) throw IoError("cannot write " + side.string());
  out << j.dump(2) << "\n";
}

}  // namespace cbctseg
