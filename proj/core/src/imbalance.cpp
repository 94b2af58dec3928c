#include "cxr/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cxr/error.hpp"
#include "cxr/image_io.hpp"

namespace cxr {

ClassWeightTable class_weights(const std::vector<int>& counts,
                               const std::vector<double>& constants) {
  if (counts.empty()) throw EmptyClass("class_weights: no classes");
  std::vector<double> c = constants;
  if (c.empty()) c.assign(counts.size(), 1.0);
  if (c.size() != counts.size()) {
    throw Error("class_weights: constants/counts size mismatch");
  }
  long long total = 0;
  for (int n : counts) {
    if (n <= 0) throw EmptyClass("class_weights: class with zero samples");
    total += n;
  }
  ClassWeightTable t;
  t.num_classes = static_cast<int>(counts.size());
  t.counts = counts;
  t.constants = c;
  t.weights.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    t.weights[i] = c[i] * static_cast<double>(total) /
                   (static_cast<double>(t.num_classes) * counts[i]);
  }
  return t;
}

std::string augment_spec_to_json(const AugmentSpec& spec) {
  nlohmann::json j;
  j["rotation_deg"] = spec.rotation_deg;
  j["scale"] = {spec.scale_lo, spec.scale_hi};
  j["shift_px"] = spec.shift_px;
  j["fill"] = spec.fill;
  j["seed"] = spec.seed;
  return j.dump(2);
}

AugmentSpec augment_spec_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("augment spec: ") + e.what());
  }
  AugmentSpec spec;
  try {
    if (j.contains("rotation_deg")) spec.rotation_deg = j["rotation_deg"];
    if (j.contains("scale")) {
      spec.scale_lo = j["scale"].at(0);
      spec.scale_hi = j["scale"].at(1);
    }
    if (j.contains("shift_px")) spec.shift_px = j["shift_px"];
    if (j.contains("fill")) spec.fill = j["fill"];
    if (j.contains("seed")) spec.seed = j["seed"];
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("augment spec: ") + e.what());
  }
  if (spec.rotation_deg < 0 || spec.shift_px < 0 || spec.scale_lo <= 0 ||
      spec.scale_hi < spec.scale_lo) {
    throw ConfigError("augment spec: ranges must be well-ordered");
  }
  return spec;
}

AugmentSpec read_augment_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open augment spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return augment_spec_from_json(ss.str());
}

GrayImage affine_transform(const GrayImage& img, double angle_deg,
                           double scale, double dx, double dy, double fill) {
  if (scale <= 0) throw Error("affine_transform: scale must be > 0");
  const int w = img.width, h = img.height;
  const double cxc = (w - 1) / 2.0;
  const double cyc = (h - 1) / 2.0;
  const double rad = angle_deg * std::numbers::pi / 180.0;
  // Inverse map of rotate-scale about the center followed by a shift.
  const double ca = std::cos(rad) / scale;
  const double sa = std::sin(rad) / scale;
  GrayImage out(w, h);
  out.bit_depth = img.bit_depth;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double rx = x - dx - cxc;
      const double ry = y - dy - cyc;
      const double sx = ca * rx + sa * ry + cxc;
      const double sy = -sa * rx + ca * ry + cyc;
      double v = fill;
      if (sx >= 0.0 && sx <= w - 1 && sy >= 0.0 && sy <= h - 1) {
        const int x0 = static_cast<int>(sx);
        const int y0 = static_cast<int>(sy);
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fx = sx - x0;
        const double fy = sy - y0;
        const double top = img.at(x0, y0) * (1 - fx) + img.at(x1, y0) * fx;
        const double bot = img.at(x0, y1) * (1 - fx) + img.at(x1, y1) * fx;
        v = top * (1 - fy) + bot * fy;
      }
      out.at(x, y) = std::clamp(v, 0.0, 255.0);
    }
  }
  return out;
}

GrayImage transform_sample(const GrayImage& img, const AugmentSpec& spec,
                           Rng& rng) {
  const double angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
  const double scale = rng.uniform(spec.scale_lo, spec.scale_hi);
  const double dx = rng.uniform(-spec.shift_px, spec.shift_px);
  const double dy = rng.uniform(-spec.shift_px, spec.shift_px);
  return affine_transform(img, angle, scale, dx, dy, spec.fill);
}

Manifest oversample(const Manifest& manifest, LabelScheme scheme,
                    const AugmentSpec& spec, int target,
                    const std::string& image_root,
                    const std::string& out_dir) {
  const int classes = num_classes(scheme);
  const std::vector<int> counts = class_counts(manifest, scheme, Split::Train);
  int resolved = target;
  if (resolved < 0) resolved = *std::max_element(counts.begin(), counts.end());
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > resolved) {
      throw TargetBelowCurrent(
          "oversample: class " + class_name(scheme, c) + " already has " +
          std::to_string(counts[static_cast<std::size_t>(c)]) +
          " train records, target " + std::to_string(resolved));
    }
    if (counts[static_cast<std::size_t>(c)] == 0 && resolved > 0) {
      throw EmptyClass("oversample: class " + class_name(scheme, c) +
                       " has no train records to draw from");
    }
  }

  std::vector<std::vector<std::size_t>> sources(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const SampleRecord& r = manifest.records[i];
    if (r.split != Split::Train) continue;
    sources[static_cast<std::size_t>(encode_label(r.finding, scheme))]
        .push_back(i);
  }

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path root(image_root);
  const std::filesystem::path out_root(out_dir);

  Manifest result = manifest;
  std::uint64_t gen_index = 0;
  for (int c = 0; c < classes; ++c) {
    const auto& src = sources[static_cast<std::size_t>(c)];
    const int need = resolved - counts[static_cast<std::size_t>(c)];
    for (int k = 0; k < need; ++k, ++gen_index) {
      Rng rng(derive_seed(spec.seed, gen_index));
      const SampleRecord& origin =
          manifest.records[src[static_cast<std::size_t>(
              rng.index(static_cast<std::uint64_t>(src.size())))]];
      const GrayImage img = read_image((root / origin.path).string());
      const GrayImage aug = transform_sample(img, spec, rng);

      char name[64];
      std::snprintf(name, sizeof(name), "aug_%s_%04d.pgm",
                    class_name(scheme, c).c_str(), k);
      const std::filesystem::path out_file = out_root / name;
      write_image(aug, out_file.string());

      SampleRecord rec;
      const std::filesystem::path rel =
          std::filesystem::relative(out_file, root);
      rec.path = (!rel.empty() && rel.native().rfind("..", 0) != 0)
                     ? rel.string()
                     : std::filesystem::absolute(out_file).string();
      rec.source = Source::SYNTHETIC;
      rec.finding = origin.finding;
      rec.split = Split::Train;
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

}  // namespace cxr
