#include "cxr/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "cxr/error.hpp"
#include "cxr/image_io.hpp"

namespace cxr {

GrayImage render_disc(const DiscSpec& spec, int cx, int cy, int radius,
                      bool bright, Rng& rng) {
  GrayImage img(spec.width, spec.height);
  const double disc_value = bright ? spec.bright_value : spec.dark_value;
  const long long r2 = static_cast<long long>(radius) * radius;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const long long dx = x - cx;
      const long long dy = y - cy;
      const double base =
          dx * dx + dy * dy <= r2 ? disc_value : spec.background_mean;
      img.at(x, y) =
          std::clamp(base + spec.background_sigma * rng.normal(), 0.0, 255.0);
    }
  }
  return img;
}

namespace {

DiscSample make_sample(const DiscSpec& spec, Split split, bool bright,
                       std::uint64_t sample_index,
                       const std::string& root_dir) {
  if (spec.radius_min < 1 || spec.radius_max < spec.radius_min ||
      2 * spec.radius_max >= std::min(spec.width, spec.height)) {
    throw Error("DiscSpec: radius range does not fit the image");
  }
  Rng rng(derive_seed(spec.seed, sample_index));
  DiscSample s;
  s.bright = bright;
  s.radius = spec.radius_min +
             static_cast<int>(rng.index(
                 static_cast<std::uint64_t>(spec.radius_max - spec.radius_min + 1)));
  s.cx = s.radius + static_cast<int>(rng.index(
                        static_cast<std::uint64_t>(spec.width - 2 * s.radius)));
  s.cy = s.radius + static_cast<int>(rng.index(
                        static_cast<std::uint64_t>(spec.height - 2 * s.radius)));

  char name[64];
  std::snprintf(name, sizeof(name), "%s_%04llu_%s.pgm",
                to_string(split).c_str(),
                static_cast<unsigned long long>(sample_index),
                bright ? "bright" : "dark");
  s.record.path = name;
  s.record.source = Source::SYNTHETIC;
  s.record.finding = bright ? Finding::COVID19 : Finding::Normal;
  s.record.split = split;

  const GrayImage img = render_disc(spec, s.cx, s.cy, s.radius, bright, rng);
  write_pgm(img, (std::filesystem::path(root_dir) / name).string());
  return s;
}

}  // namespace

DiscDataset generate_disc_dataset(const DiscSpec& spec,
                                  const std::string& root_dir) {
  std::filesystem::create_directories(root_dir);
  DiscDataset ds;
  ds.manifest.seed = spec.seed;
  std::uint64_t index = 0;
  const auto emit = [&](Split split, int bright_count, int dark_count) {
    for (int i = 0; i < bright_count; ++i) {
      ds.samples.push_back(make_sample(spec, split, true, index++, root_dir));
    }
    for (int i = 0; i < dark_count; ++i) {
      ds.samples.push_back(make_sample(spec, split, false, index++, root_dir));
    }
  };
  emit(Split::Train, spec.train_bright, spec.train_dark);
  emit(Split::Val, spec.val_bright, spec.val_dark);
  emit(Split::Test, spec.test_bright, spec.test_dark);
  for (const DiscSample& s : ds.samples) {
    ds.manifest.records.push_back(s.record);
  }
  return ds;
}

}  // namespace cxr
