#pragma once

// Shared fixtures: the fused three-source corpus shape (108+45 COVID source,
// 453+470 RSNA, 58+80 NLM(MC) records) and tiny on-disk image stand-ins.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/image_io.hpp"

namespace cxrtest {

inline cxr::Manifest corpus_manifest() {
  using namespace cxr;
  Manifest m;
  auto add = [&m](int n, Source src, Finding f, const std::string& tag) {
    for (int i = 0; i < n; ++i) {
      SampleRecord r;
      r.path = tag + "_" + std::to_string(i) + ".pgm";
      r.source = src;
      r.finding = f;
      m.records.push_back(r);
    }
  };
  add(108, Source::COVID19, Finding::COVID19, "covid/covid");
  add(45, Source::COVID19, Finding::OtherPneumonia, "covid/op");
  add(453, Source::RSNA, Finding::Normal, "rsna/normal");
  add(470, Source::RSNA, Finding::OtherPneumonia, "rsna/op");
  add(58, Source::NLMMC, Finding::Tuberculosis, "nlm/tb");
  add(80, Source::NLMMC, Finding::Normal, "nlm/normal");
  return m;
}

// Writes one distinct side x side PGM per record under root.
inline void materialize(const cxr::Manifest& m, const std::filesystem::path& root,
                        int side = 8) {
  int i = 0;
  for (const cxr::SampleRecord& r : m.records) {
    cxr::GrayImage img(side, side);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        img.at(x, y) = static_cast<double>((i * 31 + y * side + x * 7) % 256);
      }
    }
    const std::filesystem::path p = root / r.path;
    std::filesystem::create_directories(p.parent_path());
    cxr::write_pgm(img, p.string());
    ++i;
  }
}

}  // namespace cxrtest
