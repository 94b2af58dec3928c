#include "cxr/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

std::string to_string(Source s) {
  switch (s) {
    case Source::COVID19: return "COVID19";
    case Source::RSNA: return "RSNA";
    case Source::NLMMC: return "NLMMC";
    case Source::SYNTHETIC: return "SYNTHETIC";
  }
  throw Error("to_string: bad Source");
}

std::string to_string(Finding f) {
  switch (f) {
    case Finding::Normal: return "Normal";
    case Finding::COVID19: return "COVID19";
    case Finding::OtherPneumonia: return "OtherPneumonia";
    case Finding::Tuberculosis: return "Tuberculosis";
  }
  throw Error("to_string: bad Finding");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "Train";
    case Split::Val: return "Val";
    case Split::Test: return "Test";
    case Split::Unassigned: return "Unassigned";
  }
  throw Error("to_string: bad Split");
}

std::string to_string(LabelScheme s) {
  switch (s) {
    case LabelScheme::Binary: return "Binary";
    case LabelScheme::Multi3: return "Multi3";
    case LabelScheme::Multi4: return "Multi4";
  }
  throw Error("to_string: bad LabelScheme");
}

Source parse_source(const std::string& s) {
  if (s == "COVID19") return Source::COVID19;
  if (s == "RSNA") return Source::RSNA;
  if (s == "NLMMC") return Source::NLMMC;
  if (s == "SYNTHETIC") return Source::SYNTHETIC;
  throw Error("parse_source: unknown source '" + s + "'");
}

Finding parse_finding(const std::string& s) {
  if (s == "Normal") return Finding::Normal;
  if (s == "COVID19") return Finding::COVID19;
  if (s == "OtherPneumonia") return Finding::OtherPneumonia;
  if (s == "Tuberculosis") return Finding::Tuberculosis;
  throw Error("parse_finding: unknown finding '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "Train") return Split::Train;
  if (s == "Val") return Split::Val;
  if (s == "Test") return Split::Test;
  if (s == "Unassigned") return Split::Unassigned;
  throw Error("parse_split: unknown split '" + s + "'");
}

LabelScheme parse_scheme(const std::string& s) {
  if (s == "Binary" || s == "binary") return LabelScheme::Binary;
  if (s == "Multi3" || s == "multi3") return LabelScheme::Multi3;
  if (s == "Multi4" || s == "multi4") return LabelScheme::Multi4;
  throw Error("parse_scheme: unknown scheme '" + s + "'");
}

int num_classes(LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::Binary: return 2;
    case LabelScheme::Multi3: return 3;
    case LabelScheme::Multi4: return 4;
  }
  throw Error("num_classes: bad LabelScheme");
}

int encode_label(Finding finding, LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::Binary:
      return finding == Finding::COVID19 ? 1 : 0;
    case LabelScheme::Multi3:
      switch (finding) {
        case Finding::Normal: return 0;
        case Finding::COVID19: return 1;
        case Finding::OtherPneumonia:
        case Finding::Tuberculosis: return 2;
      }
      break;
    case LabelScheme::Multi4:
      switch (finding) {
        case Finding::Normal: return 0;
        case Finding::COVID19: return 1;
        case Finding::OtherPneumonia: return 2;
        case Finding::Tuberculosis: return 3;
      }
      break;
  }
  throw Error("encode_label: bad finding/scheme");
}

std::string class_name(LabelScheme scheme, int class_index) {
  static const std::vector<std::string> binary = {"NonCOVID19", "COVID19"};
  static const std::vector<std::string> multi3 = {"Normal", "COVID19",
                                                  "OtherPneumoniaTB"};
  static const std::vector<std::string> multi4 = {
      "Normal", "COVID19", "OtherPneumonia", "Tuberculosis"};
  const std::vector<std::string>* names = nullptr;
  switch (scheme) {
    case LabelScheme::Binary: names = &binary; break;
    case LabelScheme::Multi3: names = &multi3; break;
    case LabelScheme::Multi4: names = &multi4; break;
  }
  if (!names || class_index < 0 ||
      class_index >= static_cast<int>(names->size())) {
    throw Error("class_name: class index out of range");
  }
  return (*names)[static_cast<std::size_t>(class_index)];
}

Manifest fuse(const std::vector<Manifest>& manifests) {
  Manifest out;
  std::unordered_set<std::string> seen;
  for (const Manifest& m : manifests) {
    for (const SampleRecord& r : m.records) {
      if (!seen.insert(r.path).second) {
        throw DuplicatePath("fuse: duplicate path '" + r.path + "'");
      }
      out.records.push_back(r);
    }
  }
  return out;
}

Manifest split_manifest(Manifest manifest, LabelScheme scheme,
                        const std::vector<SplitCounts>& counts,
                        std::uint64_t seed) {
  const int classes = num_classes(scheme);
  if (static_cast<int>(counts.size()) != classes) {
    throw CountMismatch("split_manifest: expected " + std::to_string(classes) +
                        " per-class counts, got " +
                        std::to_string(counts.size()));
  }
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const int c = encode_label(manifest.records[i].finding, scheme);
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  for (int c = 0; c < classes; ++c) {
    const SplitCounts& sc = counts[static_cast<std::size_t>(c)];
    if (sc.train < 0 || sc.val < 0 || sc.test < 0) {
      throw CountMismatch("split_manifest: negative count for class " +
                          std::to_string(c));
    }
    auto& idx = by_class[static_cast<std::size_t>(c)];
    const std::size_t want = static_cast<std::size_t>(sc.train) +
                             static_cast<std::size_t>(sc.val) +
                             static_cast<std::size_t>(sc.test);
    if (want != idx.size()) {
      throw CountMismatch("split_manifest: class " + std::to_string(c) +
                          " has " + std::to_string(idx.size()) +
                          " records but counts sum to " +
                          std::to_string(want));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    deterministic_shuffle(idx, rng);
    std::size_t p = 0;
    for (int t = 0; t < sc.train; ++t) manifest.records[idx[p++]].split = Split::Train;
    for (int t = 0; t < sc.val; ++t) manifest.records[idx[p++]].split = Split::Val;
    for (int t = 0; t < sc.test; ++t) manifest.records[idx[p++]].split = Split::Test;
  }
  manifest.seed = seed;
  return manifest;
}

std::vector<FoldPlan> kfold(const Manifest& manifest, int k,
                            std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be >= 2");
  std::vector<std::vector<std::size_t>> by_finding(kFindingCount);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_finding[static_cast<std::size_t>(manifest.records[i].finding)]
        .push_back(i);
  }
  std::vector<std::vector<std::size_t>> val_folds(
      static_cast<std::size_t>(k));
  for (int f = 0; f < kFindingCount; ++f) {
    auto& idx = by_finding[static_cast<std::size_t>(f)];
    if (idx.empty()) continue;
    if (idx.size() < static_cast<std::size_t>(k)) {
      throw TooFewSamples("kfold: finding " +
                          to_string(static_cast<Finding>(f)) + " has " +
                          std::to_string(idx.size()) + " records, need >= " +
                          std::to_string(k));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
    deterministic_shuffle(idx, rng);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      val_folds[j % static_cast<std::size_t>(k)].push_back(idx[j]);
    }
  }
  std::vector<FoldPlan> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& val = val_folds[static_cast<std::size_t>(f)];
    std::sort(val.begin(), val.end());
    std::unordered_set<std::size_t> in_val(val.begin(), val.end());
    FoldPlan& plan = folds[static_cast<std::size_t>(f)];
    plan.val = val;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (!in_val.count(i)) plan.train.push_back(i);
    }
  }
  return folds;
}

std::vector<int> class_counts(const Manifest& manifest, LabelScheme scheme,
                              Split split) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes(scheme)), 0);
  for (const SampleRecord& r : manifest.records) {
    if (r.split != split) continue;
    ++counts[static_cast<std::size_t>(encode_label(r.finding, scheme))];
  }
  return counts;
}

std::vector<std::size_t> indices_of_split(const Manifest& manifest,
                                          Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].split == split) out.push_back(i);
  }
  return out;
}

void write_manifest_csv(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "# seed=" << manifest.seed << "\n";
  out << "path,source,finding,split\n";
  for (const SampleRecord& r : manifest.records) {
    if (r.path.find(',') != std::string::npos ||
        r.path.find('\n') != std::string::npos) {
      throw IoError("manifest path contains ',' or newline: '" + r.path + "'");
    }
    out << r.path << ',' << to_string(r.source) << ',' << to_string(r.finding)
        << ',' << to_string(r.split) << "\n";
  }
  if (!out) throw IoError("failed writing manifest '" + path + "'");
}

Manifest read_manifest_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  Manifest m;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# seed=";
      if (line.rfind(key, 0) == 0) {
        m.seed = std::stoull(line.substr(key.size()));
      }
      continue;
    }
    if (!header_seen) {
      if (line != "path,source,finding,split") {
        throw IoError("manifest '" + path + "': unexpected header '" + line +
                      "'");
      }
      header_seen = true;
      continue;
    }
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', start);
      const bool last = f == 3;
      if (last != (comma == std::string::npos)) {
        throw IoError("manifest '" + path + "': malformed row '" + line + "'");
      }
      fields[static_cast<std::size_t>(f)] =
          line.substr(start, last ? std::string::npos : comma - start);
      start = comma + 1;
    }
    SampleRecord r;
    r.path = fields[0];
    r.source = parse_source(fields[1]);
    r.finding = parse_finding(fields[2]);
    r.split = parse_split(fields[3]);
    if (r.path.empty()) {
      throw IoError("manifest '" + path + "': empty path");
    }
    m.records.push_back(std::move(r));
  }
  if (!header_seen) throw EmptyManifest("manifest '" + path + "' has no rows");
  return m;
}

namespace {

std::string canonical_preset(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return n;
}

}  // namespace

std::vector<SplitCounts> preset_split_counts(const std::string& name) {
  const std::string n = canonical_preset(name);
  if (n == "table2-cb" || n == "table2-rb") {
    return {{906, 90, 110}, {88, 9, 11}};
  }
  if (n == "table2-cm3" || n == "table2-rm3") {
    return {{437, 44, 52}, {88, 9, 11}, {469, 46, 58}};
  }
  if (n == "table2-cm4" || n == "table2-rm4") {
    return {{437, 44, 52}, {88, 9, 11}, {422, 41, 52}, {47, 5, 6}};
  }
  throw Error("unknown preset '" + name + "'");
}

LabelScheme preset_scheme(const std::string& name) {
  const std::string n = canonical_preset(name);
  if (n == "table2-cb" || n == "table2-rb") return LabelScheme::Binary;
  if (n == "table2-cm3" || n == "table2-rm3") return LabelScheme::Multi3;
  if (n == "table2-cm4" || n == "table2-rm4") return LabelScheme::Multi4;
  throw Error("unknown preset '" + name + "'");
}

int preset_oversample_target(const std::string& name) {
  const std::string n = canonical_preset(name);
  if (n == "table2-rb") return 960;
  if (n == "table2-rm3") return 469;
  if (n == "table2-rm4") return 437;
  throw Error("preset '" + name + "' has no oversampling target");
}

}  // namespace cxr
