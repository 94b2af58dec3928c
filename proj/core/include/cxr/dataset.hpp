#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cxr {

enum class Source { COVID19, RSNA, NLMMC, SYNTHETIC };
enum class Finding { Normal, COVID19, OtherPneumonia, Tuberculosis };
enum class Split { Train, Val, Test, Unassigned };
enum class LabelScheme { Binary, Multi3, Multi4 };

inline constexpr int kFindingCount = 4;

std::string to_string(Source s);
std::string to_string(Finding f);
std::string to_string(Split s);
std::string to_string(LabelScheme s);

Source parse_source(const std::string& s);
Finding parse_finding(const std::string& s);
Split parse_split(const std::string& s);
LabelScheme parse_scheme(const std::string& s);

struct SampleRecord {
  std::string path;
  Source source = Source::SYNTHETIC;
  Finding finding = Finding::Normal;
  Split split = Split::Unassigned;
};

// Dataset-as-table. Records are ordered; paths are unique.
struct Manifest {
  std::vector<SampleRecord> records;
  std::uint64_t seed = 0;
};

int num_classes(LabelScheme scheme);

// Binary: COVID19 -> 1, everything else -> 0.
// Multi3: Normal -> 0, COVID19 -> 1, OtherPneumonia/Tuberculosis -> 2.
// Multi4: Normal -> 0, COVID19 -> 1, OtherPneumonia -> 2, Tuberculosis -> 3.
int encode_label(Finding finding, LabelScheme scheme);

std::string class_name(LabelScheme scheme, int class_index);

// Concatenates manifests in order. Throws DuplicatePath on any repeated path.
Manifest fuse(const std::vector<Manifest>& manifests);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

// Assigns Train/Val/Test per encoded class: deterministic per-class shuffle,
// then the first `train` shuffled records go to Train, the next `val` to Val,
// the rest to Test. Record order in the output is unchanged. Throws
// CountMismatch unless each class's counts sum to its record count.
Manifest split_manifest(Manifest manifest, LabelScheme scheme,
                        const std::vector<SplitCounts>& counts,
                        std::uint64_t seed);

struct FoldPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Stratified k-fold partition over record indices: per finding, a seeded
// shuffle is dealt round-robin into the k validation folds, so per-finding
// fold sizes differ by at most one. Throws TooFewSamples if any finding
// present has fewer than k records.
std::vector<FoldPlan> kfold(const Manifest& manifest, int k,
                            std::uint64_t seed);

// Per-encoded-class record counts within one split.
std::vector<int> class_counts(const Manifest& manifest, LabelScheme scheme,
                              Split split);

std::vector<std::size_t> indices_of_split(const Manifest& manifest,
                                          Split split);

// CSV with header `path,source,finding,split`, preceded by `# seed=N`.
void write_manifest_csv(const Manifest& manifest, const std::string& path);
Manifest read_manifest_csv(const std::string& path);

// Built-in split presets, keyed by the names the CLI accepts. The rb/rm3/rm4
// names alias cb/cm3/cm4: splitting happens before oversampling, so the
// counts coincide.
std::vector<SplitCounts> preset_split_counts(const std::string& name);
LabelScheme preset_scheme(const std::string& name);

// Per-class train target for the oversampling presets
// (table2-rb: 960, table2-rm3: 469, table2-rm4: 437).
int preset_oversample_target(const std::string& name);

}  // namespace cxr
