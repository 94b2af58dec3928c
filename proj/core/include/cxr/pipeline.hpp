#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/denoise.hpp"
#include "cxr/image.hpp"
#include "cxr/imbalance.hpp"
#include "cxr/metrics.hpp"
#include "cxr/network.hpp"
#include "cxr/train.hpp"

namespace cxr {

enum class ImbalanceStrategy { WeightedLoss, Oversample };

struct PreprocessParams {
  ThresholdParams threshold{240.0, 255.0};
  bool inpaint_enabled = true;
  int inpaint_max_iters = 10000;
  double inpaint_tol = 0.01;
  int resize_to = 331;
  bool denoise_enabled = true;
  TVParams tv;
  int histogram_bins = 32;
};

struct RunConfig {
  std::string name = "baseline";
  LabelScheme scheme = LabelScheme::Binary;
  ImbalanceStrategy imbalance = ImbalanceStrategy::WeightedLoss;
  std::uint64_t seed = 0;
  std::string manifest_path;
  std::string image_root;
  std::string output_dir;
  PreprocessParams preprocess;
  AugmentSpec augment;
  TrainConfig train;
  NetworkSpec network;  // num_classes is overridden by the scheme
  int oversample_target = -1;  // -1 = size of the largest class
  std::vector<double> class_constants;  // empty = all 1
};

// CB, CM3, CM4, RB, RM3 or RM4.
std::string scenario_code(const RunConfig& config);

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);
RunConfig read_run_config(const std::string& path);

struct PreprocessOutcome {
  int processed = 0;
  std::vector<std::string> failures;  // "path: reason"
};

// Per image: threshold mask, inpaint, resize, denoise; the final image is
// written under out_dir mirroring the record path. keep_stages adds the
// mask, inpainted and resized stages; a per-image histogram CSV covering
// all stages is always written. Per-file errors are collected, not thrown.
PreprocessOutcome cmd_preprocess(const Manifest& manifest,
                                 const PreprocessParams& params,
                                 const std::string& image_root,
                                 const std::string& out_dir,
                                 bool keep_stages);

struct ScenarioOutcome {
  std::string run_dir;
  std::string scenario;
  EvalReport test_report;
};

// Applies the imbalance strategy, trains on the Train/Val splits, evaluates
// on Test, and writes config.json, seed.txt, inputs.sha256, weights.json or
// the oversampled manifest, trace.csv, model.cxrn and report.json into a
// scenario-stamped directory under output_dir.
ScenarioOutcome cmd_run_scenario(const RunConfig& config);

// One row per run directory, Accuracy/Precision/Recall/AUC/Specificity/F1
// columns plus per-metric best flags. Writes CSV when out_csv is non-empty
// and returns the formatted text table. Throws MissingRun.
std::string cmd_report(const std::vector<std::string>& run_dirs,
                       const std::string& out_csv);

}  // namespace cxr
