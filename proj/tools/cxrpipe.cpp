// cxrpipe: chest X-ray classification pipeline, one subcommand per stage.
//
//   fuse        merge source manifests into one dataset table
//   split       assign Train/Val/Test per class with a seeded shuffle
//   preprocess  threshold -> inpaint -> resize -> denoise per image
//   oversample  augment minority classes up to a per-class target
//   train       run a full scenario (or k-fold) from a JSON config
//   evaluate    score a saved checkpoint on a manifest split
//   explain     Grad-CAM or LIME overlay + JSON sidecar for one image
//   report      comparison table across finished run directories
//   denoise     standalone adaptive TV denoiser
//   synth       two-class disc dataset for smoke tests and demos
//
// Exit codes: 0 success, 1 partial or runtime failure, 2 config error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cxr/dataset.hpp"
#include "cxr/denoise.hpp"
#include "cxr/error.hpp"
#include "cxr/explain.hpp"
#include "cxr/image.hpp"
#include "cxr/image_io.hpp"
#include "cxr/imbalance.hpp"
#include "cxr/metrics.hpp"
#include "cxr/network.hpp"
#include "cxr/pipeline.hpp"
#include "cxr/rng.hpp"
#include "cxr/synthetic.hpp"
#include "cxr/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

cxr::LabelScheme scheme_from_flag(const std::string& s) {
  const std::string v = lower(s);
  if (v == "binary" || v == "b") return cxr::LabelScheme::Binary;
  if (v == "multi3" || v == "m3") return cxr::LabelScheme::Multi3;
  if (v == "multi4" || v == "m4") return cxr::LabelScheme::Multi4;
  throw cxr::ConfigError("unknown scheme '" + s + "' (binary, multi3, multi4)");
}

cxr::Split split_from_flag(const std::string& s) {
  const std::string v = lower(s);
  if (v == "train") return cxr::Split::Train;
  if (v == "val") return cxr::Split::Val;
  if (v == "test") return cxr::Split::Test;
  if (v == "unassigned") return cxr::Split::Unassigned;
  throw cxr::ConfigError("unknown split '" + s + "' (train, val, test, unassigned)");
}

// "906,90,110;88,9,11" -> one SplitCounts per class.
std::vector<cxr::SplitCounts> parse_counts_arg(const std::string& arg) {
  std::vector<cxr::SplitCounts> out;
  std::size_t start = 0;
  while (start <= arg.size()) {
    std::size_t end = arg.find(';', start);
    if (end == std::string::npos) end = arg.size();
    const std::string group = arg.substr(start, end - start);
    int t = 0, v = 0, e = 0;
    if (std::sscanf(group.c_str(), "%d,%d,%d", &t, &v, &e) != 3) {
      throw cxr::ConfigError("split: bad counts group '" + group +
                             "' (expected train,val,test)");
    }
    out.push_back({t, v, e});
    start = end + 1;
  }
  if (out.empty()) throw cxr::ConfigError("split: --counts is empty");
  return out;
}

std::pair<int, int> parse_grid_arg(const std::string& arg) {
  int r = 0, c = 0;
  if (std::sscanf(arg.c_str(), "%dx%d", &r, &c) != 2 &&
      std::sscanf(arg.c_str(), "%d,%d", &r, &c) != 2) {
    throw cxr::ConfigError("explain: --grid expects RxC, e.g. 8x8");
  }
  if (r <= 0 || c <= 0) throw cxr::ConfigError("explain: grid dims must be positive");
  return {r, c};
}

std::string env_output_root() {
  const char* v = std::getenv("CXRPIPE_OUTPUT_ROOT");
  return v ? std::string(v) : std::string();
}

std::string fmt_metric(const cxr::MetricValue& m) {
  if (!m.defined) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", m.value);
  return buf;
}

void print_report(const cxr::EvalReport& r, const std::vector<std::string>& names) {
  std::printf("overall accuracy %.4f   loss %.6f\n", r.overall_accuracy, r.loss);
  std::printf("%-20s %9s %9s %9s %11s %9s %9s\n", "class", "accuracy",
              "precision", "recall", "specificity", "f1", "auc");
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const cxr::ClassMetrics& m = r.per_class[c];
    std::printf("%-20s %9s %9s %9s %11s %9s %9s\n", names[c].c_str(),
                fmt_metric(m.accuracy).c_str(), fmt_metric(m.precision).c_str(),
                fmt_metric(m.recall).c_str(), fmt_metric(m.specificity).c_str(),
                fmt_metric(m.f1).c_str(), fmt_metric(m.auc).c_str());
  }
  const cxr::ClassMetrics& m = r.macro;
  std::printf("%-20s %9s %9s %9s %11s %9s %9s\n", "macro",
              fmt_metric(m.accuracy).c_str(), fmt_metric(m.precision).c_str(),
              fmt_metric(m.recall).c_str(), fmt_metric(m.specificity).c_str(),
              fmt_metric(m.f1).c_str(), fmt_metric(m.auc).c_str());
}

nlohmann::json metric_json(const cxr::MetricValue& m) {
  return m.defined ? nlohmann::json(m.value) : nlohmann::json();
}

// Scheme is recoverable from the class count alone, so `evaluate` can
// default it from the checkpoint.
cxr::LabelScheme scheme_from_classes(int num_classes) {
  switch (num_classes) {
    case 2: return cxr::LabelScheme::Binary;
    case 3: return cxr::LabelScheme::Multi3;
    case 4: return cxr::LabelScheme::Multi4;
    default:
      throw cxr::ConfigError("no label scheme has " +
                             std::to_string(num_classes) + " classes");
  }
}

std::vector<double> read_weights_file(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw cxr::IoError("cannot open weights file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.is_object() && j.contains("weights")) j = j["weights"];
  if (!j.is_array()) {
    throw cxr::ConfigError("weights file must hold an array or {\"weights\": [...]}");
  }
  std::vector<double> w = j.get<std::vector<double>>();
  if (static_cast<int>(w.size()) != num_classes) {
    throw cxr::ConfigError("weights file has " + std::to_string(w.size()) +
                           " entries, model has " + std::to_string(num_classes) +
                           " classes");
  }
  return w;
}

void print_split_table(const cxr::Manifest& m, cxr::LabelScheme scheme) {
  const int n = cxr::num_classes(scheme);
  const std::vector<int> tr = cxr::class_counts(m, scheme, cxr::Split::Train);
  const std::vector<int> va = cxr::class_counts(m, scheme, cxr::Split::Val);
  const std::vector<int> te = cxr::class_counts(m, scheme, cxr::Split::Test);
  for (int c = 0; c < n; ++c) {
    std::printf("%-20s train %5d  val %5d  test %5d\n",
                cxr::class_name(scheme, c).c_str(), tr[c], va[c], te[c]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chest X-ray classification pipeline"};
  app.set_version_flag("--version", "cxrpipe 0.1.0");
  app.require_subcommand(1);
  int rc = 0;

  // --- fuse -----------------------------------------------------------
  std::vector<std::string> fuse_inputs;
  std::string fuse_out;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Merge manifests into one");
  fuse_cmd->add_option("inputs", fuse_inputs, "Input manifest CSVs")
      ->required()
      ->check(CLI::ExistingFile);
  fuse_cmd->add_option("-o,--out", fuse_out, "Output manifest CSV")->required();
  fuse_cmd->callback([&] {
    std::vector<cxr::Manifest> parts;
    for (const std::string& p : fuse_inputs) parts.push_back(cxr::read_manifest_csv(p));
    const cxr::Manifest fused = cxr::fuse(parts);
    cxr::write_manifest_csv(fused, fuse_out);
    std::vector<int> counts(cxr::kFindingCount, 0);
    for (const cxr::SampleRecord& r : fused.records) counts[static_cast<int>(r.finding)]++;
    std::printf("fused %zu records from %zu manifests into %s\n",
                fused.records.size(), parts.size(), fuse_out.c_str());
    for (int f = 0; f < cxr::kFindingCount; ++f) {
      std::printf("%-20s %5d\n",
                  cxr::to_string(static_cast<cxr::Finding>(f)).c_str(), counts[f]);
    }
  });

  // --- split ----------------------------------------------------------
  std::string split_manifest_path, split_out, split_scheme, split_preset, split_counts;
  unsigned long long split_seed = 0;
  CLI::App* split_cmd =
      app.add_subcommand("split", "Assign Train/Val/Test per class");
  split_cmd->add_option("-m,--manifest", split_manifest_path, "Input manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  split_cmd->add_option("-o,--out", split_out, "Output manifest CSV")->required();
  split_cmd->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--scheme", split_scheme, "binary, multi3 or multi4");
  CLI::Option* preset_opt = split_cmd->add_option(
      "--preset", split_preset, "Named split preset (e.g. table2-cb)");
  CLI::Option* counts_opt = split_cmd->add_option(
      "--counts", split_counts, "Per-class train,val,test groups joined by ';'");
  preset_opt->excludes(counts_opt);
  split_cmd->callback([&] {
    cxr::LabelScheme scheme;
    std::vector<cxr::SplitCounts> counts;
    if (!split_preset.empty()) {
      scheme = cxr::preset_scheme(split_preset);
      counts = cxr::preset_split_counts(split_preset);
      if (!split_scheme.empty() && scheme_from_flag(split_scheme) != scheme) {
        throw cxr::ConfigError("split: --scheme contradicts preset '" + split_preset + "'");
      }
    } else if (!split_counts.empty()) {
      if (split_scheme.empty()) {
        throw cxr::ConfigError("split: --counts requires --scheme");
      }
      scheme = scheme_from_flag(split_scheme);
      counts = parse_counts_arg(split_counts);
    } else {
      throw cxr::ConfigError("split: give --preset or --counts");
    }
    cxr::Manifest m = cxr::read_manifest_csv(split_manifest_path);
    m = cxr::split_manifest(std::move(m), scheme, counts, split_seed);
    cxr::write_manifest_csv(m, split_out);
    std::printf("wrote %s (seed %llu)\n", split_out.c_str(), split_seed);
    print_split_table(m, scheme);
  });

  // --- preprocess -----------------------------------------------------
  std::string pre_config, pre_manifest, pre_root, pre_out_dir;
  cxr::PreprocessParams pre_defaults;
  double pre_min_th = pre_defaults.threshold.min_th;
  double pre_max_th = pre_defaults.threshold.max_th;
  int pre_inpaint_iters = pre_defaults.inpaint_max_iters;
  double pre_inpaint_tol = pre_defaults.inpaint_tol;
  int pre_resize = pre_defaults.resize_to;
  int pre_bins = pre_defaults.histogram_bins;
  cxr::TVParams pre_tv;
  bool pre_no_inpaint = false, pre_no_denoise = false, pre_keep = false;
  CLI::App* pre_cmd = app.add_subcommand(
      "preprocess", "Threshold, inpaint, resize and denoise every image");
  pre_cmd->add_option("--config", pre_config, "Run config JSON (preprocess section)")
      ->check(CLI::ExistingFile);
  pre_cmd->add_option("-m,--manifest", pre_manifest, "Input manifest CSV");
  pre_cmd->add_option("--image-root", pre_root, "Directory manifest paths are relative to");
  pre_cmd->add_option("--out-dir", pre_out_dir, "Output directory")->required();
  pre_cmd->add_option("--min-th", pre_min_th, "Mask intensities >= this")->capture_default_str();
  pre_cmd->add_option("--max-th", pre_max_th, "Mask render intensity")->capture_default_str();
  pre_cmd->add_flag("--no-inpaint", pre_no_inpaint, "Skip artifact inpainting");
  pre_cmd->add_option("--inpaint-iters", pre_inpaint_iters)->capture_default_str();
  pre_cmd->add_option("--inpaint-tol", pre_inpaint_tol)->capture_default_str();
  pre_cmd->add_option("--resize", pre_resize, "Square output size")->capture_default_str();
  pre_cmd->add_flag("--no-denoise", pre_no_denoise, "Skip TV denoising");
  pre_cmd->add_option("--k", pre_tv.k)->capture_default_str();
  pre_cmd->add_option("--sigma", pre_tv.sigma)->capture_default_str();
  pre_cmd->add_option("--step", pre_tv.step)->capture_default_str();
  pre_cmd->add_option("--eps", pre_tv.eps)->capture_default_str();
  pre_cmd->add_option("--tol", pre_tv.tol)->capture_default_str();
  pre_cmd->add_option("--max-iters", pre_tv.max_iters)->capture_default_str();
  pre_cmd->add_option("--bins", pre_bins, "Histogram bins")->capture_default_str();
  pre_cmd->add_flag("--keep-stages", pre_keep, "Also write mask/inpainted/resized stages");
  pre_cmd->callback([&] {
    cxr::PreprocessParams params;
    std::string manifest_path = pre_manifest, root = pre_root;
    if (!pre_config.empty()) {
      const cxr::RunConfig cfg = cxr::read_run_config(pre_config);
      params = cfg.preprocess;
      if (manifest_path.empty()) manifest_path = cfg.manifest_path;
      if (root.empty()) root = cfg.image_root;
    }
    if (manifest_path.empty()) {
      throw cxr::ConfigError("preprocess: --manifest (or --config) is required");
    }
    auto touched = [&](const std::string& name) { return pre_cmd->count(name) > 0; };
    if (touched("--min-th")) params.threshold.min_th = pre_min_th;
    if (touched("--max-th")) params.threshold.max_th = pre_max_th;
    if (pre_no_inpaint) params.inpaint_enabled = false;
    if (touched("--inpaint-iters")) params.inpaint_max_iters = pre_inpaint_iters;
    if (touched("--inpaint-tol")) params.inpaint_tol = pre_inpaint_tol;
    if (touched("--resize")) params.resize_to = pre_resize;
    if (pre_no_denoise) params.denoise_enabled = false;
    if (touched("--k")) params.tv.k = pre_tv.k;
    if (touched("--sigma")) params.tv.sigma = pre_tv.sigma;
    if (touched("--step")) params.tv.step = pre_tv.step;
    if (touched("--eps")) params.tv.eps = pre_tv.eps;
    if (touched("--tol")) params.tv.tol = pre_tv.tol;
    if (touched("--max-iters")) params.tv.max_iters = pre_tv.max_iters;
    if (touched("--bins")) params.histogram_bins = pre_bins;

    const cxr::Manifest m = cxr::read_manifest_csv(manifest_path);
    const cxr::PreprocessOutcome out =
        cxr::cmd_preprocess(m, params, root, pre_out_dir, pre_keep);
    std::printf("preprocessed %d images into %s (%zu failures)\n",
                out.processed, pre_out_dir.c_str(), out.failures.size());
    for (const std::string& f : out.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
    if (!out.failures.empty()) rc = 1;
  });

  // --- oversample -----------------------------------------------------
  std::string ov_manifest, ov_out, ov_root = ".", ov_out_dir, ov_scheme, ov_preset, ov_spec;
  int ov_target = -1;
  unsigned long long ov_seed = 0;
  CLI::App* ov_cmd = app.add_subcommand(
      "oversample", "Augment minority Train classes up to a target count");
  ov_cmd->add_option("-m,--manifest", ov_manifest, "Input manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  ov_cmd->add_option("-o,--out", ov_out, "Output manifest CSV")->required();
  ov_cmd->add_option("--image-root", ov_root, "Directory manifest paths are relative to")
      ->capture_default_str();
  ov_cmd->add_option("--out-dir", ov_out_dir, "Directory for synthesized images")->required();
  ov_cmd->add_option("--scheme", ov_scheme, "binary, multi3 or multi4");
  ov_cmd->add_option("--preset", ov_preset, "Oversampling preset (e.g. table2-rb)");
  ov_cmd->add_option("--spec", ov_spec, "AugmentSpec JSON file")->check(CLI::ExistingFile);
  ov_cmd->add_option("--target", ov_target, "Per-class Train target; -1 = largest class")
      ->capture_default_str();
  ov_cmd->add_option("--seed", ov_seed, "Augmentation seed")->capture_default_str();
  ov_cmd->callback([&] {
    cxr::LabelScheme scheme;
    int target = ov_target;
    if (!ov_preset.empty()) {
      scheme = cxr::preset_scheme(ov_preset);
      if (ov_cmd->count("--target") == 0) target = cxr::preset_oversample_target(ov_preset);
      if (!ov_scheme.empty() && scheme_from_flag(ov_scheme) != scheme) {
        throw cxr::ConfigError("oversample: --scheme contradicts preset '" + ov_preset + "'");
      }
    } else if (!ov_scheme.empty()) {
      scheme = scheme_from_flag(ov_scheme);
    } else {
      throw cxr::ConfigError("oversample: give --scheme or --preset");
    }
    cxr::AugmentSpec spec;
    if (!ov_spec.empty()) spec = cxr::read_augment_spec(ov_spec);
    if (ov_cmd->count("--seed") > 0) spec.seed = ov_seed;

    const cxr::Manifest before = cxr::read_manifest_csv(ov_manifest);
    const std::vector<int> counts_before =
        cxr::class_counts(before, scheme, cxr::Split::Train);
    const cxr::Manifest after =
        cxr::oversample(before, scheme, spec, target, ov_root, ov_out_dir);
    cxr::write_manifest_csv(after, ov_out);
    const std::vector<int> counts_after =
        cxr::class_counts(after, scheme, cxr::Split::Train);
    int total = 0;
    for (int c = 0; c < cxr::num_classes(scheme); ++c) {
      std::printf("%-20s train %5d -> %5d\n", cxr::class_name(scheme, c).c_str(),
                  counts_before[c], counts_after[c]);
      total += counts_after[c];
    }
    std::printf("train total %d, manifest written to %s\n", total, ov_out.c_str());
  });

  // --- train ----------------------------------------------------------
  std::string tr_config, tr_name, tr_scheme, tr_imbalance, tr_manifest, tr_root, tr_out_dir;
  unsigned long long tr_seed = 0;
  int tr_epochs = 0, tr_batch = 0, tr_patience = 0, tr_folds = 0, tr_target = -1;
  double tr_lr = 0.0;
  bool tr_kfold = false;
  CLI::App* tr_cmd =
      app.add_subcommand("train", "Train and evaluate one scenario from a config");
  tr_cmd->add_option("--config", tr_config, "Run config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  tr_cmd->add_option("--name", tr_name, "Run name override");
  tr_cmd->add_option("--scheme", tr_scheme, "binary, multi3 or multi4");
  tr_cmd->add_option("--imbalance", tr_imbalance, "weighted or oversample")
      ->check(CLI::IsMember({"weighted", "oversample"}));
  tr_cmd->add_option("--seed", tr_seed, "Master seed override");
  tr_cmd->add_option("-m,--manifest", tr_manifest, "Manifest override");
  tr_cmd->add_option("--image-root", tr_root, "Image root override");
  tr_cmd->add_option("--output-dir", tr_out_dir,
                     "Output root override (default: config, then $CXRPIPE_OUTPUT_ROOT)");
  tr_cmd->add_option("--epochs", tr_epochs, "Max epochs override");
  tr_cmd->add_option("--batch-size", tr_batch, "Batch size override");
  tr_cmd->add_option("--lr", tr_lr, "Learning rate override");
  tr_cmd->add_option("--patience", tr_patience, "Early-stop patience override");
  tr_cmd->add_option("--folds", tr_folds, "Fold count override");
  tr_cmd->add_option("--target", tr_target, "Oversample target override");
  tr_cmd->add_flag("--kfold", tr_kfold, "Cross-validate instead of the single split");
  tr_cmd->callback([&] {
    cxr::RunConfig cfg = cxr::read_run_config(tr_config);
    auto touched = [&](const std::string& name) { return tr_cmd->count(name) > 0; };
    if (touched("--name")) cfg.name = tr_name;
    if (touched("--scheme")) cfg.scheme = scheme_from_flag(tr_scheme);
    if (touched("--imbalance")) {
      cfg.imbalance = tr_imbalance == "weighted" ? cxr::ImbalanceStrategy::WeightedLoss
                                                 : cxr::ImbalanceStrategy::Oversample;
    }
    if (touched("--seed")) cfg.seed = tr_seed;
    if (touched("--manifest")) cfg.manifest_path = tr_manifest;
    if (touched("--image-root")) cfg.image_root = tr_root;
    if (touched("--output-dir")) cfg.output_dir = tr_out_dir;
    if (touched("--epochs")) cfg.train.max_epochs = tr_epochs;
    if (touched("--batch-size")) cfg.train.batch_size = tr_batch;
    if (touched("--lr")) cfg.train.adam.lr = tr_lr;
    if (touched("--patience")) cfg.train.patience = tr_patience;
    if (touched("--folds")) cfg.train.folds = tr_folds;
    if (touched("--target")) cfg.oversample_target = tr_target;
    if (cfg.output_dir.empty()) cfg.output_dir = env_output_root();
    if (cfg.output_dir.empty()) {
      throw cxr::ConfigError(
          "train: no output dir (config, --output-dir or $CXRPIPE_OUTPUT_ROOT)");
    }

    if (!tr_kfold) {
      const cxr::ScenarioOutcome out = cxr::cmd_run_scenario(cfg);
      std::printf("scenario %s finished, artifacts in %s\n", out.scenario.c_str(),
                  out.run_dir.c_str());
      std::vector<std::string> names;
      for (int c = 0; c < cxr::num_classes(cfg.scheme); ++c) {
        names.push_back(cxr::class_name(cfg.scheme, c));
      }
      print_report(out.test_report, names);
      return;
    }

    // K-fold path. Oversampling inside folds would leak augmented copies of
    // a source image across fold boundaries, so only weighted loss is valid.
    if (cfg.imbalance == cxr::ImbalanceStrategy::Oversample) {
      throw cxr::ConfigError("train: --kfold supports the weighted-loss scenarios only");
    }
    const cxr::Manifest manifest = cxr::read_manifest_csv(cfg.manifest_path);
    const int classes = cxr::num_classes(cfg.scheme);
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (const cxr::SampleRecord& r : manifest.records) {
      counts[static_cast<std::size_t>(cxr::encode_label(r.finding, cfg.scheme))]++;
    }
    const std::vector<double> weights =
        cxr::class_weights(counts, cfg.class_constants).weights;
    cxr::NetworkSpec ns = cfg.network;
    ns.num_classes = classes;
    cxr::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const cxr::KfoldResult kr =
        cxr::kfold_train(ns, manifest, cfg.scheme, cfg.image_root, weights, tc,
                         cxr::derive_seed(cfg.seed, 0x1217ULL));

    const fs::path run_dir =
        fs::path(cfg.output_dir) / (cfg.name + "_" + cxr::scenario_code(cfg) +
                                    "_seed" + std::to_string(cfg.seed) + "_kfold");
    fs::create_directories(run_dir);
    std::ofstream((run_dir / "config.json").string())
        << cxr::run_config_to_json(cfg) << "\n";
    std::ofstream((run_dir / "seed.txt").string()) << cfg.seed << "\n";
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t f = 0; f < kr.fold_reports.size(); ++f) {
      const cxr::EvalReport& r = kr.fold_reports[f];
      folds.push_back({{"loss", r.loss},
                       {"accuracy", r.overall_accuracy},
                       {"precision", metric_json(r.macro.precision)},
                       {"recall", metric_json(r.macro.recall)},
                       {"specificity", metric_json(r.macro.specificity)},
                       {"f1", metric_json(r.macro.f1)},
                       {"auc", metric_json(r.macro.auc)}});
      cxr::write_trace_csv(
          kr.fold_models[f].trace,
          (run_dir / ("trace_fold" + std::to_string(f) + ".csv")).string());
    }
    nlohmann::json kj;
    kj["folds"] = folds;
    kj["mean"] = {{"loss", kr.mean.loss},
                  {"accuracy", kr.mean.accuracy},
                  {"precision", metric_json(kr.mean.precision)},
                  {"recall", metric_json(kr.mean.recall)},
                  {"specificity", metric_json(kr.mean.specificity)},
                  {"f1", metric_json(kr.mean.f1)},
                  {"auc", metric_json(kr.mean.auc)}};
    std::ofstream((run_dir / "kfold.json").string()) << kj.dump(2) << "\n";
    std::printf("%zu folds finished, artifacts in %s\n", kr.fold_reports.size(),
                run_dir.string().c_str());
    std::printf("mean: loss %.6f accuracy %.4f precision %s recall %s f1 %s auc %s\n",
                kr.mean.loss, kr.mean.accuracy, fmt_metric(kr.mean.precision).c_str(),
                fmt_metric(kr.mean.recall).c_str(), fmt_metric(kr.mean.f1).c_str(),
                fmt_metric(kr.mean.auc).c_str());
  });

  // --- evaluate -------------------------------------------------------
  std::string ev_model, ev_manifest, ev_root = ".", ev_split = "test", ev_scheme,
              ev_weights, ev_out;
  int ev_batch = 16;
  CLI::App* ev_cmd =
      app.add_subcommand("evaluate", "Score a checkpoint on a manifest split");
  ev_cmd->add_option("--model", ev_model, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("-m,--manifest", ev_manifest, "Manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--image-root", ev_root)->capture_default_str();
  ev_cmd->add_option("--split", ev_split, "train, val or test")->capture_default_str();
  ev_cmd->add_option("--scheme", ev_scheme, "Label scheme (default: from checkpoint)");
  ev_cmd->add_option("--weights", ev_weights, "Class-weight JSON for the reported loss")
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("-o,--out", ev_out, "Report JSON output path");
  ev_cmd->add_option("--batch-size", ev_batch)->capture_default_str();
  ev_cmd->callback([&] {
    const cxr::Network net = cxr::load_checkpoint(ev_model);
    const cxr::LabelScheme scheme = ev_scheme.empty()
                                        ? scheme_from_classes(net.spec.num_classes)
                                        : scheme_from_flag(ev_scheme);
    if (cxr::num_classes(scheme) != net.spec.num_classes) {
      throw cxr::ConfigError("evaluate: scheme class count differs from checkpoint");
    }
    const cxr::Manifest m = cxr::read_manifest_csv(ev_manifest);
    const cxr::TensorDataset ds = cxr::load_tensor_dataset(
        m, split_from_flag(ev_split), scheme, ev_root, net.spec.in_channels,
        net.spec.in_height, net.spec.in_width);
    std::vector<double> weights(static_cast<std::size_t>(net.spec.num_classes), 1.0);
    if (!ev_weights.empty()) weights = read_weights_file(ev_weights, net.spec.num_classes);
    const cxr::EvalReport report = cxr::evaluate(net, ds, weights, ev_batch);
    std::vector<std::string> names;
    for (int c = 0; c < net.spec.num_classes; ++c) names.push_back(cxr::class_name(scheme, c));
    std::printf("%d samples from split %s\n", ds.size(), ev_split.c_str());
    print_report(report, names);
    if (!ev_out.empty()) cxr::write_report_json(report, names, ev_out);
  });

  // --- explain --------------------------------------------------------
  std::string ex_model, ex_image, ex_method, ex_grid = "8x8", ex_fill = "zero", ex_out;
  int ex_class = 0, ex_samples = 200;
  unsigned long long ex_seed = 0;
  CLI::App* ex_cmd = app.add_subcommand(
      "explain", "Write a saliency overlay and JSON sidecar for one image");
  ex_cmd->add_option("--model", ex_model, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  ex_cmd->add_option("--image", ex_image, "Input image")
      ->required()
      ->check(CLI::ExistingFile);
  ex_cmd->add_option("-c,--class", ex_class, "Target class index")->required();
  ex_cmd->add_option("--method", ex_method, "gradcam or lime")
      ->required()
      ->check(CLI::IsMember({"gradcam", "lime"}));
  ex_cmd->add_option("--grid", ex_grid, "LIME superpixel grid RxC")->capture_default_str();
  ex_cmd->add_option("--samples", ex_samples, "LIME perturbation count")->capture_default_str();
  ex_cmd->add_option("--seed", ex_seed, "LIME perturbation seed")->capture_default_str();
  ex_cmd->add_option("--fill", ex_fill, "LIME off-segment fill")
      ->check(CLI::IsMember({"zero", "mean"}))
      ->capture_default_str();
  ex_cmd->add_option("-o,--out", ex_out, "Overlay PNG path")->required();
  ex_cmd->callback([&] {
    const cxr::Network net = cxr::load_checkpoint(ex_model);
    if (ex_class < 0 || ex_class >= net.spec.num_classes) {
      throw cxr::ConfigError("explain: class index out of range for this model");
    }
    const cxr::GrayImage img = cxr::read_image(ex_image);
    nlohmann::json sidecar;
    if (ex_method == "gradcam") {
      std::vector<double> channel_weights;
      const cxr::Heatmap map = cxr::grad_cam(net, img, ex_class, &channel_weights);
      cxr::render_cam_overlay(img, map, ex_out);
      sidecar = {{"method", "gradcam"},
                 {"target_class", ex_class},
                 {"channel_weights", channel_weights}};
    } else {
      auto [rows, cols] = parse_grid_arg(ex_grid);
      cxr::LimeOptions opts;
      opts.rows = rows;
      opts.cols = cols;
      opts.num_perturbations = ex_samples;
      opts.seed = ex_seed;
      opts.fill = ex_fill == "mean" ? cxr::LimeFill::Mean : cxr::LimeFill::Zero;
      const cxr::LimeExplanation e = cxr::lime_explain(net, img, ex_class, opts);
      cxr::render_lime_overlay(img, e, ex_out);
      sidecar = nlohmann::json::parse(cxr::lime_to_json(e));
      sidecar["method"] = "lime";
      sidecar["target_class"] = ex_class;
    }
    const std::string sidecar_path = ex_out + ".json";
    std::ofstream out(sidecar_path);
    out << sidecar.dump(2) << "\n";
    std::printf("wrote %s and %s\n", ex_out.c_str(), sidecar_path.c_str());
  });

  // --- report ---------------------------------------------------------
  std::vector<std::string> rp_dirs;
  std::string rp_csv;
  CLI::App* rp_cmd =
      app.add_subcommand("report", "Comparison table across run directories");
  rp_cmd->add_option("run_dirs", rp_dirs, "Finished run directories")->required();
  rp_cmd->add_option("--csv", rp_csv, "Also write the table as CSV");
  rp_cmd->callback([&] { std::cout << cxr::cmd_report(rp_dirs, rp_csv); });

  // --- denoise --------------------------------------------------------
  std::string dn_in, dn_out, dn_trace;
  cxr::TVParams dn_tv;
  CLI::App* dn_cmd = app.add_subcommand("denoise", "Adaptive TV denoiser");
  dn_cmd->add_option("input", dn_in, "Input image")->required()->check(CLI::ExistingFile);
  dn_cmd->add_option("output", dn_out, "Output image")->required();
  dn_cmd->add_option("--k", dn_tv.k, "Edge-stopping contrast")->capture_default_str();
  dn_cmd->add_option("--sigma", dn_tv.sigma, "Pre-smoothing std-dev")->capture_default_str();
  dn_cmd->add_option("--step", dn_tv.step, "Descent step size")->capture_default_str();
  dn_cmd->add_option("--eps", dn_tv.eps, "Gradient regularizer")->capture_default_str();
  dn_cmd->add_option("--tol", dn_tv.tol, "Relative energy stop")->capture_default_str();
  dn_cmd->add_option("--max-iters", dn_tv.max_iters)->capture_default_str();
  dn_cmd->add_option("--trace", dn_trace, "Energy trace CSV (iter,energy)");
  dn_cmd->callback([&] {
    const cxr::GrayImage img = cxr::read_image(dn_in);
    const cxr::DenoiseResult res = cxr::tv_denoise(img, dn_tv);
    cxr::write_image(res.image, dn_out);
    if (!dn_trace.empty()) {
      std::ofstream out(dn_trace);
      if (!out) throw cxr::IoError("cannot open trace file: " + dn_trace);
      out << "iter,energy\n";
      char buf[64];
      for (std::size_t i = 0; i < res.energy_trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, res.energy_trace[i]);
        out << buf;
      }
    }
    std::printf("%zu accepted steps, energy %.6g -> %.6g, wrote %s\n",
                res.energy_trace.size() - 1, res.energy_trace.front(),
                res.energy_trace.back(), dn_out.c_str());
  });

  // --- synth ----------------------------------------------------------
  std::string sy_out_dir;
  cxr::DiscSpec sy_spec;
  unsigned long long sy_seed = 0;
  CLI::App* sy_cmd = app.add_subcommand(
      "synth", "Generate the two-class disc dataset used by the smoke tests");
  sy_cmd->add_option("--out-dir", sy_out_dir, "Output directory")->required();
  sy_cmd->add_option("--seed", sy_seed)->capture_default_str();
  sy_cmd->add_option("--size", sy_spec.width, "Square image size")->capture_default_str();
  sy_cmd->add_option("--train-bright", sy_spec.train_bright)->capture_default_str();
  sy_cmd->add_option("--train-dark", sy_spec.train_dark)->capture_default_str();
  sy_cmd->add_option("--val-bright", sy_spec.val_bright)->capture_default_str();
  sy_cmd->add_option("--val-dark", sy_spec.val_dark)->capture_default_str();
  sy_cmd->add_option("--test-bright", sy_spec.test_bright)->capture_default_str();
  sy_cmd->add_option("--test-dark", sy_spec.test_dark)->capture_default_str();
  sy_cmd->callback([&] {
    sy_spec.height = sy_spec.width;
    sy_spec.seed = sy_seed;
    const cxr::DiscDataset ds = cxr::generate_disc_dataset(sy_spec, sy_out_dir);
    const std::string manifest_path =
        (fs::path(sy_out_dir) / "manifest.csv").string();
    cxr::write_manifest_csv(ds.manifest, manifest_path);
    std::printf("wrote %zu images and %s\n", ds.samples.size(), manifest_path.c_str());
    print_split_table(ds.manifest, cxr::LabelScheme::Binary);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const cxr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
