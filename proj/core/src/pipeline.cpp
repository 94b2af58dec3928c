#include "cxr/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cxr/error.hpp"
#include "cxr/hash.hpp"
#include "cxr/image_io.hpp"
#include "cxr/rng.hpp"

namespace fs = std::filesystem;

namespace cxr {

std::string scenario_code(const RunConfig& config) {
  std::string code =
      config.imbalance == ImbalanceStrategy::WeightedLoss ? "C" : "R";
  switch (config.scheme) {
    case LabelScheme::Binary: code += "B"; break;
    case LabelScheme::Multi3: code += "M3"; break;
    case LabelScheme::Multi4: code += "M4"; break;
  }
  return code;
}

namespace {

nlohmann::json tv_to_json(const TVParams& p) {
  return {{"k", p.k},         {"sigma", p.sigma}, {"step", p.step},
          {"eps", p.eps},     {"tol", p.tol},     {"max_iters", p.max_iters}};
}

TVParams tv_from_json(const nlohmann::json& j, TVParams p) {
  if (j.contains("k")) p.k = j["k"];
  if (j.contains("sigma")) p.sigma = j["sigma"];
  if (j.contains("step")) p.step = j["step"];
  if (j.contains("eps")) p.eps = j["eps"];
  if (j.contains("tol")) p.tol = j["tol"];
  if (j.contains("max_iters")) p.max_iters = j["max_iters"];
  return p;
}

}  // namespace

std::string run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["scheme"] = to_string(c.scheme);
  j["imbalance"] = c.imbalance == ImbalanceStrategy::WeightedLoss
                       ? "weighted"
                       : "oversample";
  j["seed"] = c.seed;
  j["paths"] = {{"manifest", c.manifest_path},
                {"image_root", c.image_root},
                {"output_dir", c.output_dir}};
  j["preprocess"] = {
      {"min_th", c.preprocess.threshold.min_th},
      {"max_th", c.preprocess.threshold.max_th},
      {"inpaint",
       {{"enabled", c.preprocess.inpaint_enabled},
        {"max_iters", c.preprocess.inpaint_max_iters},
        {"tol", c.preprocess.inpaint_tol}}},
      {"resize_to", c.preprocess.resize_to},
      {"denoise",
       {{"enabled", c.preprocess.denoise_enabled}}},
      {"tv", tv_to_json(c.preprocess.tv)},
      {"histogram_bins", c.preprocess.histogram_bins}};
  j["augment"] = nlohmann::json::parse(augment_spec_to_json(c.augment));
  j["train"] = {{"batch_size", c.train.batch_size},
                {"lr", c.train.adam.lr},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"folds", c.train.folds},
                {"frozen_layers", c.train.frozen_layers}};
  j["network"] = {{"block_channels", c.network.block_channels},
                  {"dense_units", c.network.dense_units},
                  {"input",
                   {c.network.in_channels, c.network.in_height,
                    c.network.in_width}}};
  j["oversample_target"] = c.oversample_target;
  j["class_constants"] = c.class_constants;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("name")) c.name = j["name"];
    if (j.contains("scheme")) c.scheme = parse_scheme(j["scheme"]);
    if (j.contains("imbalance")) {
      const std::string s = j["imbalance"];
      if (s == "weighted") {
        c.imbalance = ImbalanceStrategy::WeightedLoss;
      } else if (s == "oversample") {
        c.imbalance = ImbalanceStrategy::Oversample;
      } else {
        throw ConfigError("config: imbalance must be weighted or oversample");
      }
    }
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      if (p.contains("manifest")) c.manifest_path = p["manifest"];
      if (p.contains("image_root")) c.image_root = p["image_root"];
      if (p.contains("output_dir")) c.output_dir = p["output_dir"];
    }
    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      if (p.contains("min_th")) c.preprocess.threshold.min_th = p["min_th"];
      if (p.contains("max_th")) c.preprocess.threshold.max_th = p["max_th"];
      if (p.contains("inpaint")) {
        const auto& ip = p["inpaint"];
        if (ip.contains("enabled")) c.preprocess.inpaint_enabled = ip["enabled"];
        if (ip.contains("max_iters")) c.preprocess.inpaint_max_iters = ip["max_iters"];
        if (ip.contains("tol")) c.preprocess.inpaint_tol = ip["tol"];
      }
      if (p.contains("resize_to")) c.preprocess.resize_to = p["resize_to"];
      if (p.contains("denoise") && p["denoise"].contains("enabled")) {
        c.preprocess.denoise_enabled = p["denoise"]["enabled"];
      }
      if (p.contains("tv")) c.preprocess.tv = tv_from_json(p["tv"], c.preprocess.tv);
      if (p.contains("histogram_bins")) c.preprocess.histogram_bins = p["histogram_bins"];
    }
    if (j.contains("augment")) {
      c.augment = augment_spec_from_json(j["augment"].dump());
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("batch_size")) c.train.batch_size = t["batch_size"];
      if (t.contains("lr")) c.train.adam.lr = t["lr"];
      if (t.contains("beta1")) c.train.adam.beta1 = t["beta1"];
      if (t.contains("beta2")) c.train.adam.beta2 = t["beta2"];
      if (t.contains("eps")) c.train.adam.eps = t["eps"];
      if (t.contains("max_epochs")) c.train.max_epochs = t["max_epochs"];
      if (t.contains("patience")) c.train.patience = t["patience"];
      if (t.contains("folds")) c.train.folds = t["folds"];
      if (t.contains("frozen_layers")) {
        c.train.frozen_layers =
            t["frozen_layers"].get<std::vector<std::string>>();
      }
    }
    if (j.contains("network")) {
      const auto& n = j["network"];
      if (n.contains("block_channels")) {
        c.network.block_channels = n["block_channels"].get<std::vector<int>>();
      }
      if (n.contains("dense_units")) c.network.dense_units = n["dense_units"];
      if (n.contains("input")) {
        c.network.in_channels = n["input"].at(0);
        c.network.in_height = n["input"].at(1);
        c.network.in_width = n["input"].at(2);
      }
    }
    if (j.contains("oversample_target")) c.oversample_target = j["oversample_target"];
    if (j.contains("class_constants")) {
      c.class_constants = j["class_constants"].get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

namespace {

void write_histogram_rows(std::ofstream& out, const std::string& stage,
                          const GrayImage& img, int bins) {
  const Histogram h = histogram(img, bins);
  for (int b = 0; b < h.bin_count; ++b) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%lld\n", stage.c_str(),
                  h.bin_edges[static_cast<std::size_t>(b)],
                  h.bin_edges[static_cast<std::size_t>(b) + 1],
                  static_cast<long long>(h.counts[static_cast<std::size_t>(b)]));
    out << buf;
  }
}

std::string with_suffix(const fs::path& p, const std::string& tag) {
  fs::path q = p;
  const std::string ext = q.extension().string();
  q.replace_extension();
  return q.string() + tag + ext;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

PreprocessOutcome cmd_preprocess(const Manifest& manifest,
                                 const PreprocessParams& params,
                                 const std::string& image_root,
                                 const std::string& out_dir,
                                 bool keep_stages) {
  PreprocessOutcome outcome;
  const fs::path root(image_root);
  const fs::path out_root(out_dir);
  for (const SampleRecord& rec : manifest.records) {
    try {
      const fs::path src = fs::path(rec.path).is_absolute()
                               ? fs::path(rec.path)
                               : root / rec.path;
      const fs::path dst = out_root / rec.path;
      fs::create_directories(dst.parent_path());

      const GrayImage input = read_image(src.string());
      const BinaryMask mask = threshold_mask(input, params.threshold);
      GrayImage inpainted =
          params.inpaint_enabled
              ? inpaint(input, mask, params.inpaint_max_iters,
                        params.inpaint_tol)
              : input;
      GrayImage resized = resize_bilinear(inpainted, params.resize_to,
                                          params.resize_to);
      GrayImage final_img =
          params.denoise_enabled
              ? tv_denoise(resized, params.tv).image
              : resized;

      write_image(final_img, dst.string());
      if (keep_stages) {
        write_image(render_mask(mask, params.threshold),
                    with_suffix(dst, "_mask"));
        write_image(inpainted, with_suffix(dst, "_inpainted"));
        write_image(resized, with_suffix(dst, "_resized"));
      }

      fs::path hist_path = dst;
      hist_path.replace_extension();
      hist_path += "_hist.csv";
      std::ofstream hist(hist_path, std::ios::binary);
      if (!hist) {
        throw IoError("cannot open '" + hist_path.string() + "' for writing");
      }
      hist << "stage,bin_lo,bin_hi,count\n";
      write_histogram_rows(hist, "input", input, params.histogram_bins);
      write_histogram_rows(hist, "inpainted", inpainted, params.histogram_bins);
      write_histogram_rows(hist, "resized", resized, params.histogram_bins);
      write_histogram_rows(hist, "denoised", final_img, params.histogram_bins);
      ++outcome.processed;
    } catch (const std::exception& e) {
      outcome.failures.push_back(rec.path + ": " + e.what());
    }
  }
  return outcome;
}

ScenarioOutcome cmd_run_scenario(const RunConfig& config) {
  if (config.manifest_path.empty() || config.output_dir.empty()) {
    throw ConfigError("run: manifest path and output dir are required");
  }
  RunConfig resolved = config;
  resolved.network.num_classes = num_classes(config.scheme);
  const std::string code = scenario_code(resolved);

  char dir_name[160];
  std::snprintf(dir_name, sizeof(dir_name), "%s_%s_seed%llu",
                resolved.name.c_str(), code.c_str(),
                static_cast<unsigned long long>(resolved.seed));
  const fs::path run_dir = fs::path(resolved.output_dir) / dir_name;
  fs::create_directories(run_dir);

  Manifest manifest = read_manifest_csv(resolved.manifest_path);

  // Content hashes of every input the run depends on.
  {
    std::ostringstream hashes;
    hashes << sha256_file_hex(resolved.manifest_path) << "  manifest\n";
    std::vector<std::string> lines;
    for (const SampleRecord& r : manifest.records) {
      const fs::path p = fs::path(r.path).is_absolute()
                             ? fs::path(r.path)
                             : fs::path(resolved.image_root) / r.path;
      lines.push_back(sha256_file_hex(p.string()) + "  " + r.path + "\n");
    }
    std::sort(lines.begin(), lines.end());
    for (const std::string& l : lines) hashes << l;
    write_text_file(run_dir / "inputs.sha256", hashes.str());
  }

  std::vector<double> weights(
      static_cast<std::size_t>(resolved.network.num_classes), 1.0);
  if (resolved.imbalance == ImbalanceStrategy::WeightedLoss) {
    const ClassWeightTable table =
        class_weights(class_counts(manifest, resolved.scheme, Split::Train),
                      resolved.class_constants);
    weights = table.weights;
    nlohmann::json wj;
    wj["counts"] = table.counts;
    wj["constants"] = table.constants;
    wj["weights"] = table.weights;
    write_text_file(run_dir / "weights.json", wj.dump(2) + "\n");
  } else {
    AugmentSpec aug = resolved.augment;
    aug.seed = derive_seed(resolved.seed, 0xA06ULL);
    manifest = oversample(manifest, resolved.scheme, aug,
                          resolved.oversample_target, resolved.image_root,
                          (run_dir / "oversampled").string());
    write_manifest_csv(manifest, (run_dir / "manifest.csv").string());
  }

  write_text_file(run_dir / "config.json", run_config_to_json(resolved) + "\n");
  write_text_file(run_dir / "seed.txt", std::to_string(resolved.seed) + "\n");

  const NetworkSpec& ns = resolved.network;
  const TensorDataset train_ds =
      load_tensor_dataset(manifest, Split::Train, resolved.scheme,
                          resolved.image_root, ns.in_channels, ns.in_height,
                          ns.in_width);
  const TensorDataset val_ds =
      load_tensor_dataset(manifest, Split::Val, resolved.scheme,
                          resolved.image_root, ns.in_channels, ns.in_height,
                          ns.in_width);
  const TensorDataset test_ds =
      load_tensor_dataset(manifest, Split::Test, resolved.scheme,
                          resolved.image_root, ns.in_channels, ns.in_height,
                          ns.in_width);

  TrainConfig tc = resolved.train;
  tc.seed = resolved.seed;
  Network net = build_baseline(ns, derive_seed(resolved.seed, 0x1217ULL));
  TrainResult trained = train(std::move(net), train_ds, val_ds, weights, tc);

  write_trace_csv(trained.trace, (run_dir / "trace.csv").string());
  save_checkpoint(trained.net, (run_dir / "model.cxrn").string());

  EvalReport report = evaluate(trained.net, test_ds, weights);
  std::vector<std::string> names;
  for (int c = 0; c < resolved.network.num_classes; ++c) {
    names.push_back(class_name(resolved.scheme, c));
  }
  write_report_json(report, names, (run_dir / "report.json").string());

  ScenarioOutcome outcome;
  outcome.run_dir = run_dir.string();
  outcome.scenario = code;
  outcome.test_report = std::move(report);
  return outcome;
}

namespace {

struct ReportRow {
  std::string model;
  std::string scenario;
  // Accuracy, Precision, Recall, AUC, Specificity, F1.
  std::array<double, 6> values{};
  std::array<bool, 6> defined{};
  std::array<bool, 6> best{};
};

constexpr const char* kMetricNames[6] = {"accuracy", "precision", "recall",
                                         "auc",      "specificity", "f1"};

}  // namespace

std::string cmd_report(const std::vector<std::string>& run_dirs,
                       const std::string& out_csv) {
  if (run_dirs.empty()) throw MissingRun("report: no run directories given");
  std::vector<ReportRow> rows;
  for (const std::string& dir : run_dirs) {
    const fs::path config_path = fs::path(dir) / "config.json";
    const fs::path report_path = fs::path(dir) / "report.json";
    if (!fs::exists(config_path) || !fs::exists(report_path)) {
      throw MissingRun("report: '" + dir + "' is not a completed run");
    }
    const RunConfig config = read_run_config(config_path.string());
    const NamedReport named = read_report_json(report_path.string());
    ReportRow row;
    row.model = config.name;
    row.scenario = scenario_code(config);
    const ClassMetrics& m = named.report.macro;
    const MetricValue metrics[6] = {
        {named.report.overall_accuracy, true}, m.precision, m.recall,
        m.auc,                                 m.specificity, m.f1};
    for (int i = 0; i < 6; ++i) {
      row.values[static_cast<std::size_t>(i)] = metrics[i].value;
      row.defined[static_cast<std::size_t>(i)] = metrics[i].defined;
    }
    rows.push_back(std::move(row));
  }

  for (int i = 0; i < 6; ++i) {
    double best = -1.0;
    for (const ReportRow& r : rows) {
      if (r.defined[static_cast<std::size_t>(i)]) {
        best = std::max(best, r.values[static_cast<std::size_t>(i)]);
      }
    }
    for (ReportRow& r : rows) {
      r.best[static_cast<std::size_t>(i)] =
          r.defined[static_cast<std::size_t>(i)] &&
          r.values[static_cast<std::size_t>(i)] == best;
    }
  }

  if (!out_csv.empty()) {
    std::ofstream csv(out_csv, std::ios::binary);
    if (!csv) throw IoError("cannot open '" + out_csv + "' for writing");
    csv << "model,scenario";
    for (const char* name : kMetricNames) csv << ',' << name;
    for (const char* name : kMetricNames) csv << ",best_" << name;
    csv << "\n";
    for (const ReportRow& r : rows) {
      csv << r.model << ',' << r.scenario;
      char buf[32];
      for (int i = 0; i < 6; ++i) {
        if (r.defined[static_cast<std::size_t>(i)]) {
          std::snprintf(buf, sizeof(buf), "%.6g",
                        r.values[static_cast<std::size_t>(i)]);
          csv << ',' << buf;
        } else {
          csv << ',';
        }
      }
      for (int i = 0; i < 6; ++i) {
        csv << ',' << (r.best[static_cast<std::size_t>(i)] ? 1 : 0);
      }
      csv << "\n";
    }
    if (!csv) throw IoError("failed writing '" + out_csv + "'");
  }

  std::ostringstream text;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-8s %9s %10s %8s %8s %12s %8s\n",
                "model", "scenario", "accuracy", "precision", "recall", "auc",
                "specificity", "f1");
  text << line;
  for (const ReportRow& r : rows) {
    std::string cells[6];
    for (int i = 0; i < 6; ++i) {
      if (!r.defined[static_cast<std::size_t>(i)]) {
        cells[i] = "-";
      } else {
        char v[32];
        std::snprintf(v, sizeof(v), "%.4f%s",
                      r.values[static_cast<std::size_t>(i)],
                      r.best[static_cast<std::size_t>(i)] ? "*" : "");
        cells[i] = v;
      }
    }
    std::snprintf(line, sizeof(line), "%-16s %-8s %9s %10s %8s %8s %12s %8s\n",
                  r.model.c_str(), r.scenario.c_str(), cells[0].c_str(),
                  cells[1].c_str(), cells[2].c_str(), cells[3].c_str(),
                  cells[4].c_str(), cells[5].c_str());
    text << line;
  }
  return text.str();
}

}  // namespace cxr
