#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/error.hpp"
#include "cxr/image_io.hpp"
#include "cxr/pipeline.hpp"
#include "cxr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cxr;

namespace {

fs::path test_dir(const char* leaf) {
  const fs::path dir = fs::temp_directory_path() / "cxr_test_pipeline" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

DiscSpec disc_spec(int train_bright, int train_dark) {
  DiscSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.radius_min = 6;
  spec.radius_max = 9;
  spec.train_bright = train_bright;
  spec.train_dark = train_dark;
  spec.val_bright = 6;
  spec.val_dark = 6;
  spec.test_bright = 6;
  spec.test_dark = 6;
  spec.seed = 7;
  return spec;
}

RunConfig disc_run_config(const fs::path& root, const fs::path& out) {
  RunConfig config;
  config.name = "disc";
  config.scheme = LabelScheme::Binary;
  config.seed = 3;
  config.manifest_path = (root / "manifest.csv").string();
  config.image_root = root.string();
  config.output_dir = out.string();
  config.network.block_channels = {4, 6};
  config.network.dense_units = 16;
  config.network.in_channels = 3;
  config.network.in_height = 32;
  config.network.in_width = 32;
  config.train.batch_size = 8;
  config.train.max_epochs = 25;
  config.train.patience = 25;
  config.train.adam.lr = 5e-3;
  return config;
}

}  // namespace

TEST_CASE("run config survives a json round trip") {
  RunConfig c;
  c.name = "exp1";
  c.scheme = LabelScheme::Multi3;
  c.imbalance = ImbalanceStrategy::Oversample;
  c.seed = 42;
  c.manifest_path = "/data/manifest.csv";
  c.image_root = "/data/images";
  c.output_dir = "/runs";
  c.preprocess.threshold.min_th = 200.0;
  c.preprocess.inpaint_enabled = false;
  c.preprocess.inpaint_max_iters = 123;
  c.preprocess.inpaint_tol = 0.5;
  c.preprocess.resize_to = 64;
  c.preprocess.denoise_enabled = false;
  c.preprocess.tv.k = 0.1;
  c.preprocess.tv.max_iters = 77;
  c.preprocess.histogram_bins = 16;
  c.augment.rotation_deg = 5.0;
  c.augment.scale_lo = 0.8;
  c.augment.scale_hi = 1.2;
  c.augment.shift_px = 3.0;
  c.train.batch_size = 4;
  c.train.adam.lr = 0.01;
  c.train.max_epochs = 7;
  c.train.patience = 2;
  c.train.folds = 3;
  c.train.frozen_layers = {"block1"};
  c.network.block_channels = {4, 6};
  c.network.dense_units = 16;
  c.network.in_channels = 3;
  c.network.in_height = 64;
  c.network.in_width = 64;
  c.oversample_target = 50;
  c.class_constants = {1.0, 2.0, 3.0};

  const RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(back.name == c.name);
  CHECK(back.scheme == c.scheme);
  CHECK(back.imbalance == c.imbalance);
  CHECK(back.seed == c.seed);
  CHECK(back.manifest_path == c.manifest_path);
  CHECK(back.image_root == c.image_root);
  CHECK(back.output_dir == c.output_dir);
  CHECK(back.preprocess.threshold.min_th == c.preprocess.threshold.min_th);
  CHECK(back.preprocess.inpaint_enabled == c.preprocess.inpaint_enabled);
  CHECK(back.preprocess.inpaint_max_iters == c.preprocess.inpaint_max_iters);
  CHECK(back.preprocess.inpaint_tol == c.preprocess.inpaint_tol);
  CHECK(back.preprocess.resize_to == c.preprocess.resize_to);
  CHECK(back.preprocess.denoise_enabled == c.preprocess.denoise_enabled);
  CHECK(back.preprocess.tv.k == c.preprocess.tv.k);
  CHECK(back.preprocess.tv.max_iters == c.preprocess.tv.max_iters);
  CHECK(back.preprocess.histogram_bins == c.preprocess.histogram_bins);
  CHECK(back.augment.rotation_deg == c.augment.rotation_deg);
  CHECK(back.augment.scale_lo == c.augment.scale_lo);
  CHECK(back.augment.scale_hi == c.augment.scale_hi);
  CHECK(back.augment.shift_px == c.augment.shift_px);
  CHECK(back.train.batch_size == c.train.batch_size);
  CHECK(back.train.adam.lr == c.train.adam.lr);
  CHECK(back.train.max_epochs == c.train.max_epochs);
  CHECK(back.train.patience == c.train.patience);
  CHECK(back.train.folds == c.train.folds);
  CHECK(back.train.frozen_layers == c.train.frozen_layers);
  CHECK(back.network.block_channels == c.network.block_channels);
  CHECK(back.network.dense_units == c.network.dense_units);
  CHECK(back.network.in_height == c.network.in_height);
  CHECK(back.oversample_target == c.oversample_target);
  CHECK(back.class_constants == c.class_constants);
}

TEST_CASE("run config parsing rejects malformed input") {
  CHECK_THROWS_AS(run_config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{\"imbalance\":\"both\"}"),
                  ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{\"train\":{\"batch_size\":\"x\"}}"),
                  ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{\"scheme\":\"junk\"}"), Error);
  CHECK_THROWS_AS(read_run_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("scenario codes cover both strategies and all schemes") {
  RunConfig c;
  c.imbalance = ImbalanceStrategy::WeightedLoss;
  c.scheme = LabelScheme::Binary;
  CHECK(scenario_code(c) == "CB");
  c.scheme = LabelScheme::Multi3;
  CHECK(scenario_code(c) == "CM3");
  c.scheme = LabelScheme::Multi4;
  CHECK(scenario_code(c) == "CM4");
  c.imbalance = ImbalanceStrategy::Oversample;
  c.scheme = LabelScheme::Binary;
  CHECK(scenario_code(c) == "RB");
  c.scheme = LabelScheme::Multi3;
  CHECK(scenario_code(c) == "RM3");
  c.scheme = LabelScheme::Multi4;
  CHECK(scenario_code(c) == "RM4");
}

TEST_CASE("preprocess mirrors record paths and reports failures") {
  const fs::path root = test_dir("pre_in");
  const fs::path out = test_dir("pre_out");
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  GrayImage img(16, 16);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data[i] = static_cast<double>((i * 13) % 256);
  }
  write_pgm(img, (root / "a" / "x.pgm").string());
  for (double& v : img.data) v = 255.0 - v;
  write_pgm(img, (root / "b" / "y.pgm").string());

  Manifest m;
  m.records.push_back({"a/x.pgm", Source::COVID19, Finding::COVID19, Split::Train});
  m.records.push_back({"b/y.pgm", Source::RSNA, Finding::Normal, Split::Train});
  m.records.push_back({"ghost.pgm", Source::NLMMC, Finding::Normal, Split::Train});

  PreprocessParams params;
  params.resize_to = 16;
  params.tv.max_iters = 40;
  params.histogram_bins = 8;

  const PreprocessOutcome outcome =
      cmd_preprocess(m, params, root.string(), out.string(), false);
  CHECK(outcome.processed == 2);
  REQUIRE(outcome.failures.size() == 1);
  CHECK(outcome.failures[0].find("ghost.pgm") != std::string::npos);

  CHECK(fs::exists(out / "a" / "x.pgm"));
  CHECK(fs::exists(out / "b" / "y.pgm"));
  CHECK_FALSE(fs::exists(out / "a" / "x_mask.pgm"));

  const std::string hist = read_bytes(out / "a" / "x_hist.csv");
  CHECK(hist.rfind("stage,bin_lo,bin_hi,count\n", 0) == 0);
  // Header plus four stages of eight bins each.
  CHECK(count_lines(hist) == 1 + 4 * 8);
  for (const char* stage : {"input", "inpainted", "resized", "denoised"}) {
    CHECK(hist.find(stage) != std::string::npos);
  }

  // keep_stages adds the intermediate images.
  const fs::path out2 = test_dir("pre_out2");
  cmd_preprocess(m, params, root.string(), out2.string(), true);
  CHECK(fs::exists(out2 / "a" / "x_mask.pgm"));
  CHECK(fs::exists(out2 / "a" / "x_inpainted.pgm"));
  CHECK(fs::exists(out2 / "a" / "x_resized.pgm"));

  // Reruns are byte-identical.
  const fs::path out3 = test_dir("pre_out3");
  cmd_preprocess(m, params, root.string(), out3.string(), false);
  CHECK(read_bytes(out / "a" / "x.pgm") == read_bytes(out3 / "a" / "x.pgm"));
  CHECK(read_bytes(out / "a" / "x_hist.csv") ==
        read_bytes(out3 / "a" / "x_hist.csv"));
}

TEST_CASE("weighted scenario writes the full artifact set and reproduces") {
  const fs::path root = test_dir("cb_data");
  const fs::path out = test_dir("cb_runs");
  const DiscDataset disc = generate_disc_dataset(disc_spec(16, 16), root.string());
  write_manifest_csv(disc.manifest, (root / "manifest.csv").string());

  const RunConfig config = disc_run_config(root, out);
  const ScenarioOutcome outcome = cmd_run_scenario(config);
  CHECK(outcome.scenario == "CB");
  const fs::path run_dir(outcome.run_dir);
  CHECK(run_dir.filename().string() == "disc_CB_seed3");

  for (const char* name : {"config.json", "seed.txt", "inputs.sha256",
                           "weights.json", "trace.csv", "model.cxrn",
                           "report.json"}) {
    CHECK(fs::exists(run_dir / name));
  }
  CHECK_FALSE(fs::exists(run_dir / "manifest.csv"));
  CHECK(read_bytes(run_dir / "seed.txt") == "3\n");
  // One line per image plus one for the manifest itself.
  CHECK(count_lines(read_bytes(run_dir / "inputs.sha256")) ==
        static_cast<int>(disc.manifest.records.size()) + 1);

  const NamedReport named = read_report_json((run_dir / "report.json").string());
  REQUIRE(named.class_names.size() == 2);
  CHECK(named.class_names[0] == "NonCOVID19");
  CHECK(named.class_names[1] == "COVID19");
  CHECK(named.report.overall_accuracy >= 0.9);
  CHECK(outcome.test_report.overall_accuracy == named.report.overall_accuracy);

  // The stored config parses and pins the resolved class count.
  const RunConfig stored = read_run_config((run_dir / "config.json").string());
  CHECK(stored.name == "disc");
  CHECK(stored.scheme == LabelScheme::Binary);

  // A second run with the same seed writes identical model and report.
  RunConfig again = config;
  again.output_dir = test_dir("cb_runs2").string();
  const ScenarioOutcome outcome2 = cmd_run_scenario(again);
  CHECK(read_bytes(run_dir / "report.json") ==
        read_bytes(fs::path(outcome2.run_dir) / "report.json"));
  CHECK(read_bytes(run_dir / "model.cxrn") ==
        read_bytes(fs::path(outcome2.run_dir) / "model.cxrn"));
  CHECK(read_bytes(run_dir / "trace.csv") ==
        read_bytes(fs::path(outcome2.run_dir) / "trace.csv"));
}

TEST_CASE("oversample scenario balances the train split on disk") {
  const fs::path root = test_dir("rb_data");
  const fs::path out = test_dir("rb_runs");
  const DiscDataset disc = generate_disc_dataset(disc_spec(16, 8), root.string());
  write_manifest_csv(disc.manifest, (root / "manifest.csv").string());

  RunConfig config = disc_run_config(root, out);
  config.name = "disc_os";
  config.imbalance = ImbalanceStrategy::Oversample;
  config.augment.shift_px = 3.0;
  config.train.max_epochs = 6;
  config.train.patience = 6;

  const ScenarioOutcome outcome = cmd_run_scenario(config);
  CHECK(outcome.scenario == "RB");
  const fs::path run_dir(outcome.run_dir);
  CHECK(fs::exists(run_dir / "manifest.csv"));
  CHECK_FALSE(fs::exists(run_dir / "weights.json"));

  // The dark class is topped up to the bright count with synthetic files.
  int synth_files = 0;
  for (const auto& entry : fs::directory_iterator(run_dir / "oversampled")) {
    if (entry.path().extension() == ".pgm") ++synth_files;
  }
  CHECK(synth_files == 8);

  const Manifest balanced =
      read_manifest_csv((run_dir / "manifest.csv").string());
  int bright = 0, dark = 0, appended = 0;
  for (const SampleRecord& r : balanced.records) {
    if (r.split != Split::Train) continue;
    if (r.finding == Finding::COVID19) ++bright;
    if (r.finding == Finding::Normal) ++dark;
    if (r.path.find("aug_") != std::string::npos) {
      ++appended;
      CHECK(r.source == Source::SYNTHETIC);
      CHECK(r.finding == Finding::Normal);
    }
  }
  CHECK(bright == 16);
  CHECK(dark == 16);
  CHECK(appended == 8);
}

TEST_CASE("scenario runs validate required paths") {
  RunConfig config;
  CHECK_THROWS_AS(cmd_run_scenario(config), ConfigError);
  config.manifest_path = "/nonexistent/manifest.csv";
  config.output_dir = test_dir("bad_runs").string();
  CHECK_THROWS_AS(cmd_run_scenario(config), IoError);
}

TEST_CASE("report table marks per-metric winners") {
  const fs::path dir = test_dir("report");
  const fs::path run_a = dir / "a";
  const fs::path run_b = dir / "b";
  fs::create_directories(run_a);
  fs::create_directories(run_b);

  RunConfig ca;
  ca.name = "alpha";
  std::ofstream(run_a / "config.json") << run_config_to_json(ca);
  RunConfig cb;
  cb.name = "beta";
  cb.imbalance = ImbalanceStrategy::Oversample;
  std::ofstream(run_b / "config.json") << run_config_to_json(cb);

  // alpha: 9 of 10 correct; beta: perfect.
  const EvalReport rep_a = derive_metrics(
      confusion({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 1, 1, 1, 1, 1, 1}, 2));
  const EvalReport rep_b = derive_metrics(
      confusion({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 2));
  write_report_json(rep_a, {"NonCOVID19", "COVID19"},
                    (run_a / "report.json").string());
  write_report_json(rep_b, {"NonCOVID19", "COVID19"},
                    (run_b / "report.json").string());

  const fs::path csv = dir / "summary.csv";
  const std::string text =
      cmd_report({run_a.string(), run_b.string()}, csv.string());
  CHECK(text.find("alpha") != std::string::npos);
  CHECK(text.find("beta") != std::string::npos);
  CHECK(text.find("1.0000*") != std::string::npos);
  // AUC was never attached, so its column is dashed.
  CHECK(text.find("-") != std::string::npos);

  const std::string csv_text = read_bytes(csv);
  CHECK(csv_text.rfind("model,scenario,accuracy,precision,recall,auc,"
                       "specificity,f1,best_accuracy,best_precision,"
                       "best_recall,best_auc,best_specificity,best_f1\n",
                       0) == 0);
  std::istringstream lines(csv_text);
  std::string header, row_a, row_b;
  std::getline(lines, header);
  std::getline(lines, row_a);
  std::getline(lines, row_b);
  CHECK(row_a.rfind("alpha,CB,0.9,", 0) == 0);
  CHECK(row_b.rfind("beta,RB,1,", 0) == 0);
  // beta wins accuracy; the empty auc cell is never flagged best.
  CHECK(row_b.find(",1,1,1,0,1,1") != std::string::npos);

  CHECK_THROWS_AS(cmd_report({}, ""), MissingRun);
  CHECK_THROWS_AS(cmd_report({(dir / "missing").string()}, ""), MissingRun);
}
