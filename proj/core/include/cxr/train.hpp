#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/metrics.hpp"
#include "cxr/network.hpp"

namespace cxr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment per parameter tensor, in declaration order.
// Frozen layers keep zero moments and are never updated.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long t = 0;
};

AdamState make_adam_state(Network& net);

// Standard bias-corrected Adam update from each layer's grad buffer.
void adam_step(Network& net, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  int batch_size = 10;
  AdamConfig adam;
  int max_epochs = 30;
  int patience = 5;  // epochs without val-loss improvement before stopping
  int folds = 4;
  std::uint64_t seed = 0;
  std::vector<std::string> frozen_layers;
};

struct TensorDataset {
  Tensor images;  // (n, channels, h, w), intensities scaled to [0, 1]
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return images.shape[0]; }
};

// Loads the given records; images must already match (height, width) or
// ShapeMismatch is thrown. Grayscale pixels are replicated across channels
// and scaled by 1/255.
TensorDataset load_records(const Manifest& manifest,
                           const std::vector<std::size_t>& indices,
                           LabelScheme scheme, const std::string& image_root,
                           int channels, int height, int width);
TensorDataset load_tensor_dataset(const Manifest& manifest, Split split,
                                  LabelScheme scheme,
                                  const std::string& image_root, int channels,
                                  int height, int width);
TensorDataset subset(const TensorDataset& ds,
                     const std::vector<std::size_t>& indices);

struct TraceRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;  // overall accuracy
  MetricValue precision, recall, specificity, f1, auc;  // macro values
};

// CSV header: epoch,split,loss,accuracy,precision,recall,specificity,f1,auc
void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::string& path);

// Forward in batches; report includes AUC and the weighted loss.
EvalReport evaluate(const Network& net, const TensorDataset& ds,
                    const std::vector<double>& class_weights,
                    int batch_size = 16);

struct TrainResult {
  Network net;  // snapshot with the best validation loss
  std::vector<TraceRow> trace;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int epochs_run = 0;
};

// Epoch loop with seeded shuffles, mini-batch Adam, per-epoch train/val
// metrics, and early stopping on validation loss. Throws EmptyManifest on
// an empty train or val set.
TrainResult train(Network net, const TensorDataset& train_ds,
                  const TensorDataset& val_ds,
                  const std::vector<double>& class_weights,
                  const TrainConfig& config);

struct MeanMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  MetricValue precision, recall, specificity, f1, auc;
};

struct KfoldResult {
  std::vector<TrainResult> fold_models;
  std::vector<EvalReport> fold_reports;  // validation-fold reports
  MeanMetrics mean;
};

// Stratified k-fold over every record in the manifest; each fold trains
// from the same initial parameters.
KfoldResult kfold_train(const NetworkSpec& spec, const Manifest& manifest,
                        LabelScheme scheme, const std::string& image_root,
                        const std::vector<double>& class_weights,
                        const TrainConfig& config,
                        std::uint64_t init_seed = 17);

}  // namespace cxr
