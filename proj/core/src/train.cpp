#include "cxr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "cxr/error.hpp"
#include "cxr/image_io.hpp"
#include "cxr/rng.hpp"

namespace cxr {

AdamState make_adam_state(Network& net) {
  AdamState state;
  for (const ParamRef& p : parameters(net)) {
    state.m.emplace_back(p.tensor->data.size(), 0.0);
    state.v.emplace_back(p.tensor->data.size(), 0.0);
  }
  return state;
}

void adam_step(Network& net, AdamState& state, const AdamConfig& config) {
  std::vector<ParamRef> params = parameters(net);
  if (params.size() != state.m.size()) {
    throw ShapeMismatch("adam_step: state does not match the network");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].frozen) continue;
    Tensor& t = *params[k].tensor;
    if (t.grad.size() != t.data.size()) continue;  // no gradient computed
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double g = t.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.data[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

TensorDataset load_records(const Manifest& manifest,
                           const std::vector<std::size_t>& indices,
                           LabelScheme scheme, const std::string& image_root,
                           int channels, int height, int width) {
  TensorDataset ds;
  ds.num_classes = num_classes(scheme);
  ds.images = Tensor(static_cast<int>(indices.size()), channels, height, width);
  ds.labels.resize(indices.size());
  const std::filesystem::path root(image_root);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const SampleRecord& r = manifest.records.at(indices[k]);
    const std::filesystem::path p = std::filesystem::path(r.path).is_absolute()
                                        ? std::filesystem::path(r.path)
                                        : root / r.path;
    const GrayImage img = read_image(p.string());
    if (img.width != width || img.height != height) {
      throw ShapeMismatch("'" + r.path + "' is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + ", expected " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    for (int c = 0; c < channels; ++c) {
      double* dst = ds.images.data.data() +
                    ds.images.index(static_cast<int>(k), c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = img.data[i] / 255.0;
    }
    ds.labels[k] = encode_label(r.finding, scheme);
  }
  return ds;
}

TensorDataset load_tensor_dataset(const Manifest& manifest, Split split,
                                  LabelScheme scheme,
                                  const std::string& image_root, int channels,
                                  int height, int width) {
  return load_records(manifest, indices_of_split(manifest, split), scheme,
                      image_root, channels, height, width);
}

TensorDataset subset(const TensorDataset& ds,
                     const std::vector<std::size_t>& indices) {
  TensorDataset out;
  out.num_classes = ds.num_classes;
  out.images = Tensor(static_cast<int>(indices.size()), ds.images.shape[1],
                      ds.images.shape[2], ds.images.shape[3]);
  out.labels.resize(indices.size());
  const std::size_t sample =
      static_cast<std::size_t>(ds.images.shape[1]) * ds.images.shape[2] *
      ds.images.shape[3];
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::copy_n(ds.images.data.data() + sample * indices[k], sample,
                out.images.data.data() + sample * k);
    out.labels[k] = ds.labels.at(indices[k]);
  }
  return out;
}

namespace {

Tensor gather_batch(const TensorDataset& ds,
                    const std::vector<std::size_t>& order, std::size_t from,
                    std::size_t to, std::vector<int>& labels) {
  const std::size_t sample =
      static_cast<std::size_t>(ds.images.shape[1]) * ds.images.shape[2] *
      ds.images.shape[3];
  Tensor batch(static_cast<int>(to - from), ds.images.shape[1],
               ds.images.shape[2], ds.images.shape[3]);
  labels.resize(to - from);
  for (std::size_t k = from; k < to; ++k) {
    std::copy_n(ds.images.data.data() + sample * order[k], sample,
                batch.data.data() + sample * (k - from));
    labels[k - from] = ds.labels[order[k]];
  }
  return batch;
}

TraceRow trace_row(int epoch, const std::string& split,
                   const EvalReport& report) {
  TraceRow row;
  row.epoch = epoch;
  row.split = split;
  row.loss = report.loss;
  row.accuracy = report.overall_accuracy;
  row.precision = report.macro.precision;
  row.recall = report.macro.recall;
  row.specificity = report.macro.specificity;
  row.f1 = report.macro.f1;
  row.auc = report.macro.auc;
  return row;
}

}  // namespace

EvalReport evaluate(const Network& net, const TensorDataset& ds,
                    const std::vector<double>& class_weights,
                    int batch_size) {
  if (ds.size() == 0) throw EmptyManifest("evaluate: empty dataset");
  const int n = ds.size();
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(n));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int from = 0; from < n; from += batch_size) {
    const int to = std::min(n, from + batch_size);
    std::vector<int> labels;
    const Tensor batch =
        gather_batch(ds, order, static_cast<std::size_t>(from),
                     static_cast<std::size_t>(to), labels);
    const Tensor p = forward(net, batch);
    for (int s = 0; s < to - from; ++s) {
      auto& row = probs[static_cast<std::size_t>(from + s)];
      row.resize(static_cast<std::size_t>(ds.num_classes));
      for (int c = 0; c < ds.num_classes; ++c) {
        row[static_cast<std::size_t>(c)] = p.data[p.index(s, c, 0, 0)];
      }
    }
  }
  std::vector<int> preds(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& row = probs[static_cast<std::size_t>(i)];
    preds[static_cast<std::size_t>(i)] = argmax_label(row);
    const int t = ds.labels[static_cast<std::size_t>(i)];
    loss -= class_weights.at(static_cast<std::size_t>(t)) *
            std::log(std::max(row[static_cast<std::size_t>(t)], 1e-12));
  }
  loss /= static_cast<double>(n);

  EvalReport report = derive_metrics(confusion(ds.labels, preds, ds.num_classes));
  attach_auc(report, roc_auc(ds.labels, probs, ds.num_classes));
  report.loss = loss;
  return report;
}

TrainResult train(Network net, const TensorDataset& train_ds,
                  const TensorDataset& val_ds,
                  const std::vector<double>& class_weights,
                  const TrainConfig& config) {
  if (train_ds.size() == 0 || val_ds.size() == 0) {
    throw EmptyManifest("train: empty train or val dataset");
  }
  if (config.batch_size < 1 || config.patience < 1 || config.max_epochs < 1) {
    throw ConfigError("train: batch_size, patience and max_epochs must be >= 1");
  }
  freeze(net, config.frozen_layers);
  AdamState adam = make_adam_state(net);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int wait = 0;
  const std::size_t n = static_cast<std::size_t>(train_ds.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    deterministic_shuffle(order, rng);
    for (std::size_t from = 0; from < n;
         from += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t to =
          std::min(n, from + static_cast<std::size_t>(config.batch_size));
      std::vector<int> labels;
      const Tensor batch = gather_batch(train_ds, order, from, to, labels);
      ForwardCache cache;
      forward(net, batch, &cache);
      backward(net, cache, labels, class_weights);
      adam_step(net, adam, config.adam);
    }

    const EvalReport train_report = evaluate(net, train_ds, class_weights);
    const EvalReport val_report = evaluate(net, val_ds, class_weights);
    result.trace.push_back(trace_row(epoch, "train", train_report));
    result.trace.push_back(trace_row(epoch, "val", val_report));
    result.epochs_run = epoch;

    if (val_report.loss < result.best_val_loss) {
      result.best_val_loss = val_report.loss;
      result.best_epoch = epoch;
      result.net = net;
      wait = 0;
    } else {
      ++wait;
      if (wait >= config.patience) break;
    }
  }
  if (result.best_epoch == 0) result.net = std::move(net);
  return result;
}

void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,split,loss,accuracy,precision,recall,specificity,f1,auc\n";
  char buf[256];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.epoch, r.split.c_str(), r.loss, r.accuracy,
                  r.precision.value, r.recall.value, r.specificity.value,
                  r.f1.value, r.auc.value);
    out << buf;
  }
  if (!out) throw IoError("failed writing trace '" + path + "'");
}

KfoldResult kfold_train(const NetworkSpec& spec, const Manifest& manifest,
                        LabelScheme scheme, const std::string& image_root,
                        const std::vector<double>& class_weights,
                        const TrainConfig& config, std::uint64_t init_seed) {
  if (config.folds < 2) throw ConfigError("kfold_train: folds must be >= 2");
  std::vector<std::size_t> all(manifest.records.size());
  std::iota(all.begin(), all.end(), 0);
  const TensorDataset full = load_records(manifest, all, scheme, image_root,
                                          spec.in_channels, spec.in_height,
                                          spec.in_width);
  const std::vector<FoldPlan> plans =
      kfold(manifest, config.folds, config.seed);
  const Network init = build_baseline(spec, init_seed);

  KfoldResult out;
  for (std::size_t f = 0; f < plans.size(); ++f) {
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, 0x666f6c64ULL + f);
    TrainResult r = train(init, subset(full, plans[f].train),
                          subset(full, plans[f].val), class_weights,
                          fold_config);
    out.fold_reports.push_back(
        evaluate(r.net, subset(full, plans[f].val), class_weights));
    out.fold_models.push_back(std::move(r));
  }

  const double k = static_cast<double>(plans.size());
  const auto mean_metric = [&](MetricValue ClassMetrics::* field) {
    MetricValue m{0.0, false};
    int defined = 0;
    for (const EvalReport& rep : out.fold_reports) {
      if ((rep.macro.*field).defined) {
        m.value += (rep.macro.*field).value;
        ++defined;
      }
    }
    if (defined > 0) {
      m.value /= defined;
      m.defined = true;
    }
    return m;
  };
  for (const EvalReport& rep : out.fold_reports) {
    out.mean.loss += rep.loss / k;
    out.mean.accuracy += rep.overall_accuracy / k;
  }
  out.mean.precision = mean_metric(&ClassMetrics::precision);
  out.mean.recall = mean_metric(&ClassMetrics::recall);
  out.mean.specificity = mean_metric(&ClassMetrics::specificity);
  out.mean.f1 = mean_metric(&ClassMetrics::f1);
  out.mean.auc = mean_metric(&ClassMetrics::auc);
  return out;
}

}  // namespace cxr
