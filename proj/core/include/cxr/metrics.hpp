#pragma once

#include <string>
#include <vector>

namespace cxr {

// A metric that may be a 0/0 ratio: reported as value 0 with defined=false
// rather than an error, so degenerate epochs keep the trace alive.
struct MetricValue {
  double value = 0.0;
  bool defined = true;
};

// Numerically stabilized by max subtraction. Throws NonFinite.
std::vector<double> softmax(const std::vector<double>& logits);

// Index of the largest score; ties resolved to the lowest index.
int argmax_label(const std::vector<double>& scores);

struct WceResult {
  double loss = 0.0;
  // d(loss)/d(logits), batch mean included: row i is
  // weights[c_i] * (softmax(logits_i) - targets_i) / batch_size.
  std::vector<std::vector<double>> dlogits;
};

// Weighted categorical cross-entropy, averaged over the batch. Targets are
// one-hot rows; log arguments are clipped at 1e-12. Throws InvalidTarget on
// non-one-hot targets, NonFinite on bad logits.
WceResult wce_loss(const std::vector<std::vector<double>>& logits,
                   const std::vector<std::vector<double>>& targets,
                   const std::vector<double>& weights);

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long long> counts;  // row-major, row = true, col = predicted

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n)
      : num_classes(n),
        counts(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0) {}
  long long& at(int t, int p) {
    return counts[static_cast<std::size_t>(t) * num_classes + p];
  }
  long long at(int t, int p) const {
    return counts[static_cast<std::size_t>(t) * num_classes + p];
  }
  long long total() const;
};

// Throws LabelOutOfRange.
ConfusionMatrix confusion(const std::vector<int>& truths,
                          const std::vector<int>& preds, int num_classes);

struct ClassMetrics {
  MetricValue accuracy;
  MetricValue precision;
  MetricValue recall;
  MetricValue specificity;
  MetricValue f1;
  MetricValue auc;
};

struct EvalReport {
  ConfusionMatrix cm;
  std::vector<ClassMetrics> per_class;  // one-vs-rest, indexed by class
  ClassMetrics macro;
  double overall_accuracy = 0.0;  // trace / total
  double loss = 0.0;
};

// One-vs-rest metrics per class plus macro averages; auc fields are left
// undefined (see roc_auc). Macro f1 is the harmonic mean of macro precision
// and recall; macro auc averages only the defined classes.
EvalReport derive_metrics(const ConfusionMatrix& cm);

struct AucResult {
  std::vector<MetricValue> per_class;
  MetricValue macro;
};

// Rank-based (Mann-Whitney) AUC, one-vs-rest, ties counted as 1/2. A class
// with no positives or no negatives is undefined and excluded from the
// macro. scores[i][c] is sample i's score for class c.
AucResult roc_auc(const std::vector<int>& truths,
                  const std::vector<std::vector<double>>& scores,
                  int num_classes);

void attach_auc(EvalReport& report, const AucResult& auc);

struct NamedReport {
  EvalReport report;
  std::vector<std::string> class_names;
};

// JSON layout: confusion matrix verbatim, then per-class and macro sections;
// undefined metrics serialize as null.
std::string report_to_json(const EvalReport& report,
                           const std::vector<std::string>& class_names);
void write_report_json(const EvalReport& report,
                       const std::vector<std::string>& class_names,
                       const std::string& path);
NamedReport report_from_json(const std::string& json_text);
NamedReport read_report_json(const std::string& path);

}  // namespace cxr
