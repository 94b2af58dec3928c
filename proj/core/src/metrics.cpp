#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cxr/error.hpp"

namespace cxr {

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw Error("softmax: empty logits");
  double m = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw NonFinite("softmax: non-finite logit");
    m = std::max(m, v);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

int argmax_label(const std::vector<double>& scores) {
  if (scores.empty()) throw Error("argmax_label: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<int>(best);
}

WceResult wce_loss(const std::vector<std::vector<double>>& logits,
                   const std::vector<std::vector<double>>& targets,
                   const std::vector<double>& weights) {
  if (logits.empty()) throw Error("wce_loss: empty batch");
  if (logits.size() != targets.size()) {
    throw ShapeMismatch("wce_loss: logits/targets row count differs");
  }
  const std::size_t classes = weights.size();
  for (double w : weights) {
    if (!(w > 0)) throw Error("wce_loss: weights must be positive");
  }
  WceResult out;
  out.dlogits.resize(logits.size());
  const double inv_batch = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].size() != classes || targets[i].size() != classes) {
      throw ShapeMismatch("wce_loss: row width differs from class count");
    }
    int hot = -1;
    for (std::size_t c = 0; c < classes; ++c) {
      const double t = targets[i][c];
      if (t == 0.0) continue;
      if (t == 1.0 && hot < 0) {
        hot = static_cast<int>(c);
      } else {
        hot = -2;
        break;
      }
    }
    if (hot < 0) throw InvalidTarget("wce_loss: target row is not one-hot");
    const std::vector<double> p = softmax(logits[i]);
    const double w = weights[static_cast<std::size_t>(hot)];
    out.loss -= w * std::log(std::max(p[static_cast<std::size_t>(hot)], 1e-12));
    auto& g = out.dlogits[i];
    g.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = w * (p[c] - targets[i][c]) * inv_batch;
    }
  }
  out.loss *= inv_batch;
  return out;
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

ConfusionMatrix confusion(const std::vector<int>& truths,
                          const std::vector<int>& preds, int num_classes) {
  if (truths.size() != preds.size()) {
    throw ShapeMismatch("confusion: truths/preds length differs");
  }
  if (num_classes < 1) throw Error("confusion: need at least one class");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= num_classes || preds[i] < 0 ||
        preds[i] >= num_classes) {
      throw LabelOutOfRange("confusion: label outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

namespace {

MetricValue ratio(long long num, long long den) {
  if (den == 0) return {0.0, false};
  return {static_cast<double>(num) / static_cast<double>(den), true};
}

MetricValue harmonic_f1(const MetricValue& p, const MetricValue& r) {
  const double sum = p.value + r.value;
  if (sum == 0.0) return {0.0, false};
  return {2.0 * p.value * r.value / sum, true};
}

}  // namespace

EvalReport derive_metrics(const ConfusionMatrix& cm) {
  EvalReport report;
  report.cm = cm;
  const int n = cm.num_classes;
  const long long total = cm.total();
  long long trace = 0;
  report.per_class.resize(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    long long tp = cm.at(c, c);
    trace += tp;
    long long fn = 0, fp = 0;
    for (int k = 0; k < n; ++k) {
      if (k == c) continue;
      fn += cm.at(c, k);
      fp += cm.at(k, c);
    }
    const long long tn = total - tp - fn - fp;
    ClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
    m.accuracy = ratio(tp + tn, total);
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    m.specificity = ratio(tn, tn + fp);
    m.f1 = harmonic_f1(m.precision, m.recall);
    m.auc = {0.0, false};
  }
  report.overall_accuracy =
      total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total);

  const auto macro_of = [&](MetricValue ClassMetrics::* field) {
    MetricValue out{0.0, true};
    for (const ClassMetrics& m : report.per_class) {
      out.value += (m.*field).value;
      out.defined = out.defined && (m.*field).defined;
    }
    if (n > 0) out.value /= n;
    return out;
  };
  report.macro.accuracy = macro_of(&ClassMetrics::accuracy);
  report.macro.precision = macro_of(&ClassMetrics::precision);
  report.macro.recall = macro_of(&ClassMetrics::recall);
  report.macro.specificity = macro_of(&ClassMetrics::specificity);
  report.macro.f1 = harmonic_f1(report.macro.precision, report.macro.recall);
  report.macro.auc = {0.0, false};
  return report;
}

AucResult roc_auc(const std::vector<int>& truths,
                  const std::vector<std::vector<double>>& scores,
                  int num_classes) {
  if (truths.size() != scores.size()) {
    throw ShapeMismatch("roc_auc: truths/scores length differs");
  }
  const std::size_t n = truths.size();
  AucResult out;
  out.per_class.assign(static_cast<std::size_t>(num_classes), {0.0, false});
  double macro_sum = 0.0;
  int macro_n = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> s(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (scores[i].size() != static_cast<std::size_t>(num_classes)) {
        throw ShapeMismatch("roc_auc: score row width differs");
      }
      const double v = scores[i][static_cast<std::size_t>(c)];
      if (!std::isfinite(v)) throw NonFinite("roc_auc: non-finite score");
      s[i] = v;
      if (truths[i] == c) ++pos;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) continue;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    // Average ranks across ties, ranks starting at 1.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && s[order[j + 1]] == s[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (truths[k] == c) rank_sum += rank[k];
    }
    const double auc =
        (rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0) /
        (static_cast<double>(pos) * static_cast<double>(neg));
    out.per_class[static_cast<std::size_t>(c)] = {auc, true};
    macro_sum += auc;
    ++macro_n;
  }
  out.macro = macro_n > 0 ? MetricValue{macro_sum / macro_n, true}
                          : MetricValue{0.0, false};
  return out;
}

void attach_auc(EvalReport& report, const AucResult& auc) {
  if (auc.per_class.size() != report.per_class.size()) {
    throw ShapeMismatch("attach_auc: class count differs");
  }
  for (std::size_t c = 0; c < auc.per_class.size(); ++c) {
    report.per_class[c].auc = auc.per_class[c];
  }
  report.macro.auc = auc.macro;
}

namespace {

nlohmann::json metric_json(const MetricValue& m) {
  if (!m.defined) return nullptr;
  return m.value;
}

nlohmann::json class_metrics_json(const ClassMetrics& m) {
  nlohmann::json j;
  j["accuracy"] = metric_json(m.accuracy);
  j["precision"] = metric_json(m.precision);
  j["recall"] = metric_json(m.recall);
  j["specificity"] = metric_json(m.specificity);
  j["f1"] = metric_json(m.f1);
  j["auc"] = metric_json(m.auc);
  return j;
}

MetricValue metric_from_json(const nlohmann::json& j) {
  if (j.is_null()) return {0.0, false};
  return {j.get<double>(), true};
}

ClassMetrics class_metrics_from_json(const nlohmann::json& j) {
  ClassMetrics m;
  m.accuracy = metric_from_json(j.at("accuracy"));
  m.precision = metric_from_json(j.at("precision"));
  m.recall = metric_from_json(j.at("recall"));
  m.specificity = metric_from_json(j.at("specificity"));
  m.f1 = metric_from_json(j.at("f1"));
  m.auc = metric_from_json(j.at("auc"));
  return m;
}

}  // namespace

std::string report_to_json(const EvalReport& report,
                           const std::vector<std::string>& class_names) {
  if (class_names.size() != report.per_class.size()) {
    throw ShapeMismatch("report_to_json: class name count differs");
  }
  nlohmann::json j;
  j["class_names"] = class_names;
  auto& cmj = j["confusion"] = nlohmann::json::array();
  for (int t = 0; t < report.cm.num_classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < report.cm.num_classes; ++p) {
      row.push_back(report.cm.at(t, p));
    }
    cmj.push_back(std::move(row));
  }
  auto& pc = j["per_class"] = nlohmann::json::object();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    pc[class_names[c]] = class_metrics_json(report.per_class[c]);
  }
  j["macro"] = class_metrics_json(report.macro);
  j["overall_accuracy"] = report.overall_accuracy;
  j["loss"] = report.loss;
  return j.dump(2);
}

void write_report_json(const EvalReport& report,
                       const std::vector<std::string>& class_names,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << report_to_json(report, class_names) << "\n";
  if (!out) throw IoError("failed writing report '" + path + "'");
}

NamedReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  NamedReport out;
  try {
    out.class_names = j.at("class_names").get<std::vector<std::string>>();
    const auto& cmj = j.at("confusion");
    const int n = static_cast<int>(cmj.size());
    out.report.cm = ConfusionMatrix(n);
    for (int t = 0; t < n; ++t) {
      for (int p = 0; p < n; ++p) {
        out.report.cm.at(t, p) = cmj.at(t).at(p).get<long long>();
      }
    }
    out.report.per_class.resize(out.class_names.size());
    for (std::size_t c = 0; c < out.class_names.size(); ++c) {
      out.report.per_class[c] =
          class_metrics_from_json(j.at("per_class").at(out.class_names[c]));
    }
    out.report.macro = class_metrics_from_json(j.at("macro"));
    out.report.overall_accuracy = j.at("overall_accuracy").get<double>();
    out.report.loss = j.at("loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  return out;
}

NamedReport read_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace cxr
