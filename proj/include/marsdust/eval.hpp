// Binary-classification evaluation: confusion matrix, precision/recall/F1
// with macro and support-weighted averages.
#pragma once

#include <json.hpp>

#include <array>

#include "marsdust/common.hpp"

namespace marsdust {

struct EvalReport {
  // confusion[true_label][predicted_label]
  std::array<std::array<long, 2>, 2> confusion{{{0, 0}, {0, 0}}};
  long total = 0;
  double accuracy = 0;
  std::array<double, 2> precision{}, recall{}, f1{};
  std::array<long, 2> support{};
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
};

inline EvalReport evaluate(const std::vector<int>& predictions, const std::vector<int>& truth) {
  require(predictions.size() == truth.size(), "evaluate: prediction/truth length mismatch");
  require(!truth.empty(), "evaluate: empty input");
  EvalReport r;
  for (size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] == 0 || truth[i] == 1, "evaluate: labels must be 0/1");
    require(predictions[i] == 0 || predictions[i] == 1, "evaluate: predictions must be 0/1");
    ++r.confusion[truth[i]][predictions[i]];
  }
  r.total = static_cast<long>(truth.size());
  r.accuracy = double(r.confusion[0][0] + r.confusion[1][1]) / r.total;
  for (int c = 0; c < 2; ++c) {
    long tp = r.confusion[c][c];
    long fp = r.confusion[1 - c][c];
    long fn = r.confusion[c][1 - c];
    r.support[c] = r.confusion[c][0] + r.confusion[c][1];
    r.precision[c] = tp + fp ? double(tp) / (tp + fp) : 0.0;
    r.recall[c] = tp + fn ? double(tp) / (tp + fn) : 0.0;
    r.f1[c] = (r.precision[c] + r.recall[c]) > 0
                  ? 2 * r.precision[c] * r.recall[c] / (r.precision[c] + r.recall[c])
                  : 0.0;
  }
  for (int c = 0; c < 2; ++c) {
    r.macro_precision += r.precision[c] / 2;
    r.macro_recall += r.recall[c] / 2;
    r.macro_f1 += r.f1[c] / 2;
    double w = double(r.support[c]) / r.total;
    r.weighted_precision += w * r.precision[c];
    r.weighted_recall += w * r.recall[c];
    r.weighted_f1 += w * r.f1[c];
  }
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return nlohmann::json{
      {"confusion", {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}}},
      {"total", r.total},
      {"accuracy", r.accuracy},
      {"precision", {r.precision[0], r.precision[1]}},
      {"recall", {r.recall[0], r.recall[1]}},
      {"f1", {r.f1[0], r.f1[1]}},
      {"support", {r.support[0], r.support[1]}},
      {"macro", {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}}},
      {"weighted",
       {{"precision", r.weighted_precision},
        {"recall", r.weighted_recall},
        {"f1", r.weighted_f1}}}};
}

}  // namespace marsdust
