// Evaluation metrics: argmax accuracy and binary ROC-AUC.

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "a2dug/common.hpp"

namespace a2dug {

// Fraction of masked rows whose argmax matches the label. Ties resolve to
// the lowest class index, matching a left-to-right scan.
template <class Scalar>
double accuracy(const Mat<Scalar>& logits, const Labels& labels, const std::vector<Index>& mask) {
  if (logits.rows() != labels.size())
    throw ShapeError("accuracy: " + std::to_string(logits.rows()) + " logit rows vs " +
                     std::to_string(labels.size()) + " labels");
  if (mask.empty()) throw ParamError("accuracy: empty mask");
  Index hits = 0;
  for (Index r : mask) {
    if (r < 0 || r >= logits.rows())
      throw IndexError("accuracy: mask row " + std::to_string(r) + " out of range");
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j)
      if (logits(r, j) > logits(r, best)) best = j;
    hits += (best == labels[r]);
  }
  return double(hits) / double(mask.size());
}

// Binary ROC-AUC on the positive-class score, computed as the normalized
// Mann-Whitney U statistic with average ranks for tied scores. Scores are
// logits(r, 1) - logits(r, 0); requires exactly two logit columns and both
// classes present in the mask.
template <class Scalar>
double roc_auc(const Mat<Scalar>& logits, const Labels& labels, const std::vector<Index>& mask) {
  if (logits.rows() != labels.size())
    throw ShapeError("roc_auc: " + std::to_string(logits.rows()) + " logit rows vs " +
                     std::to_string(labels.size()) + " labels");
  if (logits.cols() != 2)
    throw MetricError("roc_auc: needs exactly 2 logit columns, got " +
                      std::to_string(logits.cols()));
  if (mask.empty()) throw ParamError("roc_auc: empty mask");

  std::vector<std::pair<double, int>> scored;  // (score, label)
  scored.reserve(mask.size());
  for (Index r : mask) {
    if (r < 0 || r >= logits.rows())
      throw IndexError("roc_auc: mask row " + std::to_string(r) + " out of range");
    const int y = labels[r];
    if (y != 0 && y != 1)
      throw MetricError("roc_auc: labels must be 0/1, got " + std::to_string(y));
    scored.push_back({double(logits(r, 1)) - double(logits(r, 0)), y});
  }
  const std::size_t n_pos = std::size_t(
      std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.second == 1; }));
  const std::size_t n_neg = scored.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("roc_auc: mask contains only one class");

  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of positive-class ranks, ties sharing the average rank of their run.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t)
      if (scored[t].second == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

}  // namespace a2dug
