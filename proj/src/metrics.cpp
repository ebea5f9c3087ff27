#include "relgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "relgt/common.hpp"

namespace relgt {

double auc_score(std::span<const double> scores, std::span<const int> labels) {
  RELGT_CHECK(scores.size() == labels.size(), "scores/labels size mismatch");
  const size_t n = scores.size();
  int64_t n_pos = 0;
  for (int y : labels) n_pos += y != 0 ? 1 : 0;
  int64_t n_neg = static_cast<int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateLabels("AUC undefined: labels contain a single class");

  // rank-sum with average ranks over tie groups
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t t = i; t <= j; ++t)
      if (labels[order[t]] != 0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double mae_score(std::span<const double> predictions, std::span<const double> targets) {
  RELGT_CHECK(predictions.size() == targets.size(), "predictions/targets size mismatch");
  RELGT_CHECK(!predictions.empty(), "MAE of empty set");
  double s = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
  return s / static_cast<double>(predictions.size());
}

}  // namespace relgt
