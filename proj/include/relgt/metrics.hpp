#pragma once

#include <span>

namespace relgt {

// Mann-Whitney AUC with 0.5 credit for tied scores. Labels must contain both
// classes; otherwise DegenerateLabels is thrown.
double auc_score(std::span<const double> scores, std::span<const int> labels);

double mae_score(std::span<const double> predictions, std::span<const double> targets);

}  // namespace relgt
