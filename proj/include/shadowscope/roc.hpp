#pragma once

#include <span>
#include <vector>

namespace shadowscope {

struct RocPoint {
  double threshold = 0.0;  // classify positive when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC curve over every distinct score, highest threshold first, starting at
/// (0, 0) and ending at (1, 1). Tied scores move together, giving a diagonal
/// segment. Labels are 0/1. Throws UndefinedMetricError unless both classes
/// are present.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under roc_curve; ties count half (Mann-Whitney).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace shadowscope
