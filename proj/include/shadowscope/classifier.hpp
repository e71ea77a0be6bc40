#pragma once

// Binary shadow classifier F(rho_c, N_c): 1 = ghost-object shadow,
// 0 = genuine or poisoned shadow.
//
// Features are standardized with training-set statistics before any model
// sees them. Kernel SVMs are trained with SMO (maximal violating pair working
// set), logistic regression with Newton iterations on the L2-penalized log
// loss, random forests with seeded bootstrap CART trees.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shadowscope/shadow_features.hpp"

namespace shadowscope {

enum class ClassifierKind { kLogistic, kRandomForest, kSvmLinear, kSvmPoly, kSvmRbf };

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kSvmPoly;
  int degree = 2;  // svm-poly only

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

/// "logistic", "random-forest", "svm-linear", "svm-rbf", "svm-poly" (degree 2)
/// or "svm-poly:<degree>".
ClassifierSpec parse_classifier_spec(std::string_view text);
std::string to_string(const ClassifierSpec& spec);

/// The six model kinds compared in the evaluation.
std::vector<ClassifierSpec> all_classifier_specs();

struct Hyperparams {
  double c = 10.0;       // SVM box constraint; logistic inverse L2 strength
  double gamma = 0.5;    // kernel scale on standardized features
  double coef0 = 1.0;    // polynomial kernel offset
  double tolerance = 1e-3;
  std::size_t max_iterations = 2'000'000;

  // Seeded k-fold grid search over (c, gamma) by pooled out-of-fold AUC.
  // Empty grids disable the search.
  std::vector<double> c_grid;
  std::vector<double> gamma_grid;
  std::size_t cv_folds = 5;

  std::size_t n_trees = 50;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 2;
};

void validate(const Hyperparams& h);

struct LabeledFeatures {
  ShadowFeatures features;
  int label = 0;
};

using FeatureVector = std::array<double, 2>;  // (rho_c, N_c)

inline FeatureVector to_vector(const ShadowFeatures& f) {
  return {f.mean_cluster_density, static_cast<double>(f.n_clusters)};
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  double value = 0.0;  // leaf: fraction of positive training samples
};

struct ClassifierModel {
  ClassifierSpec spec;
  double c = 0.0;
  double gamma = 0.0;
  double coef0 = 0.0;
  FeatureVector mean{0.0, 0.0};
  FeatureVector scale{1.0, 1.0};

  // logistic and svm-linear
  FeatureVector weights{0.0, 0.0};
  double bias = 0.0;
  // kernel SVMs: standardized support vectors and alpha_i * y_i
  std::vector<FeatureVector> support_vectors;
  std::vector<double> dual_coef;
  // random forest
  std::vector<std::vector<TreeNode>> trees;

  std::uint64_t training_seed = 0;
  std::size_t training_size = 0;
  std::size_t iterations = 0;
};

/// Throws InvalidInputError on a single-class or non-finite dataset and
/// TrainingError when an optimizer hits its iteration cap.
ClassifierModel train(const std::vector<LabeledFeatures>& data, const ClassifierSpec& spec,
                      const Hyperparams& hyper, std::uint64_t seed);

/// Continuous decision value; >= 0 means ghost.
double margin(const ClassifierModel& model, const FeatureVector& x);

struct Prediction {
  int label = 0;
  double margin = 0.0;
};

Prediction predict(const ClassifierModel& model, const ShadowFeatures& f);

struct ClassifierMetrics {
  std::size_t n = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double tpr = 0.0;  // 0 when the set has no positives
  double fpr = 0.0;  // 0 when the set has no negatives
  std::optional<double> auc;  // absent for a single-class set

  /// Throws UndefinedMetricError when the AUC is absent.
  double auc_or_throw() const;
};

ClassifierMetrics evaluate(const ClassifierModel& model,
                           const std::vector<LabeledFeatures>& test);

std::string model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(std::string_view text);

}  // namespace shadowscope
