#include "shadowscope/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/random.hpp"
#include "shadowscope/roc.hpp"

namespace shadowscope {

namespace {

constexpr int kModelFormatVersion = 1;
constexpr char kModelFormatName[] = "shadowscope-classifier";

bool is_svm(ClassifierKind kind) {
  return kind == ClassifierKind::kSvmLinear || kind == ClassifierKind::kSvmPoly ||
         kind == ClassifierKind::kSvmRbf;
}

FeatureVector standardize(const ClassifierModel& m, const FeatureVector& x) {
  return {(x[0] - m.mean[0]) / m.scale[0], (x[1] - m.mean[1]) / m.scale[1]};
}

double kernel(const ClassifierModel& m, const FeatureVector& a, const FeatureVector& b) {
  switch (m.spec.kind) {
    case ClassifierKind::kSvmPoly:
      return std::pow(m.gamma * (a[0] * b[0] + a[1] * b[1]) + m.coef0, m.spec.degree);
    case ClassifierKind::kSvmRbf: {
      const double d0 = a[0] - b[0];
      const double d1 = a[1] - b[1];
      return std::exp(-m.gamma * (d0 * d0 + d1 * d1));
    }
    default:
      return a[0] * b[0] + a[1] * b[1];
  }
}

// Training sample after standardization. Identical (x, label) samples are
// merged; the weight multiplies their loss term, which leaves the optimum of
// every objective below unchanged.
struct Sample {
  FeatureVector x;
  int y;  // +1 / -1
  double weight;
};

std::vector<Sample> merge_duplicates(const std::vector<FeatureVector>& xs,
                                     const std::vector<int>& labels) {
  std::map<std::tuple<double, double, int>, double> counts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    counts[{xs[i][0], xs[i][1], labels[i] == 1 ? 1 : -1}] += 1.0;
  }
  std::vector<Sample> out;
  out.reserve(counts.size());
  for (const auto& [key, w] : counts) {
    out.push_back({{std::get<0>(key), std::get<1>(key)}, std::get<2>(key), w});
  }
  return out;
}

// Dual soft-margin SVM:
//   min 1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C * weight_i,
// solved by SMO with the maximal violating pair working set.
void train_svm(ClassifierModel& m, const std::vector<Sample>& samples, const Hyperparams& h) {
  const std::size_t n = samples.size();
  std::vector<double> upper(n);
  for (std::size_t i = 0; i < n; ++i) upper[i] = m.c * samples[i].weight;

  // Full Q for small problems, on-the-fly rows otherwise.
  constexpr std::size_t kCacheLimit = 4000;
  const bool cached = n <= kCacheLimit;
  std::vector<double> q_full;
  if (cached) {
    q_full.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = samples[i].y * samples[j].y * kernel(m, samples[i].x, samples[j].x);
        q_full[i * n + j] = v;
        q_full[j * n + i] = v;
      }
    }
  }
  std::vector<double> row_a(cached ? 0 : n);
  std::vector<double> row_b(cached ? 0 : n);
  auto row = [&](std::size_t i, std::vector<double>& buffer) -> const double* {
    if (cached) return q_full.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      buffer[j] = samples[i].y * samples[j].y * kernel(m, samples[i].x, samples[j].x);
    }
    return buffer.data();
  };
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = kernel(m, samples[i].x, samples[i].x);

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  constexpr double kTau = 1e-12;

  auto in_up = [&](std::size_t t) {
    return samples[t].y == 1 ? alpha[t] < upper[t] : alpha[t] > 0.0;
  };
  auto in_low = [&](std::size_t t) {
    return samples[t].y == 1 ? alpha[t] > 0.0 : alpha[t] < upper[t];
  };

  std::size_t iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (;; ++iter) {
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    std::size_t i = n;
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -samples[t].y * grad[t];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    gap = g_max - g_min;
    if (i == n || j == n || gap < h.tolerance) break;
    if (iter >= h.max_iterations) {
      std::ostringstream msg;
      msg << "SMO did not converge after " << iter << " iterations (KKT gap " << gap
          << ", tolerance " << h.tolerance << ", " << n << " distinct samples)";
      throw TrainingError(msg.str());
    }

    const double* q_i = row(i, row_a);
    const double* q_j = row(j, row_b);
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double c_i = upper[i];
    const double c_j = upper[j];
    if (samples[i].y != samples[j].y) {
      double quad = diag[i] + diag[j] + 2.0 * q_i[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > c_i - c_j) {
        if (alpha[i] > c_i) {
          alpha[i] = c_i;
          alpha[j] = c_i - diff;
        }
      } else if (alpha[j] > c_j) {
        alpha[j] = c_j;
        alpha[i] = c_j + diff;
      }
    } else {
      double quad = diag[i] + diag[j] - 2.0 * q_i[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c_i) {
        if (alpha[i] > c_i) {
          alpha[i] = c_i;
          alpha[j] = sum - c_i;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c_j) {
        if (alpha[j] > c_j) {
          alpha[j] = c_j;
          alpha[i] = sum - c_j;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double d_i = alpha[i] - old_i;
    const double d_j = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q_i[t] * d_i + q_j[t] * d_j;
  }
  m.iterations = iter;

  // Offset: average over free vectors, midpoint of the feasible interval
  // when every vector sits at a bound.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = samples[t].y * grad[t];
    const bool at_upper = alpha[t] >= upper[t];
    const bool at_lower = alpha[t] <= 0.0;
    if (at_upper) {
      if (samples[t].y == -1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (at_lower) {
      if (samples[t].y == 1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2.0;
  m.bias = -rho;

  m.support_vectors.clear();
  m.dual_coef.clear();
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      m.support_vectors.push_back(samples[t].x);
      m.dual_coef.push_back(alpha[t] * samples[t].y);
    }
  }
  if (m.spec.kind == ClassifierKind::kSvmLinear) {
    m.weights = {0.0, 0.0};
    for (std::size_t k = 0; k < m.support_vectors.size(); ++k) {
      m.weights[0] += m.dual_coef[k] * m.support_vectors[k][0];
      m.weights[1] += m.dual_coef[k] * m.support_vectors[k][1];
    }
    m.support_vectors.clear();
    m.dual_coef.clear();
  }
}

// Minimizes C * sum_i w_i log(1 + exp(-y_i f(x_i))) + |w|^2 / 2 (bias not
// penalized) with damped Newton steps.
void train_logistic(ClassifierModel& m, const std::vector<Sample>& samples) {
  std::array<double, 3> theta{0.0, 0.0, 0.0};
  auto objective = [&](const std::array<double, 3>& th) {
    double loss = 0.5 * (th[0] * th[0] + th[1] * th[1]);
    for (const auto& s : samples) {
      const double z = s.y * (th[0] * s.x[0] + th[1] * s.x[1] + th[2]);
      // log(1 + exp(-z)) without overflow
      loss += m.c * s.weight * (z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)));
    }
    return loss;
  };

  constexpr std::size_t kMaxNewton = 200;
  std::size_t iter = 0;
  double step_norm = std::numeric_limits<double>::infinity();
  for (; iter < kMaxNewton; ++iter) {
    std::array<double, 3> g{theta[0], theta[1], 0.0};
    std::array<std::array<double, 3>, 3> hess{};
    hess[0][0] = 1.0;
    hess[1][1] = 1.0;
    hess[2][2] = 1e-12;
    for (const auto& s : samples) {
      const std::array<double, 3> xt{s.x[0], s.x[1], 1.0};
      const double f = theta[0] * xt[0] + theta[1] * xt[1] + theta[2];
      const double p = 1.0 / (1.0 + std::exp(-f));
      const double target = s.y == 1 ? 1.0 : 0.0;
      const double cw = m.c * s.weight;
      for (int a = 0; a < 3; ++a) {
        g[a] += cw * (p - target) * xt[a];
        for (int b = 0; b < 3; ++b) hess[a][b] += cw * p * (1.0 - p) * xt[a] * xt[b];
      }
    }
    // Solve hess * step = g by Gaussian elimination with partial pivoting.
    std::array<std::array<double, 4>, 3> aug{};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) aug[a][b] = hess[a][b];
      aug[a][3] = g[a];
    }
    for (int col = 0; col < 3; ++col) {
      int piv = col;
      for (int r = col + 1; r < 3; ++r) {
        if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
      }
      std::swap(aug[col], aug[piv]);
      for (int r = col + 1; r < 3; ++r) {
        const double f = aug[r][col] / aug[col][col];
        for (int k = col; k < 4; ++k) aug[r][k] -= f * aug[col][k];
      }
    }
    std::array<double, 3> step{};
    for (int r = 2; r >= 0; --r) {
      double v = aug[r][3];
      for (int k = r + 1; k < 3; ++k) v -= aug[r][k] * step[k];
      step[r] = v / aug[r][r];
    }

    const double base = objective(theta);
    double t = 1.0;
    std::array<double, 3> next{};
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      for (int a = 0; a < 3; ++a) next[a] = theta[a] - t * step[a];
      if (objective(next) <= base) break;
    }
    step_norm = 0.0;
    for (int a = 0; a < 3; ++a) step_norm = std::max(step_norm, std::abs(next[a] - theta[a]));
    theta = next;
    if (step_norm < 1e-10) break;
  }
  if (!(step_norm < 1e-10)) {
    std::ostringstream msg;
    msg << "logistic regression did not converge after " << kMaxNewton
        << " Newton steps (last step " << step_norm << ")";
    throw TrainingError(msg.str());
  }
  m.iterations = iter + 1;
  m.weights = {theta[0], theta[1]};
  m.bias = theta[2];
}

double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureVector>& xs, const std::vector<int>& labels,
              const Hyperparams& h, Rng& rng)
      : xs_(xs), labels_(labels), h_(h), rng_(rng) {}

  std::vector<TreeNode> build(std::vector<std::size_t> idx) {
    nodes_.clear();
    grow(std::move(idx), 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    double pos = 0.0;
    for (std::size_t i : idx) pos += labels_[i];
    const double total = static_cast<double>(idx.size());
    nodes_[id].value = pos / total;
    if (depth >= h_.max_depth || pos == 0.0 || pos == total || idx.size() < 2 * h_.min_leaf) {
      return id;
    }

    // One random feature per node, falling back to the other when it offers
    // no valid split.
    std::array<int, 2> order{0, 1};
    if (uniform_index(rng_, 2) == 1) std::swap(order[0], order[1]);
    const double parent = gini(pos, total);
    for (int f : order) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return xs_[a][f] < xs_[b][f] || (xs_[a][f] == xs_[b][f] && a < b);
      });
      double best_gain = 1e-12;
      std::size_t best_k = 0;
      double left_pos = 0.0;
      for (std::size_t k = 1; k < idx.size(); ++k) {
        left_pos += labels_[idx[k - 1]];
        if (xs_[idx[k - 1]][f] == xs_[idx[k]][f]) continue;
        if (k < h_.min_leaf || idx.size() - k < h_.min_leaf) continue;
        const double nl = static_cast<double>(k);
        const double nr = total - nl;
        const double gain =
            parent - (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / total;
        if (gain > best_gain) {
          best_gain = gain;
          best_k = k;
        }
      }
      if (best_k == 0) continue;
      const double threshold = 0.5 * (xs_[idx[best_k - 1]][f] + xs_[idx[best_k]][f]);
      std::vector<std::size_t> left(idx.begin(), idx.begin() + static_cast<long>(best_k));
      std::vector<std::size_t> right(idx.begin() + static_cast<long>(best_k), idx.end());
      nodes_[id].feature = f;
      nodes_[id].threshold = threshold;
      const int l = grow(std::move(left), depth + 1);
      const int r = grow(std::move(right), depth + 1);
      nodes_[id].left = l;
      nodes_[id].right = r;
      return id;
    }
    return id;
  }

  const std::vector<FeatureVector>& xs_;
  const std::vector<int>& labels_;
  const Hyperparams& h_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

void train_forest(ClassifierModel& m, const std::vector<FeatureVector>& xs,
                  const std::vector<int>& labels, const Hyperparams& h, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7265657374ULL));
  TreeBuilder builder(xs, labels, h, rng);
  m.trees.clear();
  for (std::size_t t = 0; t < h.n_trees; ++t) {
    std::vector<std::size_t> sample(xs.size());
    for (auto& s : sample) s = uniform_index(rng, xs.size());
    m.trees.push_back(builder.build(std::move(sample)));
  }
  m.iterations = h.n_trees;
}

double tree_value(const std::vector<TreeNode>& tree, const FeatureVector& x) {
  std::size_t k = 0;
  while (tree[k].feature >= 0) {
    k = static_cast<std::size_t>(x[tree[k].feature] <= tree[k].threshold ? tree[k].left
                                                                         : tree[k].right);
  }
  return tree[k].value;
}

ClassifierModel fit(const std::vector<FeatureVector>& raw, const std::vector<int>& labels,
                    const ClassifierSpec& spec, const Hyperparams& h, double c, double gamma,
                    std::uint64_t seed) {
  ClassifierModel m;
  m.spec = spec;
  m.c = c;
  m.gamma = gamma;
  m.coef0 = h.coef0;
  m.training_seed = seed;
  m.training_size = raw.size();
  const double n = static_cast<double>(raw.size());
  for (int f = 0; f < 2; ++f) {
    double sum = 0.0;
    for (const auto& x : raw) sum += x[f];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& x : raw) ss += (x[f] - mean) * (x[f] - mean);
    const double sd = std::sqrt(ss / n);
    m.mean[f] = mean;
    m.scale[f] = sd > 0.0 ? sd : 1.0;
  }
  std::vector<FeatureVector> xs;
  xs.reserve(raw.size());
  for (const auto& x : raw) xs.push_back(standardize(m, x));

  if (spec.kind == ClassifierKind::kRandomForest) {
    train_forest(m, xs, labels, h, seed);
  } else if (spec.kind == ClassifierKind::kLogistic) {
    train_logistic(m, merge_duplicates(xs, labels));
  } else {
    train_svm(m, merge_duplicates(xs, labels), h);
  }
  return m;
}

// Stratified fold assignment: each class is shuffled and dealt round-robin.
std::vector<std::size_t> assign_folds(const std::vector<int>& labels, std::size_t folds,
                                      std::uint64_t seed) {
  std::vector<std::size_t> fold(labels.size());
  Rng rng(mix_seed(seed, 0x666f6c64ULL));
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    shuffle(members, rng);
    for (std::size_t k = 0; k < members.size(); ++k) fold[members[k]] = k % folds;
  }
  return fold;
}

}  // namespace

ClassifierSpec parse_classifier_spec(std::string_view text) {
  if (text == "logistic") return {ClassifierKind::kLogistic, 2};
  if (text == "random-forest") return {ClassifierKind::kRandomForest, 2};
  if (text == "svm-linear") return {ClassifierKind::kSvmLinear, 2};
  if (text == "svm-rbf") return {ClassifierKind::kSvmRbf, 2};
  if (text == "svm-poly") return {ClassifierKind::kSvmPoly, 2};
  constexpr std::string_view kPoly = "svm-poly:";
  if (text.starts_with(kPoly)) {
    const auto num = text.substr(kPoly.size());
    int degree = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), degree);
    if (ec == std::errc() && ptr == num.data() + num.size() && degree >= 1 && degree <= 10) {
      return {ClassifierKind::kSvmPoly, degree};
    }
  }
  throw ConfigError("unknown classifier kind '" + std::string(text) +
                    "' (logistic, random-forest, svm-linear, svm-poly[:degree], svm-rbf)");
}

std::string to_string(const ClassifierSpec& spec) {
  switch (spec.kind) {
    case ClassifierKind::kLogistic:
      return "logistic";
    case ClassifierKind::kRandomForest:
      return "random-forest";
    case ClassifierKind::kSvmLinear:
      return "svm-linear";
    case ClassifierKind::kSvmPoly:
      return "svm-poly:" + std::to_string(spec.degree);
    case ClassifierKind::kSvmRbf:
      return "svm-rbf";
  }
  return "svm-linear";
}

std::vector<ClassifierSpec> all_classifier_specs() {
  return {{ClassifierKind::kLogistic, 2}, {ClassifierKind::kRandomForest, 2},
          {ClassifierKind::kSvmLinear, 2}, {ClassifierKind::kSvmPoly, 2},
          {ClassifierKind::kSvmPoly, 3},  {ClassifierKind::kSvmRbf, 2}};
}

void validate(const Hyperparams& h) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(h.c)) throw ConfigError("classifier C must be positive");
  if (!positive(h.gamma)) throw ConfigError("classifier gamma must be positive");
  if (!std::isfinite(h.coef0) || h.coef0 < 0.0) {
    throw ConfigError("classifier coef0 must be non-negative");
  }
  if (!positive(h.tolerance)) throw ConfigError("classifier tolerance must be positive");
  if (h.max_iterations == 0) throw ConfigError("classifier max_iterations must be positive");
  for (double c : h.c_grid) {
    if (!positive(c)) throw ConfigError("C grid values must be positive");
  }
  for (double g : h.gamma_grid) {
    if (!positive(g)) throw ConfigError("gamma grid values must be positive");
  }
  if (h.cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
  if (h.n_trees == 0 || h.max_depth == 0 || h.min_leaf == 0) {
    throw ConfigError("forest sizes must be positive");
  }
}

ClassifierModel train(const std::vector<LabeledFeatures>& data, const ClassifierSpec& spec,
                      const Hyperparams& hyper, std::uint64_t seed) {
  validate(hyper);
  if (spec.kind == ClassifierKind::kSvmPoly && (spec.degree < 1 || spec.degree > 10)) {
    throw ConfigError("polynomial degree must lie in 1..10");
  }
  std::vector<FeatureVector> xs;
  std::vector<int> labels;
  std::size_t positives = 0;
  for (const auto& d : data) {
    const auto x = to_vector(d.features);
    if (!std::isfinite(x[0]) || !std::isfinite(x[1])) {
      throw InvalidInputError("training features must be finite");
    }
    if (d.label != 0 && d.label != 1) throw InvalidInputError("training labels must be 0 or 1");
    xs.push_back(x);
    labels.push_back(d.label);
    positives += static_cast<std::size_t>(d.label);
  }
  const std::size_t negatives = data.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidInputError("training set must contain both labels");
  }

  double best_c = hyper.c;
  double best_gamma = hyper.gamma;
  const bool uses_gamma =
      spec.kind == ClassifierKind::kSvmPoly || spec.kind == ClassifierKind::kSvmRbf;
  const std::size_t folds = std::min(hyper.cv_folds, std::min(positives, negatives));
  if (is_svm(spec.kind) && (!hyper.c_grid.empty() || !hyper.gamma_grid.empty()) && folds >= 2) {
    const std::vector<double> cs = hyper.c_grid.empty() ? std::vector<double>{hyper.c}
                                                        : hyper.c_grid;
    const std::vector<double> gammas = hyper.gamma_grid.empty() || !uses_gamma
                                           ? std::vector<double>{hyper.gamma}
                                           : hyper.gamma_grid;
    const auto fold = assign_folds(labels, folds, seed);
    double best_auc = -1.0;
    for (double c : cs) {
      for (double g : gammas) {
        std::vector<double> oof(xs.size());
        for (std::size_t k = 0; k < folds; ++k) {
          std::vector<FeatureVector> tx;
          std::vector<int> ty;
          for (std::size_t i = 0; i < xs.size(); ++i) {
            if (fold[i] != k) {
              tx.push_back(xs[i]);
              ty.push_back(labels[i]);
            }
          }
          const auto m = fit(tx, ty, spec, hyper, c, g, seed);
          for (std::size_t i = 0; i < xs.size(); ++i) {
            if (fold[i] == k) oof[i] = margin(m, xs[i]);
          }
        }
        const double auc = roc_auc(oof, labels);
        if (auc > best_auc) {
          best_auc = auc;
          best_c = c;
          best_gamma = g;
        }
      }
    }
  }
  return fit(xs, labels, spec, hyper, best_c, best_gamma, seed);
}

double margin(const ClassifierModel& model, const FeatureVector& raw) {
  const FeatureVector x = standardize(model, raw);
  switch (model.spec.kind) {
    case ClassifierKind::kLogistic:
    case ClassifierKind::kSvmLinear:
      return model.weights[0] * x[0] + model.weights[1] * x[1] + model.bias;
    case ClassifierKind::kRandomForest: {
      if (model.trees.empty()) return -0.5;
      double sum = 0.0;
      for (const auto& tree : model.trees) sum += tree_value(tree, x);
      return sum / static_cast<double>(model.trees.size()) - 0.5;
    }
    case ClassifierKind::kSvmPoly:
    case ClassifierKind::kSvmRbf: {
      double sum = model.bias;
      for (std::size_t k = 0; k < model.support_vectors.size(); ++k) {
        sum += model.dual_coef[k] * kernel(model, model.support_vectors[k], x);
      }
      return sum;
    }
  }
  return 0.0;
}

Prediction predict(const ClassifierModel& model, const ShadowFeatures& f) {
  const double m = margin(model, to_vector(f));
  return {m >= 0.0 ? 1 : 0, m};
}

double ClassifierMetrics::auc_or_throw() const {
  if (!auc) throw UndefinedMetricError("AUC is undefined for a single-class test set");
  return *auc;
}

ClassifierMetrics evaluate(const ClassifierModel& model,
                           const std::vector<LabeledFeatures>& test) {
  if (test.empty()) throw InvalidInputError("evaluation set is empty");
  std::vector<double> margins;
  std::vector<int> labels;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& d : test) {
    const auto p = predict(model, d.features);
    margins.push_back(p.margin);
    labels.push_back(d.label);
    if (d.label == 1) {
      (p.label == 1 ? tp : fn)++;
    } else {
      (p.label == 1 ? fp : tn)++;
    }
  }
  ClassifierMetrics out;
  out.n = test.size();
  out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(out.n);
  const std::size_t f1_den = 2 * tp + fp + fn;
  out.f1 = f1_den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(f1_den);
  out.tpr = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.fpr = fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn);
  if (tp + fn > 0 && fp + tn > 0) out.auc = roc_auc(margins, labels);
  return out;
}

std::string model_to_json(const ClassifierModel& m) {
  using nlohmann::json;
  json j;
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(m.spec);
  j["c"] = m.c;
  j["gamma"] = m.gamma;
  j["coef0"] = m.coef0;
  j["scaling"] = {{"mean", m.mean}, {"scale", m.scale}};
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  j["support_vectors"] = m.support_vectors;
  j["dual_coef"] = m.dual_coef;
  json trees = json::array();
  for (const auto& tree : m.trees) {
    json nodes = json::array();
    for (const auto& node : tree) {
      nodes.push_back({node.feature, node.threshold, node.left, node.right, node.value});
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  j["training_seed"] = m.training_seed;
  j["training_size"] = m.training_size;
  j["iterations"] = m.iterations;
  return j.dump(1) + "\n";
}

ClassifierModel model_from_json(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedInputError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormatName) {
      throw MalformedInputError("not a classifier model document");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw MalformedInputError("unsupported model version " + j.at("version").dump());
    }
    ClassifierModel m;
    m.spec = parse_classifier_spec(j.at("kind").get<std::string>());
    m.c = j.at("c").get<double>();
    m.gamma = j.at("gamma").get<double>();
    m.coef0 = j.at("coef0").get<double>();
    m.mean = j.at("scaling").at("mean").get<FeatureVector>();
    m.scale = j.at("scaling").at("scale").get<FeatureVector>();
    m.weights = j.at("weights").get<FeatureVector>();
    m.bias = j.at("bias").get<double>();
    m.support_vectors = j.at("support_vectors").get<std::vector<FeatureVector>>();
    m.dual_coef = j.at("dual_coef").get<std::vector<double>>();
    if (m.support_vectors.size() != m.dual_coef.size()) {
      throw MalformedInputError("support vector and coefficient counts differ");
    }
    for (const auto& nodes : j.at("trees")) {
      std::vector<TreeNode> tree;
      for (const auto& n : nodes) {
        tree.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                        n.at(3).get<int>(), n.at(4).get<double>()});
      }
      // Children always follow their parent, which rules out cycles.
      const int size = static_cast<int>(tree.size());
      for (int k = 0; k < size; ++k) {
        const auto& node = tree[static_cast<std::size_t>(k)];
        if (node.feature > 1 ||
            (node.feature >= 0 && (node.left <= k || node.left >= size || node.right <= k ||
                                   node.right >= size))) {
          throw MalformedInputError("corrupt decision tree");
        }
      }
      if (tree.empty()) throw MalformedInputError("empty decision tree");
      m.trees.push_back(std::move(tree));
    }
    m.training_seed = j.at("training_seed").get<std::uint64_t>();
    m.training_size = j.at("training_size").get<std::size_t>();
    m.iterations = j.at("iterations").get<std::size_t>();
    if (!(m.scale[0] > 0.0) || !(m.scale[1] > 0.0)) {
      throw MalformedInputError("feature scaling must be positive");
    }
    return m;
  } catch (const json::exception& e) {
    throw MalformedInputError(std::string("model document is incomplete: ") + e.what());
  }
}

}  // namespace shadowscope
