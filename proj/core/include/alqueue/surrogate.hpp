#pragma once
// Bagged regression-tree surrogate: mean prediction plus ensemble spread as
// the uncertainty signal, trained from scratch on every retrain.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "alqueue/core.hpp"

namespace alqueue {

struct SurrogateParams {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 3;   // minimum bootstrap-weighted rows per leaf
  int n_threads = 1;  // per-tree fitting threads; results are thread-count invariant
};

struct Prediction {
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation across trees (n-1 divisor)
};

// Axis-aligned splits, constant leaves. feature == -1 marks a leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    std::int32_t i = 0;
    while (nodes[i].feature >= 0) {
      i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    }
    return nodes[i].value;
  }
};

class SurrogateEnsemble {
 public:
  SurrogateEnsemble() = default;

  // Throws on length mismatch against the training embedding dimension.
  Prediction predict(const std::vector<double>& embedding) const;

  const std::vector<Tree>& trees() const { return trees_; }
  const SurrogateParams& params() const { return params_; }
  std::uint64_t bootstrap_seed() const { return bootstrap_seed_; }
  std::size_t trained_on() const { return trained_on_; }
  int embed_dim() const { return embed_dim_; }
  double fit_seconds() const { return fit_seconds_; }

  // Flat pre-order text layout, stable across platforms.
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static SurrogateEnsemble load(std::istream& in);
  static SurrogateEnsemble load_file(const std::string& path);

  friend SurrogateEnsemble fit_rows(const std::vector<double>& features,
                                    const std::vector<double>& targets, int dim,
                                    const SurrogateParams& params, std::uint64_t seed);

 private:
  std::vector<Tree> trees_;
  SurrogateParams params_;
  std::uint64_t bootstrap_seed_ = 0;
  std::size_t trained_on_ = 0;
  int embed_dim_ = 0;
  double fit_seconds_ = 0.0;
};

// Fits on raw rows (row-major features, one target per row). Rows are
// canonicalized before bootstrapping: bitwise-identical rows collapse into a
// unique-row table (first-appearance order) whose multiplicities are reduced
// by their gcd, and each tree draws (total/gcd) indices by CDF inversion over
// those multiplicities, keyed by (seed, tree, draw). A uniformly replicated
// training set therefore yields bit-identical trees.
SurrogateEnsemble fit_rows(const std::vector<double>& features,
                           const std::vector<double>& targets, int dim,
                           const SurrogateParams& params, std::uint64_t seed);

// Fits on a labeled dataset (embeddings as features, strain as target).
// Throws on an empty dataset or a record without strain. Deterministic for
// fixed (train, params, seed).
SurrogateEnsemble fit(const Dataset& train, const SurrogateParams& params,
                      std::uint64_t seed);

// sqrt of the mean squared residual between strain and predicted mean.
double holdout_rmse(const SurrogateEnsemble& e, const Dataset& holdout);

// True iff at least `batch` results landed since the last fit; batch >= 1.
bool needs_retrain(std::int64_t results_since_fit, std::int64_t batch);

}  // namespace alqueue
