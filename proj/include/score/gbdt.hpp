#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "score/common.hpp"

namespace score::gbdt {

struct GbdtConfig {
  int n_trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  int min_samples_leaf = 4;
  uint64_t seed = 0;  // reserved; exact greedy fitting draws nothing
};

// One node of a regression tree. Internal nodes route x[feature] <
// threshold to the left child; leaves carry the fitted value.
struct TreeNode {
  int32_t feature = -1;
  double threshold = 0.0;
  int32_t left = -1;
  int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at index 0
};

struct TreeEnsemble {
  uint32_t n_features = 0;
  double base_score = 0.0;  // prior log-odds
  double learning_rate = 0.1;
  std::vector<Tree> trees;
};

// Stagewise logistic-loss boosting with exact greedy splits on the
// residuals. Split ties break toward the lowest feature index, then the
// lowest threshold. Throws ConfigError unless both classes appear.
TreeEnsemble fit(const std::vector<std::vector<double>>& x,
                 const std::vector<int>& y, const GbdtConfig& cfg);

// Probability for one feature vector; with no trees this is the prior.
double predict(const TreeEnsemble& ens, const std::vector<double>& x);

std::vector<double> predict_many(const TreeEnsemble& ens,
                                 const std::vector<std::vector<double>>& x);

// Versioned JSON serialization; round-trips exactly (doubles travel as
// bit patterns).
std::string to_json(const TreeEnsemble& ens);
TreeEnsemble from_json(const std::string& text);
void save(const TreeEnsemble& ens, const std::filesystem::path& path);
TreeEnsemble load(const std::filesystem::path& path);

}  // namespace score::gbdt
