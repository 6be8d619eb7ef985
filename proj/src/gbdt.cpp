#include "score/gbdt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "score/util/io.hpp"

namespace score::gbdt {

using ordered_json = nlohmann::ordered_json;

namespace {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

double subset_score(double sum, size_t count) {
  return count ? sum * sum / double(count) : 0.0;
}

// Exact greedy split of the sample subset `idx` on squared error of the
// residuals. Features are scanned in ascending order and candidate
// thresholds in ascending value order, so the first strictly better
// gain implements the lowest-feature, lowest-threshold tie-break.
SplitChoice best_split(const std::vector<std::vector<double>>& x,
                       const std::vector<double>& residual,
                       const std::vector<uint32_t>& idx, int n_features,
                       int min_leaf) {
  SplitChoice best;
  double total = 0.0;
  for (uint32_t i : idx) total += residual[i];
  double parent = subset_score(total, idx.size());
  std::vector<std::pair<double, double>> vals(idx.size());
  for (int f = 0; f < n_features; f++) {
    for (size_t i = 0; i < idx.size(); i++)
      vals[i] = {x[idx[i]][size_t(f)], residual[idx[i]]};
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0;
    for (size_t i = 0; i + 1 < vals.size(); i++) {
      left_sum += vals[i].second;
      if (vals[i].first == vals[i + 1].first) continue;
      size_t nl = i + 1, nr = vals.size() - nl;
      if (nl < size_t(min_leaf) || nr < size_t(min_leaf)) continue;
      double gain = subset_score(left_sum, nl) +
                    subset_score(total - left_sum, nr) - parent;
      if (gain > best.gain) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        best.gain = gain;
      }
    }
  }
  return best;
}

int32_t grow(Tree& tree, const std::vector<std::vector<double>>& x,
             const std::vector<double>& residual,
             const std::vector<uint32_t>& idx, int depth,
             const GbdtConfig& cfg, int n_features) {
  double sum = 0.0;
  for (uint32_t i : idx) sum += residual[i];
  int32_t at = int32_t(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  tree.nodes[at].value = sum / double(idx.size());
  if (depth >= cfg.max_depth || idx.size() < 2 * size_t(cfg.min_samples_leaf))
    return at;
  SplitChoice split =
      best_split(x, residual, idx, n_features, cfg.min_samples_leaf);
  if (!split.found || split.gain <= 0.0) return at;
  std::vector<uint32_t> left, right;
  for (uint32_t i : idx)
    (x[i][size_t(split.feature)] < split.threshold ? left : right).push_back(i);
  tree.nodes[at].feature = split.feature;
  tree.nodes[at].threshold = split.threshold;
  int32_t l = grow(tree, x, residual, left, depth + 1, cfg, n_features);
  int32_t r = grow(tree, x, residual, right, depth + 1, cfg, n_features);
  tree.nodes[at].left = l;
  tree.nodes[at].right = r;
  return at;
}

double tree_value(const Tree& tree, const std::vector<double>& x) {
  int32_t at = 0;
  while (!tree.nodes[size_t(at)].is_leaf()) {
    const TreeNode& node = tree.nodes[size_t(at)];
    at = x[size_t(node.feature)] < node.threshold ? node.left : node.right;
  }
  return tree.nodes[size_t(at)].value;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::string hex_double(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)std::bit_cast<uint64_t>(v));
  return buf;
}

double double_from_hex(const std::string& s) {
  if (s.size() != 16) throw FormatError("bad double encoding: " + s);
  return std::bit_cast<double>(uint64_t(std::stoull(s, nullptr, 16)));
}

}  // namespace

TreeEnsemble fit(const std::vector<std::vector<double>>& x,
                 const std::vector<int>& y, const GbdtConfig& cfg) {
  if (x.size() != y.size())
    throw ConfigError("gbdt fit: " + std::to_string(x.size()) +
                      " rows vs " + std::to_string(y.size()) + " labels");
  if (x.size() < 2) throw ConfigError("gbdt fit needs at least two samples");
  size_t n_features = x[0].size();
  for (const auto& row : x)
    if (row.size() != n_features)
      throw ConfigError("gbdt fit: ragged feature rows");
  size_t n_pos = 0;
  for (int v : y) n_pos += size_t(v != 0);
  size_t n_neg = y.size() - n_pos;
  if (!n_pos || !n_neg)
    throw ConfigError("gbdt fit needs both classes present");

  TreeEnsemble ens;
  ens.n_features = uint32_t(n_features);
  ens.learning_rate = cfg.learning_rate;
  ens.base_score = std::log(double(n_pos) / double(n_neg));

  std::vector<double> margin(x.size(), ens.base_score);
  std::vector<double> residual(x.size());
  std::vector<uint32_t> all(x.size());
  for (uint32_t i = 0; i < all.size(); i++) all[i] = i;
  for (int t = 0; t < cfg.n_trees; t++) {
    for (size_t i = 0; i < x.size(); i++)
      residual[i] = double(y[i] != 0) - sigmoid(margin[i]);
    Tree tree;
    grow(tree, x, residual, all, 0, cfg, int(n_features));
    for (size_t i = 0; i < x.size(); i++)
      margin[i] += cfg.learning_rate * tree_value(tree, x[i]);
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

double predict(const TreeEnsemble& ens, const std::vector<double>& x) {
  if (x.size() != ens.n_features)
    throw ConfigError("gbdt predict: " + std::to_string(x.size()) +
                      " features, ensemble expects " +
                      std::to_string(ens.n_features));
  double margin = ens.base_score;
  for (const Tree& tree : ens.trees)
    margin += ens.learning_rate * tree_value(tree, x);
  return sigmoid(margin);
}

std::vector<double> predict_many(const TreeEnsemble& ens,
                                 const std::vector<std::vector<double>>& x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& row : x) out.push_back(predict(ens, row));
  return out;
}

std::string to_json(const TreeEnsemble& ens) {
  ordered_json j;
  j["format"] = "gbdt-ensemble";
  j["version"] = 1;
  j["n_features"] = ens.n_features;
  j["base_score"] = hex_double(ens.base_score);
  j["learning_rate"] = hex_double(ens.learning_rate);
  ordered_json trees = ordered_json::array();
  for (const Tree& tree : ens.trees) {
    ordered_json nodes = ordered_json::array();
    for (const TreeNode& n : tree.nodes)
      nodes.push_back(ordered_json::array(
          {n.feature, hex_double(n.threshold), n.left, n.right,
           hex_double(n.value)}));
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

TreeEnsemble from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ensemble parse: ") + e.what());
  }
  if (j.value("format", "") != "gbdt-ensemble" || j.value("version", 0) != 1)
    throw FormatError("not a version-1 gbdt-ensemble document");
  TreeEnsemble ens;
  ens.n_features = j.at("n_features").get<uint32_t>();
  ens.base_score = double_from_hex(j.at("base_score").get<std::string>());
  ens.learning_rate =
      double_from_hex(j.at("learning_rate").get<std::string>());
  for (const auto& tnodes : j.at("trees")) {
    Tree tree;
    for (const auto& n : tnodes) {
      TreeNode node;
      node.feature = n.at(0).get<int32_t>();
      node.threshold = double_from_hex(n.at(1).get<std::string>());
      node.left = n.at(2).get<int32_t>();
      node.right = n.at(3).get<int32_t>();
      node.value = double_from_hex(n.at(4).get<std::string>());
      tree.nodes.push_back(node);
    }
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

void save(const TreeEnsemble& ens, const std::filesystem::path& path) {
  write_file(path, to_json(ens) + "\n");
}

TreeEnsemble load(const std::filesystem::path& path) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
    text.pop_back();
  return from_json(text);
}

}  // namespace score::gbdt
