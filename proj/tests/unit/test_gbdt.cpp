#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "score/common.hpp"
#include "score/gbdt.hpp"
#include "score/util/rng.hpp"

using namespace score;
using namespace score::gbdt;

namespace {

// Two gaussian blobs that a depth-2 tree separates easily.
void make_blobs(Rng& rng, size_t n, std::vector<std::vector<double>>& x,
                std::vector<int>& y) {
  x.clear();
  y.clear();
  for (size_t i = 0; i < n; ++i) {
    int label = int(rng.below(2));
    double cx = label ? 2.0 : -2.0;
    x.push_back({cx + rng.normal() * 0.5, rng.normal()});
    y.push_back(label);
  }
}

double logloss(const TreeEnsemble& ens, const std::vector<std::vector<double>>& x,
               const std::vector<int>& y) {
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double p = std::clamp(predict(ens, x[i]), 1e-12, 1.0 - 1e-12);
    total += y[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / double(x.size());
}

}  // namespace

TEST_CASE("fit separates linearly separable blobs") {
  Rng rng(101);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 200, x, y);
  GbdtConfig cfg;
  cfg.n_trees = 30;
  cfg.max_depth = 3;
  TreeEnsemble ens = fit(x, y, cfg);
  CHECK(ens.n_features == 2);
  CHECK(ens.trees.size() == 30);
  size_t correct = 0;
  auto probs = predict_many(ens, x);
  for (size_t i = 0; i < x.size(); ++i)
    if ((probs[i] >= 0.5) == (y[i] == 1)) ++correct;
  CHECK(double(correct) / double(x.size()) > 0.97);
}

TEST_CASE("training loss decreases with more trees") {
  Rng rng(7);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 150, x, y);
  GbdtConfig base;
  base.max_depth = 2;
  double prev = 1e9;
  for (int t : {1, 5, 20}) {
    GbdtConfig cfg = base;
    cfg.n_trees = t;
    double loss = logloss(fit(x, y, cfg), x, y);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("prior only ensemble predicts the class rate") {
  std::vector<std::vector<double>> x = {{0.0}, {1.0}, {2.0}, {3.0}};
  std::vector<int> y = {1, 1, 1, 0};
  GbdtConfig cfg;
  cfg.n_trees = 0;
  TreeEnsemble ens = fit(x, y, cfg);
  CHECK(predict(ens, {5.0}) == doctest::Approx(0.75));
}

TEST_CASE("fit validates its inputs") {
  GbdtConfig cfg;
  CHECK_THROWS_AS(fit({}, {}, cfg), ConfigError);
  CHECK_THROWS_AS(fit({{1.0}, {2.0}}, {1, 1}, cfg), ConfigError);  // one class
  CHECK_THROWS_AS(fit({{1.0}}, {1, 0}, cfg), ConfigError);         // length mismatch
}

TEST_CASE("predict validates feature width") {
  Rng rng(3);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 40, x, y);
  GbdtConfig cfg;
  cfg.n_trees = 2;
  TreeEnsemble ens = fit(x, y, cfg);
  CHECK_THROWS_AS(predict(ens, {1.0}), ConfigError);
  CHECK_THROWS_AS(predict(ens, {1.0, 2.0, 3.0}), ConfigError);
}

TEST_CASE("min_samples_leaf caps tree growth") {
  Rng rng(13);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 60, x, y);
  GbdtConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 10;
  cfg.min_samples_leaf = 30;
  TreeEnsemble ens = fit(x, y, cfg);
  // With 60 rows and a 30-row floor per leaf, one split is the most a
  // tree can hold.
  REQUIRE(ens.trees.size() == 1);
  CHECK(ens.trees[0].nodes.size() <= 3);
}

TEST_CASE("json round trip is exact") {
  Rng rng(19);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 80, x, y);
  GbdtConfig cfg;
  cfg.n_trees = 8;
  TreeEnsemble ens = fit(x, y, cfg);
  std::string text = to_json(ens);
  TreeEnsemble back = from_json(text);
  CHECK(back.n_features == ens.n_features);
  CHECK(back.base_score == ens.base_score);  // bitwise, not approx
  CHECK(back.learning_rate == ens.learning_rate);
  REQUIRE(back.trees.size() == ens.trees.size());
  for (size_t t = 0; t < ens.trees.size(); ++t) {
    REQUIRE(back.trees[t].nodes.size() == ens.trees[t].nodes.size());
    for (size_t i = 0; i < ens.trees[t].nodes.size(); ++i) {
      CHECK(back.trees[t].nodes[i].feature == ens.trees[t].nodes[i].feature);
      CHECK(back.trees[t].nodes[i].threshold == ens.trees[t].nodes[i].threshold);
      CHECK(back.trees[t].nodes[i].value == ens.trees[t].nodes[i].value);
    }
  }
  CHECK(to_json(back) == text);  // byte-identical second pass
}

TEST_CASE("file save and load round trip") {
  namespace fs = std::filesystem;
  Rng rng(23);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(rng, 50, x, y);
  GbdtConfig cfg;
  cfg.n_trees = 3;
  TreeEnsemble ens = fit(x, y, cfg);
  fs::path p = fs::temp_directory_path() / "score_gbdt_rt.json";
  save(ens, p);
  TreeEnsemble back = load(p);
  for (const auto& row : x)
    CHECK(predict(back, row) == predict(ens, row));
  fs::remove(p);
  CHECK_THROWS_AS(load(p), IoError);
}

TEST_CASE("from_json rejects garbage") {
  CHECK_THROWS_AS(from_json("not json"), FormatError);
  CHECK_THROWS_AS(from_json("{}"), FormatError);
}
