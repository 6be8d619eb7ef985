#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "score/common.hpp"
#include "score/eval.hpp"
#include "score/util/rng.hpp"

using namespace score;
using namespace score::eval;

namespace {

// Pairwise concordance count with half credit for score ties.
double auroc_brute(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  uint64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / double(pairs);
}

double fpr_at(const std::vector<double>& scores, const std::vector<int>& labels, double thr) {
  uint64_t fp = 0, neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) {
      ++neg;
      if (scores[i] >= thr) ++fp;
    }
  }
  return neg ? double(fp) / double(neg) : 0.0;
}

}  // namespace

TEST_CASE("confusion matches hand counts") {
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3, 0.6, 0.5};
  std::vector<int> y = {1, 0, 1, 0, 1, 0};
  Confusion c = confusion(s, y, 0.5);
  CHECK(c.tp == 2);  // 0.9, 0.6
  CHECK(c.fn == 1);  // 0.4
  CHECK(c.fp == 2);  // 0.8, 0.5 (>= threshold counts)
  CHECK(c.tn == 1);  // 0.3
  CHECK(c.tpr == doctest::Approx(2.0 / 3.0));
  CHECK(c.fpr == doctest::Approx(2.0 / 3.0));
  CHECK(c.precision == doctest::Approx(0.5));
  double p = 0.5, r = 2.0 / 3.0;
  CHECK(c.f1 == doctest::Approx(2 * p * r / (p + r)));
}

TEST_CASE("confusion edge conventions") {
  Confusion c = confusion({0.1, 0.2}, {0, 0}, 0.9);
  CHECK(c.precision == 1.0);  // nothing predicted positive
  CHECK(c.tpr == 0.0);        // no positives present
  CHECK(c.f1 == 0.0);
  Confusion all = confusion({0.9, 0.8}, {1, 1}, 0.5);
  CHECK(all.fpr == 0.0);  // no negatives present
  CHECK(all.tp == 2);
}

TEST_CASE("auroc matches brute-force concordance on random sets with ties") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 4 + rng.below(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool pos = false, neg = false;
    for (size_t i = 0; i < n; ++i) {
      // Coarse grid forces frequent ties.
      s[i] = double(rng.below(8)) / 7.0;
      y[i] = int(rng.below(2));
      (y[i] ? pos : neg) = true;
    }
    if (!pos) y[0] = 1;
    if (!neg) y[1 % n] = 0;
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; })) continue;
    CHECK(auroc(s, y) == doctest::Approx(auroc_brute(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("auroc known values") {
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == doctest::Approx(0.0));
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("auroc rejects single-class input") {
  CHECK_THROWS_AS(auroc({0.1, 0.9}, {1, 1}), ConfigError);
  CHECK_THROWS_AS(auroc({0.1, 0.9}, {0, 0}), ConfigError);
  CHECK_THROWS_AS(auroc({}, {}), ConfigError);
}

TEST_CASE("threshold_at_fpr matches exhaustive scan") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 6 + rng.below(30);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = double(rng.below(10)) / 9.0;
      y[i] = int(rng.below(2));
    }
    y[0] = 0;  // guarantee a negative
    double target = rng.uniform(0.0, 0.5);
    double thr = threshold_at_fpr(s, y, target);
    CHECK(fpr_at(s, y, thr) <= target + 1e-15);
    // No observed score strictly below thr keeps the constraint while
    // lowering the threshold.
    double best = thr;
    std::vector<double> cands = s;
    double max_neg = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i)
      if (y[i] == 0) max_neg = std::max(max_neg, s[i]);
    cands.push_back(std::nextafter(max_neg, std::numeric_limits<double>::infinity()));
    for (double c : cands)
      if (c < best && fpr_at(s, y, c) <= target) best = c;
    CHECK(thr == best);
  }
}

TEST_CASE("threshold_at_fpr with zero target steps above the top negative") {
  std::vector<double> s = {0.2, 0.4, 0.6, 0.8};
  std::vector<int> y = {0, 0, 1, 1};
  double thr = threshold_at_fpr(s, y, 0.0);
  CHECK(thr > 0.4);
  CHECK(thr <= 0.6);
  CHECK(fpr_at(s, y, thr) == 0.0);
  // All negatives: threshold escapes to +inf.
  CHECK(std::isinf(threshold_at_fpr({0.5}, {1}, 0.0)));
}

TEST_CASE("coverage_report counts and ordering") {
  std::vector<std::string> fam = {"miner", "miner", "stealer", "", "stealer", "downloader"};
  std::vector<int> y = {1, 1, 1, 0, 1, 1};
  std::vector<int> det = {1, 0, 1, 1, 1, 1};
  auto rows = coverage_report(fam, y, det);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].family == "stealer");  // 2 successes
  CHECK(rows[0].success == 2);
  CHECK(rows[0].miss == 0);
  CHECK(rows[0].ratio == doctest::Approx(100.0));
  // downloader and miner both have 1 success; name order breaks the tie
  CHECK(rows[1].family == "downloader");
  CHECK(rows[2].family == "miner");
  CHECK(rows[2].miss == 1);
  CHECK(rows[2].ratio == doctest::Approx(50.0));
}

TEST_CASE("coverage_csv is well formed") {
  auto rows = coverage_report({"a", "b"}, {1, 1}, {1, 0});
  std::string csv = coverage_csv(rows);
  CHECK(csv.find("family") != std::string::npos);
  CHECK(csv.find("a,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 2);
}

TEST_CASE("obfuscation_scan finds planted tells") {
  std::string b64(80, 'A');
  auto m1 = obfuscation_scan("payload = \"" + b64 + "==\"");
  CHECK(!m1.base64.empty());
  CHECK(m1.base64[0].end > m1.base64[0].begin);
  CHECK(m1.base64[0].end - m1.base64[0].begin >= 64);

  auto m2 = obfuscation_scan("for b in data: out.append(b ^ key)");
  CHECK(!m2.xor_loop.empty());
  auto m2b = obfuscation_scan("x = a xor b");
  CHECK(!m2b.xor_loop.empty());

  auto m3 = obfuscation_scan("import codecs; codecs.encode(s, 'rot13')");
  CHECK(!m3.rot13.empty());

  auto m4 = obfuscation_scan("powershell -EncodedCommand SQBFAFgA");
  CHECK(!m4.powershell_encoded.empty());
  CHECK(m4.any());
}

TEST_CASE("obfuscation_scan stays quiet on plain scripts") {
  auto m = obfuscation_scan("#!/bin/bash\necho hello\nls -la /tmp\n");
  CHECK(!m.any());
  auto empty = obfuscation_scan("");
  CHECK(!empty.any());
}
