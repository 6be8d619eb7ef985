#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "score/common.hpp"

namespace score::eval {

// Counts and derived rates at a fixed decision threshold. A sample is
// predicted positive iff its score is >= the threshold. Ratios whose
// denominator is empty fall back to the stated conventions: precision
// is 1.0 when nothing was predicted positive, tpr/fpr are 0.0 when the
// corresponding class is absent.
struct Confusion {
  double threshold = 0.5;
  uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr = 0.0;
  double fpr = 0.0;
  double precision = 1.0;
  double f1 = 0.0;
};

Confusion confusion(const std::vector<double>& scores,
                    const std::vector<int>& labels, double threshold);

// Area under the ROC curve via the rank-sum statistic; ties between
// scores contribute through midranks, so an all-equal scoring yields
// exactly 0.5. Throws ConfigError when either class is missing.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Smallest decision threshold whose empirical false-positive rate is
// at or below the target. Candidates are the observed scores plus the
// first representable value above the highest negative score (which
// always reaches FPR 0). Returns +infinity when there are no negatives.
double threshold_at_fpr(const std::vector<double>& scores,
                        const std::vector<int>& labels, double target_fpr);

// Per-family detection outcome over the malicious samples only.
struct CoverageRow {
  std::string family;
  uint64_t success = 0;
  uint64_t miss = 0;
  double ratio = 0.0;  // 100 * success / (success + miss)
};

// families/labels/detected are parallel per-sample arrays; benign rows
// are ignored. Rows come back sorted by success count descending, then
// family name ascending.
std::vector<CoverageRow> coverage_report(
    const std::vector<std::string>& families, const std::vector<int>& labels,
    const std::vector<int>& detected);

std::string coverage_csv(const std::vector<CoverageRow>& rows);

// Byte ranges of matches found by the obfuscation heuristics. These are
// advisory annotations for reports, not detector inputs.
struct MarkSpan {
  size_t begin = 0;
  size_t end = 0;
};

struct ObfuscationMarks {
  std::vector<MarkSpan> base64;
  std::vector<MarkSpan> xor_loop;
  std::vector<MarkSpan> rot13;
  std::vector<MarkSpan> powershell_encoded;
  bool any() const {
    return !base64.empty() || !xor_loop.empty() || !rot13.empty() ||
           !powershell_encoded.empty();
  }
};

// Scans raw script text for common obfuscation tells:
//   base64: a run of 64+ base64 alphabet characters, up to two '=' pads
//   xor_loop: an "xor" token, or a caret inside a for/while loop body
//   rot13: a rot13/rot_13 token or a 13-rotated alphabet literal
//   powershell_encoded: -EncodedCommand, or -enc followed by a base64 run
ObfuscationMarks obfuscation_scan(std::string_view text);

}  // namespace score::eval
