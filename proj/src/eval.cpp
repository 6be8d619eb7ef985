#include "score/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace score::eval {

namespace {

void check_parallel(size_t a, size_t b, const char* what) {
  if (a != b)
    throw ConfigError(std::string(what) + ": got " + std::to_string(a) +
                      " scores for " + std::to_string(b) + " labels");
}

}  // namespace

Confusion confusion(const std::vector<double>& scores,
                    const std::vector<int>& labels, double threshold) {
  check_parallel(scores.size(), labels.size(), "confusion");
  Confusion c;
  c.threshold = threshold;
  for (size_t i = 0; i < scores.size(); i++) {
    bool pos = scores[i] >= threshold;
    if (labels[i]) {
      (pos ? c.tp : c.fn)++;
    } else {
      (pos ? c.fp : c.tn)++;
    }
  }
  c.tpr = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  c.fpr = c.fp + c.tn ? double(c.fp) / double(c.fp + c.tn) : 0.0;
  c.precision = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 1.0;
  double pr = c.precision + c.tpr;
  c.f1 = pr > 0 ? 2.0 * c.precision * c.tpr / pr : 0.0;
  return c;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
  check_parallel(scores.size(), labels.size(), "auroc");
  size_t n = scores.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; i++) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  uint64_t n_pos = 0, n_neg = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) j++;
    double midrank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (size_t t = i; t < j; t++) {
      if (labels[order[t]]) {
        rank_sum_pos += midrank;
        n_pos++;
      } else {
        n_neg++;
      }
    }
    i = j;
  }
  if (!n_pos || !n_neg)
    throw ConfigError("auroc needs both classes present");
  double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

double threshold_at_fpr(const std::vector<double>& scores,
                        const std::vector<int>& labels, double target_fpr) {
  check_parallel(scores.size(), labels.size(), "threshold_at_fpr");
  std::vector<double> negs;
  for (size_t i = 0; i < scores.size(); i++)
    if (!labels[i]) negs.push_back(scores[i]);
  if (negs.empty()) return std::numeric_limits<double>::infinity();
  std::sort(negs.begin(), negs.end());
  auto fpr_at = [&](double t) {
    size_t ge = negs.end() - std::lower_bound(negs.begin(), negs.end(), t);
    return double(ge) / double(negs.size());
  };
  std::vector<double> cand(scores);
  cand.push_back(
      std::nextafter(negs.back(), std::numeric_limits<double>::infinity()));
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  for (double t : cand)
    if (fpr_at(t) <= target_fpr) return t;
  return cand.back();  // unreachable: the step above the top negative is 0
}

std::vector<CoverageRow> coverage_report(
    const std::vector<std::string>& families, const std::vector<int>& labels,
    const std::vector<int>& detected) {
  check_parallel(families.size(), labels.size(), "coverage_report");
  check_parallel(detected.size(), labels.size(), "coverage_report");
  std::map<std::string, CoverageRow> by_family;
  for (size_t i = 0; i < labels.size(); i++) {
    if (!labels[i]) continue;
    CoverageRow& row = by_family[families[i]];
    row.family = families[i];
    (detected[i] ? row.success : row.miss)++;
  }
  std::vector<CoverageRow> rows;
  rows.reserve(by_family.size());
  for (auto& [_, row] : by_family) {
    row.ratio = 100.0 * double(row.success) / double(row.success + row.miss);
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(),
            [](const CoverageRow& a, const CoverageRow& b) {
              if (a.success != b.success) return a.success > b.success;
              return a.family < b.family;
            });
  return rows;
}

std::string coverage_csv(const std::vector<CoverageRow>& rows) {
  std::string out = "family,success,miss,ratio\n";
  char buf[64];
  for (const CoverageRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%llu,%llu,%.1f\n",
                  (unsigned long long)r.success, (unsigned long long)r.miss,
                  r.ratio);
    out += r.family;
    out += buf;
  }
  return out;
}

namespace {

bool is_b64_char(unsigned char c) {
  return std::isalnum(c) || c == '+' || c == '/';
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

char lower(unsigned char c) { return char(std::tolower(c)); }

// Case-insensitive token occurrences with non-word characters on both
// sides. Returns begin offsets.
std::vector<size_t> find_token(std::string_view text, std::string_view token) {
  std::vector<size_t> hits;
  if (token.empty() || text.size() < token.size()) return hits;
  for (size_t i = 0; i + token.size() <= text.size(); i++) {
    bool match = true;
    for (size_t j = 0; j < token.size(); j++)
      if (lower(text[i + j]) != lower(token[j])) {
        match = false;
        break;
      }
    if (!match) continue;
    if (i > 0 && is_word_char(text[i - 1])) continue;
    size_t end = i + token.size();
    if (end < text.size() && is_word_char(text[end])) continue;
    hits.push_back(i);
  }
  return hits;
}

// Length of the base64-alphabet run starting at pos, including at most
// two trailing '=' pads.
size_t b64_run_length(std::string_view text, size_t pos) {
  size_t i = pos;
  while (i < text.size() && is_b64_char((unsigned char)text[i])) i++;
  size_t pads = 0;
  while (i < text.size() && text[i] == '=' && pads < 2) {
    i++;
    pads++;
  }
  return i - pos;
}

constexpr size_t kB64MinRun = 64;

}  // namespace

ObfuscationMarks obfuscation_scan(std::string_view text) {
  ObfuscationMarks marks;

  // long base64 runs
  for (size_t i = 0; i < text.size();) {
    if (!is_b64_char((unsigned char)text[i])) {
      i++;
      continue;
    }
    size_t len = b64_run_length(text, i);
    size_t body = len;
    while (body > 0 && text[i + body - 1] == '=') body--;
    if (body >= kB64MinRun) marks.base64.push_back({i, i + len});
    i += len;
  }

  // an explicit xor token anywhere
  for (size_t pos : find_token(text, "xor"))
    marks.xor_loop.push_back({pos, pos + 3});

  // a caret inside the body that follows a for/while header
  std::vector<size_t> loop_heads = find_token(text, "for");
  for (size_t pos : find_token(text, "while")) loop_heads.push_back(pos);
  std::sort(loop_heads.begin(), loop_heads.end());
  constexpr size_t kLoopReach = 400;
  for (size_t head : loop_heads) {
    size_t stop = std::min(text.size(), head + kLoopReach);
    for (size_t i = head; i < stop; i++)
      if (text[i] == '^') marks.xor_loop.push_back({i, i + 1});
  }
  std::sort(marks.xor_loop.begin(), marks.xor_loop.end(),
            [](const MarkSpan& a, const MarkSpan& b) {
              return a.begin < b.begin || (a.begin == b.begin && a.end < b.end);
            });
  marks.xor_loop.erase(std::unique(marks.xor_loop.begin(),
                                   marks.xor_loop.end(),
                                   [](const MarkSpan& a, const MarkSpan& b) {
                                     return a.begin == b.begin &&
                                            a.end == b.end;
                                   }),
                       marks.xor_loop.end());

  // rot13 tokens or a 13-rotated alphabet literal
  for (size_t pos : find_token(text, "rot13"))
    marks.rot13.push_back({pos, pos + 5});
  for (size_t pos : find_token(text, "rot_13"))
    marks.rot13.push_back({pos, pos + 6});
  for (std::string_view table :
       {std::string_view("nopqrstuvwxyzabcdefghijklm"),
        std::string_view("NOPQRSTUVWXYZABCDEFGHIJKLM")}) {
    for (size_t at = text.find(table); at != std::string_view::npos;
         at = text.find(table, at + 1))
      marks.rot13.push_back({at, at + table.size()});
  }
  std::sort(marks.rot13.begin(), marks.rot13.end(),
            [](const MarkSpan& a, const MarkSpan& b) {
              return a.begin < b.begin;
            });

  // powershell -EncodedCommand, or -enc followed by a base64 payload
  for (size_t pos : find_token(text, "-encodedcommand"))
    marks.powershell_encoded.push_back({pos, pos + 15});
  for (size_t pos : find_token(text, "-enc")) {
    size_t i = pos + 4;
    if (i >= text.size() || (text[i] != ' ' && text[i] != '\t')) continue;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) i++;
    size_t len = b64_run_length(text, i);
    size_t body = len;
    while (body > 0 && text[i + body - 1] == '=') body--;
    if (body >= kB64MinRun) marks.powershell_encoded.push_back({pos, i + len});
  }

  return marks;
}

}  // namespace score::eval
