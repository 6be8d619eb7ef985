#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "score/score_t.hpp"

// Indentation-driven recursive-descent parser for the python subset
// the corpus exercises: imports, def/class, if/elif/else, for, while,
// try/except/finally, with, return, assignments and a conventional
// expression grammar (calls, attributes, subscripts, literals,
// lambdas). Lines that do not parse become ERROR nodes.

namespace score::scoret {
namespace {

struct PTok {
  enum Kind { ident, number, str, op } k = op;
  std::string text;
  uint32_t b = 0;
  uint32_t e = 0;
};

struct PLine {
  int indent = 0;
  bool comment_only = false;
  uint32_t b = 0;
  uint32_t e = 0;
  std::vector<PTok> toks;
};

bool id_start(char c) { return std::isalpha(uint8_t(c)) || c == '_'; }
bool id_char(char c) { return std::isalnum(uint8_t(c)) || c == '_'; }

bool string_prefix(const std::string& s) {
  if (s.empty() || s.size() > 2) return false;
  for (char c : s)
    if (std::string_view("rRbBuUfF").find(c) == std::string_view::npos)
      return false;
  return true;
}

const char* kMultiOps[] = {"**=", "//=", ">>=", "<<=", "!=", "==", "<=",
                           ">=", "->", ":=", "+=", "-=", "*=", "/=",
                           "%=", "&=", "|=", "^=", "**", "//", "<<", ">>"};

std::vector<PLine> split_lines(std::string_view src) {
  std::vector<PLine> lines;
  size_t i = 0;
  const size_t n = src.size();
  while (i < n) {
    size_t line_b = i;
    int indent = 0;
    while (i < n && (src[i] == ' ' || src[i] == '\t')) {
      indent += src[i] == '\t' ? 8 : 1;
      i++;
    }
    if (i >= n) break;
    if (src[i] == '\n' || src[i] == '\r') {
      while (i < n && src[i] != '\n') i++;
      if (i < n) i++;
      continue;
    }
    if (src[i] == '#') {
      size_t j = i;
      while (j < n && src[j] != '\n') j++;
      PLine line;
      line.indent = indent;
      line.comment_only = true;
      line.b = uint32_t(i);
      line.e = uint32_t(j);
      lines.push_back(std::move(line));
      i = j < n ? j + 1 : n;
      continue;
    }
    PLine line;
    line.indent = indent;
    line.b = uint32_t(line_b);
    int depth = 0;
    while (i < n) {
      char c = src[i];
      if (c == '\n') {
        if (depth > 0) {
          i++;
          continue;
        }
        break;
      }
      if (c == '\r' || c == ' ' || c == '\t') {
        i++;
        continue;
      }
      if (c == '\\' && i + 1 < n && src[i + 1] == '\n') {
        i += 2;
        continue;
      }
      if (c == '#') {
        while (i < n && src[i] != '\n') i++;
        continue;
      }
      if (id_start(c)) {
        size_t j = i + 1;
        while (j < n && id_char(src[j])) j++;
        std::string text(src.substr(i, j - i));
        if (string_prefix(text) && j < n && (src[j] == '\'' || src[j] == '"')) {
          // string literal prefix; fall through to the string scanner
        } else {
          line.toks.push_back({PTok::ident, std::move(text), uint32_t(i), uint32_t(j)});
          i = j;
          continue;
        }
        i = j;
        c = src[i];
        size_t b = i - text.size();
        char q = c;
        size_t k;
        if (i + 2 < n && src[i + 1] == q && src[i + 2] == q) {
          k = i + 3;
          while (k + 2 < n && !(src[k] == q && src[k + 1] == q && src[k + 2] == q)) {
            if (src[k] == '\\') k++;
            k++;
          }
          k = k + 2 < n ? k + 3 : n;
        } else {
          k = i + 1;
          while (k < n && src[k] != q && src[k] != '\n') {
            if (src[k] == '\\' && k + 1 < n) k++;
            k++;
          }
          if (k < n && src[k] == q) k++;
        }
        line.toks.push_back({PTok::str, std::string(src.substr(b, k - b)),
                             uint32_t(b), uint32_t(k)});
        i = k;
        continue;
      }
      if (c == '\'' || c == '"') {
        char q = c;
        size_t k;
        if (i + 2 < n && src[i + 1] == q && src[i + 2] == q) {
          k = i + 3;
          while (k + 2 < n && !(src[k] == q && src[k + 1] == q && src[k + 2] == q)) {
            if (src[k] == '\\') k++;
            k++;
          }
          k = k + 2 < n ? k + 3 : n;
        } else {
          k = i + 1;
          while (k < n && src[k] != q && src[k] != '\n') {
            if (src[k] == '\\' && k + 1 < n) k++;
            k++;
          }
          if (k < n && src[k] == q) k++;
        }
        line.toks.push_back({PTok::str, std::string(src.substr(i, k - i)),
                             uint32_t(i), uint32_t(k)});
        i = k;
        continue;
      }
      if (std::isdigit(uint8_t(c)) ||
          (c == '.' && i + 1 < n && std::isdigit(uint8_t(src[i + 1])))) {
        size_t j = i;
        if (c == '0' && i + 1 < n &&
            (src[i + 1] == 'x' || src[i + 1] == 'X' || src[i + 1] == 'o' ||
             src[i + 1] == 'O' || src[i + 1] == 'b' || src[i + 1] == 'B')) {
          j = i + 2;
          while (j < n && (std::isalnum(uint8_t(src[j])) || src[j] == '_')) j++;
        } else {
          while (j < n && (std::isdigit(uint8_t(src[j])) || src[j] == '_')) j++;
          if (j < n && src[j] == '.') {
            j++;
            while (j < n && (std::isdigit(uint8_t(src[j])) || src[j] == '_')) j++;
          }
          if (j < n && (src[j] == 'e' || src[j] == 'E')) {
            size_t k = j + 1;
            if (k < n && (src[k] == '+' || src[k] == '-')) k++;
            if (k < n && std::isdigit(uint8_t(src[k]))) {
              j = k;
              while (j < n && std::isdigit(uint8_t(src[j]))) j++;
            }
          }
        }
        line.toks.push_back({PTok::number, std::string(src.substr(i, j - i)),
                             uint32_t(i), uint32_t(j)});
        i = j;
        continue;
      }
      bool matched = false;
      for (const char* m : kMultiOps) {
        size_t len = std::char_traits<char>::length(m);
        if (src.substr(i, len) == m) {
          line.toks.push_back({PTok::op, std::string(m), uint32_t(i), uint32_t(i + len)});
          i += len;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (c == '(' || c == '[' || c == '{') depth++;
      if ((c == ')' || c == ']' || c == '}') && depth > 0) depth--;
      line.toks.push_back({PTok::op, std::string(1, c), uint32_t(i), uint32_t(i + 1)});
      i++;
    }
    line.e = line.toks.empty() ? uint32_t(i) : line.toks.back().e;
    if (!line.toks.empty()) lines.push_back(std::move(line));
    if (i < n) i++;  // the terminating newline
  }
  return lines;
}

struct Fail {};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src), lines_(split_lines(src)) {}

  AstTree run() {
    tree_.language = Language::python;
    uint32_t root = tree_.add("module", {0, uint32_t(src_.size())});
    while (li_ < lines_.size()) {
      if (lines_[li_].comment_only) {
        attach(root, tree_.add("comment", {lines_[li_].b, lines_[li_].e}));
        li_++;
        continue;
      }
      parse_statement(root);
    }
    return std::move(tree_);
  }

 private:
  std::string_view src_;
  std::vector<PLine> lines_;
  size_t li_ = 0;
  AstTree tree_;
  const std::vector<PTok>* toks_ = nullptr;
  size_t ti_ = 0;

  void attach(uint32_t parent, uint32_t child) {
    tree_.nodes[parent].children.push_back(child);
  }

  // token cursor over the current line
  bool at_end() const { return ti_ >= toks_->size(); }
  const PTok& cur() const {
    if (at_end()) throw Fail{};
    return (*toks_)[ti_];
  }
  bool is_op(const char* s) const {
    return !at_end() && cur().k == PTok::op && cur().text == s;
  }
  bool is_kw(const char* s) const {
    return !at_end() && cur().k == PTok::ident && cur().text == s;
  }
  void require_op(const char* s) {
    if (!is_op(s)) throw Fail{};
    ti_++;
  }
  uint32_t line_end() const { return lines_[li_ - 1].e; }

  static bool first_is(const PLine& line, const char* kw) {
    return !line.toks.empty() && line.toks[0].k == PTok::ident &&
           line.toks[0].text == kw;
  }

  void parse_statement(uint32_t parent) {
    const PLine& line = lines_[li_];
    size_t mark = tree_.nodes.size();
    size_t li_mark = li_;
    try {
      toks_ = &line.toks;
      ti_ = 0;
      uint32_t node;
      if (is_kw("import"))
        node = parse_import();
      else if (is_kw("from"))
        node = parse_from_import();
      else if (is_kw("def"))
        node = parse_def();
      else if (is_kw("class"))
        node = parse_class();
      else if (is_kw("if"))
        node = parse_if();
      else if (is_kw("for"))
        node = parse_for();
      else if (is_kw("while"))
        node = parse_while();
      else if (is_kw("try"))
        node = parse_try();
      else if (is_kw("with"))
        node = parse_with();
      else if (is_kw("return"))
        node = parse_return();
      else if (is_kw("elif") || is_kw("else") || is_kw("except") ||
               is_kw("finally"))
        throw Fail{};  // clause without a matching header
      else
        node = parse_expr_statement();
      attach(parent, node);
    } catch (const Fail&) {
      tree_.nodes.resize(mark);
      li_ = li_mark;
      attach(parent, tree_.add("ERROR", {lines_[li_].b, lines_[li_].e}));
      li_++;
    }
  }

  // Consumes the header line's remainder; either an inline body after
  // the colon or an indented suite on the following lines.
  uint32_t parse_suite_after_colon(int header_indent) {
    require_op(":");
    uint32_t block = tree_.add("block", {line_end(), line_end()});
    if (!at_end()) {
      tree_.nodes[block].span.begin = cur().b;
      uint32_t inner = parse_simple_statement();
      attach(block, inner);
      tree_.nodes[block].span.end = line_end();
      li_++;
      return block;
    }
    li_++;
    if (li_ < lines_.size() && lines_[li_].indent > header_indent) {
      int ind = lines_[li_].indent;
      tree_.nodes[block].span.begin = lines_[li_].b;
      while (li_ < lines_.size() && lines_[li_].indent >= ind) {
        if (lines_[li_].comment_only) {
          attach(block, tree_.add("comment", {lines_[li_].b, lines_[li_].e}));
          li_++;
          continue;
        }
        parse_statement(block);
      }
      tree_.nodes[block].span.end = lines_[li_ - 1].e;
    }
    return block;
  }

  uint32_t parse_simple_statement() {
    if (is_kw("return")) return parse_return_inline();
    return parse_assignment_or_expr();
  }

  uint32_t parse_import() {
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("import_statement", {b, lines_[li_].e});
    while (!at_end()) {
      attach(node, parse_dotted_name());
      if (is_kw("as")) {
        ti_++;
        attach(node, parse_identifier());
      }
      if (is_op(","))
        ti_++;
      else
        break;
    }
    li_++;
    return node;
  }

  uint32_t parse_from_import() {
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("import_from_statement", {b, lines_[li_].e});
    attach(node, parse_dotted_name());
    if (is_kw("import")) ti_++;
    while (!at_end()) {
      if (is_op("*")) {
        ti_++;
        break;
      }
      if (is_op("(") || is_op(")")) {
        ti_++;
        continue;
      }
      attach(node, parse_identifier());
      if (is_kw("as")) {
        ti_++;
        attach(node, parse_identifier());
      }
      if (is_op(","))
        ti_++;
      else
        break;
    }
    li_++;
    return node;
  }

  uint32_t parse_identifier() {
    if (at_end() || cur().k != PTok::ident) throw Fail{};
    uint32_t node = tree_.add("identifier", {cur().b, cur().e});
    ti_++;
    return node;
  }

  uint32_t parse_dotted_name() {
    if (at_end() || cur().k != PTok::ident) throw Fail{};
    uint32_t b = cur().b;
    uint32_t e = cur().e;
    ti_++;
    while (is_op(".")) {
      ti_++;
      if (at_end() || cur().k != PTok::ident) throw Fail{};
      e = cur().e;
      ti_++;
    }
    return tree_.add("identifier", {b, e});
  }

  uint32_t parse_def() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("function_definition", {b, b});
    attach(node, parse_identifier());
    uint32_t params = tree_.add("parameters", {cur().b, cur().b});
    attach(node, params);
    require_op("(");
    while (!is_op(")")) {
      if (is_op("*") || is_op("**")) {
        ti_++;
        continue;
      }
      uint32_t name = parse_identifier();
      if (is_op("=")) {
        uint32_t eq_b = tree_.nodes[name].span.begin;
        ti_++;
        uint32_t value = parse_expression();
        uint32_t kw = tree_.add("keyword_argument",
                                {eq_b, tree_.nodes[value].span.end});
        attach(kw, name);
        attach(kw, value);
        attach(params, kw);
      } else {
        attach(params, name);
      }
      if (is_op(",")) ti_++;
    }
    tree_.nodes[params].span.end = cur().e;
    ti_++;  // )
    if (is_op("->")) {
      ti_++;
      parse_expression();
    }
    attach(node, parse_suite_after_colon(indent));
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_class() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("class_definition", {b, b});
    attach(node, parse_identifier());
    if (is_op("(")) {
      uint32_t ab = cur().b;
      ti_++;
      uint32_t args = tree_.add("argument_list", {ab, ab});
      attach(node, args);
      while (!is_op(")")) {
        attach(args, parse_expression());
        if (is_op(",")) ti_++;
      }
      tree_.nodes[args].span.end = cur().e;
      ti_++;
    }
    attach(node, parse_suite_after_colon(indent));
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_if() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("if_statement", {b, b});
    attach(node, parse_expression());
    attach(node, parse_suite_after_colon(indent));
    while (li_ < lines_.size() && lines_[li_].indent == indent &&
           first_is(lines_[li_], "elif")) {
      toks_ = &lines_[li_].toks;
      ti_ = 0;
      uint32_t cb = cur().b;
      ti_++;
      uint32_t clause = tree_.add("elif_clause", {cb, cb});
      attach(node, clause);
      attach(clause, parse_expression());
      attach(clause, parse_suite_after_colon(indent));
      tree_.nodes[clause].span.end = lines_[li_ - 1].e;
    }
    if (li_ < lines_.size() && lines_[li_].indent == indent &&
        first_is(lines_[li_], "else")) {
      toks_ = &lines_[li_].toks;
      ti_ = 0;
      uint32_t cb = cur().b;
      ti_++;
      uint32_t clause = tree_.add("else_clause", {cb, cb});
      attach(node, clause);
      attach(clause, parse_suite_after_colon(indent));
      tree_.nodes[clause].span.end = lines_[li_ - 1].e;
    }
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_for() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("for_statement", {b, b});
    attach(node, parse_identifier());
    while (is_op(",")) {
      ti_++;
      attach(node, parse_identifier());
    }
    if (!is_kw("in")) throw Fail{};
    ti_++;
    attach(node, parse_expression());
    attach(node, parse_suite_after_colon(indent));
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_while() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("while_statement", {b, b});
    attach(node, parse_expression());
    attach(node, parse_suite_after_colon(indent));
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_try() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("try_statement", {b, b});
    attach(node, parse_suite_after_colon(indent));
    while (li_ < lines_.size() && lines_[li_].indent == indent &&
           first_is(lines_[li_], "except")) {
      toks_ = &lines_[li_].toks;
      ti_ = 0;
      uint32_t cb = cur().b;
      ti_++;
      uint32_t clause = tree_.add("except_clause", {cb, cb});
      attach(node, clause);
      if (!is_op(":")) {
        attach(clause, parse_expression());
        if (is_kw("as")) {
          ti_++;
          attach(clause, parse_identifier());
        }
      }
      attach(clause, parse_suite_after_colon(indent));
      tree_.nodes[clause].span.end = lines_[li_ - 1].e;
    }
    if (li_ < lines_.size() && lines_[li_].indent == indent &&
        first_is(lines_[li_], "else")) {
      toks_ = &lines_[li_].toks;
      ti_ = 0;
      uint32_t cb = cur().b;
      ti_++;
      uint32_t clause = tree_.add("else_clause", {cb, cb});
      attach(node, clause);
      attach(clause, parse_suite_after_colon(indent));
      tree_.nodes[clause].span.end = lines_[li_ - 1].e;
    }
    if (li_ < lines_.size() && lines_[li_].indent == indent &&
        first_is(lines_[li_], "finally")) {
      toks_ = &lines_[li_].toks;
      ti_ = 0;
      uint32_t cb = cur().b;
      ti_++;
      uint32_t clause = tree_.add("finally_clause", {cb, cb});
      attach(node, clause);
      attach(clause, parse_suite_after_colon(indent));
      tree_.nodes[clause].span.end = lines_[li_ - 1].e;
    }
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_with() {
    int indent = lines_[li_].indent;
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("with_statement", {b, b});
    while (true) {
      attach(node, parse_expression());
      if (is_kw("as")) {
        ti_++;
        attach(node, parse_identifier());
      }
      if (is_op(","))
        ti_++;
      else
        break;
    }
    attach(node, parse_suite_after_colon(indent));
    tree_.nodes[node].span.end = lines_[li_ - 1].e;
    return node;
  }

  uint32_t parse_return() {
    uint32_t node = parse_return_inline();
    li_++;
    return node;
  }

  uint32_t parse_return_inline() {
    uint32_t b = cur().b;
    uint32_t e = cur().e;
    ti_++;
    uint32_t node = tree_.add("return_statement", {b, e});
    if (!at_end() && !is_op(":")) {
      uint32_t value = parse_expression_list();
      attach(node, value);
      tree_.nodes[node].span.end = tree_.nodes[value].span.end;
    }
    return node;
  }

  uint32_t parse_expr_statement() {
    uint32_t node = parse_assignment_or_expr();
    li_++;
    return node;
  }

  uint32_t parse_assignment_or_expr() {
    uint32_t left = parse_expression_list();
    if (is_op("=")) {
      ti_++;
      uint32_t right = parse_assignment_or_expr_rhs();
      uint32_t node = tree_.add("assignment", {tree_.nodes[left].span.begin,
                                               tree_.nodes[right].span.end});
      attach(node, left);
      attach(node, right);
      return node;
    }
    if (!at_end() && cur().k == PTok::op && cur().text.size() >= 2 &&
        cur().text.back() == '=' && cur().text != "==" && cur().text != "!=" &&
        cur().text != "<=" && cur().text != ">=") {
      ti_++;
      uint32_t right = parse_expression_list();
      uint32_t node =
          tree_.add("augmented_assignment", {tree_.nodes[left].span.begin,
                                             tree_.nodes[right].span.end});
      attach(node, left);
      attach(node, right);
      return node;
    }
    return left;
  }

  uint32_t parse_assignment_or_expr_rhs() {
    uint32_t value = parse_expression_list();
    if (is_op("=")) {
      ti_++;
      uint32_t right = parse_assignment_or_expr_rhs();
      uint32_t node = tree_.add("assignment", {tree_.nodes[value].span.begin,
                                               tree_.nodes[right].span.end});
      attach(node, value);
      attach(node, right);
      return node;
    }
    return value;
  }

  uint32_t parse_expression_list() {
    uint32_t first = parse_expression();
    if (!is_op(",")) return first;
    std::vector<uint32_t> parts{first};
    while (is_op(",")) {
      ti_++;
      if (at_end() || is_op("=") || is_op(":")) break;
      parts.push_back(parse_expression());
    }
    uint32_t node =
        tree_.add("tuple", {tree_.nodes[parts.front()].span.begin,
                            tree_.nodes[parts.back()].span.end});
    tree_.nodes[node].children = std::move(parts);
    return node;
  }

  uint32_t parse_expression() {
    if (is_kw("lambda")) return parse_lambda();
    uint32_t body = parse_or();
    if (is_kw("if")) {
      ti_++;
      uint32_t cond = parse_or();
      uint32_t node = tree_.add("conditional_expression",
                                {tree_.nodes[body].span.begin, 0});
      attach(node, body);
      attach(node, cond);
      if (is_kw("else")) {
        ti_++;
        attach(node, parse_expression());
      }
      const auto& kids = tree_.nodes[node].children;
      tree_.nodes[node].span.end = tree_.nodes[kids.back()].span.end;
      return node;
    }
    return body;
  }

  uint32_t parse_lambda() {
    uint32_t b = cur().b;
    ti_++;
    uint32_t node = tree_.add("lambda", {b, b});
    uint32_t params = tree_.add("parameters", {b, b});
    attach(node, params);
    while (!at_end() && !is_op(":")) {
      if (cur().k == PTok::ident) {
        attach(params, parse_identifier());
      } else {
        ti_++;
      }
      if (is_op(",")) ti_++;
    }
    require_op(":");
    uint32_t body = parse_expression();
    attach(node, body);
    tree_.nodes[node].span.end = tree_.nodes[body].span.end;
    return node;
  }

  uint32_t fold_binary(const char* kind, uint32_t left, uint32_t right) {
    uint32_t node = tree_.add(kind, {tree_.nodes[left].span.begin,
                                     tree_.nodes[right].span.end});
    attach(node, left);
    attach(node, right);
    return node;
  }

  uint32_t parse_or() {
    uint32_t left = parse_and();
    while (is_kw("or")) {
      ti_++;
      left = fold_binary("boolean_operator", left, parse_and());
    }
    return left;
  }

  uint32_t parse_and() {
    uint32_t left = parse_not();
    while (is_kw("and")) {
      ti_++;
      left = fold_binary("boolean_operator", left, parse_not());
    }
    return left;
  }

  uint32_t parse_not() {
    if (is_kw("not")) {
      uint32_t b = cur().b;
      ti_++;
      uint32_t operand = parse_not();
      uint32_t node =
          tree_.add("unary_operator", {b, tree_.nodes[operand].span.end});
      attach(node, operand);
      return node;
    }
    return parse_comparison();
  }

  bool at_comparison_op() const {
    if (at_end()) return false;
    if (cur().k == PTok::op)
      return cur().text == "<" || cur().text == ">" || cur().text == "<=" ||
             cur().text == ">=" || cur().text == "==" || cur().text == "!=";
    if (cur().k == PTok::ident)
      return cur().text == "in" || cur().text == "is" || cur().text == "not";
    return false;
  }

  uint32_t parse_comparison() {
    uint32_t left = parse_bit_or();
    while (at_comparison_op()) {
      if (is_kw("not")) {
        ti_++;
        if (!is_kw("in")) throw Fail{};
      }
      if (is_kw("is")) {
        ti_++;
        if (is_kw("not")) ti_++;
      } else {
        ti_++;
      }
      left = fold_binary("comparison_operator", left, parse_bit_or());
    }
    return left;
  }

  uint32_t parse_bit_or() {
    uint32_t left = parse_bit_xor();
    while (is_op("|")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_bit_xor());
    }
    return left;
  }

  uint32_t parse_bit_xor() {
    uint32_t left = parse_bit_and();
    while (is_op("^")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_bit_and());
    }
    return left;
  }

  uint32_t parse_bit_and() {
    uint32_t left = parse_shift();
    while (is_op("&")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_shift());
    }
    return left;
  }

  uint32_t parse_shift() {
    uint32_t left = parse_arith();
    while (is_op("<<") || is_op(">>")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_arith());
    }
    return left;
  }

  uint32_t parse_arith() {
    uint32_t left = parse_term();
    while (is_op("+") || is_op("-")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_term());
    }
    return left;
  }

  uint32_t parse_term() {
    uint32_t left = parse_factor();
    while (is_op("*") || is_op("/") || is_op("%") || is_op("//")) {
      ti_++;
      left = fold_binary("binary_operator", left, parse_factor());
    }
    return left;
  }

  uint32_t parse_factor() {
    if (is_op("-") || is_op("+") || is_op("~")) {
      uint32_t b = cur().b;
      ti_++;
      uint32_t operand = parse_factor();
      uint32_t node =
          tree_.add("unary_operator", {b, tree_.nodes[operand].span.end});
      attach(node, operand);
      return node;
    }
    return parse_power();
  }

  uint32_t parse_power() {
    uint32_t base = parse_postfix();
    if (is_op("**")) {
      ti_++;
      return fold_binary("binary_operator", base, parse_factor());
    }
    return base;
  }

  uint32_t parse_postfix() {
    uint32_t node = parse_atom();
    while (!at_end()) {
      if (is_op("(")) {
        uint32_t ab = cur().b;
        ti_++;
        uint32_t args = tree_.add("argument_list", {ab, ab});
        while (!is_op(")")) {
          attach(args, parse_argument());
          if (is_op(","))
            ti_++;
          else
            break;
        }
        require_op(")");
        tree_.nodes[args].span.end = (*toks_)[ti_ - 1].e;
        uint32_t call = tree_.add("call", {tree_.nodes[node].span.begin,
                                           tree_.nodes[args].span.end});
        attach(call, node);
        attach(call, args);
        node = call;
        continue;
      }
      if (is_op(".")) {
        ti_++;
        uint32_t name = parse_identifier();
        uint32_t attr = tree_.add("attribute", {tree_.nodes[node].span.begin,
                                                tree_.nodes[name].span.end});
        attach(attr, node);
        attach(attr, name);
        node = attr;
        continue;
      }
      if (is_op("[")) {
        ti_++;
        uint32_t sub = tree_.add("subscript", {tree_.nodes[node].span.begin, 0});
        attach(sub, node);
        while (!is_op("]")) {
          if (is_op(":")) {
            ti_++;
            continue;
          }
          attach(sub, parse_expression());
        }
        require_op("]");
        tree_.nodes[sub].span.end = (*toks_)[ti_ - 1].e;
        node = sub;
        continue;
      }
      break;
    }
    return node;
  }

  uint32_t parse_argument() {
    if (is_op("*") || is_op("**")) {
      ti_++;
      return parse_expression();
    }
    if (!at_end() && cur().k == PTok::ident && ti_ + 1 < toks_->size() &&
        (*toks_)[ti_ + 1].k == PTok::op && (*toks_)[ti_ + 1].text == "=") {
      uint32_t name = parse_identifier();
      ti_++;  // =
      uint32_t value = parse_expression();
      uint32_t node =
          tree_.add("keyword_argument", {tree_.nodes[name].span.begin,
                                         tree_.nodes[value].span.end});
      attach(node, name);
      attach(node, value);
      return node;
    }
    return parse_expression();
  }

  uint32_t parse_atom() {
    if (at_end()) throw Fail{};
    const PTok& t = cur();
    if (t.k == PTok::ident) {
      if (t.text == "lambda") return parse_lambda();
      return parse_identifier();
    }
    if (t.k == PTok::number) {
      uint32_t node = tree_.add("number", {t.b, t.e});
      ti_++;
      return node;
    }
    if (t.k == PTok::str) {
      uint32_t b = t.b;
      uint32_t e = t.e;
      ti_++;
      while (!at_end() && cur().k == PTok::str) {
        e = cur().e;
        ti_++;
      }
      return tree_.add("string", {b, e});
    }
    if (is_op("(")) {
      uint32_t b = t.b;
      ti_++;
      if (is_op(")")) {
        ti_++;
        return tree_.add("tuple", {b, (*toks_)[ti_ - 1].e});
      }
      uint32_t inner = parse_expression();
      if (is_op(",")) {
        std::vector<uint32_t> parts{inner};
        while (is_op(",")) {
          ti_++;
          if (is_op(")")) break;
          parts.push_back(parse_expression());
        }
        require_op(")");
        uint32_t node = tree_.add("tuple", {b, (*toks_)[ti_ - 1].e});
        tree_.nodes[node].children = std::move(parts);
        return node;
      }
      if (is_kw("for")) {
        uint32_t node = tree_.add("list", {b, b});
        tree_.nodes[node].children.push_back(inner);
        return parse_comprehension_tail(node, ")");
      }
      require_op(")");
      return inner;
    }
    if (is_op("[")) {
      uint32_t b = t.b;
      ti_++;
      uint32_t node = tree_.add("list", {b, b});
      if (!is_op("]")) {
        uint32_t first = parse_expression();
        if (is_kw("for")) {
          tree_.nodes[node].children.push_back(first);
          return parse_comprehension_tail(node, "]");
        }
        attach(node, first);
        while (is_op(",")) {
          ti_++;
          if (is_op("]")) break;
          attach(node, parse_expression());
        }
      }
      require_op("]");
      tree_.nodes[node].span.end = (*toks_)[ti_ - 1].e;
      return node;
    }
    if (is_op("{")) {
      uint32_t b = t.b;
      ti_++;
      uint32_t node = tree_.add("dictionary", {b, b});
      while (!is_op("}")) {
        attach(node, parse_expression());
        if (is_op(":")) {
          ti_++;
          attach(node, parse_expression());
        }
        if (is_op(","))
          ti_++;
        else
          break;
      }
      require_op("}");
      tree_.nodes[node].span.end = (*toks_)[ti_ - 1].e;
      return node;
    }
    throw Fail{};
  }

  // `expr for target in iter [if cond]` up to the closing bracket;
  // the element is already attached to node.
  uint32_t parse_comprehension_tail(uint32_t node, const char* closer) {
    while (is_kw("for")) {
      ti_++;
      attach(node, parse_identifier());
      while (is_op(",")) {
        ti_++;
        attach(node, parse_identifier());
      }
      if (!is_kw("in")) throw Fail{};
      ti_++;
      attach(node, parse_or());
      while (is_kw("if")) {
        ti_++;
        attach(node, parse_or());
      }
    }
    require_op(closer);
    tree_.nodes[node].span.end = (*toks_)[ti_ - 1].e;
    return node;
  }
};

class PythonBackend : public AstBackend {
 public:
  Language language() const override { return Language::python; }
  AstTree parse(std::string_view source) const override {
    return Parser(source).run();
  }
};

}  // namespace

std::shared_ptr<AstBackend> make_python_backend() {
  return std::make_shared<PythonBackend>();
}

}  // namespace score::scoret
