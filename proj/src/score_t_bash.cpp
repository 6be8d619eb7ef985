#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "score/score_t.hpp"

// Recursive-descent parser for the shell subset the corpus exercises:
// simple commands, pipelines, and/or lists, redirects, assignments,
// quoting, expansions, command substitution, if/for/while, function
// definitions and grouping. Anything else degrades to ERROR nodes.

namespace score::scoret {
namespace {

enum class Tk {
  word,
  string,
  raw_string,
  simple_exp,
  brace_exp,
  cmdsub_open,
  backtick,
  lparen,
  rparen,
  lbrace,
  rbrace,
  pipe,
  and_and,
  or_or,
  semi,
  amp,
  redir,
  newline,
  comment,
  eof,
};

struct Tok {
  Tk k = Tk::eof;
  std::string text;
  uint32_t b = 0;
  uint32_t e = 0;
  bool glued = false;  // no whitespace between this token and the previous
};

bool name_start(char c) { return std::isalpha(uint8_t(c)) || c == '_'; }
bool name_char(char c) { return std::isalnum(uint8_t(c)) || c == '_'; }

bool word_stop(char c) {
  switch (c) {
    case ' ':
    case '\t':
    case '\r':
    case '\n':
    case '\'':
    case '"':
    case '$':
    case '`':
    case '(':
    case ')':
    case '{':
    case '}':
    case ';':
    case '|':
    case '&':
    case '<':
    case '>':
      return true;
    default:
      return false;
  }
}

std::vector<Tok> lex(std::string_view src) {
  std::vector<Tok> out;
  size_t i = 0;
  const size_t n = src.size();
  uint32_t prev_end = 0;
  bool had_tok = false;
  auto push = [&](Tk k, size_t b, size_t e) {
    Tok t;
    t.k = k;
    t.text.assign(src.substr(b, e - b));
    t.b = uint32_t(b);
    t.e = uint32_t(e);
    t.glued = had_tok && t.b == prev_end;
    prev_end = t.e;
    had_tok = true;
    out.push_back(std::move(t));
  };
  while (i < n) {
    char c = src[i];
    if (c == '\\' && i + 1 < n && src[i + 1] == '\n') {
      i += 2;
      continue;
    }
    if (c == '\n') {
      push(Tk::newline, i, i + 1);
      i++;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      i++;
      continue;
    }
    if (c == '#') {
      size_t j = i;
      while (j < n && src[j] != '\n') j++;
      push(Tk::comment, i, j);
      i = j;
      continue;
    }
    if (c == '\'') {
      size_t j = i + 1;
      while (j < n && src[j] != '\'') j++;
      push(Tk::raw_string, i, j < n ? j + 1 : n);
      i = j < n ? j + 1 : n;
      continue;
    }
    if (c == '"') {
      size_t j = i + 1;
      while (j < n && src[j] != '"') {
        if (src[j] == '\\' && j + 1 < n) j++;
        j++;
      }
      push(Tk::string, i, j < n ? j + 1 : n);
      i = j < n ? j + 1 : n;
      continue;
    }
    if (c == '$') {
      if (i + 1 < n && src[i + 1] == '(') {
        push(Tk::cmdsub_open, i, i + 2);
        i += 2;
        continue;
      }
      if (i + 1 < n && src[i + 1] == '{') {
        size_t j = i + 2;
        while (j < n && src[j] != '}') j++;
        push(Tk::brace_exp, i, j < n ? j + 1 : n);
        i = j < n ? j + 1 : n;
        continue;
      }
      if (i + 1 < n && (name_start(src[i + 1]) || std::isdigit(uint8_t(src[i + 1])))) {
        size_t j = i + 1;
        if (std::isdigit(uint8_t(src[j]))) {
          j++;
        } else {
          while (j < n && name_char(src[j])) j++;
        }
        push(Tk::simple_exp, i, j);
        i = j;
        continue;
      }
      if (i + 1 < n && std::string_view("@#?*!$-").find(src[i + 1]) != std::string_view::npos) {
        push(Tk::simple_exp, i, i + 2);
        i += 2;
        continue;
      }
      push(Tk::word, i, i + 1);
      i++;
      continue;
    }
    if (c == '`') {
      push(Tk::backtick, i, i + 1);
      i++;
      continue;
    }
    if (c == '(') {
      push(Tk::lparen, i, i + 1);
      i++;
      continue;
    }
    if (c == ')') {
      push(Tk::rparen, i, i + 1);
      i++;
      continue;
    }
    if (c == '{') {
      push(Tk::lbrace, i, i + 1);
      i++;
      continue;
    }
    if (c == '}') {
      push(Tk::rbrace, i, i + 1);
      i++;
      continue;
    }
    if (c == '>' || c == '<') {
      size_t j = i + 1;
      if (j < n && src[j] == c) j++;
      push(Tk::redir, i, j);
      i = j;
      continue;
    }
    if (c == '&') {
      if (i + 1 < n && src[i + 1] == '&') {
        push(Tk::and_and, i, i + 2);
        i += 2;
      } else {
        push(Tk::amp, i, i + 1);
        i++;
      }
      continue;
    }
    if (c == '|') {
      if (i + 1 < n && src[i + 1] == '|') {
        push(Tk::or_or, i, i + 2);
        i += 2;
      } else {
        push(Tk::pipe, i, i + 1);
        i++;
      }
      continue;
    }
    if (c == ';') {
      push(Tk::semi, i, i + 1);
      i++;
      continue;
    }
    size_t j = i;
    while (j < n && !word_stop(src[j])) j++;
    if (j == i) j = i + 1;  // lone unhandled byte still makes progress
    push(Tk::word, i, j);
    i = j;
    continue;
  }
  Tok end;
  end.k = Tk::eof;
  end.b = end.e = uint32_t(n);
  out.push_back(end);
  return out;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(uint8_t(c))) return false;
  return true;
}

// NAME=... with an identifier-shaped name
size_t assignment_eq(const std::string& s) {
  if (s.empty() || !name_start(s[0])) return std::string::npos;
  size_t i = 1;
  while (i < s.size() && name_char(s[i])) i++;
  return i < s.size() && s[i] == '=' ? i : std::string::npos;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src), toks_(lex(src)) {}

  AstTree run() {
    tree_.language = Language::bash;
    uint32_t root = tree_.add("program", {0, uint32_t(src_.size())});
    parse_items(root, {}, Tk::eof);
    return std::move(tree_);
  }

 private:
  std::string_view src_;
  std::vector<Tok> toks_;
  size_t p_ = 0;
  AstTree tree_;

  const Tok& cur() const { return toks_[p_]; }
  const Tok& at(size_t off) const {
    size_t i = p_ + off;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  void advance() {
    if (p_ + 1 < toks_.size()) p_++;
  }
  uint32_t tail() const { return p_ > 0 ? toks_[p_ - 1].e : 0; }

  void attach(uint32_t parent, uint32_t child) {
    tree_.nodes[parent].children.push_back(child);
  }

  bool is_word(const char* s) const {
    return cur().k == Tk::word && cur().text == s;
  }
  bool in_stops(const std::vector<std::string>& stops) const {
    if (cur().k != Tk::word) return false;
    for (const auto& s : stops)
      if (cur().text == s) return true;
    return false;
  }

  uint32_t error_here() {
    uint32_t node = tree_.add("ERROR", {cur().b, cur().e});
    advance();
    return node;
  }

  // Statement list. Stops (unconsumed) at a closing token kind or at a
  // stop keyword in command position.
  void parse_items(uint32_t parent, const std::vector<std::string>& stops,
                   Tk closer) {
    while (true) {
      Tk k = cur().k;
      if (k == Tk::eof || k == closer) return;
      if (k == Tk::newline || k == Tk::semi || k == Tk::amp ||
          k == Tk::and_and || k == Tk::or_or) {
        advance();
        continue;
      }
      if (k == Tk::comment) {
        attach(parent, tree_.add("comment", {cur().b, cur().e}));
        advance();
        continue;
      }
      if (in_stops(stops)) return;
      if (k == Tk::rparen || k == Tk::rbrace || k == Tk::backtick) {
        attach(parent, error_here());
        continue;
      }
      attach(parent, parse_pipeline(stops));
    }
  }

  uint32_t parse_pipeline(const std::vector<std::string>& stops) {
    uint32_t first = parse_unit(stops);
    if (cur().k != Tk::pipe) return first;
    uint32_t b = tree_.nodes[first].span.begin;
    std::vector<uint32_t> parts{first};
    while (cur().k == Tk::pipe) {
      advance();
      while (cur().k == Tk::newline) advance();
      parts.push_back(parse_unit(stops));
    }
    uint32_t node = tree_.add("pipeline", {b, tail()});
    tree_.nodes[node].children = std::move(parts);
    return node;
  }

  uint32_t parse_unit(const std::vector<std::string>& stops) {
    if (cur().k == Tk::word) {
      const std::string& w = cur().text;
      if (w == "if") return parse_if();
      if (w == "while" || w == "until") return parse_while();
      if (w == "for") return parse_for();
      if (w == "function") return parse_function_kw();
      if (at(1).k == Tk::lparen && at(2).k == Tk::rparen &&
          assignment_eq(w) == std::string::npos)
        return parse_function_name();
    }
    if (cur().k == Tk::lparen) {
      uint32_t b = cur().b;
      advance();
      uint32_t node = tree_.add("subshell", {b, b});
      parse_items(node, {}, Tk::rparen);
      if (cur().k == Tk::rparen) advance();
      tree_.nodes[node].span.end = tail();
      return node;
    }
    if (cur().k == Tk::lbrace) {
      uint32_t b = cur().b;
      advance();
      uint32_t node = tree_.add("compound_statement", {b, b});
      parse_items(node, {}, Tk::rbrace);
      if (cur().k == Tk::rbrace) advance();
      tree_.nodes[node].span.end = tail();
      return node;
    }
    return parse_command(stops);
  }

  uint32_t parse_command(const std::vector<std::string>& stops) {
    uint32_t b = cur().b;
    uint32_t node = tree_.add("command", {b, b});
    bool assignments_only = true;
    uint32_t pending_fd_begin = UINT32_MAX;
    while (true) {
      Tk k = cur().k;
      if (k == Tk::eof || k == Tk::newline || k == Tk::comment ||
          k == Tk::pipe || k == Tk::and_and || k == Tk::or_or ||
          k == Tk::semi || k == Tk::amp || k == Tk::rparen ||
          k == Tk::rbrace || k == Tk::backtick || k == Tk::lbrace)
        break;
      if (k == Tk::lparen) {
        attach(node, error_here());
        continue;
      }
      if (tree_.nodes[node].children.empty() && in_stops(stops)) break;
      if (k == Tk::redir) {
        attach(node, parse_redirect(pending_fd_begin));
        pending_fd_begin = UINT32_MAX;
        assignments_only = false;
        continue;
      }
      if (k == Tk::word) {
        if (all_digits(cur().text) && at(1).k == Tk::redir && at(1).glued) {
          pending_fd_begin = cur().b;
          advance();
          continue;
        }
        size_t eq = assignment_eq(cur().text);
        if (eq != std::string::npos && assignments_only) {
          attach(node, parse_assignment(eq));
          continue;
        }
        assignments_only = false;
        attach(node, parse_word_like());
        continue;
      }
      assignments_only = false;
      attach(node, parse_word_like());
    }
    tree_.nodes[node].span.end = tail() > b ? tail() : b;
    if (tree_.nodes[node].children.empty()) {
      tree_.nodes[node].kind = "ERROR";
      if (cur().k != Tk::eof) {
        tree_.nodes[node].span = {cur().b, cur().e};
        advance();
      }
    }
    return node;
  }

  // One argument-position token as a node.
  uint32_t parse_word_like() {
    const Tok& t = cur();
    switch (t.k) {
      case Tk::word: {
        const char* kind = all_digits(t.text) ? "number" : "word";
        uint32_t node = tree_.add(kind, {t.b, t.e});
        advance();
        return node;
      }
      case Tk::raw_string: {
        uint32_t node = tree_.add("raw_string", {t.b, t.e});
        advance();
        return node;
      }
      case Tk::string:
        return parse_string();
      case Tk::simple_exp: {
        uint32_t node = tree_.add("simple_expansion", {t.b, t.e});
        advance();
        return node;
      }
      case Tk::brace_exp: {
        uint32_t node = tree_.add("expansion", {t.b, t.e});
        advance();
        return node;
      }
      case Tk::cmdsub_open: {
        uint32_t b = t.b;
        advance();
        uint32_t node = tree_.add("command_substitution", {b, b});
        parse_items(node, {}, Tk::rparen);
        if (cur().k == Tk::rparen) advance();
        tree_.nodes[node].span.end = tail();
        return node;
      }
      case Tk::backtick: {
        uint32_t b = t.b;
        advance();
        uint32_t node = tree_.add("command_substitution", {b, b});
        parse_items(node, {}, Tk::backtick);
        if (cur().k == Tk::backtick) advance();
        tree_.nodes[node].span.end = tail();
        return node;
      }
      default:
        return error_here();
    }
  }

  // Double-quoted string with embedded expansions as children.
  uint32_t parse_string() {
    const Tok t = cur();
    advance();
    uint32_t node = tree_.add("string", {t.b, t.e});
    const std::string& s = t.text;
    for (size_t i = 0; i + 1 < s.size(); i++) {
      if (s[i] == '\\') {
        i++;
        continue;
      }
      if (s[i] != '$') continue;
      if (s[i + 1] == '{') {
        size_t j = i + 2;
        while (j < s.size() && s[j] != '}') j++;
        size_t end = j < s.size() ? j + 1 : s.size();
        attach(node, tree_.add("expansion",
                               {t.b + uint32_t(i), t.b + uint32_t(end)}));
        i = end - 1;
      } else if (name_start(s[i + 1]) || std::isdigit(uint8_t(s[i + 1])) ||
                 std::string_view("@#?*!$").find(s[i + 1]) !=
                     std::string_view::npos) {
        size_t j = i + 1;
        if (name_start(s[j])) {
          while (j < s.size() && name_char(s[j])) j++;
        } else {
          j++;
        }
        attach(node, tree_.add("simple_expansion",
                               {t.b + uint32_t(i), t.b + uint32_t(j)}));
        i = j - 1;
      }
    }
    return node;
  }

  uint32_t parse_assignment(size_t eq) {
    const Tok t = cur();
    advance();
    uint32_t node = tree_.add("variable_assignment", {t.b, t.e});
    attach(node, tree_.add("word", {t.b, t.b + uint32_t(eq)}));
    if (eq + 1 < t.text.size()) {
      std::string value = t.text.substr(eq + 1);
      ByteSpan vs{t.b + uint32_t(eq) + 1, t.e};
      attach(node, tree_.add(all_digits(value) ? "number" : "word", vs));
    } else if (cur().glued &&
               (cur().k == Tk::string || cur().k == Tk::raw_string ||
                cur().k == Tk::simple_exp || cur().k == Tk::brace_exp ||
                cur().k == Tk::cmdsub_open || cur().k == Tk::backtick ||
                cur().k == Tk::word)) {
      attach(node, parse_word_like());
    }
    tree_.nodes[node].span.end = tail();
    return node;
  }

  uint32_t parse_redirect(uint32_t fd_begin) {
    uint32_t b = fd_begin != UINT32_MAX ? fd_begin : cur().b;
    advance();  // the operator
    uint32_t node = tree_.add("file_redirect", {b, b});
    if (cur().k == Tk::amp && at(1).k == Tk::word && at(1).glued) {
      advance();
      attach(node, tree_.add("number", {cur().b, cur().e}));
      advance();
    } else if (cur().k == Tk::word || cur().k == Tk::string ||
               cur().k == Tk::raw_string || cur().k == Tk::simple_exp ||
               cur().k == Tk::brace_exp) {
      attach(node, parse_word_like());
    }
    tree_.nodes[node].span.end = tail();
    return node;
  }

  void expect_word(const char* s) {
    if (is_word(s)) advance();
  }

  uint32_t parse_if() {
    uint32_t b = cur().b;
    advance();
    uint32_t node = tree_.add("if_statement", {b, b});
    parse_items(node, {"then"}, Tk::eof);
    expect_word("then");
    uint32_t body = tree_.add("compound_statement", {tail(), tail()});
    attach(node, body);
    parse_items(body, {"fi", "else", "elif"}, Tk::eof);
    tree_.nodes[body].span.end = tail();
    while (is_word("elif")) {
      uint32_t cb = cur().b;
      advance();
      uint32_t clause = tree_.add("elif_clause", {cb, cb});
      attach(node, clause);
      parse_items(clause, {"then"}, Tk::eof);
      expect_word("then");
      uint32_t cbody = tree_.add("compound_statement", {tail(), tail()});
      attach(clause, cbody);
      parse_items(cbody, {"fi", "else", "elif"}, Tk::eof);
      tree_.nodes[cbody].span.end = tail();
      tree_.nodes[clause].span.end = tail();
    }
    if (is_word("else")) {
      uint32_t cb = cur().b;
      advance();
      uint32_t clause = tree_.add("else_clause", {cb, cb});
      attach(node, clause);
      parse_items(clause, {"fi"}, Tk::eof);
      tree_.nodes[clause].span.end = tail();
    }
    expect_word("fi");
    tree_.nodes[node].span.end = tail();
    return node;
  }

  uint32_t parse_while() {
    uint32_t b = cur().b;
    advance();
    uint32_t node = tree_.add("while_statement", {b, b});
    parse_items(node, {"do"}, Tk::eof);
    expect_word("do");
    uint32_t body = tree_.add("compound_statement", {tail(), tail()});
    attach(node, body);
    parse_items(body, {"done"}, Tk::eof);
    tree_.nodes[body].span.end = tail();
    expect_word("done");
    tree_.nodes[node].span.end = tail();
    return node;
  }

  uint32_t parse_for() {
    uint32_t b = cur().b;
    advance();
    uint32_t node = tree_.add("for_statement", {b, b});
    if (cur().k == Tk::word) {
      attach(node, tree_.add("word", {cur().b, cur().e}));
      advance();
    }
    if (is_word("in")) {
      advance();
      while (cur().k == Tk::word || cur().k == Tk::string ||
             cur().k == Tk::raw_string || cur().k == Tk::simple_exp ||
             cur().k == Tk::brace_exp || cur().k == Tk::cmdsub_open ||
             cur().k == Tk::backtick) {
        if (is_word("do")) break;
        attach(node, parse_word_like());
      }
    }
    while (cur().k == Tk::semi || cur().k == Tk::newline) advance();
    expect_word("do");
    uint32_t body = tree_.add("compound_statement", {tail(), tail()});
    attach(node, body);
    parse_items(body, {"done"}, Tk::eof);
    tree_.nodes[body].span.end = tail();
    expect_word("done");
    tree_.nodes[node].span.end = tail();
    return node;
  }

  uint32_t parse_function_body(uint32_t node) {
    while (cur().k == Tk::newline) advance();
    if (cur().k == Tk::lbrace) {
      uint32_t bb = cur().b;
      advance();
      uint32_t body = tree_.add("compound_statement", {bb, bb});
      attach(node, body);
      parse_items(body, {}, Tk::rbrace);
      if (cur().k == Tk::rbrace) advance();
      tree_.nodes[body].span.end = tail();
    } else if (cur().k != Tk::eof) {
      attach(node, parse_pipeline({}));
    }
    tree_.nodes[node].span.end = tail();
    return node;
  }

  uint32_t parse_function_kw() {
    uint32_t b = cur().b;
    advance();
    uint32_t node = tree_.add("function_definition", {b, b});
    if (cur().k == Tk::word) {
      attach(node, tree_.add("word", {cur().b, cur().e}));
      advance();
    }
    if (cur().k == Tk::lparen && at(1).k == Tk::rparen) {
      advance();
      advance();
    }
    return parse_function_body(node);
  }

  uint32_t parse_function_name() {
    uint32_t b = cur().b;
    uint32_t node = tree_.add("function_definition", {b, b});
    attach(node, tree_.add("word", {cur().b, cur().e}));
    advance();  // name
    advance();  // (
    advance();  // )
    return parse_function_body(node);
  }
};

class BashBackend : public AstBackend {
 public:
  Language language() const override { return Language::bash; }
  AstTree parse(std::string_view source) const override {
    return Parser(source).run();
  }
};

}  // namespace

std::shared_ptr<AstBackend> make_bash_backend() {
  return std::make_shared<BashBackend>();
}

}  // namespace score::scoret
