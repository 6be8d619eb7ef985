#include "score/score_h.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"
#include "score/util/base64.hpp"
#include "score/util/binio.hpp"
#include "score/util/io.hpp"
#include "score/util/sha256.hpp"

namespace score::scoreh {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr size_t kMaxLineBytes = 1 << 20;

const std::set<std::string> kLangAtoms = {"python", "shell", "bash", "perl"};

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
         c == '\v';
}

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool ident_shaped(std::string_view s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  for (char c : s)
    if (!is_ident_char(c)) return false;
  return true;
}

}  // namespace

std::string truncate_language_atom(const std::string& scope) {
  std::vector<std::string> atoms;
  size_t start = 0;
  for (size_t i = 0; i <= scope.size(); ++i) {
    if (i == scope.size() || scope[i] == '.') {
      atoms.push_back(scope.substr(start, i - start));
      start = i + 1;
    }
  }
  while (!atoms.empty() && kLangAtoms.count(atoms.back())) atoms.pop_back();
  if (atoms.empty()) return "source";
  std::string out = atoms[0];
  for (size_t i = 1; i < atoms.size(); ++i) out += "." + atoms[i];
  return out;
}

namespace {

// Shared token sink: applies contexts, language-atom truncation and
// the bounded-stack rule (innermost scopes win).
class TokenSink {
 public:
  TokenSink(std::vector<ScopeTokenPair>& out, const char* lang_atom)
      : out_(out), lang_atom_(lang_atom) {}

  void emit(std::vector<std::string> contexts, std::string cls, size_t begin,
            size_t end) {
    ScopeTokenPair pair;
    contexts.push_back(std::move(cls));
    if (contexts.size() > 3)
      contexts.erase(contexts.begin(),
                     contexts.begin() + long(contexts.size() - 3));
    pair.scopes.reserve(contexts.size());
    for (auto& c : contexts)
      pair.scopes.push_back(truncate_language_atom(c + "." + lang_atom_));
    pair.span = {begin, end};
    out_.push_back(std::move(pair));
  }

 private:
  std::vector<ScopeTokenPair>& out_;
  const char* lang_atom_;
};

const std::set<std::string> kPyFlow = {
    "if",     "elif",   "else",     "for",  "while", "try",
    "except", "finally", "return",  "break", "continue", "pass",
    "raise",  "with",   "yield",    "assert"};
const std::set<std::string> kPyImport = {"import", "from"};
const std::set<std::string> kPyStorage = {"def", "class", "lambda"};
const std::set<std::string> kPyOperatorWords = {"and", "or", "not", "in",
                                                "is"};
const std::set<std::string> kPyConstants = {"True", "False", "None"};
const std::set<std::string> kPyBuiltins = {
    "print", "len",  "open",  "exec", "eval",  "range", "input", "str",
    "int",   "float", "list", "dict", "set",   "type",  "sorted", "min",
    "max",   "sum",  "abs",   "repr", "getattr", "setattr", "__import__"};

struct PyLineState {
  bool in_triple = false;
  char quote = '"';
};

void tokenize_python_line(std::string_view line, size_t base, TokenSink& sink,
                          PyLineState& st) {
  const std::string kOps = "=+-*/%<>!&|^~@";
  const std::string kPunct = "()[]{},.:;`\\";

  size_t i = 0;
  // Continuation of a multi-line triple-quoted string.
  if (st.in_triple) {
    std::string close(3, st.quote);
    size_t end = line.find(close);
    size_t stop = end == std::string_view::npos ? line.size() : end + 3;
    if (stop > 0)
      sink.emit({}, st.quote == '\'' ? "string.quoted.single"
                                     : "string.quoted.double",
                base, base + stop);
    if (end == std::string_view::npos) return;
    st.in_triple = false;
    i = stop;
  }

  bool import_line = false;
  {
    size_t j = i;
    while (j < line.size() && is_ws(line[j])) ++j;
    size_t k = j;
    while (k < line.size() && is_ident_char(line[k])) ++k;
    std::string first(line.substr(j, k - j));
    import_line = kPyImport.count(first) > 0;
  }

  int paren_depth = 0;
  std::vector<int> call_parens;
  bool pending_call = false;
  bool next_is_defname = false;

  auto contexts = [&]() {
    std::vector<std::string> ctx;
    if (import_line) ctx.push_back("meta.statement.import");
    if (!call_parens.empty()) ctx.push_back("meta.function-call");
    return ctx;
  };

  while (i < line.size()) {
    char c = line[i];
    if (is_ws(c)) {
      ++i;
      continue;
    }
    size_t start = i;

    if (c == '#') {
      sink.emit(contexts(), "comment.line", base + start, base + line.size());
      return;
    }

    if (c == '\'' || c == '"') {
      bool triple = i + 2 < line.size() && line[i + 1] == c && line[i + 2] == c;
      std::string cls =
          c == '\'' ? "string.quoted.single" : "string.quoted.double";
      if (triple) {
        std::string close(3, c);
        size_t end = line.find(close, i + 3);
        if (end == std::string_view::npos) {
          sink.emit(contexts(), cls, base + start, base + line.size());
          st.in_triple = true;
          st.quote = c;
          return;
        }
        i = end + 3;
      } else {
        ++i;
        while (i < line.size()) {
          if (line[i] == '\\' && i + 1 < line.size()) {
            i += 2;
            continue;
          }
          if (line[i] == c) {
            ++i;
            break;
          }
          ++i;
        }
      }
      sink.emit(contexts(), cls, base + start, base + i);
      continue;
    }

    if (is_digit(c)) {
      ++i;
      if (c == '0' && i < line.size() && (line[i] == 'x' || line[i] == 'X')) {
        ++i;
        while (i < line.size() && std::isxdigit(uint8_t(line[i]))) ++i;
      } else {
        while (i < line.size() && is_digit(line[i])) ++i;
        if (i < line.size() && line[i] == '.' && i + 1 < line.size() &&
            is_digit(line[i + 1])) {
          ++i;
          while (i < line.size() && is_digit(line[i])) ++i;
        }
        if (i < line.size() && (line[i] == 'e' || line[i] == 'E')) {
          size_t save = i;
          ++i;
          if (i < line.size() && (line[i] == '+' || line[i] == '-')) ++i;
          if (i < line.size() && is_digit(line[i])) {
            while (i < line.size() && is_digit(line[i])) ++i;
          } else {
            i = save;
          }
        }
      }
      sink.emit(contexts(), "constant.numeric", base + start, base + i);
      continue;
    }

    if (is_ident_start(c)) {
      while (i < line.size() && is_ident_char(line[i])) ++i;
      std::string word(line.substr(start, i - start));

      size_t peek = i;
      while (peek < line.size() && (line[peek] == ' ' || line[peek] == '\t'))
        ++peek;
      bool call_next = peek < line.size() && line[peek] == '(';

      std::string cls;
      if (next_is_defname) {
        cls = "entity.name.function";
        next_is_defname = false;
      } else if (kPyImport.count(word)) {
        cls = "keyword.control.import";
      } else if (kPyStorage.count(word)) {
        cls = "storage.type.function";
        next_is_defname = word != "lambda";
      } else if (kPyFlow.count(word)) {
        cls = "keyword.control.flow";
      } else if (kPyOperatorWords.count(word)) {
        cls = "keyword.operator";
      } else if (kPyConstants.count(word)) {
        cls = "constant.numeric";
      } else if (kPyBuiltins.count(word)) {
        cls = "support.function.builtin";
      } else {
        cls = "variable.other";
      }

      bool callee = call_next && (cls == "variable.other" ||
                                  cls == "support.function.builtin");
      if (callee) pending_call = true;
      auto ctx = contexts();
      if (callee && call_parens.empty()) ctx.push_back("meta.function-call");
      sink.emit(std::move(ctx), cls, base + start, base + i);
      continue;
    }

    if (kOps.find(c) != std::string::npos) {
      while (i < line.size() && kOps.find(line[i]) != std::string::npos) ++i;
      sink.emit(contexts(), "keyword.operator", base + start, base + i);
      continue;
    }

    if (kPunct.find(c) != std::string::npos) {
      if (c == '(') {
        ++paren_depth;
        if (pending_call) {
          call_parens.push_back(paren_depth);
          pending_call = false;
        }
      }
      sink.emit(contexts(), "punctuation.definition", base + start,
                base + start + 1);
      if (c == ')') {
        if (!call_parens.empty() && call_parens.back() == paren_depth)
          call_parens.pop_back();
        if (paren_depth > 0) --paren_depth;
      }
      ++i;
      continue;
    }

    sink.emit(contexts(), "source", base + start, base + start + 1);
    ++i;
  }
}

const std::set<std::string> kShFlow = {"if",   "then", "else", "elif", "fi",
                                       "for",  "while", "until", "do",
                                       "done", "in",   "case", "esac"};
const std::set<std::string> kShBuiltins = {
    "echo",  "cd",    "rm",    "chmod", "curl",  "wget",  "cp",      "mv",
    "mkdir", "tar",   "cat",   "ls",    "grep",  "awk",   "sed",     "find",
    "sleep", "kill",  "touch", "head",  "tail",  "sort",  "uniq",    "cut",
    "wc",    "date",  "nohup", "crontab", "bash", "sh",   "nc",      "gzip",
    "du",    "df",    "free",  "uptime", "who",  "ps",    "ln",      "history",
    "basename", "dirname", "export", "source", "set",    "exec",    "printf",
    "tr",    "xargs", "true",  "false", "exit",  "read",  "local",   "return",
    "eval",  "trap",  "which", "id",    "uname", "whoami", "curl"};

bool sh_word_start(char c) {
  return is_ident_char(c) || c == '.' || c == '/' || c == '~' || c == '+' ||
         c == '%' || c == '@' || c == '-' || c == '*' || c == '?';
}

bool sh_word_char(char c) { return sh_word_start(c) || c == ':'; }

void tokenize_bash_line(std::string_view line, size_t base, TokenSink& sink) {
  const std::string kOps = "&|;<>!=";
  const std::string kPunct = "(){}[]`,";

  size_t i = 0;
  bool cmd_start = true;
  bool prev_space = true;
  bool next_is_defname = false;

  auto emit = [&](const char* cls, size_t b, size_t e) {
    sink.emit({}, cls, base + b, base + e);
  };

  while (i < line.size()) {
    char c = line[i];
    if (is_ws(c)) {
      prev_space = true;
      ++i;
      continue;
    }
    size_t start = i;
    bool was_space = prev_space;
    prev_space = false;

    if (c == '#' && (was_space || cmd_start)) {
      emit("comment.line", start, line.size());
      return;
    }

    if (c == '\'') {
      ++i;
      while (i < line.size() && line[i] != '\'') ++i;
      if (i < line.size()) ++i;
      emit("string.quoted.single", start, i);
      cmd_start = false;
      continue;
    }
    if (c == '"') {
      ++i;
      while (i < line.size()) {
        if (line[i] == '\\' && i + 1 < line.size()) {
          i += 2;
          continue;
        }
        if (line[i] == '"') {
          ++i;
          break;
        }
        ++i;
      }
      emit("string.quoted.double", start, i);
      cmd_start = false;
      continue;
    }

    if (c == '$') {
      if (i + 1 < line.size() && line[i + 1] == '{') {
        size_t end = line.find('}', i + 2);
        i = end == std::string_view::npos ? line.size() : end + 1;
        emit("variable.other", start, i);
        cmd_start = false;
        continue;
      }
      if (i + 1 < line.size() && line[i + 1] == '(') {
        emit("punctuation.definition", start, i + 2);
        i += 2;
        cmd_start = true;
        continue;
      }
      if (i + 1 < line.size() &&
          (is_ident_char(line[i + 1]) ||
           std::string("@#?*!$-").find(line[i + 1]) != std::string::npos)) {
        ++i;
        if (is_ident_start(line[i])) {
          while (i < line.size() && is_ident_char(line[i])) ++i;
        } else {
          ++i;
        }
        emit("variable.other", start, i);
        cmd_start = false;
        continue;
      }
      emit("source", start, i + 1);
      ++i;
      continue;
    }

    if (is_digit(c)) {
      size_t j = i;
      while (j < line.size() && is_digit(line[j])) ++j;
      if (j < line.size() && line[j] == '.' && j + 1 < line.size() &&
          is_digit(line[j + 1])) {
        ++j;
        while (j < line.size() && is_digit(line[j])) ++j;
      }
      if (j >= line.size() || !sh_word_char(line[j])) {
        i = j;
        emit("constant.numeric", start, i);
        cmd_start = false;
        continue;
      }
      // Digit-led word such as 2fast; fall through to the word scanner.
    }

    if (sh_word_start(c)) {
      while (i < line.size() && sh_word_char(line[i])) ++i;
      std::string word(line.substr(start, i - start));

      std::string cls;
      if (next_is_defname) {
        cls = "entity.name.function";
        next_is_defname = false;
      } else if (word == "function") {
        cls = "storage.type.function";
        next_is_defname = true;
      } else if (kShFlow.count(word)) {
        cls = "keyword.control.flow";
        if (word == "then" || word == "do" || word == "else" ||
            word == "elif") {
          emit(cls.c_str(), start, i);
          cmd_start = true;
          continue;
        }
      } else if (i + 1 < line.size() && line[i] == '(' && line[i + 1] == ')' &&
                 ident_shaped(word)) {
        cls = "entity.name.function";
      } else if (cmd_start && kShBuiltins.count(word)) {
        cls = "support.function.builtin";
      } else if (ident_shaped(word)) {
        cls = "variable.other";
      } else {
        cls = "source";
      }
      emit(cls.c_str(), start, i);
      cmd_start = false;
      continue;
    }

    if (kOps.find(c) != std::string::npos) {
      bool restart = false;
      while (i < line.size() && kOps.find(line[i]) != std::string::npos) {
        if (line[i] == ';' || line[i] == '|' || line[i] == '&') restart = true;
        ++i;
      }
      emit("keyword.operator", start, i);
      if (restart) cmd_start = true;
      continue;
    }

    if (kPunct.find(c) != std::string::npos) {
      emit("punctuation.definition", start, i + 1);
      if (c == '(' || c == '`') cmd_start = true;
      ++i;
      continue;
    }

    emit("source", start, i + 1);
    ++i;
  }
}

}  // namespace

std::vector<ScopeTokenPair> tokenize_scopes(std::string_view source,
                                            Language language) {
  if (language != Language::bash && language != Language::python)
    throw UnsupportedLanguageError(std::string("no scope rules for ") +
                                   to_string(language));

  std::vector<ScopeTokenPair> out;
  TokenSink sink(out, language == Language::python ? "python" : "shell");

  PyLineState py_state;
  size_t line_start = 0;
  while (line_start <= source.size()) {
    if (line_start == source.size()) break;
    size_t eol = source.find('\n', line_start);
    size_t line_end = eol == std::string_view::npos ? source.size() : eol;
    std::string_view line = source.substr(line_start, line_end - line_start);

    if (line.size() > kMaxLineBytes) {
      size_t b = 0, e = line.size();
      while (b < e && is_ws(line[b])) ++b;
      while (e > b && is_ws(line[e - 1])) --e;
      if (e > b) sink.emit({}, "source", line_start + b, line_start + e);
    } else if (language == Language::python) {
      tokenize_python_line(line, line_start, sink, py_state);
    } else {
      tokenize_bash_line(line, line_start, sink);
    }

    if (eol == std::string_view::npos) break;
    line_start = eol + 1;
  }
  return out;
}

ScoreHFeatures extract_h(std::string_view source,
                         const corpus::ScriptSample& sample) {
  ScoreHFeatures f;
  f.sha256 = sample.sha256;
  f.language = sample.language;
  f.label = sample.label;
  f.family = sample.family;
  for (auto& tok : tokenize_scopes(source, sample.language)) {
    ScoreHPair pair;
    pair.scopes = std::move(tok.scopes);
    pair.token = std::string(source.substr(tok.span.begin, tok.span.size()));
    f.pairs.push_back(std::move(pair));
  }
  return f;
}

AtomVocab AtomVocab::build(const std::vector<ScoreHFeatures>& docs) {
  std::map<std::string, uint64_t> freq;
  for (const auto& doc : docs)
    for (const auto& pair : doc.pairs)
      for (const auto& scope : pair.scopes) {
        size_t start = 0;
        for (size_t i = 0; i <= scope.size(); ++i) {
          if (i == scope.size() || scope[i] == '.') {
            ++freq[scope.substr(start, i - start)];
            start = i + 1;
          }
        }
      }

  std::vector<std::pair<std::string, uint64_t>> items(freq.begin(),
                                                      freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  AtomVocab v;
  for (auto& [atom, n] : items) {
    v.index_[atom] = uint32_t(v.atoms_.size()) + 2;
    v.atoms_.push_back(atom);
  }
  return v;
}

std::string AtomVocab::serialize() const {
  ordered_json j;
  j["version"] = 1;
  j["pad"] = kPad;
  j["unk"] = kUnk;
  j["atoms"] = atoms_;
  return j.dump(2) + "\n";
}

AtomVocab AtomVocab::deserialize(std::string_view text) {
  auto j = ordered_json::parse(text);
  if (j.value("version", 0) != 1) throw FormatError("atom vocab: bad version");
  AtomVocab v;
  v.atoms_ = j.at("atoms").get<std::vector<std::string>>();
  for (size_t i = 0; i < v.atoms_.size(); ++i)
    v.index_[v.atoms_[i]] = uint32_t(i) + 2;
  return v;
}

void AtomVocab::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

AtomVocab AtomVocab::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::string AtomVocab::hash() const { return sha256_hex(serialize()); }

EncodedScoreH encode_h(const ScoreHFeatures& features, const AtomVocab& vocab,
                       const ScoreHCaps& caps) {
  EncodedScoreH enc;
  size_t n = std::min<size_t>(features.pairs.size(), caps.p_cap);
  enc.n_pairs = uint32_t(n);
  enc.atom_ids.assign(n * caps.l_a, AtomVocab::kPad);
  enc.byte_ids.assign(n * caps.l_b, 0);

  size_t blocks = caps.l_a / caps.atoms_per_scope;
  for (size_t p = 0; p < n; ++p) {
    const auto& pair = features.pairs[p];
    size_t n_scopes = pair.scopes.size();
    size_t first = n_scopes > blocks ? n_scopes - blocks : 0;
    for (size_t s = first; s < n_scopes; ++s) {
      size_t block = s - first;
      const std::string& scope = pair.scopes[s];
      size_t atom_i = 0, start = 0;
      for (size_t i = 0; i <= scope.size() && atom_i < caps.atoms_per_scope;
           ++i) {
        if (i == scope.size() || scope[i] == '.') {
          enc.atom_ids[p * caps.l_a + block * caps.atoms_per_scope + atom_i] =
              vocab.id_of(scope.substr(start, i - start));
          start = i + 1;
          ++atom_i;
        }
      }
    }
    size_t nb = std::min<size_t>(pair.token.size(), caps.l_b);
    for (size_t b = 0; b < nb; ++b)
      enc.byte_ids[p * caps.l_b + b] = uint32_t(uint8_t(pair.token[b])) + 2;
  }
  return enc;
}

void save_h_features(const std::vector<ScoreHFeatures>& docs,
                     const std::filesystem::path& path) {
  std::string body;
  for (const auto& doc : docs) {
    ordered_json j;
    j["sha256"] = doc.sha256;
    j["lang"] = to_string(doc.language);
    j["label"] = to_string(doc.label);
    if (!doc.family.empty()) j["family"] = doc.family;
    ordered_json pairs = ordered_json::array();
    for (const auto& p : doc.pairs) {
      ordered_json jp;
      jp["scopes"] = p.scopes;
      jp["token_b64"] = base64_encode(p.token);
      pairs.push_back(std::move(jp));
    }
    j["pairs"] = std::move(pairs);
    body += j.dump();
    body += '\n';
  }
  write_file(path, body);
}

std::vector<ScoreHFeatures> load_h_features(
    const std::filesystem::path& path) {
  std::vector<ScoreHFeatures> docs;
  for (const auto& line : split_lines(read_file(path))) {
    if (line.empty()) continue;
    auto j = ordered_json::parse(line);
    ScoreHFeatures doc;
    doc.sha256 = j.at("sha256").get<std::string>();
    doc.language = language_from_string(j.at("lang").get<std::string>());
    doc.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("family")) doc.family = j["family"].get<std::string>();
    for (const auto& jp : j.at("pairs")) {
      ScoreHPair p;
      p.scopes = jp.at("scopes").get<std::vector<std::string>>();
      p.token = base64_decode_string(jp.at("token_b64").get<std::string>());
      doc.pairs.push_back(std::move(p));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_encoded_h(const EncodedHFile& file,
                    const std::filesystem::path& path) {
  BinWriter w;
  w.magic("SCRH");
  w.u32(1);
  w.u32(file.caps.p_cap);
  w.u32(file.caps.l_a);
  w.u32(file.caps.l_b);
  w.u32(file.caps.atoms_per_scope);
  w.str16(file.vocab_hash);
  w.u64(file.records.size());
  for (const auto& rec : file.records) {
    if (!is_hex_digest(rec.sha256))
      throw FormatError("encoded features: bad sha256");
    for (size_t i = 0; i < 32; ++i) {
      auto hex = rec.sha256.substr(i * 2, 2);
      w.u8(uint8_t(std::stoi(hex, nullptr, 16)));
    }
    w.u8(uint8_t(rec.language));
    w.u8(uint8_t(rec.label));
    w.str16(rec.family);
    w.u32(rec.enc.n_pairs);
    for (uint32_t id : rec.enc.atom_ids) w.u32(id);
    for (uint32_t id : rec.enc.byte_ids) w.u32(id);
  }
  write_file(path, w.buffer());
}

EncodedHFile load_encoded_h(const std::filesystem::path& path) {
  std::string data = read_file(path);
  BinReader r(data);
  r.expect_magic("SCRH");
  if (r.u32() != 1) throw FormatError("encoded features: bad version");
  EncodedHFile file;
  file.caps.p_cap = r.u32();
  file.caps.l_a = r.u32();
  file.caps.l_b = r.u32();
  file.caps.atoms_per_scope = r.u32();
  file.vocab_hash = r.str16();
  uint64_t n = r.u64();
  file.records.reserve(n);
  for (uint64_t k = 0; k < n; ++k) {
    EncodedHRecord rec;
    auto sha = r.bytes(32);
    rec.sha256 = to_hex(reinterpret_cast<const uint8_t*>(sha.data()), 32);
    rec.language = Language(r.u8());
    rec.label = Label(r.u8());
    rec.family = r.str16();
    rec.enc.n_pairs = r.u32();
    rec.enc.atom_ids.resize(size_t(rec.enc.n_pairs) * file.caps.l_a);
    for (auto& id : rec.enc.atom_ids) id = r.u32();
    rec.enc.byte_ids.resize(size_t(rec.enc.n_pairs) * file.caps.l_b);
    for (auto& id : rec.enc.byte_ids) id = r.u32();
    file.records.push_back(std::move(rec));
  }
  return file;
}

}  // namespace score::scoreh
