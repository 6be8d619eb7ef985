#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "score/score_t.hpp"
#include "score/util/base64.hpp"
#include "score/util/binio.hpp"
#include "score/util/io.hpp"
#include "score/util/sha256.hpp"

namespace score::scoret {

std::shared_ptr<AstBackend> make_bash_backend();
std::shared_ptr<AstBackend> make_python_backend();

namespace {

std::map<Language, std::shared_ptr<AstBackend>>& backend_registry() {
  static std::map<Language, std::shared_ptr<AstBackend>> registry = [] {
    std::map<Language, std::shared_ptr<AstBackend>> m;
    m[Language::bash] = make_bash_backend();
    m[Language::python] = make_python_backend();
    return m;
  }();
  return registry;
}

}  // namespace

void register_backend(std::shared_ptr<AstBackend> backend) {
  backend_registry()[backend->language()] = std::move(backend);
}

bool has_backend(Language language) {
  return backend_registry().count(language) > 0;
}

AstTree parse_ast(std::string_view source, Language language) {
  if (source.find('\0') != std::string_view::npos)
    throw BinaryInputError("input contains NUL bytes");
  auto it = backend_registry().find(language);
  if (it == backend_registry().end())
    throw UnsupportedLanguageError(std::string("no grammar backend for ") +
                                   to_string(language));
  return it->second->parse(source);
}

const std::vector<std::string>& unified_kinds() {
  static const std::vector<std::string> kinds = {
      "program",        "block",
      "comment",        "import_statement",
      "function_definition", "class_definition",
      "if_statement",   "else_clause",
      "for_statement",  "while_statement",
      "try_statement",  "except_clause",
      "return_statement", "assignment",
      "call",           "argument_list",
      "identifier",     "string",
      "number",         "binary_operator",
      "unary_operator", "command",
      "pipeline",       "redirection",
      "variable_expansion", "subshell",
      "error",
  };
  return kinds;
}

bool is_unified_kind(const std::string& kind) {
  const auto& kinds = unified_kinds();
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

const UnifiedVocabMap& UnifiedVocabMap::builtin() {
  static const UnifiedVocabMap instance = [] {
    UnifiedVocabMap m;
    auto add = [&](Language lang, const char* native, const char* unified) {
      m.map_[{lang, native}] = unified;
    };
    const Language sh = Language::bash;
    add(sh, "program", "program");
    add(sh, "comment", "comment");
    add(sh, "command", "command");
    add(sh, "pipeline", "pipeline");
    add(sh, "compound_statement", "block");
    add(sh, "variable_assignment", "assignment");
    add(sh, "string", "string");
    add(sh, "raw_string", "string");
    add(sh, "number", "number");
    add(sh, "word", "identifier");
    add(sh, "simple_expansion", "variable_expansion");
    add(sh, "expansion", "variable_expansion");
    add(sh, "command_substitution", "subshell");
    add(sh, "subshell", "subshell");
    add(sh, "file_redirect", "redirection");
    add(sh, "if_statement", "if_statement");
    add(sh, "elif_clause", "else_clause");
    add(sh, "else_clause", "else_clause");
    add(sh, "for_statement", "for_statement");
    add(sh, "while_statement", "while_statement");
    add(sh, "function_definition", "function_definition");
    add(sh, "ERROR", "error");
    const Language py = Language::python;
    add(py, "module", "program");
    add(py, "block", "block");
    add(py, "comment", "comment");
    add(py, "import_statement", "import_statement");
    add(py, "import_from_statement", "import_statement");
    add(py, "function_definition", "function_definition");
    add(py, "lambda", "function_definition");
    add(py, "class_definition", "class_definition");
    add(py, "if_statement", "if_statement");
    add(py, "conditional_expression", "if_statement");
    add(py, "elif_clause", "else_clause");
    add(py, "else_clause", "else_clause");
    add(py, "finally_clause", "else_clause");
    add(py, "for_statement", "for_statement");
    add(py, "while_statement", "while_statement");
    add(py, "try_statement", "try_statement");
    add(py, "with_statement", "try_statement");
    add(py, "except_clause", "except_clause");
    add(py, "return_statement", "return_statement");
    add(py, "assignment", "assignment");
    add(py, "augmented_assignment", "assignment");
    add(py, "keyword_argument", "assignment");
    add(py, "call", "call");
    add(py, "argument_list", "argument_list");
    add(py, "parameters", "argument_list");
    add(py, "list", "argument_list");
    add(py, "dictionary", "argument_list");
    add(py, "tuple", "argument_list");
    add(py, "identifier", "identifier");
    add(py, "attribute", "identifier");
    add(py, "string", "string");
    add(py, "number", "number");
    add(py, "binary_operator", "binary_operator");
    add(py, "comparison_operator", "binary_operator");
    add(py, "boolean_operator", "binary_operator");
    add(py, "subscript", "binary_operator");
    add(py, "unary_operator", "unary_operator");
    add(py, "ERROR", "error");
    const Language pl = Language::perl;
    add(pl, "source_file", "program");
    add(pl, "compound_statement", "block");
    add(pl, "comment", "comment");
    add(pl, "function_definition", "function_definition");
    add(pl, "call", "call");
    add(pl, "identifier", "identifier");
    add(pl, "string", "string");
    add(pl, "number", "number");
    add(pl, "binary_operator", "binary_operator");
    add(pl, "ERROR", "error");
    return m;
  }();
  return instance;
}

UnifiedVocabMap UnifiedVocabMap::with_overrides_tsv(std::string_view tsv) {
  UnifiedVocabMap m = builtin();
  size_t line_no = 0;
  for (const auto& line : split_lines(std::string(tsv))) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos
                                        : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError("vocab map line " + std::to_string(line_no) +
                        ": expected language<TAB>native<TAB>unified");
    std::string lang_s = line.substr(0, t1);
    std::string native = line.substr(t1 + 1, t2 - t1 - 1);
    std::string unified = line.substr(t2 + 1);
    if (!unified.empty() && unified.back() == '\r') unified.pop_back();
    Language lang = language_from_string(lang_s);
    if (!is_unified_kind(unified))
      throw FormatError("vocab map line " + std::to_string(line_no) + ": '" +
                        unified + "' is not a unified kind");
    m.map_[{lang, native}] = unified;
  }
  return m;
}

const std::string& UnifiedVocabMap::unified_of(
    Language language, const std::string& native_kind) const {
  auto it = map_.find({language, native_kind});
  if (it != map_.end()) return it->second;
  const auto& kinds = unified_kinds();
  auto uit = std::find(kinds.begin(), kinds.end(), native_kind);
  if (uit != kinds.end()) return *uit;
  throw UnmappedKindError(std::string("no unified kind for ") +
                          to_string(language) + ":" + native_kind);
}

AstTree unify(const AstTree& tree, const UnifiedVocabMap& map) {
  AstTree out = tree;
  for (auto& node : out.nodes)
    node.kind = map.unified_of(tree.language, node.kind);
  return out;
}

Traversal traversal_from_string(std::string_view s) {
  if (s == "bft") return Traversal::bft;
  if (s == "dft") return Traversal::dft;
  throw ConfigError("unknown traversal '" + std::string(s) +
                    "' (expected bft or dft)");
}

const char* to_string(Traversal t) {
  return t == Traversal::bft ? "bft" : "dft";
}

std::vector<uint32_t> traversal_order(const AstTree& tree, Traversal t) {
  std::vector<uint32_t> order;
  if (tree.nodes.empty()) return order;
  order.reserve(tree.nodes.size());
  if (t == Traversal::bft) {
    std::deque<uint32_t> queue{0};
    while (!queue.empty()) {
      uint32_t i = queue.front();
      queue.pop_front();
      order.push_back(i);
      for (uint32_t c : tree.nodes[i].children) queue.push_back(c);
    }
  } else {
    std::vector<uint32_t> stack{0};
    while (!stack.empty()) {
      uint32_t i = stack.back();
      stack.pop_back();
      order.push_back(i);
      const auto& kids = tree.nodes[i].children;
      for (auto it = kids.rbegin(); it != kids.rend(); ++it)
        stack.push_back(*it);
    }
  }
  return order;
}

namespace {

std::string span_bytes(std::string_view source, ByteSpan span, uint32_t b_cap) {
  size_t b = std::min(span.begin, source.size());
  size_t e = std::min(span.end, source.size());
  if (e < b) e = b;
  size_t len = std::min<size_t>(e - b, b_cap);
  return std::string(source.substr(b, len));
}

}  // namespace

std::vector<SerializedNode> serialize(const AstTree& tree,
                                      std::string_view source, Traversal t,
                                      const ScoreTCaps& caps) {
  auto order = traversal_order(tree, t);
  if (order.size() > caps.n_cap) order.resize(caps.n_cap);
  std::vector<SerializedNode> out;
  out.reserve(order.size());
  for (uint32_t i : order) {
    const AstNode& node = tree.nodes[i];
    out.push_back({node.kind, span_bytes(source, node.span, caps.b_cap)});
  }
  return out;
}

ScoreTGraph to_graph(const AstTree& tree, std::string_view source,
                     const ScoreTCaps& caps,
                     const corpus::ScriptSample& sample) {
  ScoreTGraph g;
  g.sha256 = sample.sha256;
  g.language = sample.language;
  g.label = sample.label;
  g.family = sample.family;
  auto order = traversal_order(tree, Traversal::bft);
  if (order.size() > caps.n_cap) order.resize(caps.n_cap);
  std::vector<uint32_t> new_index(tree.nodes.size(), UINT32_MAX);
  for (uint32_t ni = 0; ni < order.size(); ni++) new_index[order[ni]] = ni;
  g.nodes.reserve(order.size());
  for (uint32_t i : order) {
    const AstNode& node = tree.nodes[i];
    g.nodes.push_back({node.kind, span_bytes(source, node.span, caps.b_cap)});
  }
  for (uint32_t i : order) {
    for (uint32_t c : tree.nodes[i].children) {
      if (new_index[c] == UINT32_MAX) continue;
      g.edges.emplace_back(new_index[i], new_index[c]);
    }
  }
  return g;
}

ScoreTFeatures extract_t(std::string_view source,
                         const corpus::ScriptSample& sample,
                         const ScoreTCaps& caps, const UnifiedVocabMap& map) {
  AstTree unified = unify(parse_ast(source, sample.language), map);
  ScoreTFeatures out;
  out.sha256 = sample.sha256;
  out.language = sample.language;
  out.label = sample.label;
  out.family = sample.family;
  out.bft = serialize(unified, source, Traversal::bft, caps);
  out.dft = serialize(unified, source, Traversal::dft, caps);
  out.graph = to_graph(unified, source, caps, sample);
  return out;
}

KindVocab KindVocab::build(const std::vector<ScoreTGraph>& docs) {
  std::map<std::string, uint64_t> counts;
  for (const auto& kind : unified_kinds()) counts[kind] = 0;
  for (const auto& doc : docs)
    for (const auto& node : doc.nodes) {
      auto it = counts.find(node.kind);
      if (it != counts.end()) it->second++;
    }
  std::vector<std::string> kinds = unified_kinds();
  std::sort(kinds.begin(), kinds.end(),
            [&](const std::string& a, const std::string& b) {
              if (counts[a] != counts[b]) return counts[a] > counts[b];
              return a < b;
            });
  KindVocab v;
  v.kinds_ = std::move(kinds);
  for (uint32_t i = 0; i < v.kinds_.size(); i++) v.index_[v.kinds_[i]] = i + 2;
  return v;
}

std::string KindVocab::serialize() const {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["pad"] = 0;
  doc["unk"] = 1;
  doc["kinds"] = kinds_;
  return doc.dump(2) + "\n";
}

KindVocab KindVocab::deserialize(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("kind vocab: ") + e.what());
  }
  if (!doc.contains("kinds") || !doc["kinds"].is_array())
    throw FormatError("kind vocab: missing kinds array");
  KindVocab v;
  for (const auto& k : doc["kinds"]) v.kinds_.push_back(k.get<std::string>());
  for (uint32_t i = 0; i < v.kinds_.size(); i++) v.index_[v.kinds_[i]] = i + 2;
  return v;
}

void KindVocab::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

KindVocab KindVocab::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::string KindVocab::hash() const { return sha256_hex(serialize()); }

void save_t_features(const std::vector<ScoreTGraph>& docs,
                     const std::filesystem::path& path) {
  std::string out;
  for (const auto& doc : docs) {
    nlohmann::ordered_json j;
    j["sha256"] = doc.sha256;
    j["lang"] = to_string(doc.language);
    j["label"] = to_string(doc.label);
    if (!doc.family.empty()) j["family"] = doc.family;
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& node : doc.nodes) {
      nlohmann::ordered_json n;
      n["kind"] = node.kind;
      n["bytes_b64"] = base64_encode(node.bytes);
      nodes.push_back(std::move(n));
    }
    j["nodes"] = std::move(nodes);
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [p, c] : doc.edges)
      edges.push_back(nlohmann::ordered_json::array({p, c}));
    j["edges"] = std::move(edges);
    out += j.dump();
    out += "\n";
  }
  write_file(path, out);
}

std::vector<ScoreTGraph> load_t_features(const std::filesystem::path& path) {
  std::vector<ScoreTGraph> docs;
  std::string text = read_file(path);
  size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    line_no++;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    ScoreTGraph doc;
    doc.sha256 = j.at("sha256").get<std::string>();
    doc.language = language_from_string(j.at("lang").get<std::string>());
    doc.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("family")) doc.family = j["family"].get<std::string>();
    for (const auto& n : j.at("nodes")) {
      doc.nodes.push_back(SerializedNode{
          n.at("kind").get<std::string>(),
          base64_decode_string(n.at("bytes_b64").get<std::string>())});
    }
    for (const auto& e : j.at("edges"))
      doc.edges.emplace_back(e.at(0).get<uint32_t>(), e.at(1).get<uint32_t>());
    docs.push_back(std::move(doc));
  }
  return docs;
}

EncodedTRecord encode_t(const std::vector<SerializedNode>& nodes,
                        const KindVocab& vocab, const ScoreTCaps& caps) {
  EncodedTRecord rec;
  rec.n_nodes = uint32_t(std::min<size_t>(nodes.size(), caps.n_cap));
  rec.kind_ids.reserve(rec.n_nodes);
  rec.byte_ids.assign(size_t(rec.n_nodes) * caps.b_cap, 0);
  for (uint32_t i = 0; i < rec.n_nodes; i++) {
    rec.kind_ids.push_back(vocab.id_of(nodes[i].kind));
    const std::string& bytes = nodes[i].bytes;
    size_t len = std::min<size_t>(bytes.size(), caps.b_cap);
    for (size_t b = 0; b < len; b++)
      rec.byte_ids[size_t(i) * caps.b_cap + b] = uint32_t(uint8_t(bytes[b])) + 2;
  }
  return rec;
}

EncodedTRecord encode_t_graph(const ScoreTGraph& graph, const KindVocab& vocab,
                              const ScoreTCaps& caps) {
  EncodedTRecord rec = encode_t(graph.nodes, vocab, caps);
  rec.sha256 = graph.sha256;
  rec.language = graph.language;
  rec.label = graph.label;
  rec.family = graph.family;
  for (const auto& [p, c] : graph.edges)
    if (p < rec.n_nodes && c < rec.n_nodes) rec.edges.emplace_back(p, c);
  return rec;
}

void save_encoded_t(const EncodedTFile& file,
                    const std::filesystem::path& path) {
  BinWriter w;
  w.magic("SCRT");
  w.u32(1);
  w.u8(uint8_t(file.form));
  w.u32(file.caps.n_cap);
  w.u32(file.caps.b_cap);
  w.str16(file.vocab_hash);
  w.u64(file.records.size());
  for (const auto& rec : file.records) {
    if (!is_hex_digest(rec.sha256))
      throw FormatError("encoded record has malformed sha256");
    for (size_t i = 0; i < 32; i++) {
      auto hex = rec.sha256.substr(i * 2, 2);
      w.u8(uint8_t(std::stoi(hex, nullptr, 16)));
    }
    w.u8(uint8_t(rec.language));
    w.u8(uint8_t(rec.label));
    w.str16(rec.family);
    w.u32(rec.n_nodes);
    for (uint32_t id : rec.kind_ids) w.u32(id);
    for (uint32_t i = 0; i < rec.n_nodes; i++) {
      const uint32_t* row = rec.byte_ids.data() + size_t(i) * file.caps.b_cap;
      uint32_t len = file.caps.b_cap;
      while (len > 0 && row[len - 1] == 0) len--;
      w.u16(uint16_t(len));
      for (uint32_t b = 0; b < len; b++) w.u8(uint8_t(row[b] - 2));
    }
    if (file.form == EncodedTForm::graph) {
      w.u32(uint32_t(rec.edges.size()));
      for (const auto& [p, c] : rec.edges) {
        w.u32(p);
        w.u32(c);
      }
    }
  }
  write_file(path, w.buffer());
}

EncodedTFile load_encoded_t(const std::filesystem::path& path) {
  std::string data = read_file(path);
  BinReader r(data);
  r.expect_magic("SCRT");
  uint32_t version = r.u32();
  if (version != 1)
    throw FormatError("unsupported encoded feature version " +
                      std::to_string(version));
  EncodedTFile file;
  file.form = EncodedTForm(r.u8());
  file.caps.n_cap = r.u32();
  file.caps.b_cap = r.u32();
  file.vocab_hash = r.str16();
  uint64_t count = r.u64();
  file.records.reserve(count);
  for (uint64_t n = 0; n < count; n++) {
    EncodedTRecord rec;
    std::string sha(r.bytes(32));
    rec.sha256 = to_hex(reinterpret_cast<const uint8_t*>(sha.data()), 32);
    rec.language = Language(r.u8());
    rec.label = Label(r.u8());
    rec.family = r.str16();
    rec.n_nodes = r.u32();
    rec.kind_ids.reserve(rec.n_nodes);
    for (uint32_t i = 0; i < rec.n_nodes; i++) rec.kind_ids.push_back(r.u32());
    rec.byte_ids.assign(size_t(rec.n_nodes) * file.caps.b_cap, 0);
    for (uint32_t i = 0; i < rec.n_nodes; i++) {
      uint16_t len = r.u16();
      if (len > file.caps.b_cap)
        throw FormatError("node byte run exceeds cap");
      std::string raw(r.bytes(len));
      for (uint16_t b = 0; b < len; b++)
        rec.byte_ids[size_t(i) * file.caps.b_cap + b] =
            uint32_t(uint8_t(raw[b])) + 2;
    }
    if (file.form == EncodedTForm::graph) {
      uint32_t n_edges = r.u32();
      rec.edges.reserve(n_edges);
      for (uint32_t e = 0; e < n_edges; e++) {
        uint32_t p = r.u32();
        uint32_t c = r.u32();
        rec.edges.emplace_back(p, c);
      }
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

}  // namespace score::scoret
