#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "score/common.hpp"
#include "score/corpus.hpp"

namespace score::scoret {

struct AstNode {
  std::string kind;
  ByteSpan span;
  std::vector<uint32_t> children;
};

// Node pool, root at index 0, children ordered left to right.
struct AstTree {
  Language language = Language::unknown;
  std::vector<AstNode> nodes;

  uint32_t add(std::string kind, ByteSpan span) {
    nodes.push_back({std::move(kind), span, {}});
    return uint32_t(nodes.size() - 1);
  }
};

// Grammar backends are pluggable per language; bash and python ship
// in-tree, other languages can be registered by embedders.
class AstBackend {
 public:
  virtual ~AstBackend() = default;
  virtual Language language() const = 0;
  virtual AstTree parse(std::string_view source) const = 0;
};

void register_backend(std::shared_ptr<AstBackend> backend);
bool has_backend(Language language);

// Throws BinaryInputError on NUL bytes, UnsupportedLanguageError when
// no backend is registered. Never throws on weird text; unparseable
// regions become ERROR nodes.
AstTree parse_ast(std::string_view source, Language language);

// The closed cross-language kind set, in canonical order.
const std::vector<std::string>& unified_kinds();
bool is_unified_kind(const std::string& kind);

class UnifiedVocabMap {
 public:
  static const UnifiedVocabMap& builtin();

  // TSV override rows: language<TAB>native_kind<TAB>unified_kind,
  // merged over the builtin table.
  static UnifiedVocabMap with_overrides_tsv(std::string_view tsv);

  const std::string& unified_of(Language language,
                                const std::string& native_kind) const;

 private:
  std::map<std::pair<Language, std::string>, std::string> map_;
};

// Rewrites kinds in place; structure and spans are untouched. Inputs
// already in the unified vocabulary pass through (idempotent).
AstTree unify(const AstTree& tree, const UnifiedVocabMap& map);

enum class Traversal : uint8_t { bft = 0, dft = 1 };

Traversal traversal_from_string(std::string_view s);
const char* to_string(Traversal t);

struct ScoreTCaps {
  uint32_t n_cap = 700;  // max retained nodes
  uint32_t b_cap = 512;  // max bytes carried per node
  bool operator==(const ScoreTCaps&) const = default;
};

// Full traversal order over all nodes (no cap applied).
std::vector<uint32_t> traversal_order(const AstTree& tree, Traversal t);

struct SerializedNode {
  std::string kind;
  std::string bytes;  // span bytes, truncated to b_cap
};

// Linearized (kind, bytes) sequence for the sequential model; first
// n_cap nodes in traversal order.
std::vector<SerializedNode> serialize(const AstTree& tree,
                                      std::string_view source, Traversal t,
                                      const ScoreTCaps& caps);

struct ScoreTGraph {
  std::string sha256;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;
  std::vector<SerializedNode> nodes;  // breadth-first retention order
  std::vector<std::pair<uint32_t, uint32_t>> edges;  // (parent, child)
};

// Graph retention is always breadth-first so every kept node stays
// connected to the root.
ScoreTGraph to_graph(const AstTree& tree, std::string_view source,
                     const ScoreTCaps& caps,
                     const corpus::ScriptSample& sample);

struct ScoreTFeatures {
  std::string sha256;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;
  std::vector<SerializedNode> bft;
  std::vector<SerializedNode> dft;
  ScoreTGraph graph;
};

ScoreTFeatures extract_t(std::string_view source,
                         const corpus::ScriptSample& sample,
                         const ScoreTCaps& caps, const UnifiedVocabMap& map);

// Kind id space mirrors AtomVocab: 0 pad, 1 unk, kinds from 2 ordered
// by descending train frequency then lexicographically. The unified
// set is closed, so every kind is always present.
class KindVocab {
 public:
  static constexpr uint32_t kPad = 0;
  static constexpr uint32_t kUnk = 1;

  static KindVocab build(const std::vector<ScoreTGraph>& docs);

  uint32_t id_of(const std::string& kind) const {
    auto it = index_.find(kind);
    return it == index_.end() ? kUnk : it->second;
  }
  size_t size() const { return kinds_.size() + 2; }
  const std::vector<std::string>& kinds() const { return kinds_; }

  std::string serialize() const;
  static KindVocab deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static KindVocab load(const std::filesystem::path& path);
  std::string hash() const;

 private:
  std::vector<std::string> kinds_;
  std::map<std::string, uint32_t> index_;
};

// JSON-lines graph documents.
void save_t_features(const std::vector<ScoreTGraph>& docs,
                     const std::filesystem::path& path);
std::vector<ScoreTGraph> load_t_features(const std::filesystem::path& path);

enum class EncodedTForm : uint8_t { bft = 0, dft = 1, graph = 2 };

struct EncodedTRecord {
  std::string sha256;
  Language language = Language::unknown;
  Label label = Label::benign;
  std::string family;
  uint32_t n_nodes = 0;
  std::vector<uint32_t> kind_ids;                    // n_nodes
  std::vector<uint32_t> byte_ids;                    // n_nodes * b_cap
  std::vector<std::pair<uint32_t, uint32_t>> edges;  // graph form only
};

struct EncodedTFile {
  EncodedTForm form = EncodedTForm::bft;
  ScoreTCaps caps;
  std::string vocab_hash;
  std::vector<EncodedTRecord> records;
};

EncodedTRecord encode_t(const std::vector<SerializedNode>& nodes,
                        const KindVocab& vocab, const ScoreTCaps& caps);
EncodedTRecord encode_t_graph(const ScoreTGraph& graph, const KindVocab& vocab,
                              const ScoreTCaps& caps);

// Binary encoded form, magic "SCRT", little-endian u32 ids.
void save_encoded_t(const EncodedTFile& file,
                    const std::filesystem::path& path);
EncodedTFile load_encoded_t(const std::filesystem::path& path);

}  // namespace score::scoret
