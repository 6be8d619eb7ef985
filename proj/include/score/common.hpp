#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace score {

enum class Language : uint8_t { bash = 0, python = 1, perl = 2, unknown = 3 };
enum class Label : uint8_t { benign = 0, malicious = 1 };

inline const char* to_string(Language l) {
  switch (l) {
    case Language::bash: return "bash";
    case Language::python: return "python";
    case Language::perl: return "perl";
    default: return "unknown";
  }
}

inline const char* to_string(Label l) {
  return l == Label::malicious ? "malicious" : "benign";
}

inline Language language_from_string(std::string_view s) {
  if (s == "bash") return Language::bash;
  if (s == "python") return Language::python;
  if (s == "perl") return Language::perl;
  return Language::unknown;
}

inline Label label_from_string(std::string_view s) {
  if (s == "malicious") return Label::malicious;
  if (s == "benign") return Label::benign;
  throw std::invalid_argument("unknown label: " + std::string(s));
}

// Half-open byte range into the original source buffer.
struct ByteSpan {
  size_t begin = 0;
  size_t end = 0;
  size_t size() const { return end - begin; }
  bool operator==(const ByteSpan&) const = default;
};

struct ScoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : ScoreError {
  using ScoreError::ScoreError;
};

struct FormatError : ScoreError {
  using ScoreError::ScoreError;
};

struct ConfigError : ScoreError {
  using ScoreError::ScoreError;
};

struct UnsupportedLanguageError : ScoreError {
  using ScoreError::ScoreError;
};

struct BinaryInputError : ScoreError {
  using ScoreError::ScoreError;
};

struct UnmappedKindError : ScoreError {
  using ScoreError::ScoreError;
};

}  // namespace score
