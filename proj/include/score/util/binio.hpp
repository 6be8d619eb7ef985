#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "score/common.hpp"

namespace score {

// Little-endian binary buffer writer/reader used by the feature,
// checkpoint and ensemble codecs.
class BinWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(char(v)); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, size_t n) { raw(p, n); }
  void str16(std::string_view s) {
    if (s.size() > UINT16_MAX) throw FormatError("binio: string too long");
    u16(uint16_t(s.size()));
    raw(s.data(), s.size());
  }
  void magic(const char m[4]) { raw(m, 4); }

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void raw(const void* p, size_t n) {
    size_t off = buf_.size();
    buf_.resize(off + n);
    std::memcpy(buf_.data() + off, p, n);
  }
  std::string buf_;
};

class BinReader {
 public:
  explicit BinReader(std::string_view data) : data_(data) {}

  uint8_t u8() { return uint8_t(take(1)[0]); }
  uint16_t u16() { return read_as<uint16_t>(); }
  uint32_t u32() { return read_as<uint32_t>(); }
  uint64_t u64() { return read_as<uint64_t>(); }
  float f32() { return read_as<float>(); }
  double f64() { return read_as<double>(); }
  std::string_view bytes(size_t n) { return take(n); }
  std::string str16() {
    size_t n = u16();
    return std::string(take(n));
  }
  void expect_magic(const char m[4]) {
    if (std::memcmp(take(4).data(), m, 4) != 0)
      throw FormatError("binio: bad magic");
  }
  bool at_end() const { return pos_ == data_.size(); }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  template <class T>
  T read_as() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view take(size_t n) {
    if (pos_ + n > data_.size()) throw FormatError("binio: truncated data");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string_view data_;
  size_t pos_ = 0;
};

}  // namespace score
