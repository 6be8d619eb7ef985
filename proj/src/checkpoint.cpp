#include "score/nn/checkpoint.hpp"

#include "score/common.hpp"
#include "score/util/binio.hpp"
#include "score/util/io.hpp"

namespace score::nn {

void save_checkpoint(const CheckpointData& data,
                     const std::filesystem::path& path) {
  BinWriter w;
  w.magic("SCNN");
  w.u32(1);
  w.str16(data.config_digest);
  w.u32(uint32_t(data.tensors.size()));
  for (const auto& t : data.tensors) {
    w.str16(t.name);
    w.u8(uint8_t(t.shape.size()));
    for (int d : t.shape) w.u32(uint32_t(d));
    for (float v : t.values) w.f32(v);
  }
  write_file(path, w.buffer());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::string raw = read_file(path);
  BinReader r(raw);
  r.expect_magic("SCNN");
  uint32_t version = r.u32();
  if (version != 1)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  CheckpointData data;
  data.config_digest = r.str16();
  uint32_t count = r.u32();
  data.tensors.reserve(count);
  for (uint32_t i = 0; i < count; i++) {
    CheckpointTensor t;
    t.name = r.str16();
    uint8_t rank = r.u8();
    size_t numel = 1;
    for (uint8_t d = 0; d < rank; d++) {
      t.shape.push_back(int(r.u32()));
      numel *= size_t(t.shape.back());
    }
    t.values.reserve(numel);
    for (size_t v = 0; v < numel; v++) t.values.push_back(r.f32());
    data.tensors.push_back(std::move(t));
  }
  return data;
}

}  // namespace score::nn
