#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "score/nn/tensor.hpp"

namespace score::nn {

// Checkpoint payload: ordered named f32 tensors plus a digest of the
// producing configuration, so mismatched encodings are caught at load.
struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct CheckpointData {
  std::string config_digest;  // sha256 hex of the canonical config text
  std::vector<CheckpointTensor> tensors;
};

void save_checkpoint(const CheckpointData& data,
                     const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path);

template <class Real>
CheckpointData snapshot(const std::vector<Tensor<Real>*>& params,
                        const std::string& config_digest) {
  CheckpointData data;
  data.config_digest = config_digest;
  for (const auto* p : params) {
    CheckpointTensor t;
    t.name = p->name;
    t.shape = p->shape;
    t.values.assign(p->data.begin(), p->data.end());
    data.tensors.push_back(std::move(t));
  }
  return data;
}

template <class Real>
void restore(const CheckpointData& data, std::vector<Tensor<Real>*> params) {
  if (data.tensors.size() != params.size())
    throw FormatError("checkpoint holds " + std::to_string(data.tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); i++) {
    const auto& t = data.tensors[i];
    if (t.name != params[i]->name || t.shape != params[i]->shape)
      throw FormatError("checkpoint tensor mismatch at '" + t.name +
                        "' vs '" + params[i]->name + "'");
    params[i]->data.assign(t.values.begin(), t.values.end());
  }
}

}  // namespace score::nn
