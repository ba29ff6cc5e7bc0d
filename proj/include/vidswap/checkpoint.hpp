#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace vidswap {

inline constexpr int kCheckpointFormatVersion = 1;

/// Single-file archive: a JSON metadata record plus named tensors.
///
/// Layout (little endian):
///   magic "VSWPCKPT" | u32 format_version | u64 metadata bytes | metadata JSON
///   | u64 tensor count | per tensor: u32 name bytes, name, u8 dtype,
///   u32 rank, i64 dims[rank], raw contiguous data.
struct CheckpointArchive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

std::string serialize_checkpoint(const CheckpointArchive& archive);
CheckpointArchive deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointArchive& archive);
CheckpointArchive read_checkpoint(const std::filesystem::path& path);

}  // namespace vidswap
