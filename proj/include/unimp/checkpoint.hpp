#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "unimp/tensor.hpp"

namespace unimp {

/// Binary layout, little-endian:
///   "UNIMPCK1" | u32 version | str config_json | str fingerprint | u64 seed
///   | u64 epoch | u64 feature_dim | u64 num_classes | u64 edge_dim
///   | u64 count | count x (str name | u64 ndim | ndim x u64 dim | numel x f64)
/// where str is a u64 byte length followed by the bytes.
struct Checkpoint {
  std::string config_json;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t feature_dim = 0;
  std::uint64_t num_classes = 0;
  std::uint64_t edge_dim = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws IntegrityError on a bad magic, unknown version or truncated data.
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Atomic: the bytes go to a temporary sibling which is then renamed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a of text, as 16 lowercase hex digits.
std::string fingerprint(const std::string& text);

}  // namespace unimp
