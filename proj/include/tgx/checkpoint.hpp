#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgx/tensor.hpp"

namespace tgx {

// Binary checkpoint, all integers little-endian:
//
//   magic     8 bytes   "TGXCKPT\0"
//   version   u32       kCheckpointVersion
//   dtype     u32       4 (float32) or 8 (float64)
//   meta_len  u64       followed by meta_len bytes of UTF-8 JSON
//   count     u64       number of tensor records
//   record    u32 name_len, name bytes, 4 x u64 dims, numel values of dtype
//
// See docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct CheckpointRecord {
  std::string name;
  Shape shape{};
  std::vector<T> values;
};

template <typename T>
struct Checkpoint {
  std::string metadata_json = "{}";
  std::vector<CheckpointRecord<T>> records;

  const CheckpointRecord<T>* find(const std::string& name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& checkpoint);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

// Reads only the header; lets callers pick the precision before loading.
std::uint32_t checkpoint_dtype_bytes(const std::filesystem::path& path);

}  // namespace tgx
