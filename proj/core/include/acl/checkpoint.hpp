#pragma once

#include <string>
#include <utility>
#include <vector>

#include "acl/tensor.hpp"

namespace acl {

// Self-describing tensor container:
//   magic "ACLT", u32 version, then per-tensor records of
//   u32 name length, UTF-8 name bytes, u32 rank, u64 dims[rank],
//   little-endian f64 payload (row-major).
// Records run to end of file. Writing is deterministic in input order; a
// corrupt or wrong-magic file throws CheckpointError before any state leaks.

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;

  const Tensor& get(const std::string& name) const;  // throws CheckpointError if absent
  bool contains(const std::string& name) const;
};

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);
NamedTensors read_checkpoint(const std::string& path);

}  // namespace acl
