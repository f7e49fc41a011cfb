#pragma once

// JVC1 tensor checkpoints.
//
//   "JVC1"  u32 count
//   count x { u16 name_len, name bytes (UTF-8), u8 rank, rank x u32 dims,
//             prod(dims) x f32 }
//
// All integers and floats are little-endian. Values are stored in 32-bit
// precision. An optional free-text manifest rides along as a rank-1 tensor
// named "__manifest__" holding one byte per element.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "imagine/graph.hpp"
#include "imagine/tensor.hpp"

namespace imagine {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::string manifest;

  const Tensor* find(const std::string& name) const;
};

inline constexpr const char* kManifestTensor = "__manifest__";

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter in store order.
Checkpoint to_checkpoint(const ParamStore& params, std::string manifest = {});

/// Copies checkpoint values into an existing store. Every store parameter
/// must be present with a matching shape.
void restore_params(ParamStore& params, const Checkpoint& ckpt);

}  // namespace imagine
