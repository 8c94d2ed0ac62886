#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "menan/optim.hpp"
#include "menan/params.hpp"

namespace menan::numerics {

/// Checkpoint container, version 1. All integers and floats little-endian.
///
///   char[8]  magic "MENANCK1"
///   u32      version (1)
///   u64      step counter
///   string   metadata (JSON text)
///   u32      number of parameter records, then records
///   u32      number of moment records, then records
///
/// string := u32 byte length, bytes
/// record := string name, u32 rank, u64 dims[rank], f64 values[prod(dims)]
///
/// Moment records are named "<param>/m" and "<param>/v". The optimizer
/// update counter of each group is stored in the metadata.
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint64_t step = 0;
  std::string metadata;
  std::vector<CheckpointRecord> params;
  std::vector<CheckpointRecord> moments;

  const CheckpointRecord* find_param(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void append_params(Checkpoint& ckpt, const ParamSet& set);
void append_moments(Checkpoint& ckpt, const Adam& optimizer);

/// Copies stored values into matching parameters; every parameter of the
/// set must be present with the same shape.
void load_params(const Checkpoint& ckpt, ParamSet& set);
/// Restores moments for every parameter the optimizer tracks, if stored.
void load_moments(const Checkpoint& ckpt, Adam& optimizer);

}  // namespace menan::numerics
