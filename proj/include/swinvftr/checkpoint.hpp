#pragma once

#include <string>
#include <utility>
#include <vector>

#include "swinvftr/model.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// On-disk layout (all integers little-endian):
///   "SVCK" | u16 version | u32 config length | config bytes (canonical key=value lines)
///   | u32 record count | records | u64 FNV-1a of every preceding byte
/// record: u16 name length | name | u8 rank | u32 dims[rank] | f32 data
struct CheckpointData {
  KeyValues meta;
  std::vector<std::pair<std::string, Tensor>> records;
};

inline constexpr uint16_t kCheckpointVersion = 1;

void write_checkpoint_data(const CheckpointData& data, const std::string& path);
/// Throws ChecksumError when the trailing hash does not match (including truncation),
/// FormatError for a bad magic or version.
CheckpointData read_checkpoint_data(const std::string& path);
/// The trailing content hash of a checkpoint file.
uint64_t checkpoint_hash(const std::string& path);

void save_checkpoint(const SwinVftr& model, const std::string& path);
SwinVftr load_checkpoint(const std::string& path);
/// Loads weights into an existing model; throws ConfigError listing both
/// configurations when they are incompatible.
void load_checkpoint_into(SwinVftr& model, const std::string& path);
void load_weights_into(SwinVftr& model, const CheckpointData& data);

}  // namespace swinvftr
