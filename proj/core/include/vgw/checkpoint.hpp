#pragma once

#include <cstdint>
#include <string>

#include "vgw/fdcheck.hpp"

namespace vgw {

inline constexpr uint32_t kCheckpointVersion = 1;

// Container layout: magic "VGWF", u32 version, length-prefixed UTF-8 JSON
// config, then one record per tensor (u32 name length, name bytes, u8 dtype
// tag, u32 rank, u64 dims, raw little-endian data), closed by a CRC32 of all
// preceding bytes. Tensors are written as f64; f32 records are widened on
// load. Records are consumed until only the checksum remains.
void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamSet& params);

struct LoadedCheckpoint {
  uint32_t version = 0;
  std::string config_json;
  ParamSet params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Byte-level CRC32 (the zlib polynomial) of a whole file, for cheap equality
// checks in tests and logs. Files that end in their own crc32 trailer, like
// the container above, all hash to the fixed residue 0x2144DF1C; compare
// those by bytes instead.
uint32_t file_crc32(const std::string& path);

}  // namespace vgw
