#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kwscl/autodiff/parameters.hpp"

namespace kwscl::ad {

// Binary layout, all integers little-endian:
//   magic "KWSCKPT\0" | u32 version | u32 segment count
//   per segment: u32 name length | name | u8 trainable | u32 rank | u64 dims[rank]
//                | float32 payload[product(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<char> encode_checkpoint(const ParameterVector& params);
void write_checkpoint(const std::filesystem::path& path, const ParameterVector& params);

struct CheckpointSegment {
  std::string name;
  bool trainable = true;
  Shape shape;
  std::vector<float> values;
};

std::vector<CheckpointSegment> decode_checkpoint(const std::vector<char>& bytes);
std::vector<CheckpointSegment> read_checkpoint(const std::filesystem::path& path);

/// Loads values into `params`; names and shapes must match exactly.
void load_checkpoint(const std::vector<CheckpointSegment>& segments, ParameterVector& params);

}  // namespace kwscl::ad
