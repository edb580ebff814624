#pragma once

#include <string>
#include <string_view>

#include "arm/nn.hpp"

namespace arm::tc {

// On-disk layout (little-endian):
//   "ARMCKPT\0" | u32 version | u32 meta_len | meta (UTF-8 JSON)
//   | u32 count | count x { u32 name_len | name | u32 ndim | u64 dims[ndim]
//   | f64 data[prod(dims)] }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;  // JSON document describing the model config
  ParameterSet<double> params;
};

std::string encode_checkpoint(const std::string& metadata,
                              const ParameterSet<double>& params);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const std::string& metadata,
                     const ParameterSet<double>& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace arm::tc
