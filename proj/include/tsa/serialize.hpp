#pragma once

#include <string>

#include "tsa/adam.hpp"
#include "tsa/tensor.hpp"

namespace tsa {

// Checkpoint container, bit-exact by construction:
//   magic "TSA1"
//   header: version u32 LE, tensor_count u32 LE
//   per tensor: name_len u32, name bytes, rank u32, extents u32[rank],
//               float64 payload (row-major, LE)
inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'A', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamMap& params);

// Loaded tensors come back with requires_grad = false.
ParamMap load_checkpoint(const std::string& path);

}  // namespace tsa
