#pragma once

#include <string>
#include <vector>

#include "flsim/nn.hpp"
#include "flsim/tensor.hpp"

namespace flsim {

// Checkpoint container: magic "FLCK", u16 format version, u16 block count,
// then per block: u8 rank, u32 little-endian dims, f32 little-endian values.
// Blocks are the model's parameter tensors in order, followed by running
// mean/var pairs for each batchnorm layer when present. Round-trips are
// bit-exact.

constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const Model& model);
std::vector<Tensor> read_checkpoint_blocks(const std::string& path);
Model model_from_checkpoint(const std::string& path,
                            const std::vector<LayerSpec>& specs);

}  // namespace flsim
