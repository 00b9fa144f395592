#pragma once

#include <string>
#include <vector>

#include "spgcc/tensor.hpp"

namespace spgcc {

// "SPGW" weight container: magic, u32 tensor count, then per tensor a u32
// rank, u32 dims and a float64 payload.
void save_spgw(const std::vector<Tensor>& tensors, const std::string& path);
std::vector<Tensor> load_spgw(const std::string& path);

}  // namespace spgcc
