#pragma once

#include "nnmrom/kernels.hpp"

namespace nnmrom::kernels {

// Defined in the per-architecture translation units. Return nullptr when the
// variant is not compiled in or the CPU lacks the required features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace nnmrom::kernels
