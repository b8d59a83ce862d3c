#pragma once
// internal: per-group FLOP accounting shared by the machine, the symbolic
// elaborator and the tiling cost model, so all three price identical work.

#include <cstdint>
#include <span>

#include "uopsim/isa.hpp"

namespace uopsim::detail {

struct TileDims {
    int64_t rows = 0;
    int64_t cols = 0;
};

// FLOPs of input group `gi` out of `ngroups` for one compute uop.
inline uint64_t compute_group_flops(isa::Opcode op, std::span<const TileDims> group,
                                    const TileDims& prologue, const TileDims& out, size_t gi,
                                    size_t ngroups) {
    switch (op) {
        case isa::Opcode::MATVEC:
        case isa::Opcode::GEMM_TILE: {
            const TileDims& b = group[0];
            const TileDims& a = group[1];
            return 2ull * a.rows * a.cols * b.cols;
        }
        case isa::Opcode::ATTN: {
            const TileDims& k = group[0];
            return uint64_t(prologue.rows) * k.rows * (4ull * prologue.cols + 8ull);
        }
        case isa::Opcode::ROPE:
            return 3ull * group[0].rows * group[0].cols;
        case isa::Opcode::RMSNORM:
            return 4ull * group[0].rows * group[0].cols;
        case isa::Opcode::ELEMWISE:
            if (ngroups == 1) return 4ull * group[0].rows * group[0].cols;
            return gi + 1 == ngroups ? uint64_t(group[0].rows) * group[0].cols : 0;
        case isa::Opcode::EMBED:
            return (uint64_t(out.rows) * out.cols) / (ngroups ? ngroups : 1) + 1;
        default:
            return 0;
    }
}

}  // namespace uopsim::detail
