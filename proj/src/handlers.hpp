#pragma once
// internal: functional semantics of the builtin compute uops. The machine
// drives these per handler-script step; scratch holds the accumulation
// state across input groups.

#include <span>
#include <vector>

#include "tilemath.hpp"
#include "uopsim/isa.hpp"

namespace uopsim::machine_detail {

using uopsim::detail::TileDims;

struct GroupInput {
    TileDims dims;
    std::span<const float> data;  // tile_rows*tile_cols padded payload
    int64_t stride = 0;           // padded row stride
    int64_t row0 = 0;             // global first row of the tile
};

struct HandlerState {
    isa::Opcode op{};
    uint16_t size = 0;
    int32_t imm = 0;
    TileDims out;          // actual extents of the result tile
    int64_t out_stride = 0;
    GroupInput prologue;
    std::vector<float> scratch;

    void begin();
    void group(size_t gi, std::span<const GroupInput> inputs);
    void finalize(std::span<float> result);  // writes out.rows x out.cols (padded stride)
};

size_t scratch_floats(const TileDims& out);

}  // namespace uopsim::machine_detail
