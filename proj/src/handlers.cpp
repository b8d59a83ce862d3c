#include "handlers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace uopsim::machine_detail {

using isa::Opcode;

size_t scratch_floats(const TileDims& out) {
    // accumulator tile + two online-softmax columns
    return size_t(out.rows) * out.cols + 2 * size_t(out.rows) + 8;
}

void HandlerState::begin() {
    scratch.assign(scratch_floats(out), 0.0f);
    if (op == Opcode::ATTN) {
        float* m = scratch.data() + size_t(out.rows) * out.cols;
        for (int64_t r = 0; r < out.rows; ++r) m[r] = -std::numeric_limits<float>::infinity();
    }
}

namespace {

float apply_unary(int32_t func, float x) {
    switch (func) {
        case 0: return x > 0 ? x : 0.0f;                       // relu
        case 1: return x / (1.0f + std::exp(-x));              // silu
        default: throw std::runtime_error("elemwise: bad unary func");
    }
}

}  // namespace

void HandlerState::group(size_t gi, std::span<const GroupInput> in) {
    float* acc = scratch.data();
    switch (op) {
        case Opcode::MATVEC:
        case Opcode::GEMM_TILE: {
            // in[0] = B / vector tile (k x n), in[1] = A tile (m x k)
            const GroupInput& b = in[0];
            const GroupInput& a = in[1];
            for (int64_t r = 0; r < a.dims.rows; ++r)
                for (int64_t c = 0; c < b.dims.cols; ++c) {
                    float s = 0.0f;
                    for (int64_t k = 0; k < a.dims.cols; ++k)
                        s += a.data[r * a.stride + k] * b.data[k * b.stride + c];
                    acc[r * out.cols + c] += s;
                }
            break;
        }
        case Opcode::ATTN: {
            // in[0] = K tile, in[1] = V tile; prologue = q tile; online softmax
            const GroupInput& kt = in[0];
            const GroupInput& vt = in[1];
            const GroupInput& q = prologue;
            float* m = scratch.data() + size_t(out.rows) * out.cols;
            float* l = m + out.rows;
            const float inv_sqrt_d = 1.0f / std::sqrt(float(q.dims.cols));
            std::vector<float> p(size_t(kt.dims.rows));
            for (int64_t r = 0; r < q.dims.rows; ++r) {
                float row_max = m[r];
                for (int64_t j = 0; j < kt.dims.rows; ++j) {
                    float s = 0.0f;
                    for (int64_t d = 0; d < q.dims.cols; ++d)
                        s += q.data[r * q.stride + d] * kt.data[j * kt.stride + d];
                    p[size_t(j)] = s * inv_sqrt_d;
                    row_max = std::max(row_max, p[size_t(j)]);
                }
                float scale = m[r] == -std::numeric_limits<float>::infinity()
                                  ? 0.0f
                                  : std::exp(m[r] - row_max);
                float sum = l[r] * scale;
                for (int64_t c = 0; c < out.cols; ++c) acc[r * out.cols + c] *= scale;
                for (int64_t j = 0; j < kt.dims.rows; ++j) {
                    float w = std::exp(p[size_t(j)] - row_max);
                    sum += w;
                    for (int64_t c = 0; c < out.cols; ++c)
                        acc[r * out.cols + c] += w * vt.data[j * vt.stride + c];
                }
                m[r] = row_max;
                l[r] = sum;
            }
            break;
        }
        case Opcode::ROPE: {
            // in[0] = x tile (rows x 1), in[1] = angle tile; consecutive row pairs
            const GroupInput& x = in[0];
            const GroupInput& t = in[1];
            for (int64_t r = 0; r + 1 < x.dims.rows; r += 2) {
                float th = t.data[r * t.stride];
                float c = std::cos(th), s = std::sin(th);
                float a = x.data[r * x.stride], b = x.data[(r + 1) * x.stride];
                acc[r * out.cols] = a * c - b * s;
                acc[(r + 1) * out.cols] = a * s + b * c;
            }
            break;
        }
        case Opcode::RMSNORM: {
            const GroupInput& x = in[0];
            const GroupInput& w = in[1];
            float ss = 0.0f;
            for (int64_t r = 0; r < x.dims.rows; ++r) {
                float v = x.data[r * x.stride];
                ss += v * v;
            }
            float inv = 1.0f / std::sqrt(ss / float(x.dims.rows) + 1e-5f);
            for (int64_t r = 0; r < x.dims.rows; ++r)
                acc[r * out.cols] = x.data[r * x.stride] * inv * w.data[r * w.stride];
            break;
        }
        case Opcode::ELEMWISE: {
            const GroupInput& x = in[0];
            bool unary = size == 1 && gi == 0 && imm <= 1;
            if (unary) {
                for (int64_t r = 0; r < x.dims.rows; ++r)
                    for (int64_t c = 0; c < x.dims.cols; ++c)
                        acc[r * out.cols + c] = apply_unary(imm, x.data[r * x.stride + c]);
            } else if (gi == 0) {
                for (int64_t r = 0; r < x.dims.rows; ++r)
                    for (int64_t c = 0; c < x.dims.cols; ++c)
                        acc[r * out.cols + c] = x.data[r * x.stride + c];
            } else {
                for (int64_t r = 0; r < x.dims.rows; ++r)
                    for (int64_t c = 0; c < x.dims.cols; ++c) {
                        float& a = acc[r * out.cols + c];
                        float v = x.data[r * x.stride + c];
                        a = imm == 3 ? a * v : a + v;
                    }
            }
            break;
        }
        case Opcode::EMBED: {
            // prologue = id column; groups sweep the table row tiles
            (void)gi;
            const GroupInput& table = in[0];
            const GroupInput& ids = prologue;
            int64_t tile_base = table.row0;
            for (int64_t r = 0; r < out.rows; ++r) {
                int64_t id = std::lround(ids.data[r * ids.stride]);
                int64_t local = id - tile_base;
                if (local < 0 || local >= table.dims.rows) continue;
                for (int64_t c = 0; c < out.cols; ++c)
                    acc[r * out.cols + c] = table.data[local * table.stride + c];
            }
            break;
        }
        default:
            throw std::runtime_error("unhandled compute opcode");
    }
}

void HandlerState::finalize(std::span<float> result) {
    const float* acc = scratch.data();
    if (op == Opcode::ATTN) {
        const float* l = scratch.data() + size_t(out.rows) * out.cols + out.rows;
        for (int64_t r = 0; r < out.rows; ++r) {
            float inv = l[r] > 0 ? 1.0f / l[r] : 0.0f;
            for (int64_t c = 0; c < out.cols; ++c)
                result[r * out_stride + c] = acc[r * out.cols + c] * inv;
        }
        return;
    }
    for (int64_t r = 0; r < out.rows; ++r)
        for (int64_t c = 0; c < out.cols; ++c) result[r * out_stride + c] = acc[r * out.cols + c];
}

}  // namespace uopsim::machine_detail
