#pragma once
// Operator-graph ingestion: tensors with declared tiles, operator nodes with
// shape rules, producer/consumer edges, and the per-operator catalog of
// valid tilings.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uopsim/costmodel.hpp"

namespace uopsim::workload {

struct WorkloadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class InitKind : uint8_t { random, zeros, ones, arange };

// 32-bit float elements only in v1; tiles are 2-d over the trailing two
// dimensions, leading dimensions are tiled by one plane each.
struct TensorRef {
    std::string name;
    std::vector<int64_t> shape;  // extents, rank 1..4
    int64_t tile_rows = 0;
    int64_t tile_cols = 0;
    InitKind init = InitKind::random;

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t rows() const;  // second-to-last extent (1 for rank-1 tensors)
    int64_t cols() const;  // last extent
    int64_t elem_count() const;
    uint64_t tile_bytes() const { return uint64_t(tile_rows) * tile_cols * 4; }

    // tile grid: one entry per leading dim, then ceil(rows/tile_rows),
    // ceil(cols/tile_cols)
    std::vector<int64_t> grid() const;
    int64_t tile_count() const;
    // payload extent of one tile, trimmed at the tensor edge
    int64_t tile_rows_at(int64_t row_tile) const;
    int64_t tile_cols_at(int64_t col_tile) const;

    void validate() const;
};

enum class OpKind : uint8_t { MATVEC, GEMM, ATTENTION, ROPE, RMSNORM, MLP, EMBED, ELEMWISE };

std::string_view opkind_name(OpKind k);
std::optional<OpKind> opkind_from_name(std::string_view n);

struct OperatorNode {
    std::string id;
    OpKind kind{};
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, std::string> attrs;  // e.g. elemwise func
};

struct Edge {
    std::string from;    // producer node id
    std::string to;      // consumer node id
    std::string tensor;  // carried tensor
    friend bool operator==(const Edge&, const Edge&) = default;
};

struct OperatorGraph {
    std::vector<TensorRef> tensors;
    std::vector<OperatorNode> nodes;
    std::vector<Edge> edges;

    const TensorRef& tensor(const std::string& name) const;  // throws WorkloadError
    const TensorRef* find_tensor(const std::string& name) const;
    const OperatorNode* find_node(const std::string& id) const;
    const OperatorNode* producer_of(const std::string& tensor) const;
    bool is_external(const std::string& tensor) const;
    uint16_t tensor_index(const std::string& name) const;

    // Checks shape rules per node, single-producer and acyclicity; called by
    // parse_workload and after programmatic construction.
    void validate() const;

    uint64_t content_hash() const;  // identifies the workload in reports
};

OperatorGraph parse_workload(const std::string& text);
std::string serialize_workload(const OperatorGraph& g);

// Deterministic input synthesis for external tensors; produced/intermediate
// tensors are zero-initialized. Keyed by tensor name so the reference
// evaluator and the machine see identical inputs.
std::map<std::string, std::vector<float>> synthesize_inputs(const OperatorGraph& g,
                                                            uint64_t seed);

// ---------------------------------------------------------------------------
// tiling catalog

enum class SplitAxis : uint8_t { M, N, K, token_block, head_block };
std::string_view axis_name(SplitAxis a);

struct TilingChoice {
    std::string node;
    std::map<SplitAxis, int> parts;  // absent axis = 1 part
    int total_parts() const;
    friend bool operator==(const TilingChoice&, const TilingChoice&) = default;
};

// All valid decompositions of `n`, ordered by descending parallelism
// (total parts), deterministic tie-breaking. Throws WorkloadError when no
// decomposition satisfies the slot-size footprint.
std::vector<TilingChoice> decompositions(const OperatorNode& n, const OperatorGraph& g,
                                         const costmodel::HardwareProfile& hw);

// FLOPs of the whole operator (used by the cost model).
uint64_t operator_flops(const OperatorNode& n, const OperatorGraph& g);

}  // namespace uopsim::workload
