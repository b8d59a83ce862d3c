#pragma once
// internal: operator -> per-pair job plans, shared by tiling cost estimation
// and lowering so the scheduler prices exactly what lower() will emit.

#include <optional>
#include <vector>

#include "uopsim/generator.hpp"
#include "uopsim/workload.hpp"

namespace uopsim::generator::detail {

struct Fetch {
    uint16_t tensor = 0;
    std::vector<uint16_t> coord;
};

struct Job {
    uint32_t pair = 0;  // global pair index
    isa::Opcode compute{};
    std::optional<Fetch> prologue;           // held for the whole sweep (q tile, id tile)
    std::vector<std::vector<Fetch>> groups;  // per-iteration input fetches
    Fetch out;
    int32_t imm = 0;
};

struct OpPlan {
    const workload::OperatorNode* node = nullptr;
    uint32_t ordinal = 0;
    int parts = 1;
    std::vector<Job> jobs;
};

// Balanced split of [0, extent) into `parts` non-empty chunks.
std::vector<std::pair<int64_t, int64_t>> split_range(int64_t extent, int parts);

// Topological order of g's nodes (stable for listing order).
std::vector<const workload::OperatorNode*> topo_nodes(const workload::OperatorGraph& g);

std::vector<OpPlan> plan_graph(const workload::OperatorGraph& g,
                               const std::map<std::string, workload::TilingChoice>& tilings,
                               const costmodel::HardwareProfile& hw);

// FLOPs of group `gi` of a job, from actual (edge-trimmed) tile extents.
uint64_t group_flops(const Job& job, size_t gi, const workload::OperatorGraph& g);
uint64_t job_flops(const Job& job, const workload::OperatorGraph& g);

// Tile descriptor table in tensor order with global tile bases.
std::vector<TileDescriptor> build_descriptors(const workload::OperatorGraph& g);

}  // namespace uopsim::generator::detail
