#pragma once
// Lowers operator graphs to per-core uop streams: adaptive tiling, recipe
// expansion, virtual-flow assignment, dynamic fusion, loop folding, deadlock
// elaboration and redundant-dependency elimination.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uopsim/costmodel.hpp"
#include "uopsim/isa.hpp"
#include "uopsim/workload.hpp"

namespace uopsim::generator {

struct GeneratorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DeadlockError : GeneratorError {
    using GeneratorError::GeneratorError;
};

struct CoreId {
    isa::CoreKind kind = isa::CoreKind::vmc;
    uint16_t sm = 0;
    uint8_t vcc = 0;  // index within the SM, 0 for VMCs

    static CoreId vmc(uint16_t sm) { return {isa::CoreKind::vmc, sm, 0}; }
    static CoreId vcc_id(uint16_t sm, uint8_t v) { return {isa::CoreKind::vcc, sm, v}; }
    std::string name() const;  // "sm0.vmc" / "sm0.vcc1"
    static CoreId parse(const std::string& name);

    friend bool operator==(const CoreId&, const CoreId&) = default;
    friend auto operator<=>(const CoreId& a, const CoreId& b) {
        return std::tie(a.sm, a.kind, a.vcc) <=> std::tie(b.sm, b.kind, b.vcc);
    }
};

struct QueueInfo {
    uint16_t dep_id = 0;
    CoreId producer;
    CoreId consumer;
    uint16_t depth = 4;
    bool local = false;           // rewritten by dynamic fusion: slot handoff, no DRAM
    uint64_t tile_bytes = 0;      // bytes of the carried intermediate tile
};

struct TileDescriptor {
    std::string tensor;
    uint16_t index = 0;
    int64_t base = 0;  // first global tile index of this tensor
    std::vector<int64_t> shape;
    std::vector<int64_t> grid;
    int64_t tile_rows = 0;
    int64_t tile_cols = 0;
    workload::InitKind init = workload::InitKind::random;
    bool external = true;

    int64_t tile_count() const;
    int64_t linear_tile(std::span<const uint16_t> coord) const;          // within tensor
    std::vector<uint16_t> coord_of(int64_t linear) const;
    uint64_t tile_bytes() const { return uint64_t(tile_rows) * tile_cols * 4; }
};

// Per-uop lowering metadata, parallel to each stream. `op` is the operator
// ordinal (drives barrier mode); `task` groups the uops serving one compute
// job; `store_group` links a data store with its fan-out token stores.
struct UopMeta {
    uint32_t op = 0;
    int32_t task = -1;
    int32_t store_group = -1;
};

struct LoweredProgram {
    std::map<CoreId, std::vector<isa::UopWord>> streams;
    std::map<CoreId, std::vector<UopMeta>> meta;
    std::vector<QueueInfo> queues;          // sorted by dep_id
    std::vector<TileDescriptor> descriptors;
    uint16_t slot_budget = 32;              // per VMC
    uint16_t local_queue_depth = 8;
    bool barrier_mode = false;
    uint32_t operator_count = 0;
    std::vector<CoreId> baseline_alloc_order;  // deadlock-free in-order allocation certificate
    std::string workload_name;
    uint64_t workload_hash = 0;
    std::string profile_name;
    uint64_t input_seed = 0;

    const QueueInfo* queue(uint16_t dep) const;
    QueueInfo* queue(uint16_t dep);
    const TileDescriptor* descriptor_for_global_tile(int64_t global) const;
    size_t total_uops() const;

    // Aggregated stream + dependency-pairing checks.
    std::vector<isa::Violation> validate() const;
};

struct GenOptions {
    double theta = 1.2;
    bool flows = true;
    bool fusion = true;
    bool fold = true;
    uint64_t input_seed = 0;
};

// Critical-path driven tiling selection (theta > 1): refine the costliest
// node on any dominant path to its next finer catalog entry until no
// dominant path remains or the estimated gain falls under 1%.
std::map<std::string, workload::TilingChoice> select_tilings(
    const workload::OperatorGraph& g, const costmodel::HardwareProfile& hw, double theta = 1.2);

// Cost-model makespan estimate for a tiling assignment (exposed for the
// tiling tests' exhaustive oracle comparisons).
int64_t estimate_tiling_makespan(const workload::OperatorGraph& g,
                                 const std::map<std::string, workload::TilingChoice>& tilings,
                                 const costmodel::HardwareProfile& hw);

LoweredProgram lower(const workload::OperatorGraph& g,
                     const std::map<std::string, workload::TilingChoice>& tilings,
                     const costmodel::HardwareProfile& hw);

LoweredProgram assign_virtual_flows(LoweredProgram p);
LoweredProgram apply_dynamic_fusion(LoweredProgram p);
LoweredProgram fold_loops(LoweredProgram p);
LoweredProgram fix_deadlocks(LoweredProgram p);  // throws DeadlockError when irreducible
LoweredProgram eliminate_redundant_dependencies(LoweredProgram p);

// Full pipeline in fixed order:
// tilings -> lower -> flows -> fusion -> fold -> deadlock-fix -> redundancy-elim.
LoweredProgram generate(const workload::OperatorGraph& g, const costmodel::HardwareProfile& hw,
                        const GenOptions& opt = {});

// Replays the in-order elaboration following the stored certificate and
// checks the slot budget is never exceeded. Returns false on any violation.
bool replay_certificate(const LoweredProgram& p);

// Cost-model makespan of the baseline (in-order) schedule; shares
// costmodel::uop_latency with the machine.
int64_t estimate_makespan(const LoweredProgram& p, const costmodel::HardwareProfile& hw);

// Statically expands LOOP/REPEAT and resolves DYNAMIC addresses so folded
// and unfolded streams can be compared uop-for-uop.
std::vector<isa::UopWord> unfold_stream(const LoweredProgram& p, const CoreId& core);

// DYNAMIC resolution: add the accumulator to the global tile index (coord)
// or the element offset (literal) and re-derive tensor + coordinate through
// the descriptor table.
isa::AddressSpec resolve_address(const LoweredProgram& p, const isa::AddressSpec& addr,
                                 int64_t acc_value);

// Assembly text + queue-table sidecar.
std::string serialize_stream(const LoweredProgram& p, const CoreId& core);
std::string serialize_sidecar(const LoweredProgram& p);
LoweredProgram parse_program(
    const std::vector<std::pair<std::string, std::string>>& core_streams,  // (core name, text)
    const std::string& sidecar);

}  // namespace uopsim::generator
