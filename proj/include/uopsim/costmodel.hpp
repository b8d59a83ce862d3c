#pragma once
// Hardware profiles and per-uop latency estimation. The generator's
// scheduler and the machine's timing share this model.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uopsim::isa {
struct UopWord;
}

namespace uopsim::costmodel {

struct HardwareProfile {
    std::string name;
    uint32_t sm_count = 1;
    uint64_t shmem_per_sm = 0;       // bytes
    double dram_bw = 0;              // bytes/sec
    uint32_t vmc_per_sm = 1;
    uint32_t vcc_per_sm = 1;
    uint32_t slot_size = 8192;       // bytes
    uint32_t ldu_count = 2;          // per VMC
    uint32_t stu_count = 1;          // per VMC
    double compute_throughput = 0;   // FLOP/sec per EU; calibration knob, not authoritative
    uint32_t issue_cost_ns = 22;
    uint32_t queue_op_cost_ns = 6;
    uint32_t queue_depth = 4;        // per dep-id queue
    uint32_t local_queue_depth = 8;  // m2c / c2m rings

    // Slots usable per VMC: the occupancy vector caps at 32, shared memory
    // caps at shmem/slot_size (Table-1 class parts do not always admit 32).
    uint32_t slot_budget() const;

    double bytes_per_ns() const { return dram_bw / 1e9; }
    uint32_t pair_count() const { return sm_count * vcc_per_sm; }

    void validate() const;  // throws ProfileError
};

struct ProfileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exactly the three evaluation profiles: H100, GH200, RTX6000 Pro.
std::vector<HardwareProfile> builtin_profiles();

// nullopt if `name` is not a builtin (case-insensitive).
std::optional<HardwareProfile> builtin_profile(const std::string& name);

// Small synthetic profiles for tests and bundled experiment configs.
HardwareProfile make_test_profile(const std::string& name, uint32_t pairs,
                                  double dram_bw, double flops, uint32_t slots = 32);

std::string serialize_profile(const HardwareProfile& hw);
HardwareProfile parse_profile(const std::string& text);

// Work attributed to one uop; the machine fills these from actual tile
// shapes, the generator from the tiling plan.
struct WorkEstimate {
    uint64_t bytes = 0;  // global memory moved
    uint64_t flops = 0;
};

// Latency in integer nanoseconds, rounded up. `active_vmcs` is the number
// of VMCs concurrently sharing DRAM (processor sharing).
int64_t uop_latency(const isa::UopWord& u, const HardwareProfile& hw,
                    const WorkEstimate& work, uint32_t active_vmcs = 1);

// Convenience: derives bytes as size * slot_size for memory uops, zero FLOPs.
int64_t uop_latency(const isa::UopWord& u, const HardwareProfile& hw);

int64_t transfer_ns(uint64_t bytes, const HardwareProfile& hw, uint32_t active_vmcs = 1);
int64_t compute_ns(uint64_t flops, const HardwareProfile& hw);

}  // namespace uopsim::costmodel
