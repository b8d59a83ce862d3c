#pragma once
// The virtual decoupled cores: a deterministic discrete-event machine that
// executes LoweredPrograms functionally (tile math) and temporally (cost
// model), with VMC CFU/LDU/STU pipelines, VCC handler execution, ticketed
// FIFO dependency queues, first-fit slot allocators and a deadlock watchdog.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uopsim/costmodel.hpp"
#include "uopsim/generator.hpp"

namespace uopsim::machine {

struct MachineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SlotRange {
    uint8_t first = 0;
    uint8_t count = 0;
    friend bool operator==(const SlotRange&, const SlotRange&) = default;
};

// 32-bit occupancy vector, first-fit contiguous allocation, frees in any
// order. `budget` caps the usable low slots (shared memory may not hold 32).
class SlotAllocator {
  public:
    explicit SlotAllocator(uint32_t budget = 32);
    std::optional<SlotRange> alloc(uint32_t n);  // throws MachineError if n out of 1..32
    void free(SlotRange r);                      // throws MachineError on double-free
    uint32_t occupied_count() const;
    uint32_t budget() const { return budget_; }
    uint32_t bits() const { return bits_; }
    bool all_free() const { return bits_ == 0; }

  private:
    uint32_t bits_ = 0;
    uint32_t budget_;
};

struct TraceEvent {
    int64_t ts = 0;   // ns
    int64_t dur = 0;  // ns of active work (waits excluded)
    std::string resource;
    generator::CoreId core;
    std::string name;
    uint32_t stream_index = 0;
    uint64_t instance = 0;  // dynamic execution ordinal on the core
    uint8_t flow = 0;
    uint64_t unit_seq = 0;  // FIFO position within the unit
};

struct WaitEdge {
    generator::CoreId from, to;
    std::string reason;
};

enum class Termination : uint8_t { completed, deadlock };

struct ExecutionReport {
    Termination status = Termination::completed;
    std::vector<generator::CoreId> deadlock_cycle;
    std::vector<WaitEdge> wait_edges;
    int64_t makespan = 0;
    uint64_t traffic_bytes = 0;  // global LOAD/STORE bytes, locals excluded
    std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> busy;
    std::vector<TraceEvent> trace;
    std::map<std::string, std::vector<float>> tensors;
    bool queues_drained = true;
    bool slots_all_free = true;
    uint64_t uops_executed = 0;
    std::vector<int64_t> barrier_times;
    std::string workload_name;
    uint64_t workload_hash = 0;
    std::string profile_name;
    double dram_bw = 0;
    int64_t dram_busy_ns = 0;

    std::string to_json() const;
    static ExecutionReport from_json(const std::string& text);
    std::string to_kv_text() const;
    std::string chrome_trace() const;  // Chrome Trace Event JSON array
};

struct MachineOptions {
    bool record_trace = true;
};

class Machine {
  public:
    Machine(const generator::LoweredProgram& p, const costmodel::HardwareProfile& hw,
            std::map<std::string, std::vector<float>> inputs, MachineOptions opt = {});
    ~Machine();
    Machine(Machine&&) noexcept;
    Machine& operator=(Machine&&) noexcept;

    bool done() const;
    int64_t now() const;

    // Advances the event clock to the next completion; returns the trace
    // events that fired. Empty result means no event could fire.
    std::vector<TraceEvent> step();

    // Steps until all streams halt and queues drain, or until `watchdog`
    // consecutive steps make no progress (then reports a deadlock with its
    // wait-for cycle). Deadlock is a report outcome, not an exception.
    ExecutionReport run(uint64_t watchdog = 1000);

    std::vector<WaitEdge> wait_for_edges() const;
    const SlotAllocator& allocator(uint16_t sm) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Convenience: build + run with synthesized inputs (per the program's
// descriptors and input seed).
ExecutionReport simulate(const generator::LoweredProgram& p,
                         const costmodel::HardwareProfile& hw, MachineOptions opt = {},
                         uint64_t watchdog = 1000);

// The kernel-per-operator ablation: full machine barriers at every operator
// boundary. Requires an unfolded program (loop bodies interleave operator
// ordinals).
generator::LoweredProgram barrierize(generator::LoweredProgram p);

std::map<std::string, std::vector<float>> synthesize_program_inputs(
    const generator::LoweredProgram& p);

}  // namespace uopsim::machine
