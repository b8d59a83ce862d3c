// Symbolic in-order elaboration of a LoweredProgram: interprets every core
// serially (round-robin, lowest core first), tracking slot occupancy and
// queue capacities. Backs fix_deadlocks, the baseline-order certificate,
// replay verification and the generator-side makespan estimate.

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <set>

#include "tilemath.hpp"
#include "uopsim/generator.hpp"
#include "uopsim/util.hpp"

namespace uopsim::generator {

using isa::Opcode;
using isa::UopWord;
using uopsim::detail::TileDims;

namespace {

struct SymMsg {
    uint16_t slots = 0;
    int64_t time = 0;
    TileDims dims;
};

struct SymQueue {
    std::deque<SymMsg> q;
    uint32_t depth = 4;
    uint64_t pushed = 0, popped = 0;
    bool can_push(size_t n = 1) const { return q.size() + n <= depth; }
};

struct CoreCursor {
    CoreId id;
    const std::vector<UopWord>* s = nullptr;
    const std::vector<UopMeta>* m = nullptr;
    size_t pc = 0;
    std::vector<std::pair<size_t, uint32_t>> loops;  // body start, remaining
    std::array<int64_t, 16> acc{};
    int64_t clock = 0;
    bool halted() const { return pc >= s->size(); }
};

struct Elab {
    const LoweredProgram& p;
    const costmodel::HardwareProfile* hw;  // null: untimed
    std::vector<CoreCursor> cores;
    std::map<uint16_t, SymQueue> dep_q;
    std::map<std::pair<uint16_t, uint8_t>, SymQueue> m2c, c2m;
    std::map<uint16_t, uint32_t> slots_used;                    // per sm
    std::map<uint16_t, uint32_t> peak;                          // per sm
    std::map<std::pair<uint16_t, int32_t>, int64_t> task_held;  // (sm, task) -> slots
    std::vector<CoreId> alloc_order;
    std::map<CoreId, std::vector<uint8_t>> executed;  // per static index (depth-0 repairs)
    std::string stall;

    explicit Elab(const LoweredProgram& prog, const costmodel::HardwareProfile* hwp)
        : p(prog), hw(hwp) {
        for (const auto& [core, s] : p.streams) {
            CoreCursor c;
            c.id = core;
            c.s = &s;
            c.m = &p.meta.at(core);
            cores.push_back(c);
            executed[core] = std::vector<uint8_t>(s.size(), 0);
            for (const auto& u : s) {
                if (u.send() || (u.recv() && core.kind == isa::CoreKind::vmc)) {
                    m2c[{core.sm, u.reg1}].depth = p.local_queue_depth;
                    c2m[{core.sm, u.reg1}].depth = p.local_queue_depth;
                }
            }
        }
        for (const auto& q : p.queues) dep_q[q.dep_id].depth = q.depth;
        for (const auto& [core, s] : p.streams)
            if (core.kind == isa::CoreKind::vcc) {
                m2c[{core.sm, core.vcc}].depth = p.local_queue_depth;
                c2m[{core.sm, core.vcc}].depth = p.local_queue_depth;
            }
    }

    TileDims tile_dims(const isa::AddressSpec& a) const {
        if (a.kind != isa::AddrKind::coord) return {};
        const TileDescriptor& d = p.descriptors.at(a.tensor);
        size_t n = d.grid.size();
        int64_t rt = a.rank >= 2 ? a.coord[n - 2] : 0;
        int64_t ct = a.rank >= 1 ? a.coord[n - 1] : 0;
        int64_t rows = std::min<int64_t>(d.tile_rows, d.shape.size() >= 2
                                                          ? d.shape[d.shape.size() - 2] -
                                                                rt * d.tile_rows
                                                          : 1);
        if (d.shape.size() < 2) rows = 1;
        int64_t cols = std::min<int64_t>(d.tile_cols, d.shape.back() - ct * d.tile_cols);
        return {std::max<int64_t>(rows, 0), std::max<int64_t>(cols, 0)};
    }

    uint64_t tile_bytes(const isa::AddressSpec& a) const {
        if (a.kind != isa::AddrKind::coord) return 0;
        return p.descriptors.at(a.tensor).tile_bytes();
    }

    int64_t qcost(int msgs) const { return hw ? int64_t(hw->queue_op_cost_ns) * msgs : 0; }

    // try to execute the uop at the cursor; returns false if blocked
    bool step_core(CoreCursor& c) {
        if (c.halted()) return false;
        const UopWord& u = (*c.s)[c.pc];
        const UopMeta& meta = (*c.m)[c.pc];
        int64_t start = c.clock;
        auto finish = [&](int64_t active) {
            c.clock = start + (hw ? int64_t(hw->issue_cost_ns) : 0) + active;
            if (c.pc < executed[c.id].size()) executed[c.id][c.pc] = 1;
            ++c.pc;
        };

        switch (u.opcode) {
            case Opcode::LOOP:
                if (u.size == 0) {
                    c.pc += size_t(u.imm) + 2;  // skip body and REPEAT
                    c.clock += hw ? hw->issue_cost_ns : 0;
                } else {
                    c.loops.push_back({c.pc + 1, u.size});
                    finish(0);
                }
                return true;
            case Opcode::REPEAT:
                if (c.loops.empty()) throw GeneratorError("elaborate: REPEAT without LOOP");
                if (--c.loops.back().second > 0) {
                    c.pc = c.loops.back().first;
                } else {
                    c.loops.pop_back();
                    ++c.pc;
                }
                c.clock += hw ? hw->issue_cost_ns : 0;
                return true;
            case Opcode::SET_ACC:
                c.acc[u.reg0] = u.imm;
                finish(0);
                return true;
            case Opcode::ADD_ACC:
                c.acc[u.reg0] += u.imm;
                finish(0);
                return true;
            case Opcode::CONTINUE_IF: {
                if (!c.loops.empty() && c.acc[u.reg0] == u.imm) {
                    size_t depth = 0, q = c.pc + 1;
                    for (; q < c.s->size(); ++q) {
                        if ((*c.s)[q].opcode == Opcode::LOOP) ++depth;
                        if ((*c.s)[q].opcode == Opcode::REPEAT) {
                            if (depth == 0) break;
                            --depth;
                        }
                    }
                    c.pc = q;
                    c.clock += hw ? hw->issue_cost_ns : 0;
                } else {
                    finish(0);
                }
                return true;
            }
            case Opcode::HALT:
                c.pc = c.s->size();
                return true;
            default:
                break;
        }

        if (c.id.kind == isa::CoreKind::vcc) return step_compute(c, u, meta, start);
        return step_memory(c, u, meta, start);
    }

    bool step_memory(CoreCursor& c, const UopWord& u, const UopMeta& meta, int64_t start) {
        auto& alloc_used = slots_used[c.id.sm];
        const uint32_t budget = p.slot_budget;
        isa::AddressSpec addr =
            u.dynamic() ? resolve_address(p, u.addr, c.acc[u.reg0]) : u.addr;
        auto key = std::pair<uint16_t, uint8_t>{c.id.sm, u.reg1};

        bool is_local = u.opcode == Opcode::LOAD_LOCAL || u.opcode == Opcode::STORE_LOCAL;
        bool allocates = (u.opcode == Opcode::LOAD || u.opcode == Opcode::LOAD_DEP ||
                          u.opcode == Opcode::ALLOC) &&
                         u.size > 0;
        uint64_t bytes = is_local || u.opcode == Opcode::ALLOC || u.opcode == Opcode::FREE
                             ? 0
                             : (u.size == 0 ? 0 : tile_bytes(addr));

        // capacity checks first (atomic execution)
        if (allocates && alloc_used + u.size > budget) {
            stall = c.id.name() + ": slot budget";
            return false;
        }
        if (isa::is_dep_consumer(u.opcode)) {
            auto& q = dep_q[u.dep_id];
            if (q.q.empty()) {
                stall = c.id.name() + ": dep " + std::to_string(u.dep_id) + " empty";
                return false;
            }
        }
        if (isa::is_dep_producer(u.opcode)) {
            auto& q = dep_q[u.dep_id];
            if (!q.can_push()) {
                stall = c.id.name() + ": dep " + std::to_string(u.dep_id) + " full";
                return false;
            }
        }
        if (u.send() && !m2c[key].can_push()) {
            stall = c.id.name() + ": m2c full";
            return false;
        }
        if (u.recv()) {
            int need = u.opcode == Opcode::FREE ? u.size : 1;
            if (int(c2m[key].q.size()) < need) {
                stall = c.id.name() + ": c2m short";
                return false;
            }
        }

        int msgs = 0;
        int64_t ready = start;
        SymMsg carried;  // slots handed through local queues
        if (isa::is_dep_consumer(u.opcode)) {
            carried = dep_q[u.dep_id].q.front();
            dep_q[u.dep_id].q.pop_front();
            ready = std::max(ready, carried.time);
            ++msgs;
        }
        std::vector<SymMsg> popped;
        if (u.recv()) {
            int need = u.opcode == Opcode::FREE ? u.size : 1;
            for (int i = 0; i < need; ++i) {
                popped.push_back(c2m[key].q.front());
                c2m[key].q.pop_front();
                ready = std::max(ready, popped.back().time);
                ++msgs;
            }
        }

        if (allocates) {
            alloc_used += u.size;
            peak[c.id.sm] = std::max(peak[c.id.sm], alloc_used);
            task_held[{c.id.sm, meta.task}] += u.size;
            alloc_order.push_back(c.id);
        }

        int64_t active = qcost(msgs) + (hw && bytes ? costmodel::transfer_ns(bytes, *hw) : 0);
        int64_t done = std::max(ready, start) + (hw ? hw->issue_cost_ns : 0) + active;

        // effects
        uint16_t out_slots = 0;
        if (u.opcode == Opcode::LOAD || u.opcode == Opcode::LOAD_DEP || u.opcode == Opcode::ALLOC)
            out_slots = u.size;
        if (u.opcode == Opcode::LOAD_LOCAL) out_slots = carried.slots;
        if (u.send()) {
            TileDims dims = tile_dims(addr);
            if (u.opcode == Opcode::LOAD_LOCAL && dims.rows == 0) dims = carried.dims;
            m2c[key].q.push_back({out_slots, done + qcost(1), dims});
            active += qcost(1);
            done += qcost(1);
        }
        if (isa::is_dep_producer(u.opcode)) {
            SymMsg tok;
            tok.time = done + qcost(1);
            if (u.opcode == Opcode::STORE_LOCAL && !popped.empty()) {
                tok.slots = popped.front().slots;  // slot ownership moves, no free
                tok.dims = popped.front().dims;
            }
            dep_q[u.dep_id].q.push_back(tok);
            active += qcost(1);
            done += qcost(1);
        }
        // frees
        if (u.opcode == Opcode::FREE) {
            for (const auto& msg : popped) {
                alloc_used -= msg.slots;
                task_held[{c.id.sm, meta.task}] -= msg.slots;
            }
        }
        if ((u.opcode == Opcode::STORE || u.opcode == Opcode::STORE_DEP) && u.recv()) {
            for (const auto& msg : popped) {
                alloc_used -= msg.slots;
                task_held[{c.id.sm, meta.task}] -= msg.slots;
            }
        }
        c.clock = done;
        if (c.pc < executed[c.id].size()) executed[c.id][c.pc] = 1;
        ++c.pc;
        return true;
    }

    bool step_compute(CoreCursor& c, const UopWord& u, const UopMeta&, int64_t start) {
        static const isa::HandlerTable handlers = isa::default_handler_table();
        if (!handlers.registered(u.opcode)) throw GeneratorError("elaborate: unregistered opcode");
        const isa::HandlerIo& io = handlers.handler(u.opcode).io;
        auto key = std::pair<uint16_t, uint8_t>{c.id.sm, c.id.vcc};
        int total_pops = io.total_pops_m2c(u.size);
        int releases = io.release_pushes_c2m(u.size);
        int pushes = releases + io.result_pushes_c2m;
        if (int(m2c[key].q.size()) < total_pops) {
            stall = c.id.name() + ": m2c short";
            return false;
        }
        if (!c2m[key].can_push(size_t(pushes))) {
            stall = c.id.name() + ": c2m full";
            return false;
        }
        std::vector<SymMsg> popped;
        int64_t ready = start;
        for (int i = 0; i < total_pops; ++i) {
            popped.push_back(m2c[key].q.front());
            m2c[key].q.pop_front();
            ready = std::max(ready, popped.back().time);
        }
        // flops over iteration groups
        uint64_t flops = 0;
        size_t at = io.prologue_pops_m2c;
        TileDims pro = io.prologue_pops_m2c ? popped.front().dims : TileDims{};
        TileDims out = io.result_pops_m2c ? popped.back().dims : TileDims{};
        for (int g = 0; g < int(u.size); ++g) {
            std::vector<TileDims> grp;
            for (int i = 0; i < io.iter_pops_m2c; ++i) grp.push_back(popped.at(at + i).dims);
            at += io.iter_pops_m2c;
            flops += uopsim::detail::compute_group_flops(u.opcode, grp, pro, out, size_t(g),
                                                         u.size);
        }
        int64_t active = qcost(total_pops + pushes) + (hw ? costmodel::compute_ns(flops, *hw) : 0);
        int64_t done = std::max(ready, start) + (hw ? hw->issue_cost_ns : 0) + active;
        // releases: iteration inputs (and prologue at the end), then result
        for (int g = 0; g < int(u.size); ++g)
            for (int i = 0; i < io.iter_pushes_c2m; ++i) {
                const SymMsg& in =
                    popped.at(io.prologue_pops_m2c + size_t(g) * io.iter_pops_m2c + size_t(i));
                c2m[key].q.push_back({in.slots, done, in.dims});
            }
        for (int i = 0; i < io.epilogue_pushes_c2m; ++i)
            c2m[key].q.push_back({popped.at(size_t(i)).slots, done, popped.at(size_t(i)).dims});
        if (io.result_pushes_c2m) c2m[key].q.push_back({popped.back().slots, done, out});
        c.clock = done;
        if (c.pc < executed[c.id].size()) executed[c.id][c.pc] = 1;
        ++c.pc;
        return true;
    }

    bool run() {
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (auto& c : cores)
                while (!c.halted() && step_core(c)) progressed = true;
        }
        for (auto& c : cores)
            if (!c.halted()) return false;
        return true;
    }

    int64_t makespan() const {
        int64_t m = 0;
        for (const auto& c : cores) m = std::max(m, c.clock);
        return m;
    }
};

}  // namespace

// ---------------------------------------------------------------------------

namespace {

// Move the remaining uops of the oldest slot-holding task ahead of the
// blocked position, preserving flow and queue-endpoint order.
bool repair_stream(LoweredProgram& p, Elab& e) {
    // lowest blocked VMC whose next uop needs slots
    for (auto& c : e.cores) {
        if (c.halted() || c.id.kind != isa::CoreKind::vmc) continue;
        const UopWord& u = (*c.s)[c.pc];
        bool allocates = (u.opcode == Opcode::LOAD || u.opcode == Opcode::LOAD_DEP ||
                          u.opcode == Opcode::ALLOC) &&
                         u.size > 0;
        if (!allocates || e.slots_used[c.id.sm] + u.size <= p.slot_budget) continue;

        auto& s = p.streams.at(c.id);
        auto& m = p.meta.at(c.id);
        // loop-depth per index; repairs stay at depth 0
        std::vector<int> depth(s.size(), 0);
        int d = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i].opcode == Opcode::REPEAT) --d;
            depth[i] = d;
            if (s[i].opcode == Opcode::LOOP) ++d;
        }
        if (depth[c.pc] != 0) continue;

        // candidate tasks: outstanding slots, oldest first
        std::vector<int32_t> tasks;
        for (auto& [key, held] : e.task_held)
            if (key.first == c.id.sm && held > 0 && key.second >= 0) tasks.push_back(key.second);
        std::sort(tasks.begin(), tasks.end());
        for (int32_t task : tasks) {
            std::vector<size_t> moved;
            for (size_t j = c.pc; j < s.size(); ++j)
                if (m[j].task == task && !e.executed[c.id][j]) moved.push_back(j);
            if (moved.empty()) continue;
            bool legal = true;
            for (size_t j : moved) {
                if (depth[j] != 0) {
                    legal = false;
                    break;
                }
                for (size_t x = c.pc; x < j && legal; ++x) {
                    if (std::find(moved.begin(), moved.end(), x) != moved.end()) continue;
                    const UopWord& a = s[x];
                    const UopWord& b = s[j];
                    if (a.klass() == isa::OpClass::control) legal = false;
                    if (a.flow != 0 && a.flow == b.flow) legal = false;
                    if (a.send() && b.send() && a.reg1 == b.reg1) legal = false;
                    if (a.recv() && b.recv() && a.reg1 == b.reg1) legal = false;
                    if (a.dep_id != 0 && b.dep_id != 0 && a.dep_id == b.dep_id) legal = false;
                }
                if (!legal) break;
            }
            if (!legal) continue;
            std::vector<UopWord> ns;
            std::vector<UopMeta> nm;
            ns.reserve(s.size());
            for (size_t i = 0; i < c.pc; ++i) {
                ns.push_back(s[i]);
                nm.push_back(m[i]);
            }
            for (size_t j : moved) {
                ns.push_back(s[j]);
                nm.push_back(m[j]);
            }
            for (size_t i = c.pc; i < s.size(); ++i) {
                if (std::find(moved.begin(), moved.end(), i) != moved.end()) continue;
                ns.push_back(s[i]);
                nm.push_back(m[i]);
            }
            s = std::move(ns);
            m = std::move(nm);
            return true;
        }
    }
    return false;
}

}  // namespace

LoweredProgram fix_deadlocks(LoweredProgram p) {
    // irreducible demand first: a single allocation larger than the budget
    for (const auto& [core, s] : p.streams)
        for (size_t i = 0; i < s.size(); ++i) {
            const UopWord& u = s[i];
            bool allocates = u.opcode == Opcode::LOAD || u.opcode == Opcode::LOAD_DEP ||
                             u.opcode == Opcode::ALLOC;
            if (allocates && u.size > p.slot_budget)
                throw DeadlockError("uop " + std::to_string(i) + " on " + core.name() +
                                    " requests " + std::to_string(u.size) + " slots, budget " +
                                    std::to_string(p.slot_budget));
        }

    size_t attempts = 4 * p.total_uops() + 8;
    for (size_t attempt = 0; attempt < attempts; ++attempt) {
        Elab e(p, nullptr);
        if (e.run()) {
            p.baseline_alloc_order = std::move(e.alloc_order);
            return p;
        }
        if (!repair_stream(p, e))
            throw DeadlockError("irreducible over-allocation: " + e.stall);
    }
    throw DeadlockError("deadlock elaboration did not converge");
}

bool replay_certificate(const LoweredProgram& p) {
    Elab e(p, nullptr);
    if (!e.run()) return false;
    for (auto& [sm, pk] : e.peak)
        if (pk > p.slot_budget) return false;
    return e.alloc_order == p.baseline_alloc_order;
}

int64_t estimate_makespan(const LoweredProgram& p, const costmodel::HardwareProfile& hw) {
    Elab e(p, &hw);
    if (!e.run()) throw GeneratorError("estimate: program does not complete in order");
    return e.makespan();
}

// ---------------------------------------------------------------------------

LoweredProgram generate(const workload::OperatorGraph& g, const costmodel::HardwareProfile& hw,
                        const GenOptions& opt) {
    auto tilings = select_tilings(g, hw, opt.theta);
    auto p = lower(g, tilings, hw);
    p.input_seed = opt.input_seed;
    if (opt.flows) {
        p = assign_virtual_flows(std::move(p));
    } else {
        for (auto& [core, s] : p.streams)
            for (auto& u : s)
                if (u.klass() != isa::OpClass::control) u.flow = 1;
    }
    if (opt.fusion) p = apply_dynamic_fusion(std::move(p));
    if (opt.fold) p = fold_loops(std::move(p));
    p = fix_deadlocks(std::move(p));
    p = eliminate_redundant_dependencies(std::move(p));
    {
        // the certificate is refreshed on the final stream shape
        Elab e(p, nullptr);
        if (!e.run()) throw DeadlockError("post-pass elaboration failed");
        p.baseline_alloc_order = std::move(e.alloc_order);
    }
    for (auto& [core, s] : p.streams)
        if (!s.empty()) s.back().flags |= isa::kFlagLast;
    auto violations = p.validate();
    if (!violations.empty())
        throw GeneratorError("generated program invalid: " + violations.front().message);
    return p;
}

}  // namespace uopsim::generator
