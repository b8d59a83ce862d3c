// Recipe expansion: operator job plans -> per-core uop streams with
// dep-queue wiring, send/recv local traffic and fan-out token stores.

#include <algorithm>
#include <set>

#include "plan.hpp"
#include "uopsim/generator.hpp"
#include "uopsim/util.hpp"

namespace uopsim::generator {

using detail::Fetch;
using detail::Job;
using detail::OpPlan;
using isa::Opcode;
using isa::UopWord;

namespace {

struct ConsumerSite {
    size_t plan;
    size_t job;
    size_t fetch;  // linear: prologue first, then groups in order
    uint16_t dep_id;
};

size_t fetch_count(const Job& job) {
    size_t n = job.prologue ? 1 : 0;
    for (const auto& g : job.groups) n += g.size();
    return n;
}

const Fetch& fetch_at(const Job& job, size_t idx) {
    if (job.prologue) {
        if (idx == 0) return *job.prologue;
        --idx;
    }
    for (const auto& g : job.groups) {
        if (idx < g.size()) return g[idx];
        idx -= g.size();
    }
    throw GeneratorError("fetch index out of range");
}

}  // namespace

LoweredProgram lower(const workload::OperatorGraph& g,
                     const std::map<std::string, workload::TilingChoice>& tilings,
                     const costmodel::HardwareProfile& hw) {
    auto plans = detail::plan_graph(g, tilings, hw);
    auto descriptors = detail::build_descriptors(g);
    const auto handlers = isa::default_handler_table();

    LoweredProgram p;
    p.descriptors = descriptors;
    p.slot_budget = static_cast<uint16_t>(hw.slot_budget());
    p.operator_count = static_cast<uint32_t>(plans.size());
    p.workload_hash = g.content_hash();
    p.profile_name = hw.name;

    auto slots_for = [&](uint16_t tensor) {
        return static_cast<uint16_t>(
            std::max<uint64_t>(1, ceil_div<uint64_t>(descriptors[tensor].tile_bytes(), hw.slot_size)));
    };
    for (const auto& d : descriptors)
        if (d.tile_bytes() > hw.slot_size)
            throw GeneratorError("tensor '" + d.tensor +
                                 "' tile exceeds the slot size; choose a coarser tile");

    // Pass 1: assign dep ids to every fetch of a produced tensor, in
    // deterministic encounter order; collect consumers per produced tile.
    std::map<std::pair<uint16_t, int64_t>, std::vector<uint16_t>> tile_consumers;
    std::map<std::tuple<size_t, size_t, size_t>, uint16_t> site_dep;
    std::map<uint16_t, CoreId> dep_consumer_core;
    uint32_t dep_counter = 1;
    auto pair_sm = [&](uint32_t pair) { return static_cast<uint16_t>(pair / hw.vcc_per_sm); };
    auto pair_vcc = [&](uint32_t pair) { return static_cast<uint8_t>(pair % hw.vcc_per_sm); };

    for (size_t pi = 0; pi < plans.size(); ++pi) {
        for (size_t ji = 0; ji < plans[pi].jobs.size(); ++ji) {
            const Job& job = plans[pi].jobs[ji];
            for (size_t fi = 0; fi < fetch_count(job); ++fi) {
                const Fetch& f = fetch_at(job, fi);
                if (descriptors[f.tensor].external) continue;
                if (dep_counter > 0xffff) throw GeneratorError("dep id space exhausted");
                uint16_t dep = static_cast<uint16_t>(dep_counter++);
                site_dep[{pi, ji, fi}] = dep;
                int64_t lin = descriptors[f.tensor].linear_tile(f.coord);
                tile_consumers[{f.tensor, lin}].push_back(dep);
                dep_consumer_core[dep] = CoreId::vmc(pair_sm(job.pair));
            }
        }
    }

    // Pass 2: emit streams. Per operator, per VMC: wave-major stages so
    // loads of parallel jobs issue ahead of their frees/stores.
    std::map<CoreId, std::vector<UopWord>>& streams = p.streams;
    std::map<CoreId, std::vector<UopMeta>>& meta = p.meta;
    std::map<uint16_t, CoreId> dep_producer_core;
    int32_t job_uid = 0;
    uint32_t max_pops = 0, max_pushes = 0;

    auto emit = [&](const CoreId& core, UopWord u, UopMeta m) -> size_t {
        streams[core].push_back(u);
        meta[core].push_back(m);
        return streams[core].size() - 1;
    };

    for (size_t pi = 0; pi < plans.size(); ++pi) {
        const OpPlan& plan = plans[pi];
        // jobs per (sm, vcc), preserving plan order
        std::map<uint16_t, std::map<uint8_t, std::vector<size_t>>> by_sm;
        for (size_t ji = 0; ji < plan.jobs.size(); ++ji)
            by_sm[pair_sm(plan.jobs[ji].pair)][pair_vcc(plan.jobs[ji].pair)].push_back(ji);

        std::map<size_t, int32_t> job_ids;
        for (auto& [sm, by_vcc] : by_sm) {
            size_t waves = 0;
            for (auto& [v, js] : by_vcc) waves = std::max(waves, js.size());
            CoreId vmc = CoreId::vmc(sm);
            for (size_t w = 0; w < waves; ++w) {
                // stage A: input loads + result alloc, round-robin across VCCs
                for (auto& [v, js] : by_vcc) {
                    if (w >= js.size()) continue;
                    size_t ji = js[w];
                    const Job& job = plan.jobs[ji];
                    int32_t uid = job_uid++;
                    job_ids[ji] = uid;
                    UopMeta m{plan.ordinal, uid, -1};
                    const auto& io = handlers.handler(job.compute).io;
                    for (size_t fi = 0; fi < fetch_count(job); ++fi) {
                        const Fetch& f = fetch_at(job, fi);
                        UopWord u;
                        u.flags = isa::kFlagSend;
                        u.reg1 = v;
                        u.size = slots_for(f.tensor);
                        u.addr = isa::AddressSpec::tile(f.tensor, f.coord);
                        auto dep_it = site_dep.find({pi, ji, fi});
                        if (dep_it != site_dep.end()) {
                            u.opcode = Opcode::LOAD_DEP;
                            u.dep_id = dep_it->second;
                        } else {
                            u.opcode = Opcode::LOAD;
                        }
                        emit(vmc, u, m);
                    }
                    UopWord alloc;
                    alloc.opcode = Opcode::ALLOC;
                    alloc.flags = isa::kFlagSend;
                    alloc.reg1 = v;
                    alloc.size = slots_for(job.out.tensor);
                    alloc.addr = isa::AddressSpec::tile(job.out.tensor, job.out.coord);
                    emit(vmc, alloc, m);
                    uint32_t pops = 1;  // result slot
                    pops += static_cast<uint32_t>(io.total_pops_m2c(int(job.groups.size())) -
                                                  io.result_pops_m2c);
                    max_pops = std::max(max_pops, pops + 1);
                    max_pushes = std::max(
                        max_pushes,
                        uint32_t(io.release_pushes_c2m(int(job.groups.size())) +
                                 io.result_pushes_c2m + 1));
                }
                // stage B: frees + stores, same VCC order
                for (auto& [v, js] : by_vcc) {
                    if (w >= js.size()) continue;
                    size_t ji = js[w];
                    const Job& job = plan.jobs[ji];
                    UopMeta m{plan.ordinal, job_ids[ji], -1};
                    const auto& io = handlers.handler(job.compute).io;
                    int releases = io.release_pushes_c2m(int(job.groups.size()));
                    if (releases > 0) {
                        UopWord fr;
                        fr.opcode = Opcode::FREE;
                        fr.flags = isa::kFlagRecv;
                        fr.reg1 = v;
                        fr.size = static_cast<uint16_t>(releases);
                        emit(vmc, fr, m);
                    }
                    // primary store, then fan-out token stores
                    int64_t lin = descriptors[job.out.tensor].linear_tile(job.out.coord);
                    auto cons = tile_consumers.find({job.out.tensor, lin});
                    UopWord st;
                    st.flags = isa::kFlagRecv;
                    st.reg1 = v;
                    st.size = slots_for(job.out.tensor);
                    st.addr = isa::AddressSpec::tile(job.out.tensor, job.out.coord);
                    UopMeta sm_meta = m;
                    if (cons == tile_consumers.end() || cons->second.empty()) {
                        st.opcode = Opcode::STORE;
                        emit(vmc, st, sm_meta);
                    } else {
                        st.opcode = Opcode::STORE_DEP;
                        st.dep_id = cons->second.front();
                        size_t primary = emit(vmc, st, sm_meta);
                        meta[vmc][primary].store_group = static_cast<int32_t>(primary);
                        dep_producer_core[st.dep_id] = vmc;
                        for (size_t k = 1; k < cons->second.size(); ++k) {
                            UopWord tok;
                            tok.opcode = Opcode::STORE_DEP;
                            tok.dep_id = cons->second[k];
                            tok.size = 0;  // ownership token, no data motion
                            tok.addr = isa::AddressSpec::tile(job.out.tensor, job.out.coord);
                            UopMeta tm = m;
                            tm.store_group = static_cast<int32_t>(primary);
                            emit(vmc, tok, tm);
                            dep_producer_core[tok.dep_id] = vmc;
                        }
                    }
                }
            }
            // VCC streams for this operator, in wave order
            for (auto& [v, js] : by_vcc) {
                CoreId vcc = CoreId::vcc_id(sm, v);
                for (size_t ji : js) {
                    const Job& job = plan.jobs[ji];
                    UopWord cu;
                    cu.opcode = job.compute;
                    cu.size = static_cast<uint16_t>(job.groups.size());
                    cu.imm = job.imm;
                    emit(vcc, cu, {plan.ordinal, job_ids[ji], -1});
                }
            }
        }
    }

    // queue table
    for (auto& [dep, prod] : dep_producer_core) {
        const auto* d = &descriptors[0];
        // find tensor via any consumer site fetch: stored below with bytes
        (void)d;
        QueueInfo q;
        q.dep_id = dep;
        q.producer = prod;
        q.consumer = dep_consumer_core.at(dep);
        q.depth = static_cast<uint16_t>(hw.queue_depth);
        p.queues.push_back(q);
    }
    // attach intermediate tile bytes to each queue
    for (size_t pi = 0; pi < plans.size(); ++pi)
        for (size_t ji = 0; ji < plans[pi].jobs.size(); ++ji) {
            const Job& job = plans[pi].jobs[ji];
            for (size_t fi = 0; fi < fetch_count(job); ++fi) {
                auto it = site_dep.find({pi, ji, fi});
                if (it == site_dep.end()) continue;
                if (QueueInfo* q = p.queue(it->second))
                    q->tile_bytes = descriptors[fetch_at(job, fi).tensor].tile_bytes();
            }
        }
    std::sort(p.queues.begin(), p.queues.end(),
              [](const QueueInfo& a, const QueueInfo& b) { return a.dep_id < b.dep_id; });

    p.local_queue_depth = static_cast<uint16_t>(
        std::max<uint32_t>(hw.local_queue_depth, std::max(max_pops, max_pushes) + 2));

    auto violations = p.validate();
    if (!violations.empty())
        throw GeneratorError("lowering produced an invalid program: " + violations.front().message);
    return p;
}

}  // namespace uopsim::generator
