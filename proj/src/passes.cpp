// Stream transformation passes: virtual-flow assignment (greedy chain cover
// of the per-core dependency graph), dynamic fusion (one-to-one STORE/LOAD
// rewritten to the local path) and transitive-dependency elimination.

#include <algorithm>
#include <map>
#include <set>

#include "uopsim/generator.hpp"

namespace uopsim::generator {

using isa::Opcode;
using isa::UopWord;

namespace {

// Intra-core direct dependency predecessors of stream[i]:
//  - a same-core dep-queue producer site for a dep-consuming uop,
//  - every input load/alloc of the same job for its frees/stores
//    (the path runs through the local compute uop).
std::vector<size_t> intra_core_preds(const LoweredProgram& p, const CoreId& core, size_t i,
                                     const std::map<uint16_t, std::pair<CoreId, size_t>>& producer_site) {
    const auto& s = p.streams.at(core);
    const auto& meta = p.meta.at(core);
    const UopWord& u = s[i];
    std::vector<size_t> preds;
    if (isa::is_dep_consumer(u.opcode)) {
        auto it = producer_site.find(u.dep_id);
        if (it != producer_site.end() && it->second.first == core && it->second.second < i)
            preds.push_back(it->second.second);
    }
    if (isa::is_store_class(u.opcode) && meta[i].task >= 0) {
        for (size_t j = 0; j < i; ++j)
            if (meta[j].task == meta[i].task && isa::is_load_class(s[j].opcode))
                preds.push_back(j);
    }
    // a fan-out token store follows its data store
    if (meta[i].store_group >= 0 && size_t(meta[i].store_group) != i)
        preds.push_back(size_t(meta[i].store_group));
    std::sort(preds.begin(), preds.end());
    return preds;
}

}  // namespace

LoweredProgram assign_virtual_flows(LoweredProgram p) {
    // producer site per dep id
    std::map<uint16_t, std::pair<CoreId, size_t>> producer_site;
    for (const auto& [core, s] : p.streams)
        for (size_t i = 0; i < s.size(); ++i)
            if (s[i].dep_id != 0 && isa::is_dep_producer(s[i].opcode))
                producer_site[s[i].dep_id] = {core, i};

    for (auto& [core, s] : p.streams) {
        if (core.kind == isa::CoreKind::vcc) {
            // compute uops carry no direct dependencies between each other;
            // every job is its own chain
            uint32_t next = 1;
            for (auto& u : s) {
                if (u.klass() == isa::OpClass::control) continue;
                u.flow = static_cast<uint8_t>(((next - 1) % 255) + 1);
                ++next;
            }
            continue;
        }
        // greedy chain cover: append to a predecessor that is still a chain
        // tail (lowest flow id wins), otherwise open a new chain
        std::map<uint32_t, size_t> tail;  // flow -> index of current tail
        std::vector<uint32_t> flow_of(s.size(), 0);
        uint32_t next = 1;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i].klass() == isa::OpClass::control) continue;
            uint32_t chosen = 0;
            for (size_t pred : intra_core_preds(p, core, i, producer_site)) {
                uint32_t f = flow_of[pred];
                if (f == 0) continue;
                auto it = tail.find(f);
                if (it != tail.end() && it->second == pred && (chosen == 0 || f < chosen)) chosen = f;
            }
            if (chosen == 0) chosen = next++;
            flow_of[i] = chosen;
            tail[chosen] = i;
        }
        for (size_t i = 0; i < s.size(); ++i)
            if (s[i].klass() != isa::OpClass::control)
                s[i].flow = static_cast<uint8_t>(((flow_of[i] - 1) % 255) + 1);
        // token stores must stay ordered after their data store even when
        // the chain cover placed them elsewhere
        const auto& meta = p.meta.at(core);
        for (size_t i = 0; i < s.size(); ++i)
            if (meta[i].store_group >= 0 && size_t(meta[i].store_group) != i)
                s[i].flow = s[size_t(meta[i].store_group)].flow;
    }
    return p;
}

LoweredProgram apply_dynamic_fusion(LoweredProgram p) {
    // consumer/producer sites per dep id
    struct Site {
        CoreId core;
        size_t index;
    };
    std::map<uint16_t, Site> prod, cons;
    for (const auto& [core, s] : p.streams)
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i].dep_id == 0) continue;
            if (isa::is_dep_producer(s[i].opcode)) prod[s[i].dep_id] = {core, i};
            if (isa::is_dep_consumer(s[i].opcode)) cons[s[i].dep_id] = {core, i};
        }

    for (auto& q : p.queues) {
        if (q.local) continue;
        auto pi = prod.find(q.dep_id);
        auto ci = cons.find(q.dep_id);
        if (pi == prod.end() || ci == cons.end()) continue;
        if (!(pi->second.core == ci->second.core)) continue;  // same VMC only
        auto& ps = p.streams.at(pi->second.core);
        auto& pm = p.meta.at(pi->second.core);
        UopWord& store = ps[pi->second.index];
        UopWord& load = p.streams.at(ci->second.core)[ci->second.index];
        if (store.opcode != Opcode::STORE_DEP || load.opcode != Opcode::LOAD_DEP) continue;
        if (store.size == 0) continue;  // fan-out token, not a data store
        // the intermediate must be one-to-one overall: no sibling token
        // stores forwarding the same tile to other consumers
        int32_t group = pm[pi->second.index].store_group;
        bool fan_out = false;
        for (size_t j = 0; j < ps.size(); ++j)
            if (j != pi->second.index && pm[j].store_group == group && group >= 0) fan_out = true;
        if (fan_out) continue;
        store.opcode = Opcode::STORE_LOCAL;
        load.opcode = Opcode::LOAD_LOCAL;
        q.local = true;
    }
    return p;
}

LoweredProgram eliminate_redundant_dependencies(LoweredProgram p) {
    // A dep edge whose producer and consumer sit on the same core and the
    // same virtual flow is implied by in-order flow execution; drop the
    // queue. Local (fused) queues carry the slot handoff and stay.
    struct Site {
        CoreId core;
        size_t index;
    };
    std::map<uint16_t, Site> prod, cons;
    for (const auto& [core, s] : p.streams)
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i].dep_id == 0) continue;
            if (isa::is_dep_producer(s[i].opcode)) prod[s[i].dep_id] = {core, i};
            if (isa::is_dep_consumer(s[i].opcode)) cons[s[i].dep_id] = {core, i};
        }
    std::set<uint16_t> removed;
    std::map<CoreId, std::set<size_t>> delete_index;
    for (const auto& q : p.queues) {
        if (q.local) continue;
        auto pi = prod.find(q.dep_id);
        auto ci = cons.find(q.dep_id);
        if (pi == prod.end() || ci == cons.end()) continue;
        if (!(pi->second.core == ci->second.core)) continue;
        auto& s = p.streams.at(pi->second.core);
        UopWord& store = s[pi->second.index];
        UopWord& load = s[ci->second.index];
        if (store.flow == 0 || store.flow != load.flow) continue;
        if (pi->second.index >= ci->second.index) continue;
        // in-order same-flow execution already sequences the pair
        if (store.size == 0) {
            delete_index[pi->second.core].insert(pi->second.index);  // bare token store
        } else {
            store.opcode = Opcode::STORE;
            store.dep_id = 0;
        }
        load.opcode = Opcode::LOAD;
        load.dep_id = 0;
        removed.insert(q.dep_id);
    }
    if (!removed.empty()) {
        std::erase_if(p.queues, [&](const QueueInfo& q) { return removed.count(q.dep_id) != 0; });
        for (auto& [core, dels] : delete_index) {
            auto& s = p.streams.at(core);
            auto& m = p.meta.at(core);
            std::vector<UopWord> ns;
            std::vector<UopMeta> nm;
            for (size_t i = 0; i < s.size(); ++i) {
                if (dels.count(i)) continue;
                ns.push_back(s[i]);
                nm.push_back(m[i]);
            }
            s = std::move(ns);
            m = std::move(nm);
        }
    }
    return p;
}

}  // namespace uopsim::generator
