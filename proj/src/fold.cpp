// Loop folding: detects maximal runs of uops identical up to arithmetic
// progressions of the global tile index (and of dep ids), and rewrites them
// to SET_ACC / LOOP / dynamic body / ADD_ACC / REPEAT. Dep-queue families
// whose producer and consumer fold with the same periodicity merge into the
// base iteration's queue.

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "uopsim/generator.hpp"

namespace uopsim::generator {

using isa::AddrKind;
using isa::Opcode;
using isa::UopWord;

namespace {

// global tile index of a coord address, nullopt otherwise
std::optional<int64_t> global_tile(const LoweredProgram& p, const UopWord& u) {
    if (u.addr.kind != AddrKind::coord) return std::nullopt;
    const TileDescriptor& d = p.descriptors.at(u.addr.tensor);
    return d.base + d.linear_tile(std::span<const uint16_t>(u.addr.coord.data(), u.addr.rank));
}

// Same uop up to address/dep progression? Flows are not compared: chain ids
// grow per instance, and the fold reuses the base iteration's flow, which
// only adds cross-iteration ordering.
bool shape_match(const UopWord& a, const UopWord& b) {
    if (a.opcode != b.opcode || a.flags != b.flags || a.size != b.size || a.reg0 != b.reg0 ||
        a.reg1 != b.reg1 || a.imm != b.imm)
        return false;
    if (a.addr.kind != b.addr.kind) return false;
    if ((a.dep_id == 0) != (b.dep_id == 0)) return false;
    if (a.addr.kind == AddrKind::literal &&
        (a.addr.tensor != b.addr.tensor || a.addr.offset != b.addr.offset))
        return false;
    if (a.addr.kind == AddrKind::descriptor && a.addr.descriptor != b.addr.descriptor) return false;
    return true;
}

struct FoldCandidate {
    size_t start = 0;
    size_t period = 0;
    size_t reps = 0;  // total iterations including the base one
    std::vector<int64_t> tile_delta;  // per body offset
    std::vector<int64_t> dep_delta;
    size_t folded_len() const { return period * reps; }
};

// Longest periodic run in s (no control uops inside); best = max folded
// length, ties to smaller start then smaller period.
std::optional<FoldCandidate> find_candidate(const LoweredProgram& p,
                                            const std::vector<UopWord>& s) {
    const size_t n = s.size();
    if (n < 2 || n > 4000) return std::nullopt;
    std::optional<FoldCandidate> best;
    for (size_t period = 1; period <= n / 2; ++period) {
        for (size_t start = 0; start + 2 * period <= n; ++start) {
            bool ctrl = false;
            for (size_t j = start; j < start + period && !ctrl; ++j)
                if (s[j].klass() == isa::OpClass::control) ctrl = true;
            if (ctrl) continue;
            // deltas from the first pair
            std::vector<int64_t> td(period, 0), dd(period, 0);
            bool ok = true;
            for (size_t j = 0; j < period && ok; ++j) {
                const UopWord &a = s[start + j], &b = s[start + period + j];
                if (!shape_match(a, b)) {
                    ok = false;
                    break;
                }
                auto ga = global_tile(p, a), gb = global_tile(p, b);
                if (ga.has_value() != gb.has_value()) {
                    ok = false;
                    break;
                }
                td[j] = ga ? *gb - *ga : 0;
                if (a.addr.kind == AddrKind::coord && !ga) {
                    ok = false;
                    break;
                }
                dd[j] = int64_t(b.dep_id) - int64_t(a.dep_id);
                if (a.dep_id != 0 && dd[j] == 0) ok = false;  // repeated site id cannot occur
            }
            if (!ok) continue;
            size_t reps = 2;
            while (start + (reps + 1) * period <= n) {
                bool match = true;
                for (size_t j = 0; j < period && match; ++j) {
                    const UopWord &a = s[start + j], &b = s[start + reps * period + j];
                    if (!shape_match(a, b)) {
                        match = false;
                        break;
                    }
                    auto ga = global_tile(p, a), gb = global_tile(p, b);
                    if (ga.has_value() != gb.has_value() ||
                        (ga && *gb != *ga + int64_t(reps) * td[j])) {
                        match = false;
                        break;
                    }
                    if (int64_t(b.dep_id) != int64_t(a.dep_id) + int64_t(reps) * dd[j]) match = false;
                }
                if (!match) break;
                ++reps;
            }
            // worthwhile: saves space and the accumulators fit
            std::set<int64_t> strides;
            for (int64_t d : td)
                if (d != 0) strides.insert(d);
            if (strides.size() > 8) continue;
            size_t overhead = 2 + 2 * strides.size();  // loop+repeat+set/add per stride
            if (period * reps <= period + overhead) continue;
            FoldCandidate c{start, period, reps, td, dd};
            if (!best || c.folded_len() > best->folded_len() ||
                (c.folded_len() == best->folded_len() &&
                 std::tie(c.start, c.period) < std::tie(best->start, best->period)))
                best = c;
        }
    }
    return best;
}

struct SiteTable {
    // dep id -> (core, index) for each side
    std::map<uint16_t, std::pair<CoreId, size_t>> prod, cons;
};

SiteTable sites(const LoweredProgram& p) {
    SiteTable t;
    for (const auto& [core, s] : p.streams)
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i].dep_id == 0) continue;
            if (isa::is_dep_producer(s[i].opcode)) t.prod[s[i].dep_id] = {core, i};
            if (isa::is_dep_consumer(s[i].opcode)) t.cons[s[i].dep_id] = {core, i};
        }
    return t;
}

// Does `core`'s candidate place dep-site `index` at body offset `j` of
// iteration `k`?
bool in_fold_at(const FoldCandidate& c, size_t index, size_t j, size_t k) {
    return index == c.start + k * c.period + j;
}

}  // namespace

LoweredProgram fold_loops(LoweredProgram p) {
    for (int round = 0; round < 8; ++round) {
        std::map<CoreId, FoldCandidate> picks;
        for (const auto& [core, s] : p.streams) {
            auto c = find_candidate(p, s);
            if (c) picks.emplace(core, *c);
        }
        if (picks.empty()) return p;

        // Cross-core dep verification: every folded dep family must have its
        // partner folded with the same rep count and aligned iterations.
        SiteTable st = sites(p);
        bool changed = true;
        while (changed) {
            changed = false;
            for (auto it = picks.begin(); it != picks.end();) {
                const CoreId& core = it->first;
                const FoldCandidate& c = it->second;
                const auto& s = p.streams.at(core);
                bool ok = true;
                for (size_t j = 0; j < c.period && ok; ++j) {
                    const UopWord& u = s[c.start + j];
                    if (u.dep_id == 0) continue;
                    bool producer_side = isa::is_dep_producer(u.opcode);
                    const auto& partner_map = producer_side ? st.cons : st.prod;
                    for (size_t k = 0; k < c.reps && ok; ++k) {
                        uint16_t dep = static_cast<uint16_t>(int64_t(u.dep_id) +
                                                             int64_t(k) * c.dep_delta[j]);
                        auto pit = partner_map.find(dep);
                        if (pit == partner_map.end()) {
                            ok = false;
                            break;
                        }
                        auto [pcore, pindex] = pit->second;
                        auto fit = picks.find(pcore);
                        if (fit == picks.end() || fit->second.reps != c.reps) {
                            ok = false;
                            break;
                        }
                        const FoldCandidate& fc = fit->second;
                        size_t base_index = pindex >= fc.start ? (pindex - fc.start) : size_t(-1);
                        if (base_index == size_t(-1) || base_index >= fc.period * fc.reps ||
                            base_index / fc.period != k ||
                            !in_fold_at(fc, pindex, base_index % fc.period, k)) {
                            ok = false;
                            break;
                        }
                    }
                }
                if (!ok) {
                    it = picks.erase(it);
                    changed = true;
                } else {
                    ++it;
                }
            }
        }
        if (picks.empty()) return p;

        // apply folds and merge queues
        std::set<uint16_t> drop_deps;
        for (auto& [core, c] : picks) {
            auto& s = p.streams.at(core);
            auto& m = p.meta.at(core);
            std::vector<UopWord> ns(s.begin(), s.begin() + c.start);
            std::vector<UopMeta> nm(m.begin(), m.begin() + c.start);
            // accumulator registers per distinct stride, first-occurrence order
            std::vector<int64_t> strides;
            for (int64_t d : c.tile_delta)
                if (d != 0 && std::find(strides.begin(), strides.end(), d) == strides.end())
                    strides.push_back(d);
            UopMeta ctrl_meta{m[c.start].op, -1, -1};
            for (size_t r = 0; r < strides.size(); ++r) {
                UopWord set;
                set.opcode = Opcode::SET_ACC;
                set.reg0 = static_cast<uint8_t>(r);
                set.imm = 0;
                ns.push_back(set);
                nm.push_back(ctrl_meta);
            }
            UopWord loop;
            loop.opcode = Opcode::LOOP;
            loop.size = static_cast<uint16_t>(c.reps);
            loop.imm = static_cast<int32_t>(c.period + strides.size());
            ns.push_back(loop);
            nm.push_back(ctrl_meta);
            for (size_t j = 0; j < c.period; ++j) {
                UopWord u = s[c.start + j];
                if (c.tile_delta[j] != 0) {
                    u.flags |= isa::kFlagDynamic;
                    u.reg0 = static_cast<uint8_t>(
                        std::find(strides.begin(), strides.end(), c.tile_delta[j]) -
                        strides.begin());
                }
                ns.push_back(u);
                nm.push_back(m[c.start + j]);
                // queues of later iterations merge into the base id
                if (u.dep_id != 0)
                    for (size_t k = 1; k < c.reps; ++k)
                        drop_deps.insert(static_cast<uint16_t>(int64_t(u.dep_id) +
                                                               int64_t(k) * c.dep_delta[j]));
            }
            for (size_t r = 0; r < strides.size(); ++r) {
                UopWord add;
                add.opcode = Opcode::ADD_ACC;
                add.reg0 = static_cast<uint8_t>(r);
                add.imm = static_cast<int32_t>(strides[r]);
                ns.push_back(add);
                nm.push_back(ctrl_meta);
            }
            UopWord rep;
            rep.opcode = Opcode::REPEAT;
            ns.push_back(rep);
            nm.push_back(ctrl_meta);
            ns.insert(ns.end(), s.begin() + c.start + c.folded_len(), s.end());
            nm.insert(nm.end(), m.begin() + c.start + c.folded_len(), m.end());
            s = std::move(ns);
            m = std::move(nm);
        }
        std::erase_if(p.queues, [&](const QueueInfo& q) { return drop_deps.count(q.dep_id) != 0; });
    }
    return p;
}

// ---------------------------------------------------------------------------
// static expansion

isa::AddressSpec resolve_address(const LoweredProgram& p, const isa::AddressSpec& addr,
                                 int64_t acc_value) {
    if (addr.kind == AddrKind::literal) {
        auto a = addr;
        a.offset = static_cast<uint64_t>(int64_t(a.offset) + acc_value);
        return a;
    }
    if (addr.kind != AddrKind::coord) return addr;
    const TileDescriptor& d = p.descriptors.at(addr.tensor);
    int64_t glin =
        d.base + d.linear_tile(std::span<const uint16_t>(addr.coord.data(), addr.rank)) + acc_value;
    const TileDescriptor* nd = p.descriptor_for_global_tile(glin);
    if (!nd) throw GeneratorError("dynamic address resolves outside every tensor");
    auto coord = nd->coord_of(glin - nd->base);
    return isa::AddressSpec::tile(nd->index, coord);
}

std::vector<isa::UopWord> unfold_stream(const LoweredProgram& p, const CoreId& core) {
    const auto& s = p.streams.at(core);
    std::vector<UopWord> out;
    std::vector<std::pair<size_t, uint32_t>> loops;  // (body start, remaining)
    std::array<int64_t, 16> acc{};
    size_t pc = 0;
    size_t guard = 0;
    while (pc < s.size()) {
        if (++guard > 100'000'000) throw GeneratorError("unfold: runaway loop");
        const UopWord& u = s[pc];
        switch (u.opcode) {
            case Opcode::LOOP:
                if (u.size == 0) {
                    pc += size_t(u.imm) + 2;  // skip body and REPEAT
                } else {
                    loops.push_back({pc + 1, u.size});
                    ++pc;
                }
                continue;
            case Opcode::REPEAT:
                if (loops.empty()) throw GeneratorError("unfold: REPEAT without LOOP");
                if (--loops.back().second > 0) {
                    pc = loops.back().first;
                } else {
                    loops.pop_back();
                    ++pc;
                }
                continue;
            case Opcode::SET_ACC:
                acc[u.reg0] = u.imm;
                ++pc;
                continue;
            case Opcode::ADD_ACC:
                acc[u.reg0] += u.imm;
                ++pc;
                continue;
            case Opcode::CONTINUE_IF: {
                if (!loops.empty() && acc[u.reg0] == u.imm) {
                    // skip to the innermost loop's REPEAT
                    size_t depth = 0;
                    size_t q = pc + 1;
                    for (; q < s.size(); ++q) {
                        if (s[q].opcode == Opcode::LOOP) ++depth;
                        if (s[q].opcode == Opcode::REPEAT) {
                            if (depth == 0) break;
                            --depth;
                        }
                    }
                    pc = q;
                } else {
                    ++pc;
                }
                continue;
            }
            case Opcode::HALT:
                pc = s.size();
                continue;
            default:
                break;
        }
        UopWord w = u;
        if (u.dynamic()) {
            w.addr = resolve_address(p, u.addr, acc[u.reg0]);
            w.flags &= static_cast<uint8_t>(~isa::kFlagDynamic);
            w.reg0 = 0;
        }
        out.push_back(w);
        ++pc;
    }
    return out;
}

}  // namespace uopsim::generator
