#include "uopsim/generator.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>

#include "plan.hpp"
#include "tilemath.hpp"
#include "uopsim/util.hpp"

namespace uopsim::generator {

std::string CoreId::name() const {
    std::string s = "sm" + std::to_string(sm) + ".";
    if (kind == isa::CoreKind::vmc) return s + "vmc";
    return s + "vcc" + std::to_string(vcc);
}

CoreId CoreId::parse(const std::string& name) {
    auto fail = [&] { throw GeneratorError("bad core name '" + name + "'"); };
    if (name.rfind("sm", 0) != 0) fail();
    size_t dot = name.find('.');
    if (dot == std::string::npos) fail();
    CoreId c;
    c.sm = static_cast<uint16_t>(std::stoul(name.substr(2, dot - 2)));
    std::string rest = name.substr(dot + 1);
    if (rest == "vmc") {
        c.kind = isa::CoreKind::vmc;
    } else if (rest.rfind("vcc", 0) == 0) {
        c.kind = isa::CoreKind::vcc;
        c.vcc = static_cast<uint8_t>(std::stoul(rest.substr(3)));
    } else {
        fail();
    }
    return c;
}

int64_t TileDescriptor::tile_count() const {
    int64_t n = 1;
    for (int64_t e : grid) n *= e;
    return n;
}

int64_t TileDescriptor::linear_tile(std::span<const uint16_t> coord) const {
    int64_t lin = 0;
    for (size_t i = 0; i < grid.size(); ++i) lin = lin * grid[i] + (i < coord.size() ? coord[i] : 0);
    return lin;
}

std::vector<uint16_t> TileDescriptor::coord_of(int64_t linear) const {
    std::vector<uint16_t> c(grid.size());
    for (size_t i = grid.size(); i-- > 0;) {
        c[i] = static_cast<uint16_t>(linear % grid[i]);
        linear /= grid[i];
    }
    return c;
}

const QueueInfo* LoweredProgram::queue(uint16_t dep) const {
    for (const auto& q : queues)
        if (q.dep_id == dep) return &q;
    return nullptr;
}
QueueInfo* LoweredProgram::queue(uint16_t dep) {
    for (auto& q : queues)
        if (q.dep_id == dep) return &q;
    return nullptr;
}

const TileDescriptor* LoweredProgram::descriptor_for_global_tile(int64_t global) const {
    for (const auto& d : descriptors)
        if (global >= d.base && global < d.base + d.tile_count()) return &d;
    return nullptr;
}

size_t LoweredProgram::total_uops() const {
    size_t n = 0;
    for (const auto& [c, s] : streams) n += s.size();
    return n;
}

std::vector<isa::Violation> LoweredProgram::validate() const {
    std::vector<isa::Violation> out;
    std::vector<std::pair<isa::CoreKind, std::span<const isa::UopWord>>> views;
    for (const auto& [core, s] : streams) {
        for (auto& v : isa::validate_stream(s, core.kind))
            out.push_back({v.index, core.name() + ": " + v.message});
        views.push_back({core.kind, std::span<const isa::UopWord>(s)});
    }
    for (auto& v : isa::validate_dep_pairing(views)) out.push_back(v);
    std::set<uint16_t> used;
    for (const auto& [core, s] : streams)
        for (const auto& u : s)
            if (u.dep_id != 0) used.insert(u.dep_id);
    for (uint16_t dep : used)
        if (!queue(dep))
            out.push_back({size_t(-1), "dep " + std::to_string(dep) + " missing from queue table"});
    for (const auto& q : queues)
        if (!used.count(q.dep_id))
            out.push_back({size_t(-1), "queue table entry " + std::to_string(q.dep_id) +
                                           " unused by any stream"});
    return out;
}

// ---------------------------------------------------------------------------
// planning

namespace detail {

std::vector<std::pair<int64_t, int64_t>> split_range(int64_t extent, int parts) {
    std::vector<std::pair<int64_t, int64_t>> out;
    int64_t base = extent / parts, rem = extent % parts, at = 0;
    for (int i = 0; i < parts; ++i) {
        int64_t len = base + (i < rem ? 1 : 0);
        out.push_back({at, len});
        at += len;
    }
    return out;
}

std::vector<const workload::OperatorNode*> topo_nodes(const workload::OperatorGraph& g) {
    std::map<std::string, const workload::OperatorNode*> producer;
    for (const auto& n : g.nodes)
        for (const auto& t : n.outputs) producer[t] = &n;
    std::vector<const workload::OperatorNode*> order;
    std::set<std::string> done;
    std::function<void(const workload::OperatorNode&)> visit = [&](const workload::OperatorNode& n) {
        if (done.count(n.id)) return;
        done.insert(n.id);
        for (const auto& t : n.inputs)
            if (auto it = producer.find(t); it != producer.end()) visit(*it->second);
        order.push_back(&n);
    };
    for (const auto& n : g.nodes) visit(n);
    return order;
}

namespace {

using workload::OpKind;
using workload::SplitAxis;

int parts_of(const workload::TilingChoice& c, SplitAxis a) {
    auto it = c.parts.find(a);
    return it == c.parts.end() ? 1 : it->second;
}

Fetch fetch2(uint16_t t, int64_t r, int64_t c) {
    return {t, {static_cast<uint16_t>(r), static_cast<uint16_t>(c)}};
}
Fetch fetch3(uint16_t t, int64_t h, int64_t r, int64_t c) {
    return {t, {static_cast<uint16_t>(h), static_cast<uint16_t>(r), static_cast<uint16_t>(c)}};
}

std::vector<Job> plan_node(const workload::OperatorNode& node,
                           const workload::TilingChoice& choice,
                           const workload::OperatorGraph& g,
                           const costmodel::HardwareProfile& hw) {
    const uint32_t pairs = hw.pair_count();
    std::vector<Job> jobs;
    auto T = [&](const std::string& name) { return g.tensor_index(name); };
    auto ref = [&](const std::string& name) -> const workload::TensorRef& { return g.tensor(name); };

    switch (node.kind) {
        case OpKind::MATVEC:
        case OpKind::GEMM: {
            const auto& a = ref(node.inputs[0]);
            const auto& out = ref(node.outputs[0]);
            bool mv = node.kind == OpKind::MATVEC;
            int64_t kt = ceil_div(a.cols(), a.tile_cols);
            auto og = out.grid();
            int64_t mg = og[og.size() - 2], ng = og.back();
            int pm = parts_of(choice, SplitAxis::M), pn = parts_of(choice, SplitAxis::N);
            auto mchunks = split_range(mg, pm);
            auto nchunks = split_range(ng, pn);
            for (int i = 0; i < pm; ++i)
                for (int j = 0; j < pn; ++j)
                    for (int64_t r = mchunks[i].first; r < mchunks[i].first + mchunks[i].second; ++r)
                        for (int64_t c = nchunks[j].first; c < nchunks[j].first + nchunks[j].second;
                             ++c) {
                            Job job;
                            job.pair = static_cast<uint32_t>((i * pn + j) % pairs);
                            job.compute = mv ? isa::Opcode::MATVEC : isa::Opcode::GEMM_TILE;
                            job.out = fetch2(T(node.outputs[0]), r, c);
                            for (int64_t k = 0; k < kt; ++k)
                                job.groups.push_back({fetch2(T(node.inputs[1]), k, mv ? 0 : c),
                                                      fetch2(T(node.inputs[0]), r, k)});
                            jobs.push_back(std::move(job));
                        }
            break;
        }
        case OpKind::ATTENTION: {
            const auto& q = ref(node.inputs[0]);
            int64_t heads = q.shape[0];
            int64_t tt = ceil_div(q.shape[1], q.tile_rows);
            int ph = parts_of(choice, SplitAxis::head_block);
            int pt = parts_of(choice, SplitAxis::token_block);
            auto hchunks = split_range(heads, ph);
            auto tchunks = split_range(tt, pt);
            for (int i = 0; i < ph; ++i)
                for (int j = 0; j < pt; ++j)
                    for (int64_t h = hchunks[i].first; h < hchunks[i].first + hchunks[i].second; ++h)
                        for (int64_t t = tchunks[j].first; t < tchunks[j].first + tchunks[j].second;
                             ++t) {
                            Job job;
                            job.pair = static_cast<uint32_t>((i * pt + j) % pairs);
                            job.compute = isa::Opcode::ATTN;
                            job.prologue = fetch3(T(node.inputs[0]), h, t, 0);
                            for (int64_t k = 0; k < tt; ++k)
                                job.groups.push_back({fetch3(T(node.inputs[1]), h, k, 0),
                                                      fetch3(T(node.inputs[2]), h, k, 0)});
                            job.out = fetch3(T(node.outputs[0]), h, t, 0);
                            jobs.push_back(std::move(job));
                        }
            break;
        }
        case OpKind::ROPE:
        case OpKind::RMSNORM: {
            const auto& out = ref(node.outputs[0]);
            int64_t mg = out.grid()[out.grid().size() - 2];
            int pm = parts_of(choice, SplitAxis::M);
            auto chunks = split_range(mg, std::max(pm, 1));
            for (size_t i = 0; i < chunks.size(); ++i)
                for (int64_t r = chunks[i].first; r < chunks[i].first + chunks[i].second; ++r) {
                    Job job;
                    job.pair = static_cast<uint32_t>(i % pairs);
                    job.compute =
                        node.kind == OpKind::ROPE ? isa::Opcode::ROPE : isa::Opcode::RMSNORM;
                    job.groups.push_back(
                        {fetch2(T(node.inputs[0]), r, 0), fetch2(T(node.inputs[1]), r, 0)});
                    job.out = fetch2(T(node.outputs[0]), r, 0);
                    jobs.push_back(std::move(job));
                }
            break;
        }
        case OpKind::ELEMWISE: {
            const auto& out = ref(node.outputs[0]);
            auto og = out.grid();
            int64_t mg = og[og.size() - 2], ng = og.back();
            int pm = parts_of(choice, SplitAxis::M);
            auto chunks = split_range(mg, pm);
            int32_t func = node.inputs.size() == 2 ? 2 : 0;
            if (node.attrs.count("func")) {
                const std::string& f = node.attrs.at("func");
                if (f == "relu") func = 0;
                else if (f == "silu") func = 1;
                else if (f == "add") func = 2;
                else if (f == "mul") func = 3;
                else throw GeneratorError("node " + node.id + ": unknown elemwise func " + f);
            }
            for (int i = 0; i < pm; ++i)
                for (int64_t r = chunks[i].first; r < chunks[i].first + chunks[i].second; ++r)
                    for (int64_t c = 0; c < ng; ++c) {
                        Job job;
                        job.pair = static_cast<uint32_t>(i % pairs);
                        job.compute = isa::Opcode::ELEMWISE;
                        job.imm = func;
                        for (const auto& in : node.inputs) job.groups.push_back({fetch2(T(in), r, c)});
                        job.out = fetch2(T(node.outputs[0]), r, c);
                        jobs.push_back(std::move(job));
                    }
            break;
        }
        case OpKind::EMBED: {
            const auto& out = ref(node.outputs[0]);
            const auto& table = ref(node.inputs[0]);
            int64_t mg = out.grid()[out.grid().size() - 2];
            int64_t vt = ceil_div(table.rows(), table.tile_rows);
            int pm = parts_of(choice, SplitAxis::M);
            auto chunks = split_range(mg, pm);
            for (int i = 0; i < pm; ++i)
                for (int64_t r = chunks[i].first; r < chunks[i].first + chunks[i].second; ++r) {
                    Job job;
                    job.pair = static_cast<uint32_t>(i % pairs);
                    job.compute = isa::Opcode::EMBED;
                    job.prologue = fetch2(T(node.inputs[1]), r, 0);
                    for (int64_t v = 0; v < vt; ++v)
                        job.groups.push_back({fetch2(T(node.inputs[0]), v, 0)});
                    job.out = fetch2(T(node.outputs[0]), r, 0);
                    jobs.push_back(std::move(job));
                }
            break;
        }
        case OpKind::MLP:
            throw GeneratorError("mlp nodes are expanded at parse time");
    }
    return jobs;
}

}  // namespace

std::vector<OpPlan> plan_graph(const workload::OperatorGraph& g,
                               const std::map<std::string, workload::TilingChoice>& tilings,
                               const costmodel::HardwareProfile& hw) {
    if (hw.vmc_per_sm != 1)
        throw GeneratorError("lowering assumes one VMC per SM (profile has " +
                             std::to_string(hw.vmc_per_sm) + ")");
    std::vector<OpPlan> plans;
    uint32_t ordinal = 0;
    for (const workload::OperatorNode* node : topo_nodes(g)) {
        auto it = tilings.find(node->id);
        if (it == tilings.end()) throw GeneratorError("no tiling chosen for node " + node->id);
        OpPlan plan;
        plan.node = node;
        plan.ordinal = ordinal++;
        plan.parts = it->second.total_parts();
        plan.jobs = plan_node(*node, it->second, g, hw);
        plans.push_back(std::move(plan));
    }
    return plans;
}

uint64_t group_flops(const Job& job, size_t gi, const workload::OperatorGraph& g) {
    auto dims = [&](const Fetch& f) {
        const auto& t = g.tensors[f.tensor];
        auto grid = t.grid();
        size_t n = grid.size();
        return uopsim::detail::TileDims{t.tile_rows_at(f.coord[n - 2]),
                                        t.tile_cols_at(f.coord[n - 1])};
    };
    std::vector<uopsim::detail::TileDims> grp;
    for (const auto& f : job.groups[gi]) grp.push_back(dims(f));
    uopsim::detail::TileDims pro = job.prologue ? dims(*job.prologue) : uopsim::detail::TileDims{};
    return uopsim::detail::compute_group_flops(job.compute, grp, pro, dims(job.out), gi,
                                               job.groups.size());
}

uint64_t job_flops(const Job& job, const workload::OperatorGraph& g) {
    uint64_t f = 0;
    for (size_t i = 0; i < job.groups.size(); ++i) f += group_flops(job, i, g);
    return f;
}

std::vector<TileDescriptor> build_descriptors(const workload::OperatorGraph& g) {
    std::vector<TileDescriptor> out;
    int64_t base = 0;
    for (size_t i = 0; i < g.tensors.size(); ++i) {
        const auto& t = g.tensors[i];
        TileDescriptor d;
        d.tensor = t.name;
        d.index = static_cast<uint16_t>(i);
        d.base = base;
        d.shape = t.shape;
        d.grid = t.grid();
        d.tile_rows = t.tile_rows;
        d.tile_cols = t.tile_cols;
        d.init = t.init;
        d.external = g.is_external(t.name);
        base += d.tile_count();
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// adaptive tiling

namespace {

// Worst per-pair cost of one operator under a choice, through the same cost
// model the machine uses (issue + transfer + compute + queue ops per job).
int64_t op_task_cost(const workload::OperatorNode& node, const workload::TilingChoice& choice,
                     const workload::OperatorGraph& g, const costmodel::HardwareProfile& hw) {
    auto jobs = [&] {
        std::map<std::string, workload::TilingChoice> one{{node.id, choice}};
        workload::OperatorGraph dummy;
        (void)dummy;
        return detail::plan_graph(g,
                                  [&] {
                                      std::map<std::string, workload::TilingChoice> all;
                                      for (const auto& n : g.nodes)
                                          all.emplace(n.id, n.id == node.id
                                                                ? choice
                                                                : workload::TilingChoice{n.id, {}});
                                      return all;
                                  }(),
                                  hw);
    };
    // plan only this node
    std::vector<detail::Job> node_jobs;
    for (auto& plan : jobs()) {
        if (plan.node->id == node.id) node_jobs = std::move(plan.jobs);
    }
    std::map<uint32_t, int64_t> per_pair;
    for (const auto& job : node_jobs) {
        uint64_t bytes = 0;
        int uops = 4;  // alloc + free + store + compute
        if (job.prologue) {
            bytes += g.tensors[job.prologue->tensor].tile_bytes();
            ++uops;
        }
        for (const auto& grp : job.groups)
            for (const auto& f : grp) {
                bytes += g.tensors[f.tensor].tile_bytes();
                ++uops;
            }
        bytes += 2ull * g.tensors[job.out.tensor].tile_bytes();  // store + consumer reload
        int64_t c = int64_t(uops) * hw.issue_cost_ns + costmodel::transfer_ns(bytes, hw) +
                    costmodel::compute_ns(detail::job_flops(job, g), hw) +
                    int64_t(2 + job.groups.size()) * hw.queue_op_cost_ns;
        per_pair[job.pair] += c;
    }
    int64_t worst = 0;
    for (auto& [p, c] : per_pair) worst = std::max(worst, c);
    return worst;
}

int64_t makespan_from_costs(const workload::OperatorGraph& g,
                            const std::map<std::string, int64_t>& node_cost,
                            const std::map<std::string, workload::TilingChoice>& tilings,
                            const costmodel::HardwareProfile& hw) {
    int64_t total = 0;
    for (const auto& n : g.nodes)
        total += node_cost.at(n.id) * tilings.at(n.id).total_parts();
    std::map<std::string, int64_t> longest;
    int64_t crit = 0;
    for (const workload::OperatorNode* n : detail::topo_nodes(g)) {
        int64_t best = 0;
        for (const auto& in : n->inputs)
            if (const auto* p = g.producer_of(in))
                best = std::max(best, longest[p->id] + int64_t(hw.queue_op_cost_ns));
        longest[n->id] = best + node_cost.at(n->id);
        crit = std::max(crit, longest[n->id]);
    }
    return std::max(crit, total / std::max<int64_t>(1, hw.pair_count()));
}

}  // namespace

int64_t estimate_tiling_makespan(const workload::OperatorGraph& g,
                                 const std::map<std::string, workload::TilingChoice>& tilings,
                                 const costmodel::HardwareProfile& hw) {
    std::map<std::string, int64_t> node_cost;
    for (const auto& n : g.nodes) node_cost[n.id] = op_task_cost(n, tilings.at(n.id), g, hw);
    return makespan_from_costs(g, node_cost, tilings, hw);
}

std::map<std::string, workload::TilingChoice> select_tilings(
    const workload::OperatorGraph& g, const costmodel::HardwareProfile& hw, double theta) {
    if (theta <= 1.0) throw GeneratorError("theta must exceed 1");
    std::map<std::string, std::vector<workload::TilingChoice>> catalog;
    std::map<std::string, size_t> pick;  // index into the catalog, coarsest = back
    for (const auto& n : g.nodes) {
        catalog[n.id] = workload::decompositions(n, g, hw);
        pick[n.id] = catalog[n.id].size() - 1;
    }
    auto assemble = [&](const std::map<std::string, size_t>& idx) {
        std::map<std::string, workload::TilingChoice> t;
        for (const auto& n : g.nodes) t.emplace(n.id, catalog[n.id][idx.at(n.id)]);
        return t;
    };

    auto tilings = assemble(pick);
    std::map<std::string, int64_t> node_cost;
    for (const auto& n : g.nodes) node_cost[n.id] = op_task_cost(n, tilings.at(n.id), g, hw);
    int64_t makespan = makespan_from_costs(g, node_cost, tilings, hw);

    for (size_t iter = 0; iter < 64 * g.nodes.size() + 64; ++iter) {
        int64_t total = 0;
        for (const auto& n : g.nodes)
            total += node_cost.at(n.id) * tilings.at(n.id).total_parts();
        int64_t avg_per_core = std::max<int64_t>(1, total / std::max<int64_t>(1, hw.pair_count()));

        std::map<std::string, int64_t> longest;
        std::map<std::string, std::string> prev;
        std::string crit_end;
        int64_t crit = 0;
        for (const workload::OperatorNode* n : detail::topo_nodes(g)) {
            int64_t best = 0;
            std::string via;
            for (const auto& in : n->inputs)
                if (const auto* p = g.producer_of(in))
                    if (longest[p->id] + int64_t(hw.queue_op_cost_ns) > best) {
                        best = longest[p->id] + hw.queue_op_cost_ns;
                        via = p->id;
                    }
            longest[n->id] = best + node_cost.at(n->id);
            prev[n->id] = via;
            if (longest[n->id] > crit) {
                crit = longest[n->id];
                crit_end = n->id;
            }
        }
        if (crit_end.empty() || double(crit) <= theta * double(avg_per_core)) break;

        // costliest refinable node on the dominant path, lowest id on ties
        std::string best_node;
        int64_t best_cost = -1;
        for (std::string at = crit_end; !at.empty(); at = prev.count(at) ? prev[at] : "") {
            if (pick[at] > 0 &&
                (node_cost[at] > best_cost ||
                 (node_cost[at] == best_cost && (best_node.empty() || at < best_node)))) {
                best_cost = node_cost[at];
                best_node = at;
            }
            if (!prev.count(at)) break;
        }
        if (best_node.empty()) break;

        auto trial_pick = pick;
        trial_pick[best_node]--;
        auto trial = assemble(trial_pick);
        auto trial_cost = node_cost;
        trial_cost[best_node] = op_task_cost(*g.find_node(best_node), trial.at(best_node), g, hw);
        int64_t trial_makespan = makespan_from_costs(g, trial_cost, trial, hw);
        if (double(trial_makespan) > double(makespan) * 0.99) break;  // marginal benefit
        pick = std::move(trial_pick);
        tilings = std::move(trial);
        node_cost = std::move(trial_cost);
        makespan = trial_makespan;
    }
    return tilings;
}

}  // namespace uopsim::generator
