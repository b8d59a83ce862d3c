#include "uopsim/workload.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uopsim/util.hpp"

namespace uopsim::workload {

using nlohmann::ordered_json;

int64_t TensorRef::rows() const { return rank() >= 2 ? shape[rank() - 2] : 1; }
int64_t TensorRef::cols() const { return shape.empty() ? 1 : shape.back(); }

int64_t TensorRef::elem_count() const {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::vector<int64_t> TensorRef::grid() const {
    std::vector<int64_t> g;
    for (int64_t i = 0; i + 2 < rank(); ++i) g.push_back(shape[i]);
    g.push_back(ceil_div(rows(), tile_rows));
    g.push_back(ceil_div(cols(), tile_cols));
    return g;
}

int64_t TensorRef::tile_count() const {
    int64_t n = 1;
    for (int64_t e : grid()) n *= e;
    return n;
}

int64_t TensorRef::tile_rows_at(int64_t row_tile) const {
    return std::min(tile_rows, rows() - row_tile * tile_rows);
}
int64_t TensorRef::tile_cols_at(int64_t col_tile) const {
    return std::min(tile_cols, cols() - col_tile * tile_cols);
}

void TensorRef::validate() const {
    auto fail = [&](const std::string& m) { throw WorkloadError("tensor " + name + ": " + m); };
    if (name.empty()) fail("empty name");
    for (char ch : name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-'))
            fail("names are restricted to [A-Za-z0-9._-]");
    if (shape.empty() || shape.size() > 4) fail("rank must be 1..4");
    for (int64_t e : shape)
        if (e < 1) fail("extents must be >= 1");
    if (tile_rows < 1 || tile_cols < 1) fail("tile extents must be >= 1");
    if (tile_rows > rows() || tile_cols > cols()) fail("tile larger than tensor");
}

std::string_view opkind_name(OpKind k) {
    switch (k) {
        case OpKind::MATVEC: return "matvec";
        case OpKind::GEMM: return "gemm";
        case OpKind::ATTENTION: return "attention";
        case OpKind::ROPE: return "rope";
        case OpKind::RMSNORM: return "rmsnorm";
        case OpKind::MLP: return "mlp";
        case OpKind::EMBED: return "embed";
        case OpKind::ELEMWISE: return "elemwise";
    }
    return "?";
}

std::optional<OpKind> opkind_from_name(std::string_view n) {
    for (OpKind k : {OpKind::MATVEC, OpKind::GEMM, OpKind::ATTENTION, OpKind::ROPE,
                     OpKind::RMSNORM, OpKind::MLP, OpKind::EMBED, OpKind::ELEMWISE})
        if (opkind_name(k) == n) return k;
    return std::nullopt;
}

const TensorRef& OperatorGraph::tensor(const std::string& name) const {
    if (const TensorRef* t = find_tensor(name)) return *t;
    throw WorkloadError("unknown tensor '" + name + "'");
}

const TensorRef* OperatorGraph::find_tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const OperatorNode* OperatorGraph::find_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const OperatorNode* OperatorGraph::producer_of(const std::string& tensor) const {
    for (const auto& n : nodes)
        for (const auto& o : n.outputs)
            if (o == tensor) return &n;
    return nullptr;
}

bool OperatorGraph::is_external(const std::string& tensor) const {
    return producer_of(tensor) == nullptr;
}

uint16_t OperatorGraph::tensor_index(const std::string& name) const {
    for (size_t i = 0; i < tensors.size(); ++i)
        if (tensors[i].name == name) return static_cast<uint16_t>(i);
    throw WorkloadError("unknown tensor '" + name + "'");
}

namespace {

void check_arity(const OperatorNode& n, size_t in, size_t out) {
    if (n.inputs.size() != in || n.outputs.size() != out)
        throw WorkloadError("node " + n.id + ": " + std::string(opkind_name(n.kind)) +
                            " expects " + std::to_string(in) + " inputs / " +
                            std::to_string(out) + " outputs");
}

void shape_fail(const OperatorNode& n, const std::string& tensor, const std::string& want) {
    throw WorkloadError("node " + n.id + ": shape mismatch on tensor '" + tensor + "': " + want);
}

void require_vec(const OperatorNode& n, const TensorRef& t) {
    if (t.rank() != 2 || t.cols() != 1) shape_fail(n, t.name, "expected a column vector (M,1)");
}

void check_node_shapes(const OperatorNode& n, const OperatorGraph& g) {
    auto T = [&](const std::string& name) -> const TensorRef& { return g.tensor(name); };
    switch (n.kind) {
        case OpKind::MATVEC: {
            check_arity(n, 2, 1);
            const auto &a = T(n.inputs[0]), &x = T(n.inputs[1]), &o = T(n.outputs[0]);
            if (a.rank() != 2) shape_fail(n, a.name, "matrix (M,K) expected");
            require_vec(n, x);
            require_vec(n, o);
            if (a.cols() != x.rows()) shape_fail(n, x.name, "K extent must match matrix columns");
            if (a.rows() != o.rows()) shape_fail(n, o.name, "M extent must match matrix rows");
            if (a.tile_cols != x.tile_rows)
                shape_fail(n, x.name, "k-tile granularity: matrix tile_cols must equal vector tile_rows");
            if (a.tile_rows != o.tile_rows)
                shape_fail(n, o.name, "output tile_rows must equal matrix tile_rows");
            break;
        }
        case OpKind::GEMM: {
            check_arity(n, 2, 1);
            const auto &a = T(n.inputs[0]), &b = T(n.inputs[1]), &c = T(n.outputs[0]);
            if (a.rank() != 2 || b.rank() != 2 || c.rank() != 2)
                shape_fail(n, c.name, "gemm operands must be matrices");
            if (a.cols() != b.rows()) shape_fail(n, b.name, "K extents must match");
            if (a.rows() != c.rows() || b.cols() != c.cols())
                shape_fail(n, c.name, "output must be (M,N)");
            if (a.tile_cols != b.tile_rows)
                shape_fail(n, b.name, "k-tile granularity: A tile_cols must equal B tile_rows");
            if (a.tile_rows != c.tile_rows || b.tile_cols != c.tile_cols)
                shape_fail(n, c.name, "output tiles must match (A rows, B cols) tiles");
            break;
        }
        case OpKind::ATTENTION: {
            check_arity(n, 3, 1);
            const auto& q = T(n.inputs[0]);
            if (q.rank() != 3) shape_fail(n, q.name, "attention tensors are (H,S,D)");
            for (const auto& name : {n.inputs[1], n.inputs[2], n.outputs[0]}) {
                const auto& t = T(name);
                if (t.shape != q.shape) shape_fail(n, name, "must match Q's (H,S,D)");
                if (t.tile_rows != q.tile_rows || t.tile_cols != q.tile_cols)
                    shape_fail(n, name, "must share Q's tile shape");
            }
            if (q.tile_cols != q.cols())
                shape_fail(n, q.name, "tile_cols must cover the full head dim");
            break;
        }
        case OpKind::ROPE: {
            check_arity(n, 2, 1);
            const auto &x = T(n.inputs[0]), &t = T(n.inputs[1]), &o = T(n.outputs[0]);
            require_vec(n, x);
            if (t.shape != x.shape || o.shape != x.shape)
                shape_fail(n, o.name, "rope operands must share the input shape");
            if (t.tile_rows != x.tile_rows || o.tile_rows != x.tile_rows)
                shape_fail(n, o.name, "rope operands must share the input tile shape");
            if (x.tile_rows % 2 != 0) shape_fail(n, x.name, "rope tile_rows must be even");
            break;
        }
        case OpKind::RMSNORM: {
            check_arity(n, 2, 1);
            const auto &x = T(n.inputs[0]), &w = T(n.inputs[1]), &o = T(n.outputs[0]);
            require_vec(n, x);
            if (w.shape != x.shape || o.shape != x.shape)
                shape_fail(n, o.name, "rmsnorm operands must share the input shape");
            if (w.tile_rows != x.tile_rows || o.tile_rows != x.tile_rows)
                shape_fail(n, o.name, "rmsnorm operands must share the input tile shape");
            break;
        }
        case OpKind::ELEMWISE: {
            if (n.inputs.size() != 1 && n.inputs.size() != 2)
                throw WorkloadError("node " + n.id + ": elemwise takes 1 or 2 inputs");
            if (n.outputs.size() != 1) check_arity(n, n.inputs.size(), 1);
            const auto& o = T(n.outputs[0]);
            for (const auto& name : n.inputs) {
                const auto& t = T(name);
                if (t.shape != o.shape) shape_fail(n, name, "elemwise operands must share shape");
                if (t.tile_rows != o.tile_rows || t.tile_cols != o.tile_cols)
                    shape_fail(n, name, "elemwise operands must share tile shape");
            }
            break;
        }
        case OpKind::EMBED: {
            check_arity(n, 2, 1);
            const auto &table = T(n.inputs[0]), &ids = T(n.inputs[1]), &o = T(n.outputs[0]);
            if (table.rank() != 2) shape_fail(n, table.name, "embedding table must be (V,D)");
            require_vec(n, ids);
            if (o.rank() != 2 || o.rows() != ids.rows() || o.cols() != table.cols())
                shape_fail(n, o.name, "output must be (N,D)");
            if (o.tile_cols != table.tile_cols || o.tile_cols != table.cols())
                shape_fail(n, o.name, "embed tiles must cover the full row (D)");
            if (o.tile_rows != ids.tile_rows)
                shape_fail(n, o.name, "output tile_rows must equal id tile_rows");
            break;
        }
        case OpKind::MLP:
            throw WorkloadError("node " + n.id + ": mlp nodes are expanded at parse time");
    }
}

}  // namespace

void OperatorGraph::validate() const {
    std::set<std::string> tnames;
    for (const auto& t : tensors) {
        t.validate();
        if (!tnames.insert(t.name).second) throw WorkloadError("duplicate tensor '" + t.name + "'");
    }
    std::set<std::string> ids;
    std::map<std::string, std::string> producer;  // tensor -> node id
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) throw WorkloadError("duplicate node id '" + n.id + "'");
        for (const auto& t : n.inputs)
            if (!find_tensor(t)) throw WorkloadError("node " + n.id + ": unknown tensor '" + t + "'");
        for (const auto& t : n.outputs) {
            if (!find_tensor(t)) throw WorkloadError("node " + n.id + ": unknown tensor '" + t + "'");
            auto [it, fresh] = producer.emplace(t, n.id);
            if (!fresh)
                throw WorkloadError("tensor '" + t + "' has two producers: " + it->second +
                                    " and " + n.id);
        }
    }
    for (const auto& n : nodes) check_node_shapes(n, *this);

    // Declared edges must match the derived producer->consumer relation.
    std::set<std::tuple<std::string, std::string, std::string>> derived;
    for (const auto& n : nodes)
        for (const auto& t : n.inputs)
            if (auto it = producer.find(t); it != producer.end())
                derived.insert({it->second, n.id, t});
    for (const auto& e : edges)
        if (!derived.count({e.from, e.to, e.tensor}))
            throw WorkloadError("edge " + e.from + "->" + e.to + " via '" + e.tensor +
                                "' does not match any producer/consumer pair");

    // Acyclicity (DFS, names the cycle).
    std::map<std::string, std::vector<std::string>> succ;
    for (auto& [from, to, tensor] : derived) succ[from].push_back(to), (void)tensor;
    std::map<std::string, int> state;  // 0 new, 1 open, 2 done
    std::vector<std::string> path;
    std::function<void(const std::string&)> dfs = [&](const std::string& id) {
        state[id] = 1;
        path.push_back(id);
        for (const auto& next : succ[id]) {
            if (state[next] == 1) {
                std::string cyc;
                auto it = std::find(path.begin(), path.end(), next);
                for (; it != path.end(); ++it) cyc += *it + " -> ";
                throw WorkloadError("cycle detected: " + cyc + next);
            }
            if (state[next] == 0) dfs(next);
        }
        state[id] = 2;
        path.pop_back();
    };
    for (const auto& n : nodes)
        if (state[n.id] == 0) dfs(n.id);
}

uint64_t OperatorGraph::content_hash() const { return fnv1a(serialize_workload(*this)); }

// ---------------------------------------------------------------------------
// parse / serialize

namespace {

InitKind init_from_name(const std::string& s) {
    if (s == "random") return InitKind::random;
    if (s == "zeros") return InitKind::zeros;
    if (s == "ones") return InitKind::ones;
    if (s == "arange") return InitKind::arange;
    throw WorkloadError("unknown init kind '" + s + "'");
}

std::string init_name(InitKind k) {
    switch (k) {
        case InitKind::random: return "random";
        case InitKind::zeros: return "zeros";
        case InitKind::ones: return "ones";
        case InitKind::arange: return "arange";
    }
    return "?";
}

// Rewrites an mlp node into gemm -> elemwise -> gemm with derived
// intermediate tensors, so fusion has the explicit chain to work on.
void expand_mlp(OperatorGraph& g, const OperatorNode& n) {
    check_arity(n, 3, 1);
    const auto& w1 = g.tensor(n.inputs[1]);
    std::string func = n.attrs.count("func") ? n.attrs.at("func") : "silu";
    TensorRef h{.name = n.id + ".h",
                .shape = {w1.rows(), 1},
                .tile_rows = w1.tile_rows,
                .tile_cols = 1,
                .init = InitKind::zeros};
    TensorRef a = h;
    a.name = n.id + ".a";
    g.tensors.push_back(h);
    g.tensors.push_back(a);
    g.nodes.push_back({n.id + ".fc1", OpKind::GEMM, {n.inputs[1], n.inputs[0]}, {h.name}, {}});
    g.nodes.push_back({n.id + ".act", OpKind::ELEMWISE, {h.name}, {a.name}, {{"func", func}}});
    g.nodes.push_back({n.id + ".fc2", OpKind::GEMM, {n.inputs[2], a.name}, {n.outputs[0]}, {}});
}

}  // namespace

OperatorGraph parse_workload(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw WorkloadError(std::string("workload parse: ") + e.what());
    }
    OperatorGraph g;
    try {
        for (const auto& jt : j.value("tensors", ordered_json::array())) {
            TensorRef t;
            t.name = jt.at("name").get<std::string>();
            t.shape = jt.at("shape").get<std::vector<int64_t>>();
            auto tile = jt.at("tile").get<std::vector<int64_t>>();
            if (tile.size() != 2) throw WorkloadError("tensor " + t.name + ": tile must be [rows, cols]");
            t.tile_rows = tile[0];
            t.tile_cols = tile[1];
            t.init = init_from_name(jt.value("init", "random"));
            g.tensors.push_back(std::move(t));
        }
        std::vector<OperatorNode> mlps;
        for (const auto& jn : j.value("operators", ordered_json::array())) {
            OperatorNode n;
            n.id = jn.at("id").get<std::string>();
            auto kind = opkind_from_name(jn.at("kind").get<std::string>());
            if (!kind) throw WorkloadError("node " + n.id + ": unknown kind");
            n.kind = *kind;
            n.inputs = jn.value("inputs", std::vector<std::string>{});
            n.outputs = jn.value("outputs", std::vector<std::string>{});
            if (jn.contains("attrs"))
                for (auto& [k, v] : jn.at("attrs").items())
                    n.attrs[k] = v.is_string() ? v.get<std::string>() : v.dump();
            if (n.kind == OpKind::MLP)
                mlps.push_back(n);
            else
                g.nodes.push_back(std::move(n));
        }
        for (const auto& n : mlps) expand_mlp(g, n);
        for (const auto& je : j.value("edges", ordered_json::array())) {
            g.edges.push_back({je.at("from").get<std::string>(), je.at("to").get<std::string>(),
                               je.at("tensor").get<std::string>()});
        }
    } catch (const ordered_json::exception& e) {
        throw WorkloadError(std::string("workload schema: ") + e.what());
    }
    g.validate();
    return g;
}

std::string serialize_workload(const OperatorGraph& g) {
    ordered_json j;
    j["tensors"] = ordered_json::array();
    for (const auto& t : g.tensors) {
        ordered_json jt;
        jt["name"] = t.name;
        jt["shape"] = t.shape;
        jt["tile"] = {t.tile_rows, t.tile_cols};
        jt["init"] = init_name(t.init);
        j["tensors"].push_back(jt);
    }
    j["operators"] = ordered_json::array();
    for (const auto& n : g.nodes) {
        ordered_json jn;
        jn["id"] = n.id;
        jn["kind"] = std::string(opkind_name(n.kind));
        jn["inputs"] = n.inputs;
        jn["outputs"] = n.outputs;
        if (!n.attrs.empty()) jn["attrs"] = n.attrs;
        j["operators"].push_back(jn);
    }
    j["edges"] = ordered_json::array();
    for (const auto& n : g.nodes)
        for (const auto& t : n.inputs)
            if (const OperatorNode* p = g.producer_of(t))
                j["edges"].push_back({{"from", p->id}, {"to", n.id}, {"tensor", t}});
    return j.dump(2) + "\n";
}

std::map<std::string, std::vector<float>> synthesize_inputs(const OperatorGraph& g,
                                                            uint64_t seed) {
    std::map<std::string, std::vector<float>> out;
    for (const auto& t : g.tensors) {
        std::vector<float> v(static_cast<size_t>(t.elem_count()), 0.0f);
        if (g.is_external(t.name)) {
            uint64_t state = seed ^ fnv1a(t.name);
            switch (t.init) {
                case InitKind::random:
                    for (auto& x : v) x = unit_float(state);
                    break;
                case InitKind::zeros:
                    break;
                case InitKind::ones:
                    std::fill(v.begin(), v.end(), 1.0f);
                    break;
                case InitKind::arange:
                    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 97);
                    break;
            }
        }
        out.emplace(t.name, std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// tiling catalog

std::string_view axis_name(SplitAxis a) {
    switch (a) {
        case SplitAxis::M: return "M";
        case SplitAxis::N: return "N";
        case SplitAxis::K: return "K";
        case SplitAxis::token_block: return "token";
        case SplitAxis::head_block: return "head";
    }
    return "?";
}

int TilingChoice::total_parts() const {
    int n = 1;
    for (auto& [a, p] : parts) n *= p;
    return n;
}

uint64_t operator_flops(const OperatorNode& n, const OperatorGraph& g) {
    auto T = [&](const std::string& name) -> const TensorRef& { return g.tensor(name); };
    switch (n.kind) {
        case OpKind::MATVEC: {
            const auto& a = T(n.inputs[0]);
            return 2ull * a.rows() * a.cols();
        }
        case OpKind::GEMM: {
            const auto &a = T(n.inputs[0]), &b = T(n.inputs[1]);
            return 2ull * a.rows() * a.cols() * b.cols();
        }
        case OpKind::ATTENTION: {
            const auto& q = T(n.inputs[0]);
            uint64_t h = q.shape[0], s = q.shape[1], d = q.shape[2];
            return h * s * s * (4ull * d + 8ull);
        }
        case OpKind::ROPE:
            return 3ull * T(n.outputs[0]).elem_count();
        case OpKind::RMSNORM:
            return 4ull * T(n.outputs[0]).elem_count();
        case OpKind::ELEMWISE:
            return (n.inputs.size() == 1 ? 4ull : 1ull) * T(n.outputs[0]).elem_count();
        case OpKind::EMBED:
            return T(n.outputs[0]).elem_count();
        case OpKind::MLP:
            return 0;
    }
    return 0;
}

std::vector<TilingChoice> decompositions(const OperatorNode& n, const OperatorGraph& g,
                                         const costmodel::HardwareProfile& hw) {
    // Every tensor touched by the node must fit a slot tile-wise.
    for (const auto& lists : {n.inputs, n.outputs})
        for (const auto& name : lists) {
            const auto& t = g.tensor(name);
            if (t.tile_bytes() > hw.slot_size)
                throw WorkloadError("node " + n.id + ": tensor '" + name + "' tile (" +
                                    std::to_string(t.tile_bytes()) +
                                    " bytes) exceeds the slot size; no valid decomposition");
        }
    const int pairs = static_cast<int>(hw.pair_count());
    std::vector<TilingChoice> out;
    auto add = [&](std::map<SplitAxis, int> parts) {
        TilingChoice c{n.id, std::move(parts)};
        if (c.total_parts() <= pairs && std::find(out.begin(), out.end(), c) == out.end())
            out.push_back(std::move(c));
    };

    switch (n.kind) {
        case OpKind::MATVEC:
        case OpKind::GEMM: {
            const auto& c = g.tensor(n.outputs[0]);
            auto grid = c.grid();
            int64_t mg = grid[grid.size() - 2], ng = grid.back();
            for (int pm = 1; pm <= std::min<int64_t>(mg, pairs); ++pm) {
                if (n.kind == OpKind::GEMM) {
                    for (int pn = 1; pn <= std::min<int64_t>(ng, pairs); ++pn)
                        add({{SplitAxis::M, pm}, {SplitAxis::N, pn}});
                } else {
                    add({{SplitAxis::M, pm}});
                }
            }
            break;
        }
        case OpKind::ATTENTION: {
            const auto& q = g.tensor(n.inputs[0]);
            int64_t heads = q.shape[0];
            int64_t token_tiles = ceil_div(q.shape[1], q.tile_rows);
            for (int ph = 1; ph <= std::min<int64_t>(heads, pairs); ++ph)
                for (int pt = 1; pt <= std::min<int64_t>(token_tiles, pairs); ++pt)
                    add({{SplitAxis::head_block, ph}, {SplitAxis::token_block, pt}});
            break;
        }
        case OpKind::ROPE:
        case OpKind::ELEMWISE:
        case OpKind::EMBED: {
            const auto& o = g.tensor(n.outputs[0]);
            auto grid = o.grid();
            int64_t mg = grid[grid.size() - 2];
            for (int pm = 1; pm <= std::min<int64_t>(mg, pairs); ++pm) add({{SplitAxis::M, pm}});
            break;
        }
        case OpKind::RMSNORM: {
            const auto& x = g.tensor(n.inputs[0]);
            if (x.tile_count() != 1)
                throw WorkloadError("node " + n.id +
                                    ": rmsnorm requires a single-tile vector; no valid decomposition");
            add({});
            break;
        }
        case OpKind::MLP:
            throw WorkloadError("mlp nodes are expanded at parse time");
    }
    if (out.empty()) throw WorkloadError("node " + n.id + ": no valid decomposition");
    std::stable_sort(out.begin(), out.end(), [](const TilingChoice& a, const TilingChoice& b) {
        if (a.total_parts() != b.total_parts()) return a.total_parts() > b.total_parts();
        if (a.parts.size() != b.parts.size()) return a.parts.size() < b.parts.size();
        return a.parts < b.parts;
    });
    return out;
}

}  // namespace uopsim::workload
