// Assembly + queue-table sidecar serialization for LoweredPrograms. One
// stream file per core, a sidecar with descriptors, queue wiring, slot
// budget and the baseline allocation certificate.

#include <charconv>
#include <sstream>

#include "uopsim/generator.hpp"
#include "uopsim/util.hpp"

namespace uopsim::generator {

namespace {

workload::InitKind init_from(const std::string& s) {
    if (s == "random") return workload::InitKind::random;
    if (s == "zeros") return workload::InitKind::zeros;
    if (s == "ones") return workload::InitKind::ones;
    if (s == "arange") return workload::InitKind::arange;
    throw GeneratorError("sidecar: unknown init kind '" + s + "'");
}

const char* init_name(workload::InitKind k) {
    switch (k) {
        case workload::InitKind::random: return "random";
        case workload::InitKind::zeros: return "zeros";
        case workload::InitKind::ones: return "ones";
        case workload::InitKind::arange: return "arange";
    }
    return "?";
}

std::string dims(const std::vector<int64_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "x" : "") + std::to_string(v[i]);
    return s;
}

std::vector<int64_t> parse_dims(const std::string& s) {
    std::vector<int64_t> out;
    size_t at = 0;
    while (at < s.size()) {
        size_t x = s.find('x', at);
        out.push_back(std::stoll(s.substr(at, x - at)));
        if (x == std::string::npos) break;
        at = x + 1;
    }
    return out;
}

std::map<std::string, std::string> kv_fields(std::istringstream& is) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (is >> tok) {
        size_t eq = tok.find('=');
        if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

}  // namespace

std::string serialize_stream(const LoweredProgram& p, const CoreId& core) {
    std::ostringstream os;
    os << "# uopsim stream " << core.name() << "\n";
    const auto& s = p.streams.at(core);
    const auto& m = p.meta.at(core);
    for (size_t i = 0; i < s.size(); ++i) os << isa::format_uop(s[i], m[i].op) << "\n";
    return os.str();
}

std::string serialize_sidecar(const LoweredProgram& p) {
    std::ostringstream os;
    os << "# uopsim program\n";
    os << "workload name=" << (p.workload_name.empty() ? "-" : p.workload_name)
       << " hash=" << p.workload_hash << " seed=" << p.input_seed << "\n";
    os << "profile name=" << (p.profile_name.empty() ? "-" : p.profile_name) << "\n";
    os << "slots budget=" << p.slot_budget << " local_depth=" << p.local_queue_depth << "\n";
    os << "opers count=" << p.operator_count << " barrier=" << (p.barrier_mode ? 1 : 0) << "\n";
    for (const auto& d : p.descriptors)
        os << "desc t" << d.index << " name=" << d.tensor << " base=" << d.base
           << " shape=" << dims(d.shape) << " tile=" << d.tile_rows << "x" << d.tile_cols
           << " init=" << init_name(d.init) << " external=" << (d.external ? 1 : 0) << "\n";
    for (const auto& q : p.queues)
        os << "queue dep=" << q.dep_id << " prod=" << q.producer.name()
           << " cons=" << q.consumer.name() << " depth=" << q.depth
           << " local=" << (q.local ? 1 : 0) << " bytes=" << q.tile_bytes << "\n";
    for (size_t i = 0; i < p.baseline_alloc_order.size(); i += 16) {
        os << "baseline";
        for (size_t j = i; j < std::min(i + 16, p.baseline_alloc_order.size()); ++j)
            os << " " << p.baseline_alloc_order[j].name();
        os << "\n";
    }
    return os.str();
}

LoweredProgram parse_program(
    const std::vector<std::pair<std::string, std::string>>& core_streams,
    const std::string& sidecar) {
    LoweredProgram p;
    std::istringstream sc(sidecar);
    std::string line;
    while (std::getline(sc, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string head;
        is >> head;
        if (head == "workload") {
            auto kv = kv_fields(is);
            if (kv.count("name") && kv["name"] != "-") p.workload_name = kv["name"];
            if (kv.count("hash")) p.workload_hash = std::stoull(kv["hash"]);
            if (kv.count("seed")) p.input_seed = std::stoull(kv["seed"]);
        } else if (head == "profile") {
            auto kv = kv_fields(is);
            if (kv.count("name") && kv["name"] != "-") p.profile_name = kv["name"];
        } else if (head == "slots") {
            auto kv = kv_fields(is);
            p.slot_budget = static_cast<uint16_t>(std::stoul(kv.at("budget")));
            if (kv.count("local_depth"))
                p.local_queue_depth = static_cast<uint16_t>(std::stoul(kv["local_depth"]));
        } else if (head == "opers") {
            auto kv = kv_fields(is);
            p.operator_count = std::stoul(kv.at("count"));
            if (kv.count("barrier")) p.barrier_mode = kv["barrier"] == "1";
        } else if (head == "desc") {
            std::string tid;
            is >> tid;
            auto kv = kv_fields(is);
            TileDescriptor d;
            d.index = static_cast<uint16_t>(std::stoul(tid.substr(1)));
            d.tensor = kv.at("name");
            d.base = std::stoll(kv.at("base"));
            d.shape = parse_dims(kv.at("shape"));
            auto tile = parse_dims(kv.at("tile"));
            d.tile_rows = tile.at(0);
            d.tile_cols = tile.at(1);
            d.init = init_from(kv.at("init"));
            d.external = kv.at("external") == "1";
            // grid re-derived from shape + tile
            workload::TensorRef t{d.tensor, d.shape, d.tile_rows, d.tile_cols, d.init};
            d.grid = t.grid();
            p.descriptors.push_back(std::move(d));
        } else if (head == "queue") {
            auto kv = kv_fields(is);
            QueueInfo q;
            q.dep_id = static_cast<uint16_t>(std::stoul(kv.at("dep")));
            q.producer = CoreId::parse(kv.at("prod"));
            q.consumer = CoreId::parse(kv.at("cons"));
            q.depth = static_cast<uint16_t>(std::stoul(kv.at("depth")));
            q.local = kv.at("local") == "1";
            if (kv.count("bytes")) q.tile_bytes = std::stoull(kv["bytes"]);
            p.queues.push_back(std::move(q));
        } else if (head == "baseline") {
            std::string name;
            while (is >> name) p.baseline_alloc_order.push_back(CoreId::parse(name));
        } else {
            throw GeneratorError("sidecar: unknown section '" + head + "'");
        }
    }
    for (const auto& [name, text] : core_streams) {
        CoreId core = CoreId::parse(name);
        std::istringstream ss(text);
        std::vector<isa::UopWord> stream;
        std::vector<UopMeta> meta;
        while (std::getline(ss, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::optional<uint32_t> op;
            stream.push_back(isa::parse_uop(line, &op));
            meta.push_back({op.value_or(0), -1, -1});
        }
        p.streams.emplace(core, std::move(stream));
        p.meta.emplace(core, std::move(meta));
    }
    auto violations = p.validate();
    if (!violations.empty())
        throw GeneratorError("parsed program invalid: " + violations.front().message);
    return p;
}

}  // namespace uopsim::generator
