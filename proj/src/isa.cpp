#include "uopsim/isa.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <sstream>

namespace uopsim::isa {

namespace {

struct OpInfo {
    Opcode op;
    OpClass klass;
    std::string_view name;
};

constexpr OpInfo kOps[] = {
    {Opcode::LOAD, OpClass::memory, "LOAD"},
    {Opcode::STORE, OpClass::memory, "STORE"},
    {Opcode::LOAD_DEP, OpClass::memory, "LOAD_DEP"},
    {Opcode::STORE_DEP, OpClass::memory, "STORE_DEP"},
    {Opcode::LOAD_LOCAL, OpClass::memory, "LOAD_LOCAL"},
    {Opcode::STORE_LOCAL, OpClass::memory, "STORE_LOCAL"},
    {Opcode::ALLOC, OpClass::memory, "ALLOC"},
    {Opcode::FREE, OpClass::memory, "FREE"},
    {Opcode::MATVEC, OpClass::compute, "MATVEC"},
    {Opcode::GEMM_TILE, OpClass::compute, "GEMM_TILE"},
    {Opcode::ATTN, OpClass::compute, "ATTN"},
    {Opcode::ROPE, OpClass::compute, "ROPE"},
    {Opcode::RMSNORM, OpClass::compute, "RMSNORM"},
    {Opcode::ELEMWISE, OpClass::compute, "ELEMWISE"},
    {Opcode::EMBED, OpClass::compute, "EMBED"},
    {Opcode::LOOP, OpClass::control, "LOOP"},
    {Opcode::REPEAT, OpClass::control, "REPEAT"},
    {Opcode::CONTINUE_IF, OpClass::control, "CONTINUE_IF"},
    {Opcode::SET_ACC, OpClass::control, "SET_ACC"},
    {Opcode::ADD_ACC, OpClass::control, "ADD_ACC"},
    {Opcode::HALT, OpClass::control, "HALT"},
};

const OpInfo* find_op(Opcode op) {
    for (const auto& i : kOps)
        if (i.op == op) return &i;
    return nullptr;
}

void put16(uint8_t* p, uint16_t v) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
}
uint16_t get16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

bool opcode_valid(uint8_t raw) { return find_op(static_cast<Opcode>(raw)) != nullptr; }

OpClass opcode_class(Opcode op) {
    const OpInfo* i = find_op(op);
    if (!i) throw std::invalid_argument("unknown opcode value");
    return i->klass;
}

std::string_view opcode_name(Opcode op) {
    const OpInfo* i = find_op(op);
    return i ? i->name : "<invalid>";
}

std::optional<Opcode> opcode_from_name(std::string_view name) {
    for (const auto& i : kOps)
        if (i.name == name) return i.op;
    return std::nullopt;
}

const std::vector<Opcode>& all_opcodes() {
    static const std::vector<Opcode> ops = [] {
        std::vector<Opcode> v;
        for (const auto& i : kOps) v.push_back(i.op);
        return v;
    }();
    return ops;
}

bool is_dep_producer(Opcode op) { return op == Opcode::STORE_DEP || op == Opcode::STORE_LOCAL; }
bool is_dep_consumer(Opcode op) { return op == Opcode::LOAD_DEP || op == Opcode::LOAD_LOCAL; }

bool is_load_class(Opcode op) {
    return op == Opcode::LOAD || op == Opcode::LOAD_DEP || op == Opcode::LOAD_LOCAL ||
           op == Opcode::ALLOC;
}
bool is_store_class(Opcode op) {
    return op == Opcode::STORE || op == Opcode::STORE_DEP || op == Opcode::STORE_LOCAL ||
           op == Opcode::FREE;
}
bool needs_address(Opcode op) {
    switch (op) {
        case Opcode::LOAD:
        case Opcode::STORE:
        case Opcode::LOAD_DEP:
        case Opcode::STORE_DEP:
        case Opcode::LOAD_LOCAL:
        case Opcode::STORE_LOCAL:
            return true;
        default:
            return false;
    }
}

AddressSpec AddressSpec::literal(uint16_t tensor, uint64_t offset) {
    AddressSpec a;
    a.kind = AddrKind::literal;
    a.tensor = tensor;
    a.offset = offset;
    return a;
}

AddressSpec AddressSpec::tile(uint16_t tensor, std::span<const uint16_t> c) {
    AddressSpec a;
    a.kind = AddrKind::coord;
    a.tensor = tensor;
    a.rank = static_cast<uint8_t>(c.size());
    for (size_t i = 0; i < c.size() && i < 4; ++i) a.coord[i] = c[i];
    return a;
}

AddressSpec AddressSpec::tile2(uint16_t tensor, uint16_t r, uint16_t c) {
    std::array<uint16_t, 2> v{r, c};
    return tile(tensor, v);
}

AddressSpec AddressSpec::desc(uint16_t index) {
    AddressSpec a;
    a.kind = AddrKind::descriptor;
    a.descriptor = index;
    return a;
}

// ---------------------------------------------------------------------------
// binary encoding

EncodedWord encode_uop(const UopWord& u) {
    auto fail = [](const std::string& field) {
        throw EncodeError("encode: field overflow or invariant violation: " + field);
    };
    const OpInfo* info = find_op(u.opcode);
    if (!info) fail("opcode");
    if ((u.flags & kFlagSend) && (u.flags & kFlagRecv)) fail("flags: send+recv");
    if (u.flags & ~uint8_t(kFlagSend | kFlagRecv | kFlagDynamic | kFlagLast)) fail("flags: unknown bit");
    if (u.reg0 > 15) fail("reg0");
    if (u.reg1 > 15) fail("reg1");

    bool mem = info->klass == OpClass::memory;
    if (mem) {
        if (u.imm != 0) fail("imm: unused on memory opcodes");
        // loads/stores must name a tile; ALLOC may carry one to describe the
        // region it reserves, FREE recycles whatever its messages carry
        if (needs_address(u.opcode) && u.addr.kind == AddrKind::none) fail("addr: required");
    } else {
        if (u.addr.kind != AddrKind::none) fail("addr: only memory opcodes carry one");
        if (u.dep_id != 0) fail("dep_id: only memory opcodes carry one");
        if (u.flags & (kFlagSend | kFlagRecv)) fail("flags: send/recv are memory-side");
    }
    if (u.dep_id != 0 && !(is_dep_producer(u.opcode) || is_dep_consumer(u.opcode)))
        fail("dep_id: opcode carries no dependency");
    if ((u.flags & kFlagDynamic) && u.addr.kind == AddrKind::none) fail("dynamic: needs an address");

    EncodedWord w{};
    w[0] = static_cast<uint8_t>(u.opcode);
    uint8_t rank_bits = 0;
    if (u.addr.kind == AddrKind::coord) {
        if (u.addr.rank < 1 || u.addr.rank > 4) fail("coord rank");
        rank_bits = static_cast<uint8_t>(u.addr.rank - 1);
    }
    w[1] = static_cast<uint8_t>((u.flags & 0x0f) | (static_cast<uint8_t>(u.addr.kind) << 4) |
                                (rank_bits << 6));
    put16(&w[2], u.dep_id);
    w[4] = u.flow;
    put16(&w[5], u.size);
    w[7] = static_cast<uint8_t>((u.reg0 << 4) | u.reg1);

    switch (u.addr.kind) {
        case AddrKind::none: {
            uint32_t imm = static_cast<uint32_t>(u.imm);
            w[8] = static_cast<uint8_t>(imm);
            w[9] = static_cast<uint8_t>(imm >> 8);
            w[10] = static_cast<uint8_t>(imm >> 16);
            w[11] = static_cast<uint8_t>(imm >> 24);
            break;
        }
        case AddrKind::literal: {
            if (u.addr.offset >= (1ull << 48)) fail("literal offset");
            put16(&w[8], u.addr.tensor);
            uint64_t off = u.addr.offset;
            for (int i = 0; i < 6; ++i) w[10 + i] = static_cast<uint8_t>(off >> (8 * i));
            break;
        }
        case AddrKind::coord: {
            put16(&w[8], u.addr.tensor);
            uint64_t packed = 0;
            for (int i = 0; i < 4; ++i) {
                uint16_t c = i < u.addr.rank ? u.addr.coord[i] : 0;
                if (c >= 4096) fail("coord value");
                if (i >= u.addr.rank && c != 0) fail("coord beyond rank");
                packed |= static_cast<uint64_t>(c) << (12 * i);
            }
            for (int i = 0; i < 6; ++i) w[10 + i] = static_cast<uint8_t>(packed >> (8 * i));
            break;
        }
        case AddrKind::descriptor:
            put16(&w[8], u.addr.descriptor);
            break;
    }
    return w;
}

UopWord decode_uop(std::span<const uint8_t> w) {
    if (w.size() != kWordBytes) throw DecodeError("decode: word must be 16 bytes", 0);
    if (!opcode_valid(w[0])) throw DecodeError("decode: unknown opcode value", 0);
    UopWord u;
    u.opcode = static_cast<Opcode>(w[0]);
    u.flags = w[1] & 0x0f;
    if ((u.flags & kFlagSend) && (u.flags & kFlagRecv))
        throw DecodeError("decode: send+recv flag pair", 1);
    auto kind_bits = static_cast<uint8_t>((w[1] >> 4) & 0x3);
    auto rank_bits = static_cast<uint8_t>(w[1] >> 6);
    u.dep_id = get16(&w[2]);
    u.flow = w[4];
    u.size = get16(&w[5]);
    u.reg0 = static_cast<uint8_t>(w[7] >> 4);
    u.reg1 = static_cast<uint8_t>(w[7] & 0x0f);

    AddrKind kind = static_cast<AddrKind>(kind_bits);
    bool mem = opcode_class(u.opcode) == OpClass::memory;
    if (!mem && kind != AddrKind::none) throw DecodeError("decode: address on non-memory opcode", 1);
    if (kind != AddrKind::coord && rank_bits != 0) throw DecodeError("decode: rank without coord", 1);

    auto require_zero = [&](size_t from) {
        for (size_t i = from; i < kWordBytes; ++i)
            if (w[i] != 0) throw DecodeError("decode: nonzero padding", i);
    };
    switch (kind) {
        case AddrKind::none: {
            if (mem) {
                require_zero(8);
            } else {
                uint32_t imm = w[8] | (w[9] << 8) | (w[10] << 16) |
                               (static_cast<uint32_t>(w[11]) << 24);
                u.imm = static_cast<int32_t>(imm);
                require_zero(12);
            }
            break;
        }
        case AddrKind::literal: {
            u.addr.kind = AddrKind::literal;
            u.addr.tensor = get16(&w[8]);
            uint64_t off = 0;
            for (int i = 0; i < 6; ++i) off |= static_cast<uint64_t>(w[10 + i]) << (8 * i);
            u.addr.offset = off;
            break;
        }
        case AddrKind::coord: {
            u.addr.kind = AddrKind::coord;
            u.addr.tensor = get16(&w[8]);
            u.addr.rank = static_cast<uint8_t>(rank_bits + 1);
            uint64_t packed = 0;
            for (int i = 0; i < 6; ++i) packed |= static_cast<uint64_t>(w[10 + i]) << (8 * i);
            for (int i = 0; i < 4; ++i) {
                uint16_t c = static_cast<uint16_t>((packed >> (12 * i)) & 0xfff);
                if (i >= u.addr.rank && c != 0) throw DecodeError("decode: coord beyond rank", 10);
                u.addr.coord[i] = i < u.addr.rank ? c : 0;
            }
            break;
        }
        case AddrKind::descriptor: {
            u.addr.kind = AddrKind::descriptor;
            u.addr.descriptor = get16(&w[8]);
            require_zero(10);
            break;
        }
    }
    return u;
}

std::vector<uint8_t> encode_stream(std::span<const UopWord> s) {
    std::vector<uint8_t> out;
    out.reserve(s.size() * kWordBytes);
    for (const auto& u : s) {
        auto w = encode_uop(u);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

std::vector<UopWord> decode_stream(std::span<const uint8_t> bytes) {
    if (bytes.size() % kWordBytes != 0)
        throw DecodeError("decode: stream length not a multiple of 16", bytes.size());
    std::vector<UopWord> out;
    out.reserve(bytes.size() / kWordBytes);
    for (size_t i = 0; i < bytes.size(); i += kWordBytes) {
        try {
            out.push_back(decode_uop(bytes.subspan(i, kWordBytes)));
        } catch (DecodeError& e) {
            throw DecodeError(e.what(), i + e.byte_offset);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// assembly text

static std::string format_addr(const UopWord& u) {
    std::ostringstream os;
    switch (u.addr.kind) {
        case AddrKind::none:
            os << "-";
            break;
        case AddrKind::literal:
            os << "t" << u.addr.tensor << "+" << u.addr.offset;
            break;
        case AddrKind::coord: {
            os << "t" << u.addr.tensor << "@(";
            for (int i = 0; i < u.addr.rank; ++i) os << (i ? "," : "") << u.addr.coord[i];
            os << ")";
            break;
        }
        case AddrKind::descriptor:
            os << "desc:" << u.addr.descriptor;
            break;
    }
    if (u.dynamic()) os << "+acc" << int(u.reg0);
    return os.str();
}

std::string format_uop(const UopWord& u, std::optional<uint32_t> op_ordinal) {
    std::ostringstream os;
    os << opcode_name(u.opcode) << " [";
    bool first = true;
    auto flag = [&](bool on, const char* n) {
        if (!on) return;
        if (!first) os << ",";
        os << n;
        first = false;
    };
    flag(u.send(), "send");
    flag(u.recv(), "recv");
    flag(u.dynamic(), "dyn");
    flag(u.last(), "last");
    os << "] dep=" << u.dep_id << " flow=" << int(u.flow) << " addr=" << format_addr(u)
       << " size=" << u.size;
    if (u.reg1 != 0) os << " tgt=" << int(u.reg1);
    if (u.reg0 != 0 && !u.dynamic()) os << " reg=" << int(u.reg0);
    if (u.imm != 0) os << " imm=" << u.imm;
    if (op_ordinal) os << " op=" << *op_ordinal;
    return os.str();
}

namespace {

struct ParseCursor {
    std::string_view s;
    void skip_ws() {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    }
    std::string_view token() {
        skip_ws();
        size_t n = 0;
        while (n < s.size() && s[n] != ' ' && s[n] != '\t') ++n;
        auto t = s.substr(0, n);
        s.remove_prefix(n);
        return t;
    }
};

uint64_t parse_num(std::string_view v, const std::string& what) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw DecodeError("assembly: bad number in " + what, 0);
    return out;
}

int64_t parse_snum(std::string_view v, const std::string& what) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw DecodeError("assembly: bad number in " + what, 0);
    return out;
}

}  // namespace

UopWord parse_uop(std::string_view line, std::optional<uint32_t>* op_ordinal) {
    ParseCursor c{line};
    auto opname = c.token();
    auto op = opcode_from_name(opname);
    if (!op) throw DecodeError("assembly: unknown opcode '" + std::string(opname) + "'", 0);
    UopWord u;
    u.opcode = *op;

    auto flags_tok = c.token();
    if (flags_tok.size() < 2 || flags_tok.front() != '[' || flags_tok.back() != ']')
        throw DecodeError("assembly: expected [flags]", 0);
    std::string_view flags = flags_tok.substr(1, flags_tok.size() - 2);
    while (!flags.empty()) {
        size_t comma = flags.find(',');
        auto f = flags.substr(0, comma);
        if (f == "send") u.flags |= kFlagSend;
        else if (f == "recv") u.flags |= kFlagRecv;
        else if (f == "dyn") u.flags |= kFlagDynamic;
        else if (f == "last") u.flags |= kFlagLast;
        else if (!f.empty()) throw DecodeError("assembly: unknown flag '" + std::string(f) + "'", 0);
        if (comma == std::string_view::npos) break;
        flags.remove_prefix(comma + 1);
    }

    for (auto t = c.token(); !t.empty(); t = c.token()) {
        size_t eq = t.find('=');
        if (eq == std::string_view::npos) throw DecodeError("assembly: expected key=value", 0);
        auto key = t.substr(0, eq);
        auto val = t.substr(eq + 1);
        if (key == "dep") u.dep_id = static_cast<uint16_t>(parse_num(val, "dep"));
        else if (key == "flow") u.flow = static_cast<uint8_t>(parse_num(val, "flow"));
        else if (key == "size") u.size = static_cast<uint16_t>(parse_num(val, "size"));
        else if (key == "tgt") u.reg1 = static_cast<uint8_t>(parse_num(val, "tgt"));
        else if (key == "reg") u.reg0 = static_cast<uint8_t>(parse_num(val, "reg"));
        else if (key == "imm") u.imm = static_cast<int32_t>(parse_snum(val, "imm"));
        else if (key == "op") {
            if (op_ordinal) *op_ordinal = static_cast<uint32_t>(parse_num(val, "op"));
        } else if (key == "addr") {
            if (auto plus = val.rfind("+acc"); plus != std::string_view::npos) {
                u.reg0 = static_cast<uint8_t>(parse_num(val.substr(plus + 4), "acc reg"));
                u.flags |= kFlagDynamic;
                val = val.substr(0, plus);
            }
            if (val == "-") {
                u.addr = AddressSpec::none();
            } else if (val.rfind("desc:", 0) == 0) {
                u.addr = AddressSpec::desc(static_cast<uint16_t>(parse_num(val.substr(5), "desc")));
            } else if (!val.empty() && val.front() == 't') {
                val.remove_prefix(1);
                size_t at = val.find('@');
                size_t plus = val.find('+');
                if (at != std::string_view::npos) {
                    uint16_t tensor = static_cast<uint16_t>(parse_num(val.substr(0, at), "tensor"));
                    auto coords = val.substr(at + 1);
                    if (coords.size() < 2 || coords.front() != '(' || coords.back() != ')')
                        throw DecodeError("assembly: bad coord list", 0);
                    coords = coords.substr(1, coords.size() - 2);
                    std::vector<uint16_t> cs;
                    while (!coords.empty()) {
                        size_t comma = coords.find(',');
                        cs.push_back(static_cast<uint16_t>(parse_num(coords.substr(0, comma), "coord")));
                        if (comma == std::string_view::npos) break;
                        coords.remove_prefix(comma + 1);
                    }
                    u.addr = AddressSpec::tile(tensor, cs);
                } else if (plus != std::string_view::npos) {
                    u.addr = AddressSpec::literal(
                        static_cast<uint16_t>(parse_num(val.substr(0, plus), "tensor")),
                        parse_num(val.substr(plus + 1), "offset"));
                } else {
                    throw DecodeError("assembly: bad address spec", 0);
                }
            } else {
                throw DecodeError("assembly: bad address spec", 0);
            }
        } else {
            throw DecodeError("assembly: unknown key '" + std::string(key) + "'", 0);
        }
    }
    return u;
}

// ---------------------------------------------------------------------------
// handler table

void HandlerTable::register_handler(Opcode op, const HandlerDescriptor& h) {
    if (!find_op(op)) throw HandlerError("register: unknown opcode");
    if (table_.count(op))
        throw HandlerError("register: duplicate handler for " + std::string(opcode_name(op)));
    if (h.declared_class != opcode_class(op))
        throw HandlerError("register: class mismatch for " + std::string(opcode_name(op)));
    auto d = h;
    d.opcode = op;
    table_.emplace(op, std::move(d));
}

bool HandlerTable::registered(Opcode op) const { return table_.count(op) != 0; }

const HandlerDescriptor& HandlerTable::handler(Opcode op) const {
    auto it = table_.find(op);
    if (it == table_.end())
        throw HandlerError("no handler registered for " + std::string(opcode_name(op)));
    return it->second;
}

HandlerTable default_handler_table() {
    HandlerTable t;
    auto compute = [&](Opcode op, const char* name, HandlerIo io) {
        HandlerDescriptor d;
        d.name = name;
        d.declared_class = OpClass::compute;
        d.pops_m2c = true;
        d.pushes_c2m = true;
        d.pushes_m2c = true;  // Fig-5 style declaration: the result region is announced back
        d.io = io;
        t.register_handler(op, d);
    };
    // matvec/gemm: per k-step pop (a,b), release both; then result slot.
    HandlerIo pairwise{.iter_pops_m2c = 2, .iter_pushes_c2m = 2, .result_pops_m2c = 1,
                       .result_pushes_c2m = 1};
    compute(Opcode::MATVEC, "h_matvec", pairwise);
    compute(Opcode::GEMM_TILE, "h_gemm_tile", pairwise);
    // attention holds q for the whole kv sweep and releases it at the end.
    compute(Opcode::ATTN, "h_attn",
            HandlerIo{.prologue_pops_m2c = 1, .iter_pops_m2c = 2, .iter_pushes_c2m = 2,
                      .result_pops_m2c = 1, .epilogue_pushes_c2m = 1, .result_pushes_c2m = 1});
    compute(Opcode::ROPE, "h_rope", pairwise);
    compute(Opcode::RMSNORM, "h_rmsnorm", pairwise);
    compute(Opcode::ELEMWISE, "h_elemwise",
            HandlerIo{.iter_pops_m2c = 1, .iter_pushes_c2m = 1, .result_pops_m2c = 1,
                      .result_pushes_c2m = 1});
    compute(Opcode::EMBED, "h_embed",
            HandlerIo{.prologue_pops_m2c = 1, .iter_pops_m2c = 1, .iter_pushes_c2m = 1,
                      .result_pops_m2c = 1, .epilogue_pushes_c2m = 1, .result_pushes_c2m = 1});
    return t;
}

// ---------------------------------------------------------------------------
// validation

std::vector<Violation> validate_stream(std::span<const UopWord> s, CoreKind kind) {
    std::vector<Violation> out;
    std::vector<size_t> loop_stack;
    for (size_t i = 0; i < s.size(); ++i) {
        const UopWord& u = s[i];
        const OpInfo* info = find_op(u.opcode);
        if (!info) {
            out.push_back({i, "unknown opcode"});
            continue;
        }
        if ((u.flags & kFlagSend) && (u.flags & kFlagRecv))
            out.push_back({i, "send and recv both set"});
        if (info->klass == OpClass::compute && kind == CoreKind::vmc)
            out.push_back({i, "compute opcode in a VMC stream"});
        if (info->klass == OpClass::memory && kind == CoreKind::vcc)
            out.push_back({i, "memory opcode in a VCC stream"});
        if (u.dep_id != 0 && !(is_dep_producer(u.opcode) || is_dep_consumer(u.opcode)))
            out.push_back({i, "dep_id on an opcode that carries no inter-memory dependency"});
        if (u.dep_id == 0 && (is_dep_producer(u.opcode) || is_dep_consumer(u.opcode)))
            out.push_back({i, "dependency opcode without dep_id"});
        if (is_dep_consumer(u.opcode) && u.recv())
            out.push_back({i, "multiple inter-memory deps: recv on a dep-consuming uop"});
        if (u.dynamic() && u.addr.kind == AddrKind::none)
            out.push_back({i, "dynamic flag without an address"});
        if (info->klass == OpClass::memory && needs_address(u.opcode) &&
            u.addr.kind == AddrKind::none)
            out.push_back({i, "memory uop without an address"});
        if (u.opcode == Opcode::LOOP) {
            if (u.imm <= 0) out.push_back({i, "LOOP with non-positive body length"});
            loop_stack.push_back(i);
        } else if (u.opcode == Opcode::REPEAT) {
            if (loop_stack.empty()) {
                out.push_back({i, "REPEAT without matching LOOP"});
            } else {
                size_t open = loop_stack.back();
                loop_stack.pop_back();
                if (s[open].imm > 0 && open + 1 + static_cast<size_t>(s[open].imm) != i)
                    out.push_back({i, "LOOP body length does not match its REPEAT"});
            }
        }
    }
    for (size_t open : loop_stack) out.push_back({open, "unmatched LOOP without terminator"});
    return out;
}

std::vector<Violation> validate_dep_pairing(
    std::span<const std::pair<CoreKind, std::span<const UopWord>>> streams) {
    std::vector<Violation> out;
    std::map<uint16_t, int> producers, consumers;
    for (const auto& [kind, s] : streams) {
        (void)kind;
        for (const auto& u : s) {
            if (u.dep_id == 0) continue;
            if (is_dep_producer(u.opcode)) producers[u.dep_id]++;
            if (is_dep_consumer(u.opcode)) consumers[u.dep_id]++;
        }
    }
    for (auto& [dep, n] : consumers) {
        if (!producers.count(dep))
            out.push_back({size_t(-1), "dep " + std::to_string(dep) + " consumed but never produced"});
        if (n > 1)
            out.push_back({size_t(-1), "multiple inter-memory deps: dep " + std::to_string(dep) +
                                           " has " + std::to_string(n) + " consumer sites"});
    }
    for (auto& [dep, n] : producers) {
        if (!consumers.count(dep))
            out.push_back({size_t(-1), "dep " + std::to_string(dep) + " produced but never consumed"});
        if (n > 1)
            out.push_back({size_t(-1), "dep " + std::to_string(dep) + " has " + std::to_string(n) +
                                           " producer sites"});
    }
    return out;
}

}  // namespace uopsim::isa
