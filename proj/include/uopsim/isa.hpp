#pragma once
// The uop instruction word: opcode catalog, flags, 16-byte binary encoding,
// textual assembly, stream validation and the handler registration table.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uopsim::isa {

// Opcode 0 is reserved so zeroed memory never decodes to a valid word.
enum class Opcode : uint8_t {
    // memory
    LOAD = 0x01,
    STORE = 0x02,
    LOAD_DEP = 0x03,
    STORE_DEP = 0x04,
    LOAD_LOCAL = 0x05,
    STORE_LOCAL = 0x06,
    ALLOC = 0x07,
    FREE = 0x08,
    // compute
    MATVEC = 0x20,
    GEMM_TILE = 0x21,
    ATTN = 0x22,
    ROPE = 0x23,
    RMSNORM = 0x24,
    ELEMWISE = 0x25,
    EMBED = 0x26,
    // control
    LOOP = 0x40,
    REPEAT = 0x41,
    CONTINUE_IF = 0x42,
    SET_ACC = 0x43,
    ADD_ACC = 0x44,
    HALT = 0x45,
};

enum class OpClass : uint8_t { memory, compute, control };

bool opcode_valid(uint8_t raw);
OpClass opcode_class(Opcode op);
std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);
const std::vector<Opcode>& all_opcodes();

// Memory opcodes that carry a dep_id (inter-memory dependency endpoint).
bool is_dep_producer(Opcode op);  // STORE_DEP, STORE_LOCAL
bool is_dep_consumer(Opcode op);  // LOAD_DEP, LOAD_LOCAL
bool is_load_class(Opcode op);    // dispatched to LDUs (loads + ALLOC)
bool is_store_class(Opcode op);   // dispatched to STUs (stores + FREE)
bool needs_address(Opcode op);    // loads/stores; ALLOC/FREE are slot-only

// flag bits (byte 1, low nibble)
inline constexpr uint8_t kFlagSend = 0x1;
inline constexpr uint8_t kFlagRecv = 0x2;
inline constexpr uint8_t kFlagDynamic = 0x4;
inline constexpr uint8_t kFlagLast = 0x8;

enum class AddrKind : uint8_t { none = 0, literal = 1, coord = 2, descriptor = 3 };

// Address of one tile (or an element range) of a named tensor. `tensor` is
// an index into the program's descriptor table. With the DYNAMIC flag the
// machine adds an accumulator register to the linearized tile index and
// re-resolves through the descriptor table, so folded loops can walk
// across per-layer tensors laid out consecutively.
struct AddressSpec {
    AddrKind kind = AddrKind::none;
    uint16_t tensor = 0;
    uint64_t offset = 0;                // literal: element offset, encodable below 2^48
    uint8_t rank = 0;                   // coord: 1..4
    std::array<uint16_t, 4> coord{};    // coord: tile indices, each < 4096
    uint16_t descriptor = 0;

    static AddressSpec none() { return {}; }
    static AddressSpec literal(uint16_t tensor, uint64_t offset);
    static AddressSpec tile(uint16_t tensor, std::span<const uint16_t> c);
    static AddressSpec tile2(uint16_t tensor, uint16_t r, uint16_t c);
    static AddressSpec desc(uint16_t index);

    friend bool operator==(const AddressSpec&, const AddressSpec&) = default;
};

// One fixed-width instruction. reg0 selects the accumulator register for
// DYNAMIC addressing and the ACC control ops; reg1 addresses the local VCC
// for SEND/RECV queue traffic. `size` is opcode-defined: slot count on
// memory ops, input tile-group count on compute ops, trip count on LOOP.
struct UopWord {
    Opcode opcode = Opcode::LOAD;
    uint8_t flags = 0;
    uint16_t dep_id = 0;        // 0 = no inter-memory dependency
    uint8_t flow = 0;           // virtual flow id; 0 = unassigned / control
    uint16_t size = 0;
    uint8_t reg0 = 0;
    uint8_t reg1 = 0;
    int32_t imm = 0;
    AddressSpec addr;

    bool send() const { return flags & kFlagSend; }
    bool recv() const { return flags & kFlagRecv; }
    bool dynamic() const { return flags & kFlagDynamic; }
    bool last() const { return flags & kFlagLast; }
    OpClass klass() const { return opcode_class(opcode); }

    friend bool operator==(const UopWord&, const UopWord&) = default;
};

inline constexpr size_t kWordBytes = 16;
using EncodedWord = std::array<uint8_t, kWordBytes>;

struct EncodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DecodeError : std::runtime_error {
    size_t byte_offset;
    DecodeError(const std::string& what, size_t off)
        : std::runtime_error(what), byte_offset(off) {}
};

// Deterministic, injective 16-byte layout (little-endian fields):
//   0 opcode | 1 flags[0:3] addr-kind[4:5] rank-1[6:7] | 2-3 dep_id |
//   4 flow | 5-6 size | 7 reg0[4:7] reg1[0:3] |
//   8-15 memory: tensor u16 + payload (literal offset u48 / 4 coords u12 each
//        / descriptor u16 + zero pad); compute+control: imm i32 + zero pad.
EncodedWord encode_uop(const UopWord& u);
UopWord decode_uop(std::span<const uint8_t> w);

std::vector<uint8_t> encode_stream(std::span<const UopWord> s);
std::vector<UopWord> decode_stream(std::span<const uint8_t> bytes);

// Assembly text: one uop per line,
//   OPCODE [send,recv,dyn,last] dep=N flow=N addr=SPEC size=N [tgt=N] [reg=N] [imm=N] [op=N]
// addr spec: `-`, `t<id>+<off>`, `t<id>@(c0,c1,..)`, `desc:<idx>`, with a
// `+acc<r>` suffix when DYNAMIC. `op=` carries the operator ordinal used by
// barrier mode and is not part of the word.
std::string format_uop(const UopWord& u, std::optional<uint32_t> op_ordinal = {});
UopWord parse_uop(std::string_view line, std::optional<uint32_t>* op_ordinal = nullptr);

// ---------------------------------------------------------------------------
// Handler registration

// Queue interaction shape of one compute handler: the pop/push sequence the
// VCC performs, parameterized by the uop's size field. Drives both the
// machine's execution and the generator's symbolic elaboration.
struct HandlerIo {
    int prologue_pops_m2c = 0;       // e.g. attention's q tile, embed's id tile
    int iter_pops_m2c = 0;           // input tiles popped per iteration
    int iter_pushes_c2m = 0;         // regions released per iteration
    int result_pops_m2c = 0;         // result slots popped (usually 1)
    int epilogue_pushes_c2m = 0;     // late releases (prologue tiles freed at end)
    int result_pushes_c2m = 0;       // produced regions pushed (usually 1)

    int total_pops_m2c(int size) const {
        return prologue_pops_m2c + iter_pops_m2c * size + result_pops_m2c;
    }
    int release_pushes_c2m(int size) const {
        return iter_pushes_c2m * size + epilogue_pushes_c2m;
    }
    friend bool operator==(const HandlerIo&, const HandlerIo&) = default;
};

struct HandlerDescriptor {
    Opcode opcode{};
    std::string name;        // function identity
    OpClass declared_class{};
    // declared queue usage, free-form: what the handler claims to touch
    bool pops_m2c = false;
    bool pushes_m2c = false;
    bool pops_c2m = false;
    bool pushes_c2m = false;
    HandlerIo io;            // structured shape for compute handlers
};

struct HandlerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class HandlerTable {
  public:
    // Throws HandlerError on duplicate registration or class mismatch.
    void register_handler(Opcode op, const HandlerDescriptor& h);
    bool registered(Opcode op) const;
    const HandlerDescriptor& handler(Opcode op) const;  // throws if missing
    size_t size() const { return table_.size(); }

  private:
    std::map<Opcode, HandlerDescriptor> table_;
};

// Table pre-populated with every builtin compute handler.
HandlerTable default_handler_table();

// ---------------------------------------------------------------------------
// Stream validation. Violations are returned, never thrown.

enum class CoreKind : uint8_t { vmc, vcc };

struct Violation {
    size_t index;         // uop position in the stream (or npos for program-level)
    std::string message;
};

std::vector<Violation> validate_stream(std::span<const UopWord> s, CoreKind kind);

// Program-level checks across streams: every dep id has exactly one
// producer site and one consumer site.
std::vector<Violation> validate_dep_pairing(
    std::span<const std::pair<CoreKind, std::span<const UopWord>>> streams);

}  // namespace uopsim::isa
