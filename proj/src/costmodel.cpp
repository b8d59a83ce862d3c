#include "uopsim/costmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "uopsim/isa.hpp"
#include "uopsim/util.hpp"

namespace uopsim::costmodel {

using nlohmann::ordered_json;

uint32_t HardwareProfile::slot_budget() const {
    uint64_t by_shmem = slot_size ? shmem_per_sm / slot_size : 0;
    return static_cast<uint32_t>(std::min<uint64_t>(32, by_shmem));
}

void HardwareProfile::validate() const {
    auto fail = [&](const std::string& m) { throw ProfileError("profile " + name + ": " + m); };
    if (sm_count == 0) fail("sm_count must be positive");
    if (shmem_per_sm == 0) fail("shmem_per_sm must be positive");
    if (dram_bw <= 0) fail("dram_bw must be positive");
    if (vmc_per_sm == 0 || vcc_per_sm == 0) fail("core counts must be positive");
    if (slot_size == 0) fail("slot_size must be positive");
    if (ldu_count == 0 || stu_count == 0) fail("unit counts must be positive");
    if (compute_throughput <= 0) fail("compute_throughput must be positive");
    if (queue_depth == 0 || local_queue_depth == 0) fail("queue depths must be positive");
    if (slot_budget() == 0) fail("shared memory holds no slot");
    if (static_cast<uint64_t>(slot_size) * slot_budget() > shmem_per_sm)
        fail("slot budget exceeds shared memory");
}

std::vector<HardwareProfile> builtin_profiles() {
    HardwareProfile h100{.name = "h100",
                         .sm_count = 132,
                         .shmem_per_sm = 228 * 1024,
                         .dram_bw = 3.35e12,
                         .vmc_per_sm = 1,
                         .vcc_per_sm = 2,
                         .slot_size = 8192,
                         .compute_throughput = 4.0e12};
    HardwareProfile gh200 = h100;
    gh200.name = "gh200";
    gh200.dram_bw = 4.00e12;
    HardwareProfile rtx{.name = "rtx6000pro",
                        .sm_count = 188,
                        .shmem_per_sm = 100 * 1024,
                        .dram_bw = 960e9,
                        .vmc_per_sm = 1,
                        .vcc_per_sm = 2,
                        .slot_size = 8192,
                        .compute_throughput = 3.0e12};
    return {h100, gh200, rtx};
}

std::optional<HardwareProfile> builtin_profile(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (auto& p : builtin_profiles())
        if (p.name == lower) return p;
    return std::nullopt;
}

HardwareProfile make_test_profile(const std::string& name, uint32_t pairs,
                                  double dram_bw, double flops, uint32_t slots) {
    HardwareProfile hw{.name = name,
                       .sm_count = pairs,
                       .shmem_per_sm = 8192ull * slots,
                       .dram_bw = dram_bw,
                       .vmc_per_sm = 1,
                       .vcc_per_sm = 1,
                       .slot_size = 8192,
                       .compute_throughput = flops};
    hw.validate();
    return hw;
}

std::string serialize_profile(const HardwareProfile& hw) {
    ordered_json j;
    j["name"] = hw.name;
    j["sm_count"] = hw.sm_count;
    j["shmem_per_sm"] = hw.shmem_per_sm;
    j["dram_bw"] = hw.dram_bw;
    j["vmc_per_sm"] = hw.vmc_per_sm;
    j["vcc_per_sm"] = hw.vcc_per_sm;
    j["slot_size"] = hw.slot_size;
    j["ldu_count"] = hw.ldu_count;
    j["stu_count"] = hw.stu_count;
    j["compute_throughput"] = hw.compute_throughput;
    j["issue_cost_ns"] = hw.issue_cost_ns;
    j["queue_op_cost_ns"] = hw.queue_op_cost_ns;
    j["queue_depth"] = hw.queue_depth;
    j["local_queue_depth"] = hw.local_queue_depth;
    return j.dump(2) + "\n";
}

HardwareProfile parse_profile(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ProfileError(std::string("profile parse: ") + e.what());
    }
    HardwareProfile hw;
    try {
        hw.name = j.at("name").get<std::string>();
        hw.sm_count = j.at("sm_count").get<uint32_t>();
        hw.shmem_per_sm = j.at("shmem_per_sm").get<uint64_t>();
        hw.dram_bw = j.at("dram_bw").get<double>();
        hw.vmc_per_sm = j.value("vmc_per_sm", 1u);
        hw.vcc_per_sm = j.value("vcc_per_sm", 1u);
        hw.slot_size = j.value("slot_size", 8192u);
        hw.ldu_count = j.value("ldu_count", 2u);
        hw.stu_count = j.value("stu_count", 1u);
        hw.compute_throughput = j.at("compute_throughput").get<double>();
        hw.issue_cost_ns = j.value("issue_cost_ns", 22u);
        hw.queue_op_cost_ns = j.value("queue_op_cost_ns", 6u);
        hw.queue_depth = j.value("queue_depth", 4u);
        hw.local_queue_depth = j.value("local_queue_depth", 8u);
    } catch (const ordered_json::exception& e) {
        throw ProfileError(std::string("profile field: ") + e.what());
    }
    hw.validate();
    return hw;
}

int64_t transfer_ns(uint64_t bytes, const HardwareProfile& hw, uint32_t active_vmcs) {
    if (bytes == 0) return 0;
    double share = hw.bytes_per_ns() / std::max(1u, active_vmcs);
    return static_cast<int64_t>(std::ceil(static_cast<double>(bytes) / share));
}

int64_t compute_ns(uint64_t flops, const HardwareProfile& hw) {
    if (flops == 0) return 0;
    double per_ns = hw.compute_throughput / 1e9;
    return static_cast<int64_t>(std::ceil(static_cast<double>(flops) / per_ns));
}

int64_t uop_latency(const isa::UopWord& u, const HardwareProfile& hw,
                    const WorkEstimate& work, uint32_t active_vmcs) {
    int64_t t = hw.issue_cost_ns;
    switch (u.klass()) {
        case isa::OpClass::memory: {
            bool local = u.opcode == isa::Opcode::LOAD_LOCAL || u.opcode == isa::Opcode::STORE_LOCAL;
            if (!local) t += transfer_ns(work.bytes, hw, active_vmcs);
            if (u.dep_id != 0) t += hw.queue_op_cost_ns;
            if (u.send() || u.recv()) t += hw.queue_op_cost_ns;
            break;
        }
        case isa::OpClass::compute:
            t += compute_ns(work.flops, hw);
            break;
        case isa::OpClass::control:
            break;
    }
    return t;
}

int64_t uop_latency(const isa::UopWord& u, const HardwareProfile& hw) {
    WorkEstimate w;
    if (u.klass() == isa::OpClass::memory &&
        !(u.opcode == isa::Opcode::ALLOC || u.opcode == isa::Opcode::FREE ||
          u.opcode == isa::Opcode::LOAD_LOCAL || u.opcode == isa::Opcode::STORE_LOCAL))
        w.bytes = static_cast<uint64_t>(u.size) * hw.slot_size;
    return uop_latency(u, hw, w);
}

}  // namespace uopsim::costmodel
