#pragma once
// Post-processing over execution reports: utilization timelines, traffic
// accounting and A/B comparisons.

#include <string>
#include <vector>

#include "uopsim/machine.hpp"

namespace uopsim::metrics {

struct MetricsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Bucket {
    int64_t start = 0;
    int64_t end = 0;
    double fraction = 0;  // busy share of the bucket, [0,1]
};

struct UtilizationTimeline {
    std::string resource;
    std::vector<Bucket> buckets;  // tile [0, makespan]
};

// Busy fraction per fixed-width bucket for every resource in the report.
// bucket_ns == 0 picks makespan/200 (minimum 1 ns). Refuses deadlocked
// reports.
std::vector<UtilizationTimeline> utilization(const machine::ExecutionReport& report,
                                             int64_t bucket_ns = 0);

std::string timelines_csv(const std::vector<UtilizationTimeline>& t);

struct Comparison {
    double makespan_ratio = 0;  // a / b
    int64_t traffic_delta = 0;  // a - b, bytes
    // mean busy fraction per resource, a - b
    std::vector<std::pair<std::string, double>> utilization_delta;
};

// Requires both reports to come from the same workload and profile.
Comparison compare(const machine::ExecutionReport& a, const machine::ExecutionReport& b);

std::string comparison_text(const Comparison& c);

}  // namespace uopsim::metrics
