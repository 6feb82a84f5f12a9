#pragma once

#include <span>
#include <string>
#include <vector>

namespace bmdqn::cli {

/// One metrics row. Negative meta_iteration / adaptation_step / task_id and
/// the has_* flags mark fields that do not apply; they serialize as empty
/// cells. Wall-clock time deliberately stays out of this record so metrics
/// files are byte-identical across repeated runs.
struct MetricsRecord {
    std::string run_id;
    std::string phase; // train | adapt | test
    long meta_iteration = -1;
    int adaptation_step = -1;
    long task_id = -1;
    bool has_return = false;
    double episode_return = 0.0;
    bool has_queue = false;
    double avg_queue = 0.0;
};

std::string csv_header();
std::string to_csv_row(const MetricsRecord& rec);

/// Writes header plus one row per record with '\n' line endings.
void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records);

struct SampleStats {
    long count = 0;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation
    double stderr_mean = 0.0;
};

SampleStats compute_stats(std::span<const double> values);

} // namespace bmdqn::cli
