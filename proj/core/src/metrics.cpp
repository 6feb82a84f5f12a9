#include "bmdqn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bmdqn::cli {

namespace {

std::string csv_field(const std::string& raw) {
    if (raw.find_first_of(",\"\n") == std::string::npos)
        return raw;
    std::string quoted = "\"";
    for (const char c : raw) {
        if (c == '"')
            quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string csv_header() {
    return "run_id,phase,meta_iteration,adaptation_step,task_id,episode_return,avg_queue";
}

std::string to_csv_row(const MetricsRecord& rec) {
    std::ostringstream os;
    os << csv_field(rec.run_id) << ',' << csv_field(rec.phase) << ',';
    if (rec.meta_iteration >= 0)
        os << rec.meta_iteration;
    os << ',';
    if (rec.adaptation_step >= 0)
        os << rec.adaptation_step;
    os << ',';
    if (rec.task_id >= 0)
        os << rec.task_id;
    os << ',';
    if (rec.has_return)
        os << format_double(rec.episode_return);
    os << ',';
    if (rec.has_queue)
        os << format_double(rec.avg_queue);
    return os.str();
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write metrics file: " + path);
    out << csv_header() << '\n';
    for (const MetricsRecord& rec : records)
        out << to_csv_row(rec) << '\n';
    if (!out)
        throw std::runtime_error("failed while writing metrics file: " + path);
}

SampleStats compute_stats(std::span<const double> values) {
    SampleStats stats;
    stats.count = static_cast<long>(values.size());
    if (values.empty())
        return stats;
    double sum = 0.0;
    for (const double v : values)
        sum += v;
    stats.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (const double v : values) {
            const double d = v - stats.mean;
            sq += d * d;
        }
        stats.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
        stats.stderr_mean = stats.stddev / std::sqrt(static_cast<double>(values.size()));
    }
    return stats;
}

} // namespace bmdqn::cli
