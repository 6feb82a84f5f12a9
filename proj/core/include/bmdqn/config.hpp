#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bmdqn::cli {

/// Command-line or config-file mistakes; mapped to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Experiment { Nav2d, Traffic };

enum class RunVariant {
    BmDqn,
    GemBmlDirect,
    PointReptile,
    RandomInit, // untrained initialization, same adaptation protocol
    FixedTime,  // cyclic signal plan, traffic only
};

std::string to_string(Experiment e);
std::string to_string(RunVariant v);
Experiment parse_experiment(std::string_view text); // throws UsageError
RunVariant parse_variant(std::string_view text);    // throws UsageError

/// Every tunable of the experiment commands. Values resolve in precedence
/// order: experiment defaults, then config file entries (top to bottom), then
/// --set pairs, then named flags. The `experiment` key is resolved first
/// because it selects the default set.
struct RunConfig {
    Experiment experiment = Experiment::Nav2d;
    RunVariant variant = RunVariant::BmDqn;
    std::uint64_t seed = 0;
    std::string run_id; // empty: derived as <experiment>-<variant>-s<seed>
    std::string output_dir = "runs";
    std::string checkpoint; // meta-train: save path; meta-test: load path
    std::string task_file;  // optional fixed task list for meta-test

    long meta_iterations = 200;
    int n_test_tasks = 40;

    double alpha = 0.1;
    double beta = 0.001;
    double lambda_step = 0.001;
    int meta_batch_size = 20;
    int inner_steps_train = 5; // gradient steps per inner fit (train and train+val each)
    int inner_steps_test = 100; // one gradient step per step of each adaptation episode
    int adaptation_steps = 3;
    int meta_update_period = 10;
    double kl_weight = 1.0;
    int mc_samples = 1;
    double log_sigma_init = -3.0;
    double prior_sigma_floor = 1e-3;
    double prior_sigma_cap = 1e3;
    double point_sigma = 1e-6;

    int buffer_capacity = 10000;
    int batch_size = 32;
    int target_sync_period = 100;
    double epsilon = 0.1;
    double discount = 0.99;
    double grad_clip_norm = 10.0;

    int horizon = 100; // episode length

    int saturation = 4;
    int switch_capacity = 4;
    int queue_cap = 50;
    double queue_norm = 10.0;
    double arrival_min = 0.2;
    double arrival_max = 1.5;
    std::string train_settings = "8,6a,6e";
    std::string test_settings = "LA-2,Jinan-1";
    int fixed_time_period = 5;

    std::string net_hidden = "32,32"; // nav2d q-net hidden widths
    int embed_dim = 16;               // traffic embedding width
    std::string score_hidden = "32";  // traffic scoring hidden widths
    std::string activation = "relu";
};

RunConfig default_config(Experiment experiment);

using KeyValue = std::pair<std::string, std::string>;

/// Applies one key=value; throws UsageError naming the key when it is
/// unknown or the value does not parse.
void apply_kv(RunConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines (# comments, blank lines allowed) in file order.
std::vector<KeyValue> parse_config_file(const std::string& path); // throws UsageError

/// Full resolution: experiment defaults, then the file, then overrides in
/// the order given.
RunConfig resolve_config(const std::optional<std::string>& config_file,
                         const std::vector<KeyValue>& overrides);

/// Canonical echo of every key, one `key = value` line sorted by key.
/// Feeding the text back through resolve_config reproduces the same config.
std::string effective_config_text(const RunConfig& cfg);

/// FNV-1a over effective_config_text, reported in run summaries.
std::uint64_t config_hash(const RunConfig& cfg);

std::string resolved_run_id(const RunConfig& cfg);

/// Comma-separated list helpers for keys like net_hidden and train_settings.
std::vector<int> parse_int_list(std::string_view text);        // throws UsageError
std::vector<std::string> parse_name_list(std::string_view text);

} // namespace bmdqn::cli
