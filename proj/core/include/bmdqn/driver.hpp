#pragma once

#include "bmdqn/config.hpp"
#include "bmdqn/envs.hpp"
#include "bmdqn/meta.hpp"

#include <memory>
#include <string>
#include <vector>

namespace bmdqn::cli {

/// Everything a RunConfig implies for the experiment commands. For traffic,
/// train and test families differ by their phase-setting pools; for nav2d
/// they are the same family.
struct ExperimentSetup {
    meta::MetaConfig meta;
    std::unique_ptr<envs::TaskFamily> train_family;
    std::unique_ptr<envs::TaskFamily> test_family;
};

ExperimentSetup build_experiment(const RunConfig& cfg);

/// Fixed task lists: one task per line, `nav <goal_x> <goal_y>` or
/// `traffic <setting> <rate0> ... <rate7>`, # comments allowed.
std::vector<envs::TaskDescriptor> load_task_file(const std::string& path,
                                                 Experiment experiment);

/// Tasks for a test run: the task file when configured, otherwise
/// n_test_tasks samples from per-index streams ("test/task", i), so the same
/// seed always names the same tasks regardless of variant.
std::vector<envs::TaskDescriptor> test_tasks(const RunConfig& cfg,
                                             const envs::TaskFamily& family);

/// Experiment commands. Each writes <run_id>_metrics.csv,
/// <run_id>_config.txt and <run_id>_summary.json into output_dir; meta-train
/// also writes a checkpoint. Returns the process exit code.
int cmd_meta_train(const RunConfig& cfg);
int cmd_meta_test(const RunConfig& cfg);
int cmd_baseline(const RunConfig& cfg);

/// Identifier of the build that produced a run, stamped into every summary
/// file (the source revision when available, otherwise "unknown").
std::string build_id();

struct VerifyArgs {
    std::uint64_t seed = 90210;
    int instances = 100;
    bool flip_kl_diff_sign = false; // fault-injection hook for tests
    std::string json_path;          // optional machine-readable report
};

/// Runs every numerical check suite, prints a table, exits non-zero if any
/// fails.
int cmd_verify(const VerifyArgs& args);

/// One named check with a reduced instance count, for quick spot checks:
/// backward | kl-q | kl-prior | elbo | marginal.
int cmd_grad_check(const std::string& op, std::uint64_t seed);

} // namespace bmdqn::cli
