#include "bmdqn/config.hpp"
#include "bmdqn/driver.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using bmdqn::cli::KeyValue;
using bmdqn::cli::RunConfig;
using bmdqn::cli::UsageError;

/// Options shared by the experiment subcommands. Precedence: experiment
/// defaults < config file < --set pairs < named flags.
struct CommonArgs {
    std::optional<std::string> config_file;
    std::vector<std::string> set_pairs;
    std::vector<KeyValue> named; // filled by flag callbacks, in parse order
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "Config file with key = value lines");
    cmd->add_option("--set", args.set_pairs, "Override one key, as key=value (repeatable)")
        ->take_all();

    const auto named = [&args, cmd](const std::string& flag, const std::string& key,
                                    const std::string& help) {
        cmd->add_option_function<std::string>(
               flag,
               [&args, key](const std::string& value) { args.named.emplace_back(key, value); },
               help)
            ->type_name("TEXT");
    };
    named("--experiment", "experiment", "nav2d or traffic");
    named("--variant", "variant",
          "bm_dqn, gem_bml_direct, point_reptile, random_init or fixed_time");
    named("--seed", "seed", "Master seed");
    named("--run-id", "run_id", "Run identifier (default <experiment>-<variant>-s<seed>)");
    named("--output-dir", "output_dir", "Directory for metrics, config echo and summary");
    named("--checkpoint", "checkpoint", "Checkpoint path (written by meta-train, read by meta-test)");
    named("--task-file", "task_file", "Fixed task list for meta-test/baseline");
    named("--meta-iterations", "meta_iterations", "Meta-training iterations");
    named("--n-test-tasks", "n_test_tasks", "Number of sampled test tasks");
}

RunConfig resolve(const CommonArgs& args) {
    std::vector<KeyValue> overrides;
    for (const std::string& pair : args.set_pairs) {
        const std::size_t eq = pair.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--set expects key=value, got '" + pair + "'");
        overrides.emplace_back(pair.substr(0, eq), pair.substr(eq + 1));
    }
    overrides.insert(overrides.end(), args.named.begin(), args.named.end());
    return bmdqn::cli::resolve_config(args.config_file, overrides);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian meta reinforcement learning experiments"};
    app.require_subcommand(1);

    CommonArgs train_args;
    CLI::App* train = app.add_subcommand("meta-train", "Train a meta-learner");
    add_common_options(train, train_args);

    CommonArgs test_args;
    CLI::App* test = app.add_subcommand("meta-test", "Adapt and evaluate on held-out tasks");
    add_common_options(test, test_args);

    CommonArgs baseline_args;
    CLI::App* baseline =
        app.add_subcommand("baseline", "Evaluate fixed_time or random_init baselines");
    add_common_options(baseline, baseline_args);

    bmdqn::cli::VerifyArgs verify_args;
    CLI::App* verify = app.add_subcommand("verify", "Run every numerical check suite");
    verify->add_option("--seed", verify_args.seed, "Seed for check instances");
    verify->add_option("--instances", verify_args.instances, "Random instances per suite");
    verify->add_option("--json", verify_args.json_path, "Write a JSON report here");
    verify
        ->add_flag("--flip-kl-diff-sign", verify_args.flip_kl_diff_sign,
                   "Fault injection: negate the prior-side KL-difference gradient")
        ->group(""); // test hook, hidden from help

    std::string grad_op;
    std::uint64_t grad_seed = 90210;
    CLI::App* grad = app.add_subcommand("grad-check", "Spot-check one gradient implementation");
    grad->add_option("op", grad_op, "backward | kl-q | kl-prior | elbo | marginal")
        ->required();
    grad->add_option("--seed", grad_seed, "Seed for check instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train))
            return bmdqn::cli::cmd_meta_train(resolve(train_args));
        if (app.got_subcommand(test))
            return bmdqn::cli::cmd_meta_test(resolve(test_args));
        if (app.got_subcommand(baseline))
            return bmdqn::cli::cmd_baseline(resolve(baseline_args));
        if (app.got_subcommand(verify))
            return bmdqn::cli::cmd_verify(verify_args);
        if (app.got_subcommand(grad))
            return bmdqn::cli::cmd_grad_check(grad_op, grad_seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
