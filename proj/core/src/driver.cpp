#include "bmdqn/driver.hpp"

#include "bmdqn/checkpoint.hpp"
#include "bmdqn/metrics.hpp"
#include "bmdqn/verify.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace bmdqn::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

net::Activation parse_activation(const std::string& text) {
    if (text == "relu")
        return net::Activation::Relu;
    if (text == "tanh")
        return net::Activation::Tanh;
    throw UsageError("unknown activation '" + text + "' (expected relu or tanh)");
}

meta::Variant meta_variant(RunVariant v) {
    switch (v) {
    case RunVariant::GemBmlDirect:
        return meta::Variant::GemBmlDirect;
    case RunVariant::PointReptile:
        return meta::Variant::PointReptile;
    default:
        return meta::Variant::BmDqn; // random_init adapts with the full machinery
    }
}

std::string out_path(const RunConfig& cfg, const std::string& file) {
    return (fs::path(cfg.output_dir) / file).string();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write file: " + path);
    out << text;
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

long elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

json base_summary(const RunConfig& cfg, const std::string& run_id, const char* command) {
    json j;
    j["run_id"] = run_id;
    j["command"] = command;
    j["experiment"] = to_string(cfg.experiment);
    j["variant"] = to_string(cfg.variant);
    j["seed"] = cfg.seed;
    j["config_hash"] = hash_hex(config_hash(cfg));
    j["build"] = build_id();
    return j;
}

void write_summary(const RunConfig& cfg, const std::string& run_id, const json& summary) {
    write_text_file(out_path(cfg, run_id + "_summary.json"), summary.dump(2) + "\n");
}

void write_run_files(const RunConfig& cfg, const std::string& run_id,
                     const std::vector<MetricsRecord>& rows) {
    fs::create_directories(cfg.output_dir);
    write_metrics_csv(out_path(cfg, run_id + "_metrics.csv"), rows);
    write_text_file(out_path(cfg, run_id + "_config.txt"), effective_config_text(cfg));
}

/// Per-adaptation-step statistics over the evaluation rows.
json adaptation_summary(const std::vector<MetricsRecord>& rows, int adaptation_steps) {
    json steps = json::array();
    for (int k = 0; k <= adaptation_steps; ++k) {
        std::vector<double> returns;
        std::vector<double> queues;
        for (const MetricsRecord& r : rows) {
            if (r.phase != "test" || r.adaptation_step != k)
                continue;
            if (r.has_return)
                returns.push_back(r.episode_return);
            if (r.has_queue)
                queues.push_back(r.avg_queue);
        }
        const SampleStats rs = compute_stats(returns);
        json entry;
        entry["adaptation_step"] = k;
        entry["n_tasks"] = rs.count;
        entry["return_mean"] = rs.mean;
        entry["return_stddev"] = rs.stddev;
        entry["return_stderr"] = rs.stderr_mean;
        if (!queues.empty()) {
            const SampleStats qs = compute_stats(queues);
            entry["avg_queue_mean"] = qs.mean;
            entry["avg_queue_stddev"] = qs.stddev;
            entry["avg_queue_stderr"] = qs.stderr_mean;
        }
        steps.push_back(entry);
    }
    return steps;
}

std::vector<MetricsRecord> records_to_rows(const std::string& run_id, long task_id,
                                           const std::vector<meta::AdaptationRecord>& records) {
    std::vector<MetricsRecord> rows;
    rows.reserve(records.size());
    for (const meta::AdaptationRecord& rec : records) {
        MetricsRecord row;
        row.run_id = run_id;
        row.phase = rec.adaptation_window ? "adapt" : "test";
        row.adaptation_step = rec.adaptation_step;
        row.task_id = task_id;
        row.has_return = true;
        row.episode_return = rec.episode_return;
        row.has_queue = rec.has_queue;
        row.avg_queue = rec.avg_queue;
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_meta_test_like(const RunConfig& cfg);
int run_fixed_time(const RunConfig& cfg);

} // namespace

std::string build_id() {
#ifdef BMDQN_BUILD_ID
    return BMDQN_BUILD_ID;
#else
    return "unknown";
#endif
}

ExperimentSetup build_experiment(const RunConfig& cfg) {
    const net::Activation act = parse_activation(cfg.activation);
    ExperimentSetup setup;

    if (cfg.experiment == Experiment::Nav2d) {
        std::vector<int> layers{2};
        for (const int w : parse_int_list(cfg.net_hidden))
            layers.push_back(w);
        layers.push_back(16);
        setup.meta.net = net::mlp_spec(layers, act);
        envs::NavConfig nav;
        nav.horizon = cfg.horizon;
        setup.train_family = std::make_unique<envs::NavFamily>(nav);
        setup.test_family = std::make_unique<envs::NavFamily>(nav);
    } else {
        std::vector<int> score{cfg.embed_dim};
        for (const int w : parse_int_list(cfg.score_hidden))
            score.push_back(w);
        score.push_back(1);
        setup.meta.net = net::phase_shared_spec({1, cfg.embed_dim}, score, act);
        envs::TrafficConfig tc;
        tc.saturation = cfg.saturation;
        tc.switch_capacity = cfg.switch_capacity;
        tc.queue_cap = cfg.queue_cap;
        tc.queue_norm = cfg.queue_norm;
        setup.train_family = std::make_unique<envs::TrafficFamily>(
            parse_name_list(cfg.train_settings), tc, cfg.horizon, cfg.arrival_min,
            cfg.arrival_max);
        setup.test_family = std::make_unique<envs::TrafficFamily>(
            parse_name_list(cfg.test_settings), tc, cfg.horizon, cfg.arrival_min,
            cfg.arrival_max);
    }

    setup.meta.variant = meta_variant(cfg.variant);
    setup.meta.alpha = cfg.alpha;
    setup.meta.beta = cfg.beta;
    setup.meta.lambda_step = cfg.lambda_step;
    setup.meta.meta_batch_size = cfg.meta_batch_size;
    setup.meta.inner_steps_train = cfg.inner_steps_train;
    setup.meta.inner_steps_test = cfg.inner_steps_test;
    setup.meta.adaptation_steps = cfg.adaptation_steps;
    setup.meta.meta_update_period = cfg.meta_update_period;
    setup.meta.kl_weight = cfg.kl_weight;
    setup.meta.mc_samples = cfg.mc_samples;
    setup.meta.log_sigma_init = cfg.log_sigma_init;
    setup.meta.prior_sigma_floor = cfg.prior_sigma_floor;
    setup.meta.prior_sigma_cap = cfg.prior_sigma_cap;
    setup.meta.point_sigma = cfg.point_sigma;
    setup.meta.dqn.buffer_capacity = static_cast<std::size_t>(cfg.buffer_capacity);
    setup.meta.dqn.batch_size = cfg.batch_size;
    setup.meta.dqn.target_sync_period = cfg.target_sync_period;
    setup.meta.dqn.epsilon = cfg.epsilon;
    setup.meta.dqn.discount = cfg.discount;
    setup.meta.dqn.grad_clip_norm = cfg.grad_clip_norm;
    setup.meta.validate();
    return setup;
}

std::vector<envs::TaskDescriptor> load_task_file(const std::string& path,
                                                 Experiment experiment) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open task file: " + path);
    std::vector<envs::TaskDescriptor> tasks;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream is(line);
        std::string kind;
        if (!(is >> kind) || kind.front() == '#')
            continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (kind == "nav") {
            if (experiment != Experiment::Nav2d)
                throw UsageError(where + ": nav task in a traffic run");
            envs::NavTask task;
            if (!(is >> task.goal[0] >> task.goal[1]))
                throw UsageError(where + ": expected 'nav <goal_x> <goal_y>'");
            tasks.emplace_back(task);
        } else if (kind == "traffic") {
            if (experiment != Experiment::Traffic)
                throw UsageError(where + ": traffic task in a nav2d run");
            envs::IntersectionTask task;
            if (!(is >> task.setting_name))
                throw UsageError(where + ": expected 'traffic <setting> <8 rates>'");
            envs::phase_registry(task.setting_name); // validate the name
            for (double& rate : task.arrival_rates)
                if (!(is >> rate))
                    throw UsageError(where + ": expected 8 arrival rates");
            tasks.emplace_back(std::move(task));
        } else {
            throw UsageError(where + ": unknown task kind '" + kind + "'");
        }
    }
    if (tasks.empty())
        throw UsageError(path + ": no tasks found");
    return tasks;
}

std::vector<envs::TaskDescriptor> test_tasks(const RunConfig& cfg,
                                             const envs::TaskFamily& family) {
    if (!cfg.task_file.empty())
        return load_task_file(cfg.task_file, cfg.experiment);
    if (cfg.n_test_tasks < 1)
        throw UsageError("n_test_tasks must be at least 1");
    std::vector<envs::TaskDescriptor> tasks;
    tasks.reserve(cfg.n_test_tasks);
    for (int i = 0; i < cfg.n_test_tasks; ++i) {
        RngStream stream = derive_stream(cfg.seed, "test/task", static_cast<std::uint64_t>(i));
        tasks.push_back(family.sample_task(stream));
    }
    return tasks;
}

int cmd_meta_train(const RunConfig& cfg) {
    if (cfg.variant == RunVariant::RandomInit || cfg.variant == RunVariant::FixedTime)
        throw UsageError("meta-train needs a trainable variant "
                         "(bm_dqn, gem_bml_direct or point_reptile)");
    const auto start = Clock::now();
    const ExperimentSetup setup = build_experiment(cfg);
    const std::string run_id = resolved_run_id(cfg);

    std::vector<MetricsRecord> rows;
    const meta::MetricSink sink = [&](const meta::TrainMetric& m) {
        MetricsRecord row;
        row.run_id = run_id;
        row.phase = "train";
        row.meta_iteration = m.meta_iteration;
        row.has_return = true;
        row.episode_return = m.mean_return;
        row.has_queue = m.has_queue;
        row.avg_queue = m.mean_avg_queue;
        rows.push_back(std::move(row));
    };
    const meta::MetaState state =
        meta::meta_train(setup.meta, *setup.train_family, cfg.meta_iterations, cfg.seed, sink);

    fs::create_directories(cfg.output_dir);
    const std::string ckpt_path =
        cfg.checkpoint.empty() ? out_path(cfg, run_id + ".ckpt") : cfg.checkpoint;
    save_checkpoint(ckpt_path, setup.meta.net, state);
    write_run_files(cfg, run_id, rows);

    json summary = base_summary(cfg, run_id, "meta-train");
    summary["meta_iterations"] = cfg.meta_iterations;
    summary["checkpoint"] = ckpt_path;
    summary["net"] = setup.meta.net.descriptor();
    if (!rows.empty()) {
        summary["first_train_return"] = rows.front().episode_return;
        summary["last_train_return"] = rows.back().episode_return;
    }
    summary["wall_ms"] = elapsed_ms(start);
    write_summary(cfg, run_id, summary);

    std::cout << "meta-train " << run_id << ": " << cfg.meta_iterations
              << " meta-iterations, checkpoint " << ckpt_path << "\n";
    return 0;
}

namespace {

int run_meta_test_like(const RunConfig& cfg) {
    const auto start = Clock::now();
    const ExperimentSetup setup = build_experiment(cfg);
    const envs::TaskFamily& family = *setup.test_family;
    const std::string run_id = resolved_run_id(cfg);

    meta::MetaState state;
    if (cfg.variant == RunVariant::RandomInit) {
        state = meta::initial_state(setup.meta, cfg.seed);
    } else {
        if (cfg.checkpoint.empty())
            throw UsageError("meta-test needs --checkpoint unless variant is random_init");
        Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
        if (ckpt.spec.hash() != setup.meta.net.hash())
            throw std::runtime_error("checkpoint net '" + ckpt.spec.descriptor() +
                                     "' does not match configured net '" +
                                     setup.meta.net.descriptor() + "'");
        state = std::move(ckpt.state);
    }

    const std::vector<envs::TaskDescriptor> tasks = test_tasks(cfg, family);
    std::vector<MetricsRecord> rows;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const meta::MetaTestResult result = meta::meta_test(
            state, family, tasks[i], setup.meta, cfg.seed, static_cast<long>(i));
        for (MetricsRecord& row :
             records_to_rows(run_id, static_cast<long>(i), result.records))
            rows.push_back(std::move(row));
    }
    write_run_files(cfg, run_id, rows);

    json summary = base_summary(cfg, run_id, "meta-test");
    summary["n_tasks"] = tasks.size();
    summary["adaptation"] = adaptation_summary(rows, cfg.adaptation_steps);
    summary["wall_ms"] = elapsed_ms(start);
    write_summary(cfg, run_id, summary);

    std::cout << "meta-test " << run_id << ": " << tasks.size() << " tasks, results in "
              << out_path(cfg, run_id + "_metrics.csv") << "\n";
    return 0;
}

int run_fixed_time(const RunConfig& cfg) {
    if (cfg.experiment != Experiment::Traffic)
        throw UsageError("fixed_time baseline is only defined for the traffic experiment");
    const auto start = Clock::now();
    const ExperimentSetup setup = build_experiment(cfg);
    const envs::TaskFamily& family = *setup.test_family;
    const std::string run_id = resolved_run_id(cfg);

    const std::vector<envs::TaskDescriptor> tasks = test_tasks(cfg, family);
    std::vector<MetricsRecord> rows;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& task = std::get<envs::IntersectionTask>(tasks[i]);
        // evaluate on the same per-round environment streams meta-test uses,
        // so comparisons against adapted policies are paired
        for (int round = 0; round <= cfg.adaptation_steps; ++round) {
            const std::unique_ptr<envs::Environment> env = family.make_env(
                tasks[i], derive_stream(cfg.seed, "test/eval-env", i,
                                        static_cast<std::uint64_t>(round)));
            envs::FixedTimePolicy policy(task.setting_name, cfg.fixed_time_period);
            const envs::EpisodeResult ep =
                envs::run_episode(*env, std::ref(policy), family.episode_horizon());
            MetricsRecord row;
            row.run_id = run_id;
            row.phase = "test";
            row.adaptation_step = round;
            row.task_id = static_cast<long>(i);
            row.has_return = true;
            row.episode_return = ep.total_reward;
            row.has_queue = true;
            row.avg_queue = envs::average_queue(
                ep.total_reward, static_cast<int>(ep.trajectory.size()));
            rows.push_back(std::move(row));
        }
    }
    write_run_files(cfg, run_id, rows);

    json summary = base_summary(cfg, run_id, "baseline");
    summary["n_tasks"] = tasks.size();
    summary["fixed_time_period"] = cfg.fixed_time_period;
    summary["adaptation"] = adaptation_summary(rows, cfg.adaptation_steps);
    summary["wall_ms"] = elapsed_ms(start);
    write_summary(cfg, run_id, summary);

    std::cout << "baseline " << run_id << ": " << tasks.size() << " tasks, results in "
              << out_path(cfg, run_id + "_metrics.csv") << "\n";
    return 0;
}

} // namespace

int cmd_meta_test(const RunConfig& cfg) {
    if (cfg.variant == RunVariant::FixedTime)
        throw UsageError("use the baseline command for the fixed_time variant");
    return run_meta_test_like(cfg);
}

int cmd_baseline(const RunConfig& cfg) {
    if (cfg.variant == RunVariant::FixedTime)
        return run_fixed_time(cfg);
    if (cfg.variant == RunVariant::RandomInit)
        return run_meta_test_like(cfg);
    throw UsageError("baseline supports variants fixed_time and random_init");
}

int cmd_verify(const VerifyArgs& args) {
    verify::Options opt;
    opt.seed = args.seed;
    opt.instances = args.instances;
    opt.flip_kl_diff_sign = args.flip_kl_diff_sign;
    const std::vector<verify::SuiteResult> results = verify::run_all(opt);

    std::size_t width = 0;
    for (const verify::SuiteResult& r : results)
        width = std::max(width, r.name.size());
    bool all_pass = true;
    for (const verify::SuiteResult& r : results) {
        all_pass = all_pass && r.pass;
        std::printf("%-*s  max-residual %10.3e  tolerance %8.1e  %s%s%s\n",
                    static_cast<int>(width), r.name.c_str(), r.max_residual, r.tolerance,
                    r.pass ? "pass" : "FAIL", r.note.empty() ? "" : "  ",
                    r.note.c_str());
    }

    if (!args.json_path.empty()) {
        json suites = json::array();
        for (const verify::SuiteResult& r : results) {
            json entry;
            entry["name"] = r.name;
            entry["pass"] = r.pass;
            entry["max_residual"] = r.max_residual;
            entry["tolerance"] = r.tolerance;
            if (!r.note.empty())
                entry["note"] = r.note;
            suites.push_back(entry);
        }
        json report;
        report["build"] = build_id();
        report["seed"] = args.seed;
        report["instances"] = args.instances;
        report["all_pass"] = all_pass;
        report["suites"] = suites;
        write_text_file(args.json_path, report.dump(2) + "\n");
    }
    return all_pass ? 0 : 1;
}

int cmd_grad_check(const std::string& op, std::uint64_t seed) {
    verify::Options opt;
    opt.seed = seed;
    opt.instances = 25;
    verify::SuiteResult result;
    if (op == "backward")
        result = verify::backprop_check(opt);
    else if (op == "kl-q")
        result = verify::kl_grad_q_check(opt);
    else if (op == "kl-prior")
        result = verify::kl_diff_grad_prior_check(opt);
    else if (op == "elbo")
        result = verify::reparam_gradient_check(opt);
    else if (op == "marginal")
        result = verify::marginal_quadrature_check(opt);
    else
        throw UsageError("unknown grad-check op '" + op +
                         "' (expected backward, kl-q, kl-prior, elbo or marginal)");
    std::printf("%s: max-residual %.3e tolerance %.1e %s\n", result.name.c_str(),
                result.max_residual, result.tolerance, result.pass ? "pass" : "FAIL");
    return result.pass ? 0 : 1;
}

} // namespace bmdqn::cli
