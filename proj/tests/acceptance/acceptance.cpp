// End-to-end acceptance checks. Each criterion prints exactly one line:
//   criterion N (<label>): pass|FAIL [detail]
// and the process exits 0 only if every criterion passes. All tolerances,
// seeds, and instance counts are pinned here.

#include <bmdqn/driver.hpp>
#include <bmdqn/meta.hpp>
#include <bmdqn/metrics.hpp>
#include <bmdqn/verify.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace {

using namespace bmdqn;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kCheckSeed = 90210;
constexpr int kCheckInstances = 100;

constexpr double kSecondsConjugateIdentity = 1.0;
constexpr double kSecondsGradIdentities = 5.0;
constexpr double kSecondsKlGradients = 5.0;
constexpr double kSecondsBackprop = 30.0;
constexpr double kSecondsReparam = 10.0;
constexpr double kSecondsExperiment = 1800.0;

constexpr long kNavMetaIterations = 200;
constexpr int kNavTestTasks = 40;
constexpr int kNavAdaptationEpisodes = 3;
constexpr long kTrafficMetaIterations = 200;
constexpr int kTrafficInnerStepsTest = 3;
constexpr int kFixedTimePeriod = 5;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

verify::Options check_options() {
    verify::Options opt;
    opt.seed = kCheckSeed;
    opt.instances = kCheckInstances;
    return opt;
}

/// Combines verify suites into one outcome; every suite must pass and the
/// batch must finish inside the budget.
Outcome run_suites(const std::vector<verify::SuiteResult>& suites, double elapsed,
                   double budget) {
    Outcome out;
    out.pass = elapsed < budget;
    std::ostringstream detail;
    for (const verify::SuiteResult& r : suites) {
        out.pass = out.pass && r.pass;
        detail << r.name << " " << fmt("%.2e<%.0e", r.max_residual, r.tolerance);
        if (!r.note.empty())
            detail << " (" << r.note << ")";
        detail << "; ";
    }
    detail << fmt("%.2f s", elapsed);
    out.detail = detail.str();
    return out;
}

Outcome criterion_conjugate_identity() {
    const auto start = Clock::now();
    const verify::SuiteResult r = verify::likelihood_difference_check(check_options());
    return run_suites({r}, seconds_since(start), kSecondsConjugateIdentity);
}

Outcome criterion_grad_identities() {
    const auto start = Clock::now();
    const verify::Options opt = check_options();
    const std::vector<verify::SuiteResult> suites{
        verify::prior_grad_expectation_check(opt),
        verify::posterior_grad_identity_check(opt),
        verify::fd_convergence_order_check(opt),
    };
    return run_suites(suites, seconds_since(start), kSecondsGradIdentities);
}

Outcome criterion_kl_gradients() {
    const auto start = Clock::now();
    const verify::Options opt = check_options();
    const std::vector<verify::SuiteResult> suites{
        verify::kl_grad_q_check(opt),
        verify::kl_diff_grad_prior_check(opt),
    };
    return run_suites(suites, seconds_since(start), kSecondsKlGradients);
}

Outcome criterion_backprop() {
    const auto start = Clock::now();
    const verify::SuiteResult r = verify::backprop_check(check_options());
    return run_suites({r}, seconds_since(start), kSecondsBackprop);
}

Outcome criterion_reparam() {
    const auto start = Clock::now();
    const verify::SuiteResult r = verify::reparam_gradient_check(check_options());
    return run_suites({r}, seconds_since(start), kSecondsReparam);
}

vi::GaussianParams flat_params(const net::NetSpec& spec, double mu, double log_sigma) {
    vi::GaussianParams p;
    const auto n = static_cast<std::size_t>(net::param_count(spec));
    p.mu.assign(n, mu);
    p.log_sigma.assign(n, log_sigma);
    p.spec_hash = spec.hash();
    return p;
}

// Hand values like 0.3 are reached through rounded arithmetic (0.1 * 3), so
// allow a few ulps of relative slack.
bool all_equal(const std::vector<double>& values, double expected) {
    for (const double v : values)
        if (std::abs(v - expected) > 1e-15 * std::max(1.0, std::abs(expected)))
            return false;
    return true;
}

Outcome criterion_update_arithmetic() {
    Outcome out;
    out.pass = true;
    std::ostringstream detail;

    meta::MetaConfig cfg;
    cfg.net = net::mlp_spec({1, 1});
    cfg.meta_batch_size = 1;
    cfg.beta = 0.1;
    cfg.lambda_step = 0.5;

    // single-task closed-form case: unit prior, posteriors one and two units out
    meta::MetaState state;
    state.theta_prior = flat_params(cfg.net, 0.0, 0.0);
    state.lambda_init = flat_params(cfg.net, 0.0, 0.0);
    std::vector<meta::TaskPosteriors> tp(1);
    tp[0].lambda_tr = flat_params(cfg.net, 1.0, 0.0);
    tp[0].lambda_trval = flat_params(cfg.net, 2.0, 0.0);
    const meta::MetaState single = meta::global_update(state, tp, cfg);
    const bool single_ok = all_equal(single.theta_prior.mu, 0.1) &&
                           all_equal(single.theta_prior.log_sigma, 0.3) &&
                           all_equal(single.lambda_init.mu, 1.0);
    out.pass = out.pass && single_ok;
    detail << "single-task " << (single_ok ? "exact" : "MISMATCH") << "; ";

    // two tasks: deltas add before the step scales them
    cfg.beta = 0.5;
    cfg.lambda_step = 0.25;
    cfg.meta_batch_size = 2;
    std::vector<meta::TaskPosteriors> two(2);
    two[0].lambda_tr = flat_params(cfg.net, 1.0, 0.0);
    two[0].lambda_trval = flat_params(cfg.net, 2.0, 0.0);
    two[1].lambda_tr = flat_params(cfg.net, -1.0, 0.0);
    two[1].lambda_trval = flat_params(cfg.net, 3.0, 0.0);
    const meta::MetaState multi = meta::global_update(state, two, cfg);
    const bool multi_ok =
        all_equal(multi.lambda_init.mu, 1.25) && all_equal(multi.theta_prior.mu, 2.5);
    out.pass = out.pass && multi_ok;
    detail << "two-task " << (multi_ok ? "exact" : "MISMATCH") << "; ";

    // point ablation: one individual step must equal plain TD SGD bitwise
    for (const bool engage_clip : {false, true}) {
        meta::MetaConfig pcfg;
        pcfg.net = net::mlp_spec({1, 2});
        pcfg.variant = meta::Variant::PointReptile;
        pcfg.alpha = engage_clip ? 0.5 : 0.05;
        pcfg.kl_weight = 1.0; // forced to zero internally for this variant
        pcfg.dqn.batch_size = 2;
        const double reward = engage_clip ? 50.0 : 1.0;

        vi::GaussianParams lam0 = flat_params(pcfg.net, 0.0, std::log(pcfg.point_sigma));
        lam0.mu = {0.4, -0.2, 0.3, 0.1};
        const vi::GaussianParams prior = flat_params(pcfg.net, 0.0, 0.0);

        const auto fill = [&](dqn::ReplayBuffer& buf) {
            buf.push({{0.5}, 0, reward, {0.3}, false});
            buf.push({{-0.2}, 1, -0.5, {0.8}, false});
            buf.push({{1.0}, 0, reward, {0.0}, true});
        };
        dqn::ReplayBuffer buf(8, derive_stream(17, "acceptance/point"));
        dqn::ReplayBuffer twin(8, derive_stream(17, "acceptance/point"));
        fill(buf);
        fill(twin);

        RngStream noise(99);
        const vi::GaussianParams stepped =
            meta::individual_update(prior, lam0, buf, 1, pcfg, noise);

        const net::WeightVector theta0 = net::make_weights(pcfg.net, lam0.mu);
        const net::WeightVector target = dqn::sync_target(theta0);
        const auto batch = twin.sample(static_cast<std::size_t>(pcfg.dqn.batch_size));
        const std::vector<double> ys =
            dqn::double_dqn_targets(batch, theta0, target, pcfg.net, pcfg.dqn.discount);
        const dqn::TdResult td = dqn::td_loss_and_grad(batch, ys, theta0, pcfg.net);
        vi::GaussianGrad g;
        g.mu = td.grad.values;
        g.log_sigma.assign(g.mu.size(), 0.0);
        g.spec_hash = pcfg.net.hash();
        const double pre_norm = vi::clip_global_norm(g, pcfg.dqn.grad_clip_norm);
        if (engage_clip && pre_norm <= pcfg.dqn.grad_clip_norm) {
            out.pass = false;
            detail << "clip case too tame; ";
            continue;
        }
        std::vector<double> expected = lam0.mu;
        for (std::size_t i = 0; i < expected.size(); ++i)
            expected[i] -= pcfg.alpha * g.mu[i];

        const bool bitwise = stepped.mu == expected &&
                             stepped.log_sigma == lam0.log_sigma;
        out.pass = out.pass && bitwise;
        detail << (engage_clip ? "point+clip " : "point ")
               << (bitwise ? "bitwise" : "MISMATCH") << "; ";
    }

    out.detail = detail.str();
    return out;
}

struct VariantSamples {
    std::vector<double> values;
    cli::SampleStats stats() const { return cli::compute_stats(values); }
};

/// Post-first-episode evaluation returns for one trained state over a task
/// list; evaluation streams depend only on (seed, task index, round), so the
/// comparison across variants is paired.
void collect_eval_returns(const meta::MetaState& state, const envs::TaskFamily& family,
                          const std::vector<envs::TaskDescriptor>& tasks,
                          const meta::MetaConfig& cfg, std::uint64_t seed, int eval_step,
                          VariantSamples& eval_out, VariantSamples* adapt_queues,
                          VariantSamples* final_queues) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const meta::MetaTestResult res =
            meta::meta_test(state, family, tasks[i], cfg, seed, static_cast<long>(i));
        for (const meta::AdaptationRecord& rec : res.records) {
            if (!rec.adaptation_window && rec.adaptation_step == eval_step)
                eval_out.values.push_back(rec.episode_return);
            if (adapt_queues && rec.adaptation_window && rec.has_queue)
                adapt_queues->values.push_back(rec.avg_queue);
            if (final_queues && !rec.adaptation_window && rec.has_queue &&
                rec.adaptation_step == cfg.adaptation_steps)
                final_queues->values.push_back(rec.avg_queue);
        }
    }
}

Outcome criterion_navigation() {
    const auto start = Clock::now();
    VariantSamples bm, gbd, ri;

    for (const std::uint64_t seed : kSeeds) {
        cli::RunConfig rc = cli::default_config(cli::Experiment::Nav2d);
        rc.seed = seed;
        rc.meta_iterations = kNavMetaIterations;
        rc.n_test_tasks = kNavTestTasks;
        rc.adaptation_steps = kNavAdaptationEpisodes;

        rc.variant = cli::RunVariant::BmDqn;
        cli::ExperimentSetup setup = cli::build_experiment(rc);
        const std::vector<envs::TaskDescriptor> tasks =
            cli::test_tasks(rc, *setup.test_family);

        const meta::MetaState trained = meta::meta_train(
            setup.meta, *setup.train_family, rc.meta_iterations, seed);
        collect_eval_returns(trained, *setup.test_family, tasks, setup.meta, seed, 1, bm,
                             nullptr, nullptr);

        const meta::MetaState fresh = meta::initial_state(setup.meta, seed);
        collect_eval_returns(fresh, *setup.test_family, tasks, setup.meta, seed, 1, ri,
                             nullptr, nullptr);

        rc.variant = cli::RunVariant::GemBmlDirect;
        cli::ExperimentSetup dsetup = cli::build_experiment(rc);
        const meta::MetaState direct = meta::meta_train(
            dsetup.meta, *dsetup.train_family, rc.meta_iterations, seed);
        collect_eval_returns(direct, *dsetup.test_family, tasks, dsetup.meta, seed, 1, gbd,
                             nullptr, nullptr);
        std::fprintf(stderr, "  [nav seed %llu done, %.0f s]\n",
                     static_cast<unsigned long long>(seed), seconds_since(start));
    }

    const cli::SampleStats sb = bm.stats();
    const cli::SampleStats sr = ri.stats();
    const cli::SampleStats sg = gbd.stats();
    const double gap = sb.mean - sr.mean;
    const double pooled_se =
        std::sqrt(sb.stderr_mean * sb.stderr_mean + sr.stderr_mean * sr.stderr_mean);
    const double elapsed = seconds_since(start);

    Outcome out;
    out.pass = sb.mean > sr.mean && gap > pooled_se && sb.mean >= sg.mean &&
               elapsed < kSecondsExperiment;
    out.detail = fmt("post-ep1 return bm_dqn %.2f±%.2f, random_init %.2f±%.2f, "
                     "gem_bml_direct %.2f±%.2f; gap %.2f vs pooled se %.2f; "
                     "n=%ld/variant; %.0f s",
                     sb.mean, sb.stderr_mean, sr.mean, sr.stderr_mean, sg.mean,
                     sg.stderr_mean, gap, pooled_se, sb.count, elapsed);
    return out;
}

Outcome criterion_traffic() {
    const auto start = Clock::now();
    VariantSamples bm_eval, bm_adapt, bm_final, ri_eval, ri_adapt, fixed;

    for (const std::uint64_t seed : kSeeds) {
        cli::RunConfig rc = cli::default_config(cli::Experiment::Traffic);
        rc.seed = seed;
        rc.meta_iterations = kTrafficMetaIterations;
        rc.inner_steps_test = kTrafficInnerStepsTest;
        rc.variant = cli::RunVariant::BmDqn;

        cli::ExperimentSetup setup = cli::build_experiment(rc);
        const envs::TaskFamily& family = *setup.test_family;
        const std::vector<envs::TaskDescriptor> tasks = cli::test_tasks(rc, family);

        const meta::MetaState trained = meta::meta_train(
            setup.meta, *setup.train_family, rc.meta_iterations, seed);
        collect_eval_returns(trained, family, tasks, setup.meta, seed,
                             setup.meta.adaptation_steps, bm_eval, &bm_adapt, &bm_final);

        const meta::MetaState fresh = meta::initial_state(setup.meta, seed);
        collect_eval_returns(fresh, family, tasks, setup.meta, seed,
                             setup.meta.adaptation_steps, ri_eval, &ri_adapt, nullptr);

        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const auto& task = std::get<envs::IntersectionTask>(tasks[i]);
            const auto env = family.make_env(
                tasks[i],
                derive_stream(seed, "test/eval-env", i,
                              static_cast<std::uint64_t>(setup.meta.adaptation_steps)));
            envs::FixedTimePolicy policy(task.setting_name, kFixedTimePeriod);
            const envs::Policy wrapped = [&policy](const std::vector<double>& obs,
                                                   const std::vector<bool>& mask) {
                return policy(obs, mask);
            };
            const envs::EpisodeResult ep =
                envs::run_episode(*env, wrapped, family.episode_horizon());
            fixed.values.push_back(envs::average_queue(
                ep.total_reward, static_cast<int>(ep.trajectory.size())));
        }
        std::fprintf(stderr, "  [traffic seed %llu done, %.0f s]\n",
                     static_cast<unsigned long long>(seed), seconds_since(start));
    }

    const cli::SampleStats ab = bm_adapt.stats();
    const cli::SampleStats ar = ri_adapt.stats();
    const cli::SampleStats pb = bm_final.stats();
    const cli::SampleStats pf = fixed.stats();
    const double elapsed = seconds_since(start);

    Outcome out;
    out.pass = ab.mean < ar.mean && pb.mean < pf.mean && elapsed < kSecondsExperiment;
    out.detail = fmt("adaptation-window avg queue bm_dqn %.3f vs random_init %.3f; "
                     "post-adaptation bm_dqn %.3f vs fixed_time %.3f; n=%ld; %.0f s",
                     ab.mean, ar.mean, pb.mean, pf.mean, pb.count, elapsed);
    return out;
}

/// Temporarily routes stdout to /dev/null so command-level runs do not
/// interleave with the one-line-per-criterion report.
class StdoutSilencer {
public:
    StdoutSilencer() {
        std::fflush(stdout);
        saved_ = dup(1);
        const int devnull = open("/dev/null", O_WRONLY);
        dup2(devnull, 1);
        close(devnull);
    }
    ~StdoutSilencer() {
        std::fflush(stdout);
        dup2(saved_, 1);
        close(saved_);
    }

private:
    int saved_ = -1;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_determinism() {
    namespace fs = std::filesystem;
    const auto start = Clock::now();
    const fs::path base = fs::path(BMDQN_TEST_TMP) / "acceptance-determinism";
    fs::remove_all(base);

    Outcome out;
    out.pass = true;
    std::ostringstream detail;

    const auto rerun = [&](const char* label, const std::string& run_id,
                           const std::function<void(cli::RunConfig&)>& tweak,
                           int (*command)(const cli::RunConfig&)) {
        std::vector<std::string> texts;
        for (const char* leg : {"a", "b"}) {
            cli::RunConfig rc = cli::default_config(cli::Experiment::Nav2d);
            tweak(rc);
            rc.output_dir = (base / leg).string();
            StdoutSilencer quiet;
            command(rc);
            texts.push_back(slurp(fs::path(rc.output_dir) / (run_id + "_metrics.csv")));
        }
        const bool same = !texts[0].empty() && texts[0] == texts[1];
        out.pass = out.pass && same;
        detail << label << (same ? " identical; " : " DIFFERS; ");
    };

    rerun("meta-train", "nav2d-bm_dqn-s3",
          [&](cli::RunConfig& rc) {
              rc.seed = 3;
              rc.meta_iterations = 5;
              rc.checkpoint = (base / "det.ckpt").string();
          },
          cli::cmd_meta_train);
    rerun("meta-test", "nav2d-bm_dqn-s3",
          [&](cli::RunConfig& rc) {
              rc.seed = 3;
              rc.n_test_tasks = 4;
              rc.checkpoint = (base / "det.ckpt").string();
          },
          cli::cmd_meta_test);
    rerun("baseline", "traffic-fixed_time-s3", [&](cli::RunConfig& rc) {
        rc = cli::default_config(cli::Experiment::Traffic);
        rc.variant = cli::RunVariant::FixedTime;
        rc.seed = 3;
        rc.n_test_tasks = 4;
    }, cli::cmd_baseline);

    detail << fmt("%.1f s", seconds_since(start));
    out.detail = detail.str();
    return out;
}

} // namespace

int main() {
    struct Entry {
        const char* label;
        Outcome (*run)();
    };
    const std::vector<Entry> criteria{
        {"conjugate likelihood-difference identity", criterion_conjugate_identity},
        {"conjugate gradient identities and fd order", criterion_grad_identities},
        {"kl gradient closed forms vs finite differences", criterion_kl_gradients},
        {"network backward pass vs finite differences", criterion_backprop},
        {"reparameterized gradient unbiasedness", criterion_reparam},
        {"meta update arithmetic", criterion_update_arithmetic},
        {"navigation adaptation ordering", criterion_navigation},
        {"traffic adaptation quality", criterion_traffic},
        {"metrics csv determinism", criterion_determinism},
    };

    bool all_pass = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const Outcome out = criteria[i].run();
        all_pass = all_pass && out.pass;
        std::printf("criterion %zu (%s): %s [%s]\n", i + 1, criteria[i].label,
                    out.pass ? "pass" : "FAIL", out.detail.c_str());
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
