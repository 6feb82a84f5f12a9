#pragma once

#include "bmdqn/dqn.hpp"
#include "bmdqn/envs.hpp"
#include "bmdqn/variational.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bmdqn::meta {

enum class Variant {
    BmDqn,        // full method: adapted initialization + learned prior
    GemBmlDirect, // no separate initialization; adaptation starts at the prior
    PointReptile, // point-estimate ablation: delta posteriors, no prior term
};

struct MetaConfig {
    net::NetSpec net;
    dqn::DqnConfig dqn;
    Variant variant = Variant::BmDqn;

    double alpha = 0.1;         // fast-adaptation (individual update) learning rate
    double beta = 0.001;        // prior learning rate
    double lambda_step = 0.001; // initialization interpolation step
    int meta_batch_size = 20;
    int inner_steps_train = 1; // gradient steps per individual update during training
    int inner_steps_test = 1;  // gradient steps per adaptation unit at test time
    int adaptation_steps = 3;  // adaptation units (episodes or windows) at test time
    int meta_update_period = 10; // collection window length for continuing tasks
    double kl_weight = 1.0;
    int mc_samples = 1;         // reparameterization draws per gradient step
    double log_sigma_init = -3.0;
    double prior_sigma_floor = 1e-3; // prior sigmas never shrink below this
    double prior_sigma_cap = 1e3;    // and never grow past this
    double point_sigma = 1e-6;       // pinned sigma for the point ablation

    void validate() const; // throws std::invalid_argument
};

/// Meta-learned quantities: the prior over weights and the initialization the
/// individual update starts from. Both share the net's parameter space.
struct MetaState {
    vi::GaussianParams theta_prior;
    vi::GaussianParams lambda_init;
    long iteration = 0;
};

/// Prior and initialization start from the same draw, so their KL is zero at
/// iteration 0. The point ablation pins the initialization sigmas instead.
MetaState initial_state(const MetaConfig& cfg, std::uint64_t master_seed);

/// Variational fast adaptation: `steps` gradient steps on the reparameterized
/// TD objective plus kl_weight * KL(q || prior), starting from `init`. Each
/// step samples one batch, averages mc_samples reparameterized gradients,
/// clips to dqn.grad_clip_norm, and descends with rate alpha. The double-DQN
/// target net is the posterior mean, snapshotted at step 0 and refreshed
/// every dqn.target_sync_period steps. The point ablation uses zero noise and
/// drops the KL term, reducing each step to plain TD SGD on the means.
vi::GaussianParams individual_update(const vi::GaussianParams& prior,
                                     const vi::GaussianParams& init, dqn::ReplayBuffer& data,
                                     int steps, const MetaConfig& cfg, RngStream& noise);

struct TaskPosteriors {
    vi::GaussianParams lambda_tr;    // adapted on the task's first data half
    vi::GaussianParams lambda_trval; // further adapted on the second half
};

/// One meta step from a batch of per-task posteriors:
///   lambda <- lambda + lambda_step * sum_i (lambda_i_trval - lambda)
///   prior  <- prior - beta * sum_i grad_prior[KL(trval||prior) - KL(tr||prior)]
/// with prior sigmas clamped to [prior_sigma_floor, prior_sigma_cap]
/// afterwards; the floor keeps the KL terms conditioned, the cap keeps the
/// update finite when a near-floor sigma makes it overshoot. GemBmlDirect
/// skips the lambda move, PointReptile skips the prior move. Both deltas and
/// gradients are taken at the incoming state.
MetaState global_update(const MetaState& state, std::span<const TaskPosteriors> posteriors,
                        const MetaConfig& cfg);

struct TrainMetric {
    long meta_iteration = 0;
    double mean_return = 0.0;   // mean collection return over the meta-batch
    double mean_avg_queue = 0.0;
    bool has_queue = false;
};
using MetricSink = std::function<void(const TrainMetric&)>;

/// Full training loop. Per meta-iteration t and task slot i, each with a
/// fresh task and environment: sample exploration weights from the current
/// initialization (from the prior for GemBmlDirect), collect one episode
/// (episodic tasks) or one meta_update_period window (continuing tasks) with
/// epsilon-greedy actions, split it half/half into train and validation
/// buffers (a single transition serves as both), run the individual update
/// on each half in sequence, then apply one global update.
///
/// Every random draw comes from a stream derived from (master_seed, tag,
/// t, i), so runs are reproducible and tests can replay any piece. Tags:
///   "meta/init"                     initial parameter draw
///   "meta/task", "meta/env"         task sampling, environment randomness
///   "meta/collect-theta" / "-act"   exploration weights, action draws
///   "meta/buffer-tr" / "-val"       replay sampling
///   "meta/inner-tr" / "-val"        reparameterization noise
MetaState meta_train(const MetaConfig& cfg, const envs::TaskFamily& family,
                     long meta_iterations, std::uint64_t master_seed,
                     const MetricSink& sink = {});

/// Single training step, exposed so tests can replay it piecewise and check
/// the result against a hand-traced update sequence.
MetaState meta_train_iteration(const MetaState& state, const MetaConfig& cfg,
                               const envs::TaskFamily& family, std::uint64_t master_seed,
                               const MetricSink& sink = {});

struct AdaptationRecord {
    int adaptation_step = 0;       // 0 = before any adaptation on this task
    bool adaptation_window = false; // true: data-collection unit, false: greedy evaluation
    double episode_return = 0.0;
    double avg_queue = 0.0; // traffic only
    bool has_queue = false;
    int steps = 0; // environment steps covered
};

struct MetaTestResult {
    vi::GaussianParams posterior; // task posterior after all adaptation
    std::vector<AdaptationRecord> records;
};

/// Meta-test on one task: greedy evaluation of the unadapted initialization
/// (record 0), then adaptation_steps rounds of [collect one epsilon-greedy
/// unit into the task buffer, run inner_steps_test individual-update steps,
/// evaluate greedily with a fresh posterior sample]. Evaluation environments
/// are derived from ("test/eval-env", task_index, round) independently of the
/// variant, so different methods are compared on identical arrival streams.
MetaTestResult meta_test(const MetaState& state, const envs::TaskFamily& family,
                         const envs::TaskDescriptor& task, const MetaConfig& cfg,
                         std::uint64_t master_seed, long task_index);

} // namespace bmdqn::meta
