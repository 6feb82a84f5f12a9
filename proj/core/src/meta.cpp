#include "bmdqn/meta.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

namespace bmdqn::meta {

namespace {

struct CollectResult {
    std::vector<dqn::Transition> transitions;
    double total_reward = 0.0;
    int steps = 0;
};

vi::NoiseVector draw_noise(const MetaConfig& cfg, std::size_t n, RngStream& rng) {
    if (cfg.variant == Variant::PointReptile)
        return vi::zero_noise(n);
    return vi::sample_noise(n, rng);
}

CollectResult collect_unit(const MetaConfig& cfg, const envs::TaskFamily& family,
                           envs::Environment& env, const vi::GaussianParams& start,
                           RngStream theta_stream, RngStream act_stream) {
    const vi::NoiseVector eps = draw_noise(cfg, start.size(), theta_stream);
    const net::WeightVector theta = vi::sample_theta(start, eps);
    const envs::Policy policy = [&](const std::vector<double>& obs,
                                    const std::vector<bool>& mask) {
        return dqn::epsilon_greedy(net::forward(cfg.net, theta, obs), cfg.dqn.epsilon, mask,
                                   act_stream);
    };
    CollectResult out;
    if (family.continuing()) {
        envs::WindowResult w =
            envs::step_window(env, policy, env.reset(), cfg.meta_update_period);
        out.transitions = std::move(w.transitions);
        out.total_reward = w.total_reward;
        out.steps = cfg.meta_update_period;
    } else {
        envs::EpisodeResult ep = envs::run_episode(env, policy, family.episode_horizon());
        out.total_reward = ep.total_reward;
        out.steps = static_cast<int>(ep.trajectory.size());
        out.transitions = std::move(ep.trajectory);
    }
    return out;
}

} // namespace

void MetaConfig::validate() const {
    net.validate();
    if (!(alpha > 0.0) || !(beta > 0.0) || !(lambda_step > 0.0))
        throw std::invalid_argument("MetaConfig: learning rates must be positive");
    if (meta_batch_size < 1)
        throw std::invalid_argument("MetaConfig: meta_batch_size must be at least 1");
    if (inner_steps_train < 1 || inner_steps_test < 1)
        throw std::invalid_argument("MetaConfig: inner step counts must be at least 1");
    if (adaptation_steps < 0)
        throw std::invalid_argument("MetaConfig: adaptation_steps must be non-negative");
    if (meta_update_period < 1)
        throw std::invalid_argument("MetaConfig: meta_update_period must be at least 1");
    if (kl_weight < 0.0)
        throw std::invalid_argument("MetaConfig: kl_weight must be non-negative");
    if (mc_samples < 1)
        throw std::invalid_argument("MetaConfig: mc_samples must be at least 1");
    if (!(point_sigma > 0.0) || !(prior_sigma_floor > 0.0))
        throw std::invalid_argument("MetaConfig: sigma floors must be positive");
    if (!(prior_sigma_cap > prior_sigma_floor))
        throw std::invalid_argument("MetaConfig: prior_sigma_cap must exceed the floor");
    if (dqn.batch_size < 1 || dqn.target_sync_period < 1)
        throw std::invalid_argument("MetaConfig: dqn batch and sync settings must be positive");
}

MetaState initial_state(const MetaConfig& cfg, std::uint64_t master_seed) {
    cfg.validate();
    RngStream rng = derive_stream(master_seed, "meta/init");
    MetaState state;
    state.theta_prior = vi::initial_params(cfg.net, rng, cfg.log_sigma_init);
    state.lambda_init = state.theta_prior;
    if (cfg.variant == Variant::PointReptile) {
        const double pinned = std::log(cfg.point_sigma);
        for (double& ls : state.lambda_init.log_sigma)
            ls = pinned;
    }
    return state;
}

vi::GaussianParams individual_update(const vi::GaussianParams& prior,
                                     const vi::GaussianParams& init, dqn::ReplayBuffer& data,
                                     int steps, const MetaConfig& cfg, RngStream& noise) {
    cfg.validate();
    if (data.size() == 0)
        throw std::invalid_argument("individual_update: replay buffer is empty");
    if (steps < 0)
        throw std::invalid_argument("individual_update: step count must be non-negative");

    const std::size_t n = init.size();
    const bool point = cfg.variant == Variant::PointReptile;
    const double klw = point ? 0.0 : cfg.kl_weight;
    vi::GaussianParams lam = init;
    net::WeightVector target;
    for (int s = 0; s < steps; ++s) {
        if (s % cfg.dqn.target_sync_period == 0)
            target = dqn::sync_target(net::WeightVector{lam.mu, lam.spec_hash});
        const std::vector<dqn::Transition> batch = data.sample(cfg.dqn.batch_size);

        vi::GaussianGrad acc;
        acc.spec_hash = lam.spec_hash;
        acc.mu.assign(n, 0.0);
        acc.log_sigma.assign(n, 0.0);
        for (int k = 0; k < cfg.mc_samples; ++k) {
            const vi::NoiseVector eps = draw_noise(cfg, n, noise);
            const net::WeightVector theta = vi::sample_theta(lam, eps);
            const std::vector<double> targets =
                dqn::double_dqn_targets(batch, theta, target, cfg.net, cfg.dqn.discount);
            const dqn::TdResult td = dqn::td_loss_and_grad(batch, targets, theta, cfg.net);
            const vi::GaussianGrad g = vi::elbo_grad(lam, prior, td.grad, eps, klw);
            for (std::size_t i = 0; i < n; ++i) {
                acc.mu[i] += g.mu[i] / cfg.mc_samples;
                acc.log_sigma[i] += g.log_sigma[i] / cfg.mc_samples;
            }
        }
        vi::clip_global_norm(acc, cfg.dqn.grad_clip_norm);
        for (std::size_t i = 0; i < n; ++i)
            lam.mu[i] -= cfg.alpha * acc.mu[i];
        if (!point)
            for (std::size_t i = 0; i < n; ++i)
                lam.log_sigma[i] -= cfg.alpha * acc.log_sigma[i];
    }
    return lam;
}

MetaState global_update(const MetaState& state, std::span<const TaskPosteriors> posteriors,
                        const MetaConfig& cfg) {
    cfg.validate();
    if (posteriors.empty())
        throw std::invalid_argument("global_update: need at least one task posterior");

    const std::size_t n = state.lambda_init.size();
    MetaState out = state;
    if (cfg.variant != Variant::GemBmlDirect) {
        for (const TaskPosteriors& tp : posteriors) {
            for (std::size_t i = 0; i < n; ++i) {
                out.lambda_init.mu[i] +=
                    cfg.lambda_step * (tp.lambda_trval.mu[i] - state.lambda_init.mu[i]);
                out.lambda_init.log_sigma[i] +=
                    cfg.lambda_step *
                    (tp.lambda_trval.log_sigma[i] - state.lambda_init.log_sigma[i]);
            }
        }
    }
    if (cfg.variant != Variant::PointReptile) {
        for (const TaskPosteriors& tp : posteriors) {
            const vi::GaussianGrad g =
                vi::kl_diff_grad_wrt_prior(tp.lambda_trval, tp.lambda_tr, state.theta_prior);
            for (std::size_t i = 0; i < n; ++i) {
                out.theta_prior.mu[i] -= cfg.beta * g.mu[i];
                out.theta_prior.log_sigma[i] -= cfg.beta * g.log_sigma[i];
            }
        }
        const double floor = std::log(cfg.prior_sigma_floor);
        const double cap = std::log(cfg.prior_sigma_cap);
        for (double& ls : out.theta_prior.log_sigma)
            ls = std::clamp(ls, floor, cap);
    }
    out.iteration = state.iteration + 1;
    return out;
}

MetaState meta_train_iteration(const MetaState& state, const MetaConfig& cfg,
                               const envs::TaskFamily& family, std::uint64_t master_seed,
                               const MetricSink& sink) {
    cfg.validate();
    const auto t = static_cast<std::uint64_t>(state.iteration);
    const vi::GaussianParams& start =
        cfg.variant == Variant::GemBmlDirect ? state.theta_prior : state.lambda_init;

    std::vector<TaskPosteriors> posteriors;
    posteriors.reserve(cfg.meta_batch_size);
    double sum_return = 0.0;
    double sum_queue = 0.0;
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(cfg.meta_batch_size); ++i) {
        RngStream task_stream = derive_stream(master_seed, "meta/task", t, i);
        const envs::TaskDescriptor task = family.sample_task(task_stream);
        const std::unique_ptr<envs::Environment> env =
            family.make_env(task, derive_stream(master_seed, "meta/env", t, i));

        CollectResult unit =
            collect_unit(cfg, family, *env, start,
                         derive_stream(master_seed, "meta/collect-theta", t, i),
                         derive_stream(master_seed, "meta/collect-act", t, i));
        sum_return += unit.total_reward;
        if (family.continuing())
            sum_queue += envs::average_queue(unit.total_reward, unit.steps);

        const std::size_t n_tr = (unit.transitions.size() + 1) / 2;
        dqn::ReplayBuffer buf_tr(cfg.dqn.buffer_capacity,
                                 derive_stream(master_seed, "meta/buffer-tr", t, i));
        dqn::ReplayBuffer buf_val(cfg.dqn.buffer_capacity,
                                  derive_stream(master_seed, "meta/buffer-val", t, i));
        for (std::size_t k = 0; k < unit.transitions.size(); ++k)
            (k < n_tr ? buf_tr : buf_val).push(unit.transitions[k]);
        if (buf_val.size() == 0)
            for (std::size_t k = 0; k < n_tr; ++k)
                buf_val.push(unit.transitions[k]);

        RngStream noise_tr = derive_stream(master_seed, "meta/inner-tr", t, i);
        RngStream noise_val = derive_stream(master_seed, "meta/inner-val", t, i);
        TaskPosteriors tp;
        tp.lambda_tr =
            individual_update(state.theta_prior, start, buf_tr, cfg.inner_steps_train, cfg,
                              noise_tr);
        tp.lambda_trval = individual_update(state.theta_prior, tp.lambda_tr, buf_val,
                                            cfg.inner_steps_train, cfg, noise_val);
        posteriors.push_back(std::move(tp));
    }

    MetaState next = global_update(state, posteriors, cfg);
    if (sink) {
        TrainMetric metric;
        metric.meta_iteration = state.iteration;
        metric.mean_return = sum_return / cfg.meta_batch_size;
        metric.has_queue = family.continuing();
        metric.mean_avg_queue = family.continuing() ? sum_queue / cfg.meta_batch_size : 0.0;
        sink(metric);
    }
    return next;
}

MetaState meta_train(const MetaConfig& cfg, const envs::TaskFamily& family,
                     long meta_iterations, std::uint64_t master_seed, const MetricSink& sink) {
    if (meta_iterations < 0)
        throw std::invalid_argument("meta_train: iteration count must be non-negative");
    MetaState state = initial_state(cfg, master_seed);
    for (long t = 0; t < meta_iterations; ++t)
        state = meta_train_iteration(state, cfg, family, master_seed, sink);
    return state;
}

MetaTestResult meta_test(const MetaState& state, const envs::TaskFamily& family,
                         const envs::TaskDescriptor& task, const MetaConfig& cfg,
                         std::uint64_t master_seed, long task_index) {
    cfg.validate();
    const auto ti = static_cast<std::uint64_t>(task_index);
    const vi::GaussianParams& start =
        cfg.variant == Variant::GemBmlDirect ? state.theta_prior : state.lambda_init;
    vi::GaussianParams lam = start;
    const std::size_t n = lam.size();

    dqn::ReplayBuffer buf(cfg.dqn.buffer_capacity,
                          derive_stream(master_seed, "test/buffer", ti));
    RngStream noise = derive_stream(master_seed, "test/inner", ti);
    MetaTestResult out;

    const auto greedy_eval = [&](int round) {
        const std::unique_ptr<envs::Environment> env =
            family.make_env(task, derive_stream(master_seed, "test/eval-env", ti,
                                                static_cast<std::uint64_t>(round)));
        RngStream theta_stream = derive_stream(master_seed, "test/eval-theta", ti,
                                               static_cast<std::uint64_t>(round));
        const vi::NoiseVector eps = draw_noise(cfg, n, theta_stream);
        const net::WeightVector theta = vi::sample_theta(lam, eps);
        const envs::Policy policy = [&](const std::vector<double>& obs,
                                        const std::vector<bool>& mask) {
            return dqn::argmax_masked(net::forward(cfg.net, theta, obs), mask);
        };
        const envs::EpisodeResult ep = envs::run_episode(*env, policy, family.episode_horizon());
        AdaptationRecord rec;
        rec.adaptation_step = round;
        rec.adaptation_window = false;
        rec.episode_return = ep.total_reward;
        rec.steps = static_cast<int>(ep.trajectory.size());
        rec.has_queue = family.continuing();
        if (rec.has_queue)
            rec.avg_queue = envs::average_queue(ep.total_reward, rec.steps);
        out.records.push_back(rec);
    };

    greedy_eval(0);

    const std::unique_ptr<envs::Environment> adapt_env =
        family.make_env(task, derive_stream(master_seed, "test/adapt-env", ti));
    std::vector<double> adapt_obs = adapt_env->reset();

    for (int round = 1; round <= cfg.adaptation_steps; ++round) {
        RngStream theta_stream = derive_stream(master_seed, "test/adapt-theta", ti,
                                               static_cast<std::uint64_t>(round));
        const vi::NoiseVector eps = draw_noise(cfg, n, theta_stream);
        const net::WeightVector theta = vi::sample_theta(lam, eps);
        RngStream act_stream = derive_stream(master_seed, "test/adapt-act", ti,
                                             static_cast<std::uint64_t>(round));
        const envs::Policy policy = [&](const std::vector<double>& obs,
                                        const std::vector<bool>& mask) {
            return dqn::epsilon_greedy(net::forward(cfg.net, theta, obs), cfg.dqn.epsilon, mask,
                                       act_stream);
        };

        AdaptationRecord rec;
        rec.adaptation_step = round;
        rec.adaptation_window = true;
        rec.has_queue = family.continuing();
        if (family.continuing()) {
            envs::WindowResult w =
                envs::step_window(*adapt_env, policy, std::move(adapt_obs),
                                  cfg.meta_update_period);
            for (dqn::Transition& tr : w.transitions)
                buf.push(std::move(tr));
            adapt_obs = std::move(w.final_obs);
            rec.episode_return = w.total_reward;
            rec.steps = cfg.meta_update_period;
            rec.avg_queue = envs::average_queue(w.total_reward, rec.steps);
        } else {
            envs::EpisodeResult ep =
                envs::run_episode(*adapt_env, policy, family.episode_horizon());
            rec.episode_return = ep.total_reward;
            rec.steps = static_cast<int>(ep.trajectory.size());
            for (dqn::Transition& tr : ep.trajectory)
                buf.push(std::move(tr));
        }
        out.records.push_back(rec);

        lam = individual_update(state.theta_prior, lam, buf, cfg.inner_steps_test, cfg, noise);
        greedy_eval(round);
    }
    out.posterior = std::move(lam);
    return out;
}

} // namespace bmdqn::meta
