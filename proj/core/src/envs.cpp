#include "bmdqn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace bmdqn::envs {

namespace {

const std::map<std::string, std::vector<Phase>, std::less<>>& setting_table() {
    using enum Phase;
    static const std::map<std::string, std::vector<Phase>, std::less<>> table = {
        {"8", {A, B, C, D, E, F, G, H}},
        {"6a", {A, B, C, D, E, H}},
        {"6e", {A, B, C, D, E, G}},
        {"LA-1", {A, C, D, F, G, H}},
        {"LA-2", {A, D, F, G}},
        {"Atlanta-1", {B, C, E, H}},
        {"Atlanta-2", {A, D, F, G}},
        {"Jinan-1", {A, D, F, G}},
        {"Jinan-2", {A, C, D, F, G, H}},
    };
    return table;
}

} // namespace

const std::vector<Phase>& phase_registry(std::string_view setting_name) {
    const auto& table = setting_table();
    const auto it = table.find(setting_name);
    if (it == table.end())
        throw std::invalid_argument("unknown phase setting: " + std::string(setting_name));
    return it->second;
}

std::vector<Movement> served_movements(std::string_view setting_name) {
    std::array<bool, kNumMovements> served{};
    for (const Phase p : phase_registry(setting_name))
        for (const Movement m : movements_of(p))
            served[static_cast<int>(m)] = true;
    std::vector<Movement> out;
    for (int m = 0; m < kNumMovements; ++m)
        if (served[m])
            out.push_back(static_cast<Movement>(m));
    return out;
}

std::vector<std::string> known_settings() {
    std::vector<std::string> names;
    for (const auto& [name, phases] : setting_table())
        names.push_back(name);
    return names;
}

// ---------------------------------------------------------------------------
// Navigation

NavStepResult nav_step(const NavState& state, int action, const NavTask& task,
                       const NavConfig& cfg) {
    if (action < 0 || action >= 16)
        throw std::invalid_argument("nav_step: action must be in [0, 16)");
    const double angle = (action % 8) * (std::numbers::pi / 4.0);
    const double mag = action < 8 ? cfg.step_small : cfg.step_large;

    NavStepResult out;
    out.state.position = {state.position[0] + mag * std::cos(angle),
                          state.position[1] + mag * std::sin(angle)};
    out.state.t = state.t + 1;
    const double dx = out.state.position[0] - task.goal[0];
    const double dy = out.state.position[1] - task.goal[1];
    const double sq_dist = dx * dx + dy * dy;
    out.reward = -sq_dist;
    out.done = std::sqrt(sq_dist) < cfg.goal_radius || out.state.t >= cfg.horizon;
    return out;
}

NavTask nav_sample_task(RngStream& rng, const NavConfig& cfg) {
    NavTask task;
    task.goal = {rng.uniform(-cfg.goal_range, cfg.goal_range),
                 rng.uniform(-cfg.goal_range, cfg.goal_range)};
    return task;
}

NavEnv::NavEnv(NavTask task, NavConfig cfg) : task_(task), cfg_(cfg) {}

std::vector<double> NavEnv::reset() {
    state_ = NavState{};
    return {state_.position[0], state_.position[1]};
}

StepOutcome NavEnv::step(int action) {
    const NavStepResult r = nav_step(state_, action, task_, cfg_);
    state_ = r.state;
    return {{state_.position[0], state_.position[1]}, r.reward, r.done};
}

// ---------------------------------------------------------------------------
// Intersection

IntersectionStepResult intersection_step(const IntersectionState& state, Phase action,
                                         const IntersectionTask& task, RngStream& rng,
                                         const TrafficConfig& cfg) {
    IntersectionStepResult out;
    out.state = state;
    for (int m = 0; m < kNumMovements; ++m) {
        out.state.queues[m] += rng.poisson(task.arrival_rates[m]);
        out.state.queues[m] = std::min(out.state.queues[m], cfg.queue_cap);
    }
    const bool switching = state.current_phase.has_value() && *state.current_phase != action;
    const int capacity = switching ? cfg.switch_capacity : cfg.saturation;
    for (const Movement m : movements_of(action)) {
        int& queue = out.state.queues[static_cast<int>(m)];
        queue -= std::min(queue, capacity);
    }
    out.state.current_phase = action;
    out.state.t = state.t + 1;
    int total = 0;
    for (const int q : out.state.queues)
        total += q;
    out.reward = -static_cast<double>(total);
    return out;
}

IntersectionTask intersection_sample_task(RngStream& rng, std::span<const std::string> pool,
                                          double rate_lo, double rate_hi) {
    if (pool.empty())
        throw std::invalid_argument("intersection_sample_task: empty setting pool");
    IntersectionTask task;
    task.setting_name = pool[rng.uniform_int(static_cast<int>(pool.size()))];
    for (const Movement m : served_movements(task.setting_name))
        task.arrival_rates[static_cast<int>(m)] = rng.uniform(rate_lo, rate_hi);
    return task;
}

TrafficEnv::TrafficEnv(IntersectionTask task, RngStream arrivals, TrafficConfig cfg)
    : task_(std::move(task)), cfg_(cfg), arrivals_(arrivals) {
    mask_.assign(kNumPhases, false);
    for (const Phase p : phase_registry(task_.setting_name))
        mask_[static_cast<int>(p)] = true;
}

std::vector<double> TrafficEnv::observe() const {
    std::vector<double> obs(kNumMovements);
    for (int m = 0; m < kNumMovements; ++m)
        obs[m] = state_.queues[m] / cfg_.queue_norm;
    return obs;
}

std::vector<double> TrafficEnv::reset() {
    state_ = IntersectionState{};
    return observe();
}

StepOutcome TrafficEnv::step(int action) {
    if (action < 0 || action >= kNumPhases)
        throw std::invalid_argument("TrafficEnv: phase index out of range");
    if (!mask_[action])
        throw std::invalid_argument("TrafficEnv: phase is not available under setting " +
                                    task_.setting_name);
    const IntersectionStepResult r =
        intersection_step(state_, static_cast<Phase>(action), task_, arrivals_, cfg_);
    state_ = r.state;
    return {observe(), r.reward, false};
}

std::vector<bool> TrafficEnv::action_mask() const {
    return mask_;
}

// ---------------------------------------------------------------------------
// Rollouts

EpisodeResult run_episode(Environment& env, const Policy& policy, int horizon) {
    EpisodeResult res;
    std::vector<double> obs = env.reset();
    const std::vector<bool> mask = env.action_mask();
    for (int t = 0; t < horizon; ++t) {
        const int a = policy(obs, mask);
        StepOutcome so = env.step(a);
        res.total_reward += so.reward;
        res.trajectory.push_back({obs, a, so.reward, so.obs, so.done});
        obs = std::move(so.obs);
        if (res.trajectory.back().done)
            break;
    }
    return res;
}

WindowResult step_window(Environment& env, const Policy& policy, std::vector<double> obs,
                         int n_steps) {
    WindowResult res;
    const std::vector<bool> mask = env.action_mask();
    for (int t = 0; t < n_steps; ++t) {
        const int a = policy(obs, mask);
        StepOutcome so = env.step(a);
        res.total_reward += so.reward;
        res.transitions.push_back({obs, a, so.reward, so.obs, so.done});
        obs = std::move(so.obs);
    }
    res.final_obs = std::move(obs);
    return res;
}

FixedTimePolicy::FixedTimePolicy(std::string_view setting_name, int period)
    : phases_(phase_registry(setting_name)), period_(period) {
    if (period_ < 1)
        throw std::invalid_argument("FixedTimePolicy: period must be at least 1");
}

int FixedTimePolicy::operator()(const std::vector<double>&, const std::vector<bool>&) {
    const auto slot = (t_++ / period_) % static_cast<long>(phases_.size());
    return static_cast<int>(phases_[slot]);
}

double average_queue(double total_reward, int n_steps) {
    if (n_steps <= 0)
        throw std::invalid_argument("average_queue: step count must be positive");
    return -total_reward / (static_cast<double>(n_steps) * kNumMovements);
}

// ---------------------------------------------------------------------------
// Families

TaskDescriptor NavFamily::sample_task(RngStream& rng) const {
    return nav_sample_task(rng, cfg_);
}

std::unique_ptr<Environment> NavFamily::make_env(const TaskDescriptor& task, RngStream) const {
    const auto* nav = std::get_if<NavTask>(&task);
    if (!nav)
        throw std::invalid_argument("NavFamily: task descriptor is not a navigation task");
    return std::make_unique<NavEnv>(*nav, cfg_);
}

TrafficFamily::TrafficFamily(std::vector<std::string> setting_pool, TrafficConfig cfg,
                             int horizon, double rate_lo, double rate_hi)
    : pool_(std::move(setting_pool)), cfg_(cfg), horizon_(horizon), rate_lo_(rate_lo),
      rate_hi_(rate_hi) {
    if (pool_.empty())
        throw std::invalid_argument("TrafficFamily: empty setting pool");
    for (const std::string& name : pool_)
        phase_registry(name); // validate up front
}

TaskDescriptor TrafficFamily::sample_task(RngStream& rng) const {
    return intersection_sample_task(rng, pool_, rate_lo_, rate_hi_);
}

std::unique_ptr<Environment> TrafficFamily::make_env(const TaskDescriptor& task,
                                                     RngStream env_stream) const {
    const auto* traffic = std::get_if<IntersectionTask>(&task);
    if (!traffic)
        throw std::invalid_argument("TrafficFamily: task descriptor is not an intersection task");
    return std::make_unique<TrafficEnv>(*traffic, env_stream, cfg_);
}

} // namespace bmdqn::envs
