#pragma once

#include "bmdqn/dqn.hpp"
#include "bmdqn/phase_table.hpp"
#include "bmdqn/rng.hpp"

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bmdqn::envs {

// ---------------------------------------------------------------------------
// Task descriptors

struct NavTask {
    std::array<double, 2> goal{};
};

struct IntersectionTask {
    std::string setting_name;
    std::array<double, 8> arrival_rates{}; // indexed by Movement
};

using TaskDescriptor = std::variant<NavTask, IntersectionTask>;

// ---------------------------------------------------------------------------
// Phase settings

/// Phases available under a named signal setting, in canonical order.
/// Throws std::invalid_argument for unknown names.
const std::vector<Phase>& phase_registry(std::string_view setting_name);

/// Movements reachable under a setting (union over its phases), sorted by
/// movement index.
std::vector<Movement> served_movements(std::string_view setting_name);

std::vector<std::string> known_settings();

// ---------------------------------------------------------------------------
// Navigation dynamics

struct NavConfig {
    int horizon = 100;
    double goal_radius = 0.02;
    double step_small = 0.03;
    double step_large = 0.1;
    double goal_range = 0.5; // goals are sampled uniformly from [-range, range]^2
};

struct NavState {
    std::array<double, 2> position{};
    int t = 0;
};

struct NavStepResult {
    NavState state;
    double reward = 0.0;
    bool done = false;
};

/// Sixteen actions: direction (action mod 8) * 45 degrees, magnitude
/// step_small for actions 0-7 and step_large for actions 8-15. Reward is the
/// negative squared distance to the goal after moving; the episode ends when
/// the agent is within goal_radius of the goal or the horizon is reached.
NavStepResult nav_step(const NavState& state, int action, const NavTask& task,
                       const NavConfig& cfg = {});

NavTask nav_sample_task(RngStream& rng, const NavConfig& cfg = {});

// ---------------------------------------------------------------------------
// Intersection dynamics

struct TrafficConfig {
    int saturation = 4;      // vehicles a served movement discharges per step
    int switch_capacity = 4; // discharge on the step a phase changes
    int queue_cap = 50;
    double queue_norm = 10.0; // observations are queues / queue_norm
};

struct IntersectionState {
    std::array<int, 8> queues{}; // indexed by Movement
    std::optional<Phase> current_phase;
    int t = 0;
};

struct IntersectionStepResult {
    IntersectionState state;
    double reward = 0.0;
};

/// One signal step: Poisson arrivals per movement (in movement index order,
/// zero-rate movements draw nothing), queues capped, then the chosen phase's
/// two movements discharge min(queue, capacity) vehicles where capacity is
/// saturation when the phase is held and switch_capacity when it changes
/// (the first step of an episode counts as held). Reward is the negative
/// total queue after the update.
IntersectionStepResult intersection_step(const IntersectionState& state, Phase action,
                                         const IntersectionTask& task, RngStream& rng,
                                         const TrafficConfig& cfg = {});

/// Uniform setting from the pool; arrival rates uniform in [rate_lo, rate_hi)
/// for movements the setting serves (drawn in movement index order) and zero
/// for movements it cannot serve.
IntersectionTask intersection_sample_task(RngStream& rng, std::span<const std::string> pool,
                                          double rate_lo = 0.2, double rate_hi = 1.5);

// ---------------------------------------------------------------------------
// Environment interface

struct StepOutcome {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual std::vector<double> reset() = 0;
    virtual StepOutcome step(int action) = 0;
    virtual int observation_size() const = 0;
    virtual int action_count() const = 0;
    /// Empty mask means every action is allowed.
    virtual std::vector<bool> action_mask() const = 0;
};

class NavEnv : public Environment {
public:
    NavEnv(NavTask task, NavConfig cfg = {});
    std::vector<double> reset() override;
    StepOutcome step(int action) override;
    int observation_size() const override { return 2; }
    int action_count() const override { return 16; }
    std::vector<bool> action_mask() const override { return {}; }

private:
    NavTask task_;
    NavConfig cfg_;
    NavState state_;
};

class TrafficEnv : public Environment {
public:
    TrafficEnv(IntersectionTask task, RngStream arrivals, TrafficConfig cfg = {});
    std::vector<double> reset() override;
    StepOutcome step(int action) override; // action is a phase index
    int observation_size() const override { return kNumMovements; }
    int action_count() const override { return kNumPhases; }
    std::vector<bool> action_mask() const override;

private:
    std::vector<double> observe() const;
    IntersectionTask task_;
    TrafficConfig cfg_;
    RngStream arrivals_;
    IntersectionState state_;
    std::vector<bool> mask_;
};

// ---------------------------------------------------------------------------
// Rollouts

using Policy = std::function<int(const std::vector<double>& obs, const std::vector<bool>& mask)>;

struct EpisodeResult {
    double total_reward = 0.0;
    std::vector<dqn::Transition> trajectory;
};

/// Resets the environment and runs until done or horizon steps.
EpisodeResult run_episode(Environment& env, const Policy& policy, int horizon);

struct WindowResult {
    double total_reward = 0.0;
    std::vector<dqn::Transition> transitions;
    std::vector<double> final_obs;
};

/// Runs n_steps from the given observation without resetting, for continuing
/// tasks collected in windows.
WindowResult step_window(Environment& env, const Policy& policy, std::vector<double> obs,
                         int n_steps);

/// Cycles through a setting's phases in registry order, holding each for
/// `period` steps. Stateful; construct one per episode.
class FixedTimePolicy {
public:
    FixedTimePolicy(std::string_view setting_name, int period);
    int operator()(const std::vector<double>& obs, const std::vector<bool>& mask);

private:
    std::vector<Phase> phases_;
    int period_;
    long t_ = 0;
};

/// Mean queue length per movement per step for a rollout of the traffic env:
/// rewards are negative total queues, so this is -return / (steps * 8).
double average_queue(double total_reward, int n_steps);

// ---------------------------------------------------------------------------
// Task families (what the meta loop samples from)

class TaskFamily {
public:
    virtual ~TaskFamily() = default;
    virtual TaskDescriptor sample_task(RngStream& rng) const = 0;
    virtual std::unique_ptr<Environment> make_env(const TaskDescriptor& task,
                                                  RngStream env_stream) const = 0;
    virtual int episode_horizon() const = 0;
    /// Continuing tasks are collected in fixed-size windows instead of full
    /// episodes.
    virtual bool continuing() const = 0;
};

class NavFamily : public TaskFamily {
public:
    explicit NavFamily(NavConfig cfg = {}) : cfg_(cfg) {}
    TaskDescriptor sample_task(RngStream& rng) const override;
    std::unique_ptr<Environment> make_env(const TaskDescriptor& task,
                                          RngStream env_stream) const override;
    int episode_horizon() const override { return cfg_.horizon; }
    bool continuing() const override { return false; }

private:
    NavConfig cfg_;
};

class TrafficFamily : public TaskFamily {
public:
    TrafficFamily(std::vector<std::string> setting_pool, TrafficConfig cfg = {},
                  int horizon = 360, double rate_lo = 0.2, double rate_hi = 1.5);
    TaskDescriptor sample_task(RngStream& rng) const override;
    std::unique_ptr<Environment> make_env(const TaskDescriptor& task,
                                          RngStream env_stream) const override;
    int episode_horizon() const override { return horizon_; }
    bool continuing() const override { return true; }

private:
    std::vector<std::string> pool_;
    TrafficConfig cfg_;
    int horizon_;
    double rate_lo_;
    double rate_hi_;
};

} // namespace bmdqn::envs
