#pragma once

#include "bmdqn/netcore.hpp"
#include "bmdqn/rng.hpp"

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace bmdqn::dqn {

struct Transition {
    std::vector<double> s;
    int a = 0;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;
};

/// Bounded FIFO transition store with uniform sampling (with replacement).
/// Owns its random stream so sampling order is reproducible per buffer.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, RngStream stream);

    void push(Transition t);
    std::vector<Transition> sample(std::size_t batch_size); // throws if empty
    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return storage_.at(i); } // oldest first

private:
    std::size_t capacity_;
    std::deque<Transition> storage_;
    RngStream stream_;
};

struct DqnConfig {
    std::size_t buffer_capacity = 10000;
    int batch_size = 32;
    int target_sync_period = 100;
    double epsilon = 0.1;
    double discount = 0.99;
    double grad_clip_norm = 10.0;
};

/// Index of the largest value among allowed actions; ties break to the lowest
/// index. mask may be empty (all actions allowed).
int argmax_masked(std::span<const double> qvals, const std::vector<bool>& mask);

/// One regression target per transition:
///   y = r                                                   if done
///   y = r + gamma * Q_target(s', argmax_a Q_online(s', a))  otherwise.
/// The action is selected by the online net and valued by the target net.
std::vector<double> double_dqn_targets(std::span<const Transition> batch,
                                       const net::WeightVector& online,
                                       const net::WeightVector& target,
                                       const net::NetSpec& spec, double gamma);

struct TdResult {
    double loss = 0.0;
    net::WeightVector grad;
};

/// Mean squared TD error over the batch and its gradient with respect to
/// theta. Targets are treated as constants.
TdResult td_loss_and_grad(std::span<const Transition> batch, std::span<const double> targets,
                          const net::WeightVector& theta, const net::NetSpec& spec);

/// With probability epsilon picks uniformly among allowed actions, otherwise
/// the masked argmax. Always consumes exactly one uniform draw, plus one
/// integer draw when exploring.
int epsilon_greedy(std::span<const double> qvals, double epsilon, const std::vector<bool>& mask,
                   RngStream& rng);

/// Target network refresh: a plain copy of the online weights.
net::WeightVector sync_target(const net::WeightVector& online);

} // namespace bmdqn::dqn
