#include "bmdqn/dqn.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace bmdqn::dqn {

ReplayBuffer::ReplayBuffer(std::size_t capacity, RngStream stream)
    : capacity_(capacity), stream_(stream) {
    if (capacity_ == 0)
        throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() == capacity_)
        storage_.pop_front();
    storage_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size) {
    if (storage_.empty())
        throw std::invalid_argument("ReplayBuffer: cannot sample from an empty buffer");
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k)
        batch.push_back(storage_[stream_.uniform_int(static_cast<int>(storage_.size()))]);
    return batch;
}

int argmax_masked(std::span<const double> qvals, const std::vector<bool>& mask) {
    if (!mask.empty() && mask.size() != qvals.size())
        throw std::invalid_argument("argmax_masked: mask length does not match q-values");
    int best = -1;
    double best_q = 0.0;
    for (std::size_t a = 0; a < qvals.size(); ++a) {
        if (!mask.empty() && !mask[a])
            continue;
        if (best < 0 || qvals[a] > best_q) {
            best = static_cast<int>(a);
            best_q = qvals[a];
        }
    }
    if (best < 0)
        throw std::invalid_argument("argmax_masked: no action is allowed by the mask");
    return best;
}

std::vector<double> double_dqn_targets(std::span<const Transition> batch,
                                       const net::WeightVector& online,
                                       const net::WeightVector& target,
                                       const net::NetSpec& spec, double gamma) {
    std::vector<double> ys;
    ys.reserve(batch.size());
    for (const Transition& t : batch) {
        if (t.done) {
            ys.push_back(t.r);
            continue;
        }
        const std::vector<double> q_online = forward(spec, online, t.s_next);
        const int a_star = argmax_masked(q_online, {});
        const std::vector<double> q_target = forward(spec, target, t.s_next);
        ys.push_back(t.r + gamma * q_target[a_star]);
    }
    return ys;
}

TdResult td_loss_and_grad(std::span<const Transition> batch, std::span<const double> targets,
                          const net::WeightVector& theta, const net::NetSpec& spec) {
    if (batch.empty())
        throw std::invalid_argument("td_loss_and_grad: empty batch");
    if (targets.size() != batch.size())
        throw std::invalid_argument("td_loss_and_grad: one target per transition required");

    TdResult out;
    out.grad = net::zero_weights(spec);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<double> out_grad(spec.output_size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Transition& t = batch[k];
        const std::vector<double> q = forward(spec, theta, t.s);
        const double diff = q.at(t.a) - targets[k];
        out.loss += diff * diff * inv_n;
        std::fill(out_grad.begin(), out_grad.end(), 0.0);
        out_grad.at(t.a) = 2.0 * diff * inv_n;
        const net::Gradients g = backward(spec, theta, t.s, out_grad);
        for (std::size_t i = 0; i < out.grad.values.size(); ++i)
            out.grad.values[i] += g.weights.values[i];
    }
    return out;
}

int epsilon_greedy(std::span<const double> qvals, double epsilon, const std::vector<bool>& mask,
                   RngStream& rng) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw std::invalid_argument("epsilon_greedy: epsilon must be in [0, 1]");
    const double u = rng.uniform();
    if (u < epsilon) {
        std::vector<int> allowed;
        for (std::size_t a = 0; a < qvals.size(); ++a)
            if (mask.empty() || mask[a])
                allowed.push_back(static_cast<int>(a));
        if (allowed.empty())
            throw std::invalid_argument("epsilon_greedy: no action is allowed by the mask");
        return allowed[rng.uniform_int(static_cast<int>(allowed.size()))];
    }
    return argmax_masked(qvals, mask);
}

net::WeightVector sync_target(const net::WeightVector& online) {
    return online;
}

} // namespace bmdqn::dqn
