#include "bmdqn/variational.hpp"

#include <cmath>
#include <stdexcept>

namespace bmdqn::vi {

namespace {

void check_same_shape(const GaussianParams& a, const GaussianParams& b, const char* what) {
    if (a.size() != b.size() || a.spec_hash != b.spec_hash)
        throw std::invalid_argument(std::string(what) +
                                    ": distributions do not share a parameter space");
}

} // namespace

void GaussianParams::validate() const {
    if (mu.size() != log_sigma.size())
        throw std::invalid_argument("GaussianParams: mu and log_sigma lengths differ");
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (!std::isfinite(mu[i]) || !std::isfinite(log_sigma[i]))
            throw std::invalid_argument("GaussianParams: parameters must be finite");
}

NoiseVector sample_noise(std::size_t n, RngStream& rng) {
    NoiseVector noise;
    noise.epsilon.resize(n);
    for (double& e : noise.epsilon)
        e = rng.normal();
    return noise;
}

NoiseVector zero_noise(std::size_t n) {
    return NoiseVector{std::vector<double>(n, 0.0)};
}

net::WeightVector sample_theta(const GaussianParams& params, const NoiseVector& noise) {
    params.validate();
    if (noise.epsilon.size() != params.size())
        throw std::invalid_argument("sample_theta: noise length does not match parameters");
    net::WeightVector theta;
    theta.spec_hash = params.spec_hash;
    theta.values.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        theta.values[i] = params.mu[i] + noise.epsilon[i] * std::exp(params.log_sigma[i]);
    return theta;
}

double kl_diag(const GaussianParams& q, const GaussianParams& p) {
    q.validate();
    p.validate();
    check_same_shape(q, p, "kl_diag");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double sq = std::exp(q.log_sigma[i]);
        const double sp = std::exp(p.log_sigma[i]);
        const double dm = q.mu[i] - p.mu[i];
        kl += (p.log_sigma[i] - q.log_sigma[i]) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
    }
    return kl;
}

GaussianGrad kl_grad_wrt_q(const GaussianParams& q, const GaussianParams& p) {
    q.validate();
    p.validate();
    check_same_shape(q, p, "kl_grad_wrt_q");
    GaussianGrad g;
    g.spec_hash = q.spec_hash;
    g.mu.resize(q.size());
    g.log_sigma.resize(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double sq = std::exp(q.log_sigma[i]);
        const double sp = std::exp(p.log_sigma[i]);
        g.mu[i] = (q.mu[i] - p.mu[i]) / (sp * sp);
        g.log_sigma[i] = (sq * sq) / (sp * sp) - 1.0;
    }
    return g;
}

GaussianGrad kl_diff_grad_wrt_prior(const GaussianParams& q_trval, const GaussianParams& q_tr,
                                    const GaussianParams& prior) {
    q_trval.validate();
    q_tr.validate();
    prior.validate();
    check_same_shape(q_trval, prior, "kl_diff_grad_wrt_prior");
    check_same_shape(q_tr, prior, "kl_diff_grad_wrt_prior");
    GaussianGrad g;
    g.spec_hash = prior.spec_hash;
    g.mu.resize(prior.size());
    g.log_sigma.resize(prior.size());
    for (std::size_t i = 0; i < prior.size(); ++i) {
        const double sp2 = std::exp(2.0 * prior.log_sigma[i]);
        const double s_tr2 = std::exp(2.0 * q_tr.log_sigma[i]);
        const double s_tv2 = std::exp(2.0 * q_trval.log_sigma[i]);
        const double d_tr = q_tr.mu[i] - prior.mu[i];
        const double d_tv = q_trval.mu[i] - prior.mu[i];
        g.mu[i] = (q_tr.mu[i] - q_trval.mu[i]) / sp2;
        g.log_sigma[i] = ((s_tr2 + d_tr * d_tr) - (s_tv2 + d_tv * d_tv)) / sp2;
    }
    return g;
}

GaussianGrad elbo_grad(const GaussianParams& params, const GaussianParams& prior,
                       const net::WeightVector& loss_grad_at_theta, const NoiseVector& noise,
                       double kl_weight) {
    params.validate();
    prior.validate();
    check_same_shape(params, prior, "elbo_grad");
    if (loss_grad_at_theta.values.size() != params.size() ||
        noise.epsilon.size() != params.size())
        throw std::invalid_argument("elbo_grad: gradient or noise length mismatch");

    GaussianGrad g;
    g.spec_hash = params.spec_hash;
    g.mu.resize(params.size());
    g.log_sigma.resize(params.size());
    const bool with_kl = kl_weight != 0.0;
    const GaussianGrad kl = with_kl ? kl_grad_wrt_q(params, prior) : GaussianGrad{};
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double dl = loss_grad_at_theta.values[i];
        const double sigma = std::exp(params.log_sigma[i]);
        g.mu[i] = dl + (with_kl ? kl_weight * kl.mu[i] : 0.0);
        g.log_sigma[i] =
            dl * noise.epsilon[i] * sigma + (with_kl ? kl_weight * kl.log_sigma[i] : 0.0);
    }
    return g;
}

GaussianParams initial_params(const net::NetSpec& spec, RngStream& rng, double log_sigma_init) {
    const std::vector<int> fans = net::fan_in_per_param(spec);
    GaussianParams params;
    params.spec_hash = spec.hash();
    params.mu.resize(fans.size());
    params.log_sigma.assign(fans.size(), log_sigma_init);
    for (std::size_t i = 0; i < fans.size(); ++i) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fans[i]));
        params.mu[i] = rng.uniform(-bound, bound);
    }
    return params;
}

double clip_global_norm(GaussianGrad& grad, double max_norm) {
    if (!(max_norm > 0.0))
        throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (double v : grad.mu)
        sq += v * v;
    for (double v : grad.log_sigma)
        sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& v : grad.mu)
            v *= scale;
        for (double& v : grad.log_sigma)
            v *= scale;
    }
    return norm;
}

} // namespace bmdqn::vi
