#pragma once

#include "bmdqn/netcore.hpp"
#include "bmdqn/rng.hpp"

#include <cstdint>
#include <vector>

namespace bmdqn::vi {

/// Diagonal Gaussian over a flat weight vector, parameterized by mean and
/// log standard deviation. Stamped with the net spec hash like weights are.
struct GaussianParams {
    std::vector<double> mu;
    std::vector<double> log_sigma;
    std::uint64_t spec_hash = 0;

    std::size_t size() const { return mu.size(); }
    void validate() const; // throws std::invalid_argument on shape/finiteness problems
};

/// Gradient (or update direction) with respect to GaussianParams; same shape,
/// fields hold the mu and log_sigma components.
using GaussianGrad = GaussianParams;

/// Noise used by the reparameterization theta = mu + eps * exp(log_sigma).
/// Kept explicit so one draw can be reused across evaluations.
struct NoiseVector {
    std::vector<double> epsilon;
};

NoiseVector sample_noise(std::size_t n, RngStream& rng);
NoiseVector zero_noise(std::size_t n);

/// theta = mu + eps * sigma, elementwise.
net::WeightVector sample_theta(const GaussianParams& params, const NoiseVector& noise);

/// KL(q || p) between diagonal Gaussians:
///   sum_i [ ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2 ].
double kl_diag(const GaussianParams& q, const GaussianParams& p);

/// Gradient of kl_diag(q, p) with respect to q's (mu, log_sigma):
///   d/dmu_q      = (mq - mp) / sp^2
///   d/dlogsig_q  = sq^2 / sp^2 - 1.
GaussianGrad kl_grad_wrt_q(const GaussianParams& q, const GaussianParams& p);

/// Gradient of KL(q_trval || prior) - KL(q_tr || prior) with respect to the
/// prior's (mu, log_sigma):
///   d/dmu_p      = (m_tr - m_trval) / sp^2
///   d/dlogsig_p  = [ (s_tr^2 + (m_tr - mp)^2) - (s_trval^2 + (m_trval - mp)^2) ] / sp^2.
GaussianGrad kl_diff_grad_wrt_prior(const GaussianParams& q_trval, const GaussianParams& q_tr,
                                    const GaussianParams& prior);

/// Single-sample reparameterized gradient of
///   E_q[loss(theta)] + kl_weight * KL(q || prior)
/// given the loss gradient evaluated at theta = mu + eps * sigma:
///   d/dmu_i      = dloss/dtheta_i + kl_weight * dKL/dmu_i
///   d/dlogsig_i  = dloss/dtheta_i * eps_i * sigma_i + kl_weight * dKL/dlogsig_i.
GaussianGrad elbo_grad(const GaussianParams& params, const GaussianParams& prior,
                       const net::WeightVector& loss_grad_at_theta, const NoiseVector& noise,
                       double kl_weight);

/// Fresh parameters for a net: means uniform in +-1/sqrt(fan_in) per layer
/// (biases use their layer's bound), log_sigma constant.
GaussianParams initial_params(const net::NetSpec& spec, RngStream& rng,
                              double log_sigma_init = -3.0);

/// Scales grad in place so its global l2 norm (over both components) is at
/// most max_norm. Returns the pre-clip norm.
double clip_global_norm(GaussianGrad& grad, double max_norm);

} // namespace bmdqn::vi
