#pragma once

#include <span>

namespace bmdqn::conjugate {

/// Scalar conjugate-Gaussian model: theta ~ N(prior_mu, prior_var) and
/// observations x_i | theta ~ N(theta, noise_var). Everything about it is
/// available in closed form, which makes it the reference model for checking
/// the gradient identities the meta update relies on.
struct ConjugateModel {
    double prior_mu = 0.0;
    double prior_var = 1.0;
    double noise_var = 1.0;

    void validate() const; // variances must be positive and all fields finite
};

struct Posterior {
    double mu = 0.0;
    double var = 1.0;
};

/// Exact posterior over theta given the data. Empty data returns the prior.
Posterior conjugate_posterior(const ConjugateModel& model, std::span<const double> data);

/// log p(data | model), the marginal likelihood with theta integrated out.
/// Closed form via the joint Gaussian N(mu 1, noise_var I + prior_var 11^T).
double log_marginal(const ConjugateModel& model, std::span<const double> data);

/// Independent oracle for log_marginal: log-domain trapezoid quadrature of
/// prior times likelihood over theta in prior_mu +- 10 sqrt(prior_var).
double log_marginal_quadrature(const ConjugateModel& model, std::span<const double> data,
                               int n_points = 2001);

/// Gradient of log_marginal with respect to the prior parameters, by the
/// posterior-expectation identity
///   d/dTheta log p(D | Theta) = E_{p(theta | D, Theta)}[d/dTheta log p(theta | Theta)]:
///   d/dmu  = (post_mu - prior_mu) / prior_var
///   d/dvar = -1/(2 prior_var) + (post_var + (post_mu - prior_mu)^2) / (2 prior_var^2).
struct PriorGrad {
    double d_mu = 0.0;
    double d_var = 0.0;
};
PriorGrad prior_grad_closed_form(const ConjugateModel& model, std::span<const double> data);

struct GradResidual {
    double mean_component = 0.0;
    double var_component = 0.0;
};

/// |central finite difference of log_marginal - closed form| per prior
/// parameter.
GradResidual prior_grad_expectation_residual(const ConjugateModel& model,
                                             std::span<const double> data, double h = 1e-5);

/// Residual of the decomposition
///   log p(d_val | posterior(d_tr) as prior) =
///       log p(d_tr ++ d_val) - log p(d_tr),
/// both sides in closed form. Should vanish to rounding error.
double likelihood_difference_residual(const ConjugateModel& model, std::span<const double> d_tr,
                                      std::span<const double> d_val);

/// Gradient of the held-out likelihood log p(d_val | d_tr, Theta) with
/// respect to the prior parameters: the difference of posterior expectations
///   d/dmu  = (post_mu_trval - post_mu_tr) / prior_var
///   d/dvar = [(post_var_trval + (post_mu_trval - mu)^2)
///             - (post_var_tr + (post_mu_tr - mu)^2)] / (2 prior_var^2),
/// checked against a central finite difference of the left side.
GradResidual posterior_grad_identity_residual(const ConjugateModel& model,
                                              std::span<const double> d_tr,
                                              std::span<const double> d_val, double h = 1e-5);

} // namespace bmdqn::conjugate
