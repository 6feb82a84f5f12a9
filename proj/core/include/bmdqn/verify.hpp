#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bmdqn::verify {

/// Outcome of one numerical check suite. `max_residual` is the worst case
/// over the suite's random instances, compared against `tolerance`.
struct SuiteResult {
    std::string name;
    bool pass = false;
    double max_residual = 0.0;
    double tolerance = 0.0;
    std::string note;
};

struct Options {
    std::uint64_t seed = 90210;
    int instances = 100;
    /// Fault-injection hook: negates the analytic prior-side KL-difference
    /// gradient before comparison, so tests can confirm the corresponding
    /// check actually fails and names itself.
    bool flip_kl_diff_sign = false;
};

/// Relative error with a unit floor: |a - b| / max(1, |a|, |b|).
double relative_error(double a, double b);

/// Analytic backward pass vs central differences on random small nets
/// (relu-kink instances are redrawn).
SuiteResult backprop_check(const Options& opt = {});

/// Closed-form diagonal-Gaussian KL gradient (posterior side) vs central
/// differences.
SuiteResult kl_grad_q_check(const Options& opt = {});

/// Closed-form KL-difference gradient (prior side) vs central differences.
SuiteResult kl_diff_grad_prior_check(const Options& opt = {});

/// Monte Carlo mean of the reparameterized objective gradient vs the exact
/// gradient for a quadratic loss.
SuiteResult reparam_gradient_check(const Options& opt = {});

/// Closed-form conjugate log marginal vs trapezoid quadrature.
SuiteResult marginal_quadrature_check(const Options& opt = {});

/// Held-out marginal equals the difference of joint marginals, in closed
/// form on the conjugate model.
SuiteResult likelihood_difference_check(const Options& opt = {});

/// Posterior-expectation form of the marginal's prior gradient vs finite
/// differences.
SuiteResult prior_grad_expectation_check(const Options& opt = {});

/// Difference-of-posterior-expectations form of the held-out marginal's
/// prior gradient vs finite differences.
SuiteResult posterior_grad_identity_check(const Options& opt = {});

/// Central differences of the held-out marginal shrink at second order in
/// the step size (measured on the prior-variance component; the prior-mean
/// component is exactly quadratic, so its finite difference has no
/// truncation error to decay).
SuiteResult fd_convergence_order_check(const Options& opt = {});

/// The prior-mean move prescribed by the KL-difference gradient matches the
/// conjugate posterior-mean difference exactly.
SuiteResult conjugate_kl_link_check(const Options& opt = {});

std::vector<SuiteResult> run_all(const Options& opt = {});

} // namespace bmdqn::verify
