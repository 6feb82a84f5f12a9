#include "bmdqn/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bmdqn::conjugate {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

ConjugateModel posterior_as_prior(const ConjugateModel& model, std::span<const double> data) {
    const Posterior post = conjugate_posterior(model, data);
    return ConjugateModel{post.mu, post.var, model.noise_var};
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace

void ConjugateModel::validate() const {
    if (!std::isfinite(prior_mu) || !std::isfinite(prior_var) || !std::isfinite(noise_var))
        throw std::invalid_argument("ConjugateModel: parameters must be finite");
    if (prior_var <= 0.0 || noise_var <= 0.0)
        throw std::invalid_argument("ConjugateModel: variances must be positive");
}

Posterior conjugate_posterior(const ConjugateModel& model, std::span<const double> data) {
    model.validate();
    const double n = static_cast<double>(data.size());
    double sum = 0.0;
    for (const double x : data)
        sum += x;
    const double precision = 1.0 / model.prior_var + n / model.noise_var;
    Posterior post;
    post.var = 1.0 / precision;
    post.mu = post.var * (model.prior_mu / model.prior_var + sum / model.noise_var);
    return post;
}

double log_marginal(const ConjugateModel& model, std::span<const double> data) {
    model.validate();
    const std::size_t n = data.size();
    if (n == 0)
        return 0.0;
    // data ~ N(mu 1, s2 I + v 11^T); determinant lemma and Sherman-Morrison
    // give the log density without forming the matrix.
    const double v = model.prior_var;
    const double s2 = model.noise_var;
    double sum_d = 0.0;
    double sum_d2 = 0.0;
    for (const double x : data) {
        const double d = x - model.prior_mu;
        sum_d += d;
        sum_d2 += d * d;
    }
    const double nd = static_cast<double>(n);
    const double log_det = nd * std::log(s2) + std::log1p(nd * v / s2);
    const double quad = sum_d2 / s2 - (v / (s2 * (s2 + nd * v))) * sum_d * sum_d;
    return -0.5 * (nd * kLog2Pi + log_det + quad);
}

double log_marginal_quadrature(const ConjugateModel& model, std::span<const double> data,
                               int n_points) {
    model.validate();
    if (n_points < 3)
        throw std::invalid_argument("log_marginal_quadrature: need at least 3 points");
    if (data.empty())
        return 0.0;
    const double half_width = 10.0 * std::sqrt(model.prior_var);
    const double lo = model.prior_mu - half_width;
    const double step = 2.0 * half_width / (n_points - 1);

    // trapezoid rule in the log domain via log-sum-exp
    std::vector<double> terms(n_points);
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_points; ++i) {
        const double theta = lo + i * step;
        double g = log_normal_pdf(theta, model.prior_mu, model.prior_var);
        for (const double x : data)
            g += log_normal_pdf(x, theta, model.noise_var);
        const double w = (i == 0 || i == n_points - 1) ? 0.5 * step : step;
        terms[i] = g + std::log(w);
        peak = std::max(peak, terms[i]);
    }
    double acc = 0.0;
    for (const double t : terms)
        acc += std::exp(t - peak);
    return peak + std::log(acc);
}

PriorGrad prior_grad_closed_form(const ConjugateModel& model, std::span<const double> data) {
    const Posterior post = conjugate_posterior(model, data);
    const double v = model.prior_var;
    const double dm = post.mu - model.prior_mu;
    PriorGrad g;
    g.d_mu = dm / v;
    g.d_var = -0.5 / v + (post.var + dm * dm) / (2.0 * v * v);
    return g;
}

GradResidual prior_grad_expectation_residual(const ConjugateModel& model,
                                             std::span<const double> data, double h) {
    model.validate();
    if (!(h > 0.0) || h >= model.prior_var)
        throw std::invalid_argument("prior_grad_expectation_residual: bad step size");
    const PriorGrad closed = prior_grad_closed_form(model, data);

    ConjugateModel probe = model;
    probe.prior_mu = model.prior_mu + h;
    const double mu_up = log_marginal(probe, data);
    probe.prior_mu = model.prior_mu - h;
    const double mu_down = log_marginal(probe, data);
    probe.prior_mu = model.prior_mu;

    probe.prior_var = model.prior_var + h;
    const double var_up = log_marginal(probe, data);
    probe.prior_var = model.prior_var - h;
    const double var_down = log_marginal(probe, data);

    GradResidual res;
    res.mean_component = std::abs((mu_up - mu_down) / (2.0 * h) - closed.d_mu);
    res.var_component = std::abs((var_up - var_down) / (2.0 * h) - closed.d_var);
    return res;
}

double likelihood_difference_residual(const ConjugateModel& model, std::span<const double> d_tr,
                                      std::span<const double> d_val) {
    model.validate();
    const double lhs = log_marginal(posterior_as_prior(model, d_tr), d_val);
    const std::vector<double> both = concat(d_tr, d_val);
    const double rhs = log_marginal(model, both) - log_marginal(model, d_tr);
    return std::abs(lhs - rhs);
}

GradResidual posterior_grad_identity_residual(const ConjugateModel& model,
                                              std::span<const double> d_tr,
                                              std::span<const double> d_val, double h) {
    model.validate();
    if (!(h > 0.0) || h >= model.prior_var)
        throw std::invalid_argument("posterior_grad_identity_residual: bad step size");

    const Posterior post_tr = conjugate_posterior(model, d_tr);
    const std::vector<double> both = concat(d_tr, d_val);
    const Posterior post_trval = conjugate_posterior(model, both);
    const double v = model.prior_var;
    const double d_tr_m = post_tr.mu - model.prior_mu;
    const double d_tv_m = post_trval.mu - model.prior_mu;
    const double closed_mu = (post_trval.mu - post_tr.mu) / v;
    const double closed_var = ((post_trval.var + d_tv_m * d_tv_m) - (post_tr.var + d_tr_m * d_tr_m)) /
                              (2.0 * v * v);

    const auto held_out = [&](const ConjugateModel& m) {
        return log_marginal(posterior_as_prior(m, d_tr), d_val);
    };
    ConjugateModel probe = model;
    probe.prior_mu = model.prior_mu + h;
    const double mu_up = held_out(probe);
    probe.prior_mu = model.prior_mu - h;
    const double mu_down = held_out(probe);
    probe.prior_mu = model.prior_mu;
    probe.prior_var = model.prior_var + h;
    const double var_up = held_out(probe);
    probe.prior_var = model.prior_var - h;
    const double var_down = held_out(probe);

    GradResidual res;
    res.mean_component = std::abs((mu_up - mu_down) / (2.0 * h) - closed_mu);
    res.var_component = std::abs((var_up - var_down) / (2.0 * h) - closed_var);
    return res;
}

} // namespace bmdqn::conjugate
