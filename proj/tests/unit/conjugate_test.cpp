#include <bmdqn/conjugate.hpp>
#include <bmdqn/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace bmdqn;
using namespace bmdqn::conjugate;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> draw_data(const ConjugateModel& m, int n, RngStream& rng) {
    const double theta = m.prior_mu + std::sqrt(m.prior_var) * rng.normal();
    std::vector<double> data(static_cast<std::size_t>(n));
    for (double& x : data)
        x = theta + std::sqrt(m.noise_var) * rng.normal();
    return data;
}

ConjugateModel draw_model(RngStream& rng) {
    ConjugateModel m;
    m.prior_mu = rng.uniform(-2.0, 2.0);
    m.prior_var = rng.uniform(0.1, 4.0);
    m.noise_var = rng.uniform(0.1, 4.0);
    return m;
}

} // namespace

TEST_CASE("posterior with no data is the prior") {
    ConjugateModel m;
    m.prior_mu = 1.5;
    m.prior_var = 2.0;
    const Posterior post = conjugate_posterior(m, {});
    CHECK(post.mu == 1.5);
    CHECK(post.var == 2.0);
}

TEST_CASE("posterior after one observation matches the textbook formula") {
    ConjugateModel m; // prior N(0,1), noise 1
    const std::vector<double> data{2.0};
    const Posterior post = conjugate_posterior(m, data);
    CHECK(post.mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(post.var == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior precision adds one noise precision per observation") {
    RngStream rng(101);
    const ConjugateModel m = draw_model(rng);
    const std::vector<double> data = draw_data(m, 7, rng);
    const Posterior post = conjugate_posterior(m, data);
    const double expected_prec = 1.0 / m.prior_var + 7.0 / m.noise_var;
    CHECK(1.0 / post.var == doctest::Approx(expected_prec).epsilon(1e-10));
}

TEST_CASE("log marginal with no data is zero and with one point is a gaussian density") {
    ConjugateModel m;
    m.prior_mu = 0.7;
    m.prior_var = 1.3;
    m.noise_var = 0.4;
    CHECK(log_marginal(m, {}) == 0.0);

    const std::vector<double> data{1.1};
    const double v = m.prior_var + m.noise_var;
    const double expected =
        -0.5 * std::log(2.0 * kPi * v) - 0.5 * (1.1 - 0.7) * (1.1 - 0.7) / v;
    CHECK(log_marginal(m, data) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("closed-form log marginal agrees with quadrature") {
    RngStream rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const ConjugateModel m = draw_model(rng);
        const std::vector<double> data = draw_data(m, 1 + rng.uniform_int(10), rng);
        const double closed = log_marginal(m, data);
        const double quad = log_marginal_quadrature(m, data);
        CHECK(closed == doctest::Approx(quad).epsilon(1e-8).scale(1.0));
    }
}

TEST_CASE("held-out marginal equals the difference of joint marginals") {
    RngStream rng(88);
    for (int trial = 0; trial < 10; ++trial) {
        const ConjugateModel m = draw_model(rng);
        const std::vector<double> d_tr = draw_data(m, 1 + rng.uniform_int(8), rng);
        const std::vector<double> d_val = draw_data(m, 1 + rng.uniform_int(8), rng);
        CHECK(likelihood_difference_residual(m, d_tr, d_val) < 1e-10);
    }
}

TEST_CASE("prior gradient identities survive finite-difference checks") {
    RngStream rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const ConjugateModel m = draw_model(rng);
        const std::vector<double> d_tr = draw_data(m, 1 + rng.uniform_int(8), rng);
        const std::vector<double> d_val = draw_data(m, 1 + rng.uniform_int(8), rng);

        const GradResidual expectation = prior_grad_expectation_residual(m, d_tr);
        CHECK(expectation.mean_component < 1e-6);
        CHECK(expectation.var_component < 1e-6);

        const GradResidual held_out = posterior_grad_identity_residual(m, d_tr, d_val);
        CHECK(held_out.mean_component < 1e-6);
        CHECK(held_out.var_component < 1e-6);
    }
}

TEST_CASE("prior gradient closed form matches a direct difference quotient") {
    ConjugateModel m;
    m.prior_mu = 0.3;
    m.prior_var = 1.7;
    m.noise_var = 0.9;
    const std::vector<double> data{0.5, -1.0, 2.2};
    const PriorGrad g = prior_grad_closed_form(m, data);

    const double h = 1e-6;
    ConjugateModel lo = m, hi = m;
    lo.prior_mu -= h;
    hi.prior_mu += h;
    CHECK(g.d_mu == doctest::Approx((log_marginal(hi, data) - log_marginal(lo, data)) /
                                    (2.0 * h))
                        .epsilon(1e-7)
                        .scale(1.0));
    lo = hi = m;
    lo.prior_var -= h;
    hi.prior_var += h;
    CHECK(g.d_var == doctest::Approx((log_marginal(hi, data) - log_marginal(lo, data)) /
                                     (2.0 * h))
                         .epsilon(1e-7)
                         .scale(1.0));
}

TEST_CASE("model validation rejects non-positive variances") {
    ConjugateModel m;
    m.prior_var = 0.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m.prior_var = 1.0;
    m.noise_var = -2.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
