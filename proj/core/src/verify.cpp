#include "bmdqn/verify.hpp"

#include "bmdqn/conjugate.hpp"
#include "bmdqn/netcore.hpp"
#include "bmdqn/rng.hpp"
#include "bmdqn/variational.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace bmdqn::verify {

namespace {

conjugate::ConjugateModel random_model(RngStream& rng) {
    conjugate::ConjugateModel m;
    m.prior_mu = rng.uniform(-2.0, 2.0);
    m.prior_var = rng.uniform(0.1, 4.0);
    m.noise_var = rng.uniform(0.1, 4.0);
    return m;
}

std::vector<double> random_dataset(const conjugate::ConjugateModel& m, int n, RngStream& rng) {
    const double theta = m.prior_mu + std::sqrt(m.prior_var) * rng.normal();
    std::vector<double> xs(n);
    for (double& x : xs)
        x = theta + std::sqrt(m.noise_var) * rng.normal();
    return xs;
}

vi::GaussianParams random_gaussian(std::size_t dim, RngStream& rng, std::uint64_t hash) {
    vi::GaussianParams g;
    g.spec_hash = hash;
    g.mu.resize(dim);
    g.log_sigma.resize(dim);
    for (double& m : g.mu)
        m = rng.uniform(-2.0, 2.0);
    for (double& ls : g.log_sigma)
        ls = rng.uniform(-2.0, 1.0);
    return g;
}

// Packs (mu, log_sigma) into one flat vector for central differencing.
std::vector<double> pack(const vi::GaussianParams& g) {
    std::vector<double> flat(g.mu);
    flat.insert(flat.end(), g.log_sigma.begin(), g.log_sigma.end());
    return flat;
}

vi::GaussianParams unpack(std::span<const double> flat, std::uint64_t hash) {
    const std::size_t dim = flat.size() / 2;
    vi::GaussianParams g;
    g.spec_hash = hash;
    g.mu.assign(flat.begin(), flat.begin() + dim);
    g.log_sigma.assign(flat.begin() + dim, flat.end());
    return g;
}

SuiteResult finish(std::string name, double max_residual, double tolerance,
                   std::string note = {}) {
    SuiteResult res;
    res.name = std::move(name);
    res.max_residual = max_residual;
    res.tolerance = tolerance;
    res.pass = max_residual <= tolerance;
    res.note = std::move(note);
    return res;
}

} // namespace

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

SuiteResult backprop_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/backprop");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const net::Activation act =
            rng.uniform() < 0.5 ? net::Activation::Relu : net::Activation::Tanh;
        net::NetSpec spec;
        if (rng.uniform() < 0.7) {
            std::vector<int> sizes;
            const int n_layers = 2 + rng.uniform_int(3);
            for (int l = 0; l < n_layers; ++l)
                sizes.push_back(1 + rng.uniform_int(8));
            spec = net::mlp_spec(sizes, act);
        } else {
            const int width = 2 + rng.uniform_int(3);
            spec = net::phase_shared_spec({1, width}, {width, 1 + rng.uniform_int(6), 1}, act);
        }

        net::WeightVector w;
        std::vector<double> input;
        std::vector<double> coeff(spec.output_size());
        for (double& c : coeff)
            c = rng.uniform(-1.0, 1.0);
        // redraw anything sitting on a relu kink, where central differences
        // straddle the non-smooth point
        for (int attempt = 0; attempt < 100; ++attempt) {
            std::vector<double> values(param_count(spec));
            for (double& v : values)
                v = rng.uniform(-1.0, 1.0);
            w = net::make_weights(spec, std::move(values));
            input.assign(spec.input_size(), 0.0);
            for (double& x : input)
                x = spec.kind == net::NetKind::PhaseShared ? rng.uniform(0.0, 2.0)
                                                           : rng.uniform(-1.0, 1.0);
            if (net::min_abs_relu_preact(spec, w, input) > 1e-3)
                break;
        }

        const auto loss = [&](const net::WeightVector& probe) {
            const std::vector<double> out = net::forward(spec, probe, input);
            double s = 0.0;
            for (std::size_t o = 0; o < out.size(); ++o)
                s += coeff[o] * out[o];
            return s;
        };
        const net::WeightVector numeric = net::numeric_grad(loss, w, 1e-5);
        const net::Gradients analytic = net::backward(spec, w, input, coeff);
        for (std::size_t i = 0; i < numeric.values.size(); ++i)
            worst = std::max(worst,
                             relative_error(analytic.weights.values[i], numeric.values[i]));
    }
    return finish("backprop-vs-central-difference", worst, 1e-5);
}

SuiteResult kl_grad_q_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/kl-grad-q");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::size_t dim = 1 + rng.uniform_int(100);
        const vi::GaussianParams q = random_gaussian(dim, rng, 1);
        const vi::GaussianParams p = random_gaussian(dim, rng, 1);
        const vi::GaussianGrad analytic = vi::kl_grad_wrt_q(q, p);
        const std::vector<double> flat = pack(q);
        const std::vector<double> numeric = net::central_difference(
            [&](std::span<const double> x) { return vi::kl_diag(unpack(x, 1), p); }, flat,
            1e-5);
        const std::vector<double> a = pack(analytic);
        for (std::size_t i = 0; i < a.size(); ++i)
            worst = std::max(worst, relative_error(a[i], numeric[i]));
    }
    return finish("kl-gradient-posterior-side", worst, 1e-6);
}

SuiteResult kl_diff_grad_prior_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/kl-diff-grad");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::size_t dim = 1 + rng.uniform_int(100);
        const vi::GaussianParams q_tr = random_gaussian(dim, rng, 1);
        const vi::GaussianParams q_trval = random_gaussian(dim, rng, 1);
        const vi::GaussianParams prior = random_gaussian(dim, rng, 1);
        vi::GaussianGrad analytic = vi::kl_diff_grad_wrt_prior(q_trval, q_tr, prior);
        if (opt.flip_kl_diff_sign) {
            for (double& v : analytic.mu)
                v = -v;
            for (double& v : analytic.log_sigma)
                v = -v;
        }
        const std::vector<double> flat = pack(prior);
        const std::vector<double> numeric = net::central_difference(
            [&](std::span<const double> x) {
                const vi::GaussianParams probe = unpack(x, 1);
                return vi::kl_diag(q_trval, probe) - vi::kl_diag(q_tr, probe);
            },
            flat, 1e-5);
        const std::vector<double> a = pack(analytic);
        for (std::size_t i = 0; i < a.size(); ++i)
            worst = std::max(worst, relative_error(a[i], numeric[i]));
    }
    return finish("kl-difference-gradient-prior-side", worst, 1e-6);
}

SuiteResult reparam_gradient_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/reparam");
    const std::size_t dim = 20;
    const long draws = 100000;
    const double kl_weight = 1.0;

    const vi::GaussianParams lam = random_gaussian(dim, rng, 1);
    const vi::GaussianParams prior = random_gaussian(dim, rng, 1);
    std::vector<double> a(dim);
    std::vector<double> c(dim);
    for (double& v : a)
        v = rng.uniform(0.1, 1.0);
    for (double& v : c)
        v = rng.uniform(-1.0, 1.0);

    // loss(theta) = sum_i a_i (theta_i - c_i)^2, whose expected objective
    // gradient is available exactly:
    //   d/dmu_i       = 2 a_i (mu_i - c_i) + kl_weight * dKL/dmu_i
    //   d/dlogsig_i   = 2 a_i sigma_i^2    + kl_weight * dKL/dlogsig_i
    const vi::GaussianGrad kl = vi::kl_grad_wrt_q(lam, prior);
    std::vector<double> exact_mu(dim);
    std::vector<double> exact_ls(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double sigma = std::exp(lam.log_sigma[i]);
        exact_mu[i] = 2.0 * a[i] * (lam.mu[i] - c[i]) + kl_weight * kl.mu[i];
        exact_ls[i] = 2.0 * a[i] * sigma * sigma + kl_weight * kl.log_sigma[i];
    }

    std::vector<double> mc_mu(dim, 0.0);
    std::vector<double> mc_ls(dim, 0.0);
    net::WeightVector loss_grad;
    loss_grad.spec_hash = 1;
    loss_grad.values.resize(dim);
    for (long k = 0; k < draws; ++k) {
        const vi::NoiseVector eps = vi::sample_noise(dim, rng);
        const net::WeightVector theta = vi::sample_theta(lam, eps);
        for (std::size_t i = 0; i < dim; ++i)
            loss_grad.values[i] = 2.0 * a[i] * (theta.values[i] - c[i]);
        const vi::GaussianGrad g = vi::elbo_grad(lam, prior, loss_grad, eps, kl_weight);
        for (std::size_t i = 0; i < dim; ++i) {
            mc_mu[i] += g.mu[i] / draws;
            mc_ls[i] += g.log_sigma[i] / draws;
        }
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        worst = std::max(worst, relative_error(exact_mu[i], mc_mu[i]));
        worst = std::max(worst, relative_error(exact_ls[i], mc_ls[i]));
    }
    return finish("reparameterized-gradient-monte-carlo", worst, 0.01);
}

SuiteResult marginal_quadrature_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/quadrature");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> data = random_dataset(m, 1 + rng.uniform_int(20), rng);
        worst = std::max(worst, std::abs(conjugate::log_marginal(m, data) -
                                         conjugate::log_marginal_quadrature(m, data)));
    }
    return finish("log-marginal-vs-quadrature", worst, 1e-6);
}

SuiteResult likelihood_difference_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/lik-diff");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> d_tr = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const std::vector<double> d_val = random_dataset(m, 1 + rng.uniform_int(20), rng);
        worst = std::max(worst, conjugate::likelihood_difference_residual(m, d_tr, d_val));
    }
    return finish("held-out-marginal-decomposition", worst, 1e-9);
}

SuiteResult prior_grad_expectation_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/prior-grad");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> data = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const conjugate::GradResidual r = conjugate::prior_grad_expectation_residual(m, data);
        worst = std::max({worst, r.mean_component, r.var_component});
    }
    return finish("prior-gradient-posterior-expectation", worst, 1e-6);
}

SuiteResult posterior_grad_identity_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/posterior-grad");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> d_tr = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const std::vector<double> d_val = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const conjugate::GradResidual r =
            conjugate::posterior_grad_identity_residual(m, d_tr, d_val);
        worst = std::max({worst, r.mean_component, r.var_component});
    }
    return finish("held-out-gradient-identity", worst, 1e-6);
}

SuiteResult fd_convergence_order_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/fd-order");
    const double h_coarse = 1e-3;
    const double h_fine = 1e-4;
    double worst_coarse = 0.0;
    double worst_fine = 0.0;
    double ratio_at_worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> d_tr = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const std::vector<double> d_val = random_dataset(m, 1 + rng.uniform_int(20), rng);
        const double coarse =
            conjugate::posterior_grad_identity_residual(m, d_tr, d_val, h_coarse).var_component;
        const double fine =
            conjugate::posterior_grad_identity_residual(m, d_tr, d_val, h_fine).var_component;
        if (coarse > worst_coarse) {
            worst_coarse = coarse;
            ratio_at_worst = fine > 0.0 ? coarse / fine : 0.0;
        }
        worst_fine = std::max(worst_fine, fine);
    }
    // halving the step by 10 should cut the truncation error by about 100
    const bool ratio_ok = ratio_at_worst >= 25.0 && ratio_at_worst <= 400.0;
    std::ostringstream note;
    note << "residual(1e-3)=" << worst_coarse << " residual(1e-4)=" << worst_fine
         << " decay-ratio=" << ratio_at_worst;
    SuiteResult res = finish("finite-difference-second-order-decay", worst_fine, 1e-5,
                             note.str());
    res.pass = res.pass && ratio_ok;
    return res;
}

SuiteResult conjugate_kl_link_check(const Options& opt) {
    RngStream rng = derive_stream(opt.seed, "verify/kl-link");
    double worst = 0.0;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const conjugate::ConjugateModel m = random_model(rng);
        const std::vector<double> d_tr = random_dataset(m, 1 + rng.uniform_int(20), rng);
        std::vector<double> d_all = d_tr;
        const std::vector<double> d_val = random_dataset(m, 1 + rng.uniform_int(20), rng);
        d_all.insert(d_all.end(), d_val.begin(), d_val.end());

        const conjugate::Posterior post_tr = conjugate::conjugate_posterior(m, d_tr);
        const conjugate::Posterior post_all = conjugate::conjugate_posterior(m, d_all);

        vi::GaussianParams q_tr, q_all, prior;
        q_tr.mu = {post_tr.mu};
        q_tr.log_sigma = {0.5 * std::log(post_tr.var)};
        q_all.mu = {post_all.mu};
        q_all.log_sigma = {0.5 * std::log(post_all.var)};
        prior.mu = {m.prior_mu};
        prior.log_sigma = {0.5 * std::log(m.prior_var)};

        const double from_kl = -vi::kl_diff_grad_wrt_prior(q_all, q_tr, prior).mu[0];
        const double from_conjugate = (post_all.mu - post_tr.mu) / m.prior_var;
        worst = std::max(worst, relative_error(from_kl, from_conjugate));
    }
    return finish("kl-difference-matches-conjugate-mean-shift", worst, 1e-12);
}

std::vector<SuiteResult> run_all(const Options& opt) {
    return {
        backprop_check(opt),
        kl_grad_q_check(opt),
        kl_diff_grad_prior_check(opt),
        reparam_gradient_check(opt),
        marginal_quadrature_check(opt),
        likelihood_difference_check(opt),
        prior_grad_expectation_check(opt),
        posterior_grad_identity_check(opt),
        fd_convergence_order_check(opt),
        conjugate_kl_link_check(opt),
    };
}

} // namespace bmdqn::verify
