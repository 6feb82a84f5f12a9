#include "bmdqn/netcore.hpp"

#include "bmdqn/phase_table.hpp"
#include "bmdqn/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bmdqn::net {

namespace {

const char* activation_token(Activation a) {
    return a == Activation::Relu ? "relu" : "tanh";
}

double activate(Activation a, double x) {
    if (a == Activation::Relu)
        return x > 0.0 ? x : 0.0;
    return std::tanh(x);
}

double activate_grad(Activation a, double pre) {
    if (a == Activation::Relu)
        return pre > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(pre);
    return 1.0 - t * t;
}

long chain_param_count(const std::vector<int>& sizes) {
    long n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
        n += (static_cast<long>(sizes[l]) + 1) * sizes[l + 1];
    return n;
}

// Per-layer parameter offsets within one chain.
std::vector<std::size_t> chain_offsets(const std::vector<int>& sizes) {
    std::vector<std::size_t> offs(sizes.size() - 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        offs[l] = off;
        off += static_cast<std::size_t>(sizes[l] + 1) * sizes[l + 1];
    }
    return offs;
}

struct ChainTrace {
    std::vector<std::vector<double>> acts;    // acts[0] is the input
    std::vector<std::vector<double>> preacts; // preacts[l] for layer l
};

// Every chain follows the same convention: hidden layers activated, final
// layer linear.
ChainTrace chain_forward(const std::vector<int>& sizes, Activation act,
                         std::span<const double> w, std::span<const double> input) {
    ChainTrace tr;
    tr.acts.emplace_back(input.begin(), input.end());
    const std::size_t n_layers = sizes.size() - 1;
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        const std::vector<double>& x = tr.acts.back();
        std::vector<double> pre(out);
        for (int o = 0; o < out; ++o) {
            double z = w[off + static_cast<std::size_t>(out) * in + o]; // bias
            const std::size_t row = off + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i)
                z += w[row + i] * x[i];
            pre[o] = z;
        }
        std::vector<double> post(out);
        const bool last = (l + 1 == n_layers);
        for (int o = 0; o < out; ++o)
            post[o] = last ? pre[o] : activate(act, pre[o]);
        tr.preacts.push_back(std::move(pre));
        tr.acts.push_back(std::move(post));
        off += static_cast<std::size_t>(in + 1) * out;
    }
    return tr;
}

// Accumulates weight gradients for one chain into w_grad and returns the
// gradient with respect to the chain input.
std::vector<double> chain_backward(const std::vector<int>& sizes, Activation act,
                                   std::span<const double> w, const ChainTrace& tr,
                                   std::span<const double> out_grad, std::span<double> w_grad) {
    const std::size_t n_layers = sizes.size() - 1;
    const std::vector<std::size_t> offs = chain_offsets(sizes);
    std::vector<double> delta(out_grad.begin(), out_grad.end());
    for (std::size_t li = n_layers; li-- > 0;) {
        const int in = sizes[li];
        const int out = sizes[li + 1];
        const bool last = (li + 1 == n_layers);
        std::vector<double> dpre(out);
        for (int o = 0; o < out; ++o)
            dpre[o] = last ? delta[o] : delta[o] * activate_grad(act, tr.preacts[li][o]);
        const std::vector<double>& x = tr.acts[li];
        for (int o = 0; o < out; ++o) {
            const std::size_t row = offs[li] + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i)
                w_grad[row + i] += dpre[o] * x[i];
            w_grad[offs[li] + static_cast<std::size_t>(out) * in + o] += dpre[o];
        }
        std::vector<double> dx(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const std::size_t row = offs[li] + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i)
                dx[i] += dpre[o] * w[row + i];
        }
        delta = std::move(dx);
    }
    return delta;
}

void check_pairing(const NetSpec& spec, const WeightVector& w) {
    if (w.spec_hash != spec.hash())
        throw std::invalid_argument("weight vector was built for a different net spec");
    if (w.values.size() != static_cast<std::size_t>(param_count(spec)))
        throw std::invalid_argument("weight vector length does not match the net spec");
}

void check_input(const NetSpec& spec, std::span<const double> input) {
    if (input.size() != static_cast<std::size_t>(spec.input_size()))
        throw std::invalid_argument("input length does not match the net spec");
}

void append_sizes(std::ostringstream& os, const std::vector<int>& sizes) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i)
            os << ',';
        os << sizes[i];
    }
}

std::vector<int> parse_size_list(std::string_view text) {
    std::vector<int> sizes;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string_view tok = text.substr(pos, comma == std::string_view::npos
                                                          ? std::string_view::npos
                                                          : comma - pos);
        sizes.push_back(std::stoi(std::string(tok)));
        if (comma == std::string_view::npos)
            break;
        pos = comma + 1;
    }
    return sizes;
}

} // namespace

void NetSpec::validate() const {
    const auto check_positive = [](const std::vector<int>& sizes, const char* what) {
        for (int s : sizes)
            if (s < 1)
                throw std::invalid_argument(std::string(what) + ": layer sizes must be positive");
    };
    if (kind == NetKind::Mlp) {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("mlp spec needs at least an input and an output layer");
        check_positive(layer_sizes, "mlp spec");
        return;
    }
    if (embed_layers.size() < 2 || score_layers.size() < 2)
        throw std::invalid_argument("phase_shared spec needs embedding and scoring chains");
    check_positive(embed_layers, "phase_shared spec");
    check_positive(score_layers, "phase_shared spec");
    if (embed_layers.front() != 1)
        throw std::invalid_argument("phase_shared embedding chain must take one scalar input");
    if (score_layers.back() != 1)
        throw std::invalid_argument("phase_shared scoring chain must emit one scalar");
    if (score_layers.front() != embed_layers.back())
        throw std::invalid_argument("phase_shared scoring input must match the embedding width");
    if (n_movements != kNumMovements || n_phases != kNumPhases)
        throw std::invalid_argument("phase_shared spec is defined for 8 movements and 8 phases");
}

int NetSpec::input_size() const {
    return kind == NetKind::Mlp ? layer_sizes.front() : n_movements;
}

int NetSpec::output_size() const {
    return kind == NetKind::Mlp ? layer_sizes.back() : n_phases;
}

std::string NetSpec::descriptor() const {
    std::ostringstream os;
    if (kind == NetKind::Mlp) {
        os << "mlp " << activation_token(activation) << ' ';
        append_sizes(os, layer_sizes);
    } else {
        os << "phase_shared " << activation_token(activation) << " embed=";
        append_sizes(os, embed_layers);
        os << " score=";
        append_sizes(os, score_layers);
    }
    return os.str();
}

std::uint64_t NetSpec::hash() const {
    return fnv1a64(descriptor());
}

NetSpec mlp_spec(std::vector<int> layer_sizes, Activation act) {
    NetSpec spec;
    spec.kind = NetKind::Mlp;
    spec.activation = act;
    spec.layer_sizes = std::move(layer_sizes);
    spec.validate();
    return spec;
}

NetSpec phase_shared_spec(std::vector<int> embed_layers, std::vector<int> score_layers,
                          Activation act) {
    NetSpec spec;
    spec.kind = NetKind::PhaseShared;
    spec.activation = act;
    spec.embed_layers = std::move(embed_layers);
    spec.score_layers = std::move(score_layers);
    spec.validate();
    return spec;
}

NetSpec parse_descriptor(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string kind, act;
    if (!(is >> kind >> act))
        throw std::invalid_argument("malformed net descriptor: " + std::string(text));
    Activation activation;
    if (act == "relu")
        activation = Activation::Relu;
    else if (act == "tanh")
        activation = Activation::Tanh;
    else
        throw std::invalid_argument("unknown activation in net descriptor: " + act);
    if (kind == "mlp") {
        std::string sizes;
        if (!(is >> sizes))
            throw std::invalid_argument("mlp descriptor is missing layer sizes");
        return mlp_spec(parse_size_list(sizes), activation);
    }
    if (kind == "phase_shared") {
        std::string embed, score;
        if (!(is >> embed >> score) || embed.rfind("embed=", 0) != 0 ||
            score.rfind("score=", 0) != 0)
            throw std::invalid_argument("malformed phase_shared descriptor: " + std::string(text));
        return phase_shared_spec(parse_size_list(std::string_view(embed).substr(6)),
                                 parse_size_list(std::string_view(score).substr(6)), activation);
    }
    throw std::invalid_argument("unknown net kind in descriptor: " + kind);
}

long param_count(const NetSpec& spec) {
    spec.validate();
    if (spec.kind == NetKind::Mlp)
        return chain_param_count(spec.layer_sizes);
    return chain_param_count(spec.embed_layers) + chain_param_count(spec.score_layers);
}

WeightVector make_weights(const NetSpec& spec, std::vector<double> values) {
    if (values.size() != static_cast<std::size_t>(param_count(spec)))
        throw std::invalid_argument("wrong number of weights for the net spec");
    for (double v : values)
        if (!std::isfinite(v))
            throw std::invalid_argument("weights must be finite");
    return WeightVector{std::move(values), spec.hash()};
}

WeightVector zero_weights(const NetSpec& spec) {
    return WeightVector{std::vector<double>(param_count(spec), 0.0), spec.hash()};
}

std::vector<int> fan_in_per_param(const NetSpec& spec) {
    spec.validate();
    std::vector<int> fans;
    fans.reserve(param_count(spec));
    const auto add_chain = [&fans](const std::vector<int>& sizes) {
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const int in = sizes[l];
            const int out = sizes[l + 1];
            // weights, then biases; both scale with the layer fan-in
            fans.insert(fans.end(), static_cast<std::size_t>(in) * out, in);
            fans.insert(fans.end(), out, in);
        }
    };
    if (spec.kind == NetKind::Mlp) {
        add_chain(spec.layer_sizes);
    } else {
        add_chain(spec.embed_layers);
        add_chain(spec.score_layers);
    }
    return fans;
}

std::vector<double> forward(const NetSpec& spec, const WeightVector& w,
                            std::span<const double> input) {
    spec.validate();
    check_pairing(spec, w);
    check_input(spec, input);
    if (spec.kind == NetKind::Mlp)
        return chain_forward(spec.layer_sizes, spec.activation, w.values, input).acts.back();

    const std::size_t embed_n = chain_param_count(spec.embed_layers);
    const std::span<const double> we(w.values.data(), embed_n);
    const std::span<const double> ws(w.values.data() + embed_n, w.values.size() - embed_n);
    const int width = spec.embed_layers.back();

    std::vector<std::vector<double>> embeds(spec.n_movements);
    for (int m = 0; m < spec.n_movements; ++m)
        embeds[m] = chain_forward(spec.embed_layers, spec.activation, we,
                                  std::span<const double>(&input[m], 1))
                        .acts.back();

    std::vector<double> out(spec.n_phases);
    for (int p = 0; p < spec.n_phases; ++p) {
        const auto served = movements_of(static_cast<Phase>(p));
        std::vector<double> summed(width);
        for (int e = 0; e < width; ++e)
            summed[e] = embeds[static_cast<int>(served[0])][e] +
                        embeds[static_cast<int>(served[1])][e];
        out[p] = chain_forward(spec.score_layers, spec.activation, ws, summed).acts.back()[0];
    }
    return out;
}

Gradients backward(const NetSpec& spec, const WeightVector& w,
                   std::span<const double> input, std::span<const double> output_grad) {
    spec.validate();
    check_pairing(spec, w);
    check_input(spec, input);
    if (output_grad.size() != static_cast<std::size_t>(spec.output_size()))
        throw std::invalid_argument("output gradient length does not match the net spec");

    Gradients g;
    g.weights = zero_weights(spec);
    if (spec.kind == NetKind::Mlp) {
        const ChainTrace tr = chain_forward(spec.layer_sizes, spec.activation, w.values, input);
        g.input = chain_backward(spec.layer_sizes, spec.activation, w.values, tr, output_grad,
                                 g.weights.values);
        return g;
    }

    const std::size_t embed_n = chain_param_count(spec.embed_layers);
    const std::span<const double> we(w.values.data(), embed_n);
    const std::span<const double> ws(w.values.data() + embed_n, w.values.size() - embed_n);
    const std::span<double> ge(g.weights.values.data(), embed_n);
    const std::span<double> gs(g.weights.values.data() + embed_n, g.weights.values.size() - embed_n);
    const int width = spec.embed_layers.back();

    std::vector<ChainTrace> embed_traces(spec.n_movements);
    for (int m = 0; m < spec.n_movements; ++m)
        embed_traces[m] = chain_forward(spec.embed_layers, spec.activation, we,
                                        std::span<const double>(&input[m], 1));

    // Scoring chains first; their input gradients fan back onto the shared
    // movement embeddings.
    std::vector<std::vector<double>> d_embed(spec.n_movements,
                                             std::vector<double>(width, 0.0));
    for (int p = 0; p < spec.n_phases; ++p) {
        const auto served = movements_of(static_cast<Phase>(p));
        std::vector<double> summed(width);
        for (int e = 0; e < width; ++e)
            summed[e] = embed_traces[static_cast<int>(served[0])].acts.back()[e] +
                        embed_traces[static_cast<int>(served[1])].acts.back()[e];
        const ChainTrace tr = chain_forward(spec.score_layers, spec.activation, ws, summed);
        const double dp = output_grad[p];
        const std::vector<double> ds =
            chain_backward(spec.score_layers, spec.activation, ws, tr,
                           std::span<const double>(&dp, 1), gs);
        for (const Movement m : served)
            for (int e = 0; e < width; ++e)
                d_embed[static_cast<int>(m)][e] += ds[e];
    }

    g.input.resize(spec.n_movements);
    for (int m = 0; m < spec.n_movements; ++m) {
        const std::vector<double> din =
            chain_backward(spec.embed_layers, spec.activation, we, embed_traces[m],
                           d_embed[m], ge);
        g.input[m] = din[0];
    }
    return g;
}

WeightVector numeric_grad(const std::function<double(const WeightVector&)>& loss,
                          const WeightVector& w, double h) {
    if (!(h > 0.0))
        throw std::invalid_argument("numeric_grad: step size must be positive");
    WeightVector grad = w;
    WeightVector probe = w;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
        probe.values[i] = w.values[i] + h;
        const double up = loss(probe);
        probe.values[i] = w.values[i] - h;
        const double down = loss(probe);
        probe.values[i] = w.values[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::domain_error("numeric_grad: loss evaluated to a non-finite value");
        grad.values[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h) {
    if (!(h > 0.0))
        throw std::invalid_argument("central_difference: step size must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::domain_error("central_difference: non-finite function value");
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double min_abs_relu_preact(const NetSpec& spec, const WeightVector& w,
                           std::span<const double> input) {
    spec.validate();
    check_pairing(spec, w);
    check_input(spec, input);
    if (spec.activation != Activation::Relu)
        return std::numeric_limits<double>::infinity();

    double min_abs = std::numeric_limits<double>::infinity();
    const auto scan_hidden = [&min_abs](const ChainTrace& tr) {
        // the final layer of a chain is linear, so it has no kink
        for (std::size_t l = 0; l + 1 < tr.preacts.size(); ++l)
            for (double z : tr.preacts[l])
                min_abs = std::min(min_abs, std::abs(z));
    };

    if (spec.kind == NetKind::Mlp) {
        scan_hidden(chain_forward(spec.layer_sizes, spec.activation, w.values, input));
        return min_abs;
    }

    const std::size_t embed_n = chain_param_count(spec.embed_layers);
    const std::span<const double> we(w.values.data(), embed_n);
    const std::span<const double> ws(w.values.data() + embed_n, w.values.size() - embed_n);
    const int width = spec.embed_layers.back();
    std::vector<std::vector<double>> embeds(spec.n_movements);
    for (int m = 0; m < spec.n_movements; ++m) {
        const ChainTrace tr = chain_forward(spec.embed_layers, spec.activation, we,
                                            std::span<const double>(&input[m], 1));
        scan_hidden(tr);
        embeds[m] = tr.acts.back();
    }
    for (int p = 0; p < spec.n_phases; ++p) {
        const auto served = movements_of(static_cast<Phase>(p));
        std::vector<double> summed(width);
        for (int e = 0; e < width; ++e)
            summed[e] = embeds[static_cast<int>(served[0])][e] +
                        embeds[static_cast<int>(served[1])][e];
        scan_hidden(chain_forward(spec.score_layers, spec.activation, ws, summed));
    }
    return min_abs;
}

} // namespace bmdqn::net
