#include <bmdqn/netcore.hpp>
#include <bmdqn/phase_table.hpp>
#include <bmdqn/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace bmdqn;
using namespace bmdqn::net;

namespace {

WeightVector random_weights(const NetSpec& spec, RngStream& rng, double scale = 0.5) {
    std::vector<double> v(param_count(spec));
    for (double& x : v)
        x = rng.uniform(-scale, scale);
    return make_weights(spec, std::move(v));
}

} // namespace

TEST_CASE("parameter counts follow the layer shapes") {
    CHECK(param_count(mlp_spec({2, 4, 16})) == 92);
    CHECK(param_count(mlp_spec({1, 1})) == 2);
    CHECK(param_count(phase_shared_spec({1, 8}, {8, 1})) == 25);
    CHECK(param_count(mlp_spec({2, 32, 32, 16})) == 1680);
}

TEST_CASE("single linear unit computes w*x + b") {
    const NetSpec spec = mlp_spec({1, 1});
    const WeightVector w = make_weights(spec, {2.0, -0.5});
    const std::vector<double> out = forward(spec, w, std::vector<double>{3.0});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(5.5));
}

TEST_CASE("two-layer relu chain matches a hand computation") {
    // x -> hidden of width 2 (relu) -> scalar output
    const NetSpec spec = mlp_spec({1, 2, 1});
    // layer 1: W = [[1],[-1]], b = [0.5, 0.5]; layer 2: W = [[2, 3]], b = [-1]
    const WeightVector w = make_weights(spec, {1.0, -1.0, 0.5, 0.5, 2.0, 3.0, -1.0});
    const std::vector<double> out = forward(spec, w, std::vector<double>{1.0});
    // hidden = relu([1.5, -0.5]) = [1.5, 0]; out = 2*1.5 + 3*0 - 1 = 2
    CHECK(out[0] == doctest::Approx(2.0));
}

TEST_CASE("forward does not mutate its arguments") {
    const NetSpec spec = mlp_spec({2, 3, 4});
    RngStream rng(11);
    const WeightVector w = random_weights(spec, rng);
    const std::vector<double> before = w.values;
    const std::vector<double> input{0.3, -0.7};
    const std::vector<double> a = forward(spec, w, input);
    const std::vector<double> b = forward(spec, w, input);
    CHECK(a == b);
    CHECK(w.values == before);
}

TEST_CASE("phase scores permute with symmetric movement swaps") {
    const NetSpec spec = phase_shared_spec({1, 6, 4}, {4, 5, 1}, Activation::Tanh);
    RngStream rng(99);
    const WeightVector w = random_weights(spec, rng);

    std::vector<double> queues(kNumMovements);
    for (double& q : queues)
        q = rng.uniform(0.0, 3.0);
    const std::vector<double> base = forward(spec, w, queues);

    const auto idx = [](Movement m) { return static_cast<int>(m); };
    const auto at = [&](Phase p) { return static_cast<int>(p); };

    SUBCASE("east-west swap exchanges the two single-arm phases") {
        std::vector<double> swapped = queues;
        std::swap(swapped[idx(Movement::ET)], swapped[idx(Movement::WT)]);
        std::swap(swapped[idx(Movement::EL)], swapped[idx(Movement::WL)]);
        const std::vector<double> out = forward(spec, w, swapped);
        CHECK(out[at(Phase::A)] == base[at(Phase::A)]);
        CHECK(out[at(Phase::B)] == base[at(Phase::B)]);
        CHECK(out[at(Phase::C)] == base[at(Phase::C)]);
        CHECK(out[at(Phase::D)] == base[at(Phase::D)]);
        CHECK(out[at(Phase::E)] == base[at(Phase::F)]);
        CHECK(out[at(Phase::F)] == base[at(Phase::E)]);
        CHECK(out[at(Phase::G)] == base[at(Phase::G)]);
        CHECK(out[at(Phase::H)] == base[at(Phase::H)]);
    }

    SUBCASE("north-south swap exchanges the other pair") {
        std::vector<double> swapped = queues;
        std::swap(swapped[idx(Movement::NT)], swapped[idx(Movement::ST)]);
        std::swap(swapped[idx(Movement::NL)], swapped[idx(Movement::SL)]);
        const std::vector<double> out = forward(spec, w, swapped);
        CHECK(out[at(Phase::A)] == base[at(Phase::A)]);
        CHECK(out[at(Phase::B)] == base[at(Phase::B)]);
        CHECK(out[at(Phase::C)] == base[at(Phase::C)]);
        CHECK(out[at(Phase::D)] == base[at(Phase::D)]);
        CHECK(out[at(Phase::E)] == base[at(Phase::E)]);
        CHECK(out[at(Phase::F)] == base[at(Phase::F)]);
        CHECK(out[at(Phase::G)] == base[at(Phase::H)]);
        CHECK(out[at(Phase::H)] == base[at(Phase::G)]);
    }
}

TEST_CASE("identical movement queues give identical phase scores") {
    const NetSpec spec = phase_shared_spec({1, 4}, {4, 1});
    RngStream rng(3);
    const WeightVector w = random_weights(spec, rng);
    const std::vector<double> queues(kNumMovements, 1.3);
    const std::vector<double> out = forward(spec, w, queues);
    for (int p = 1; p < kNumPhases; ++p)
        CHECK(out[p] == out[0]);
}

TEST_CASE("backward matches central differences on mixed architectures") {
    RngStream rng(2718);
    const std::vector<NetSpec> specs = {
        mlp_spec({2, 3, 2}),
        mlp_spec({1, 4, 3, 2}, Activation::Tanh),
        phase_shared_spec({1, 3}, {3, 2, 1}),
        phase_shared_spec({1, 2, 4}, {4, 1}, Activation::Tanh),
    };
    for (const NetSpec& spec : specs) {
        WeightVector w = random_weights(spec, rng);
        std::vector<double> input(spec.input_size());
        for (double& x : input)
            x = rng.uniform(-1.0, 1.0);
        int tries = 0;
        while (min_abs_relu_preact(spec, w, input) < 1e-3 && tries++ < 50)
            w = random_weights(spec, rng);

        std::vector<double> cotangent(spec.output_size());
        for (double& c : cotangent)
            c = rng.uniform(-1.0, 1.0);

        const Gradients g = backward(spec, w, input, cotangent);
        const WeightVector numeric = numeric_grad(
            [&](const WeightVector& wv) {
                const std::vector<double> out = forward(spec, wv, input);
                double s = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i)
                    s += cotangent[i] * out[i];
                return s;
            },
            w, 1e-6);
        for (std::size_t i = 0; i < numeric.values.size(); ++i)
            CHECK(g.weights.values[i] ==
                  doctest::Approx(numeric.values[i]).epsilon(1e-5).scale(1.0));

        const std::vector<double> input_numeric = central_difference(
            [&](std::span<const double> x) {
                const std::vector<double> out = forward(spec, w, x);
                double s = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i)
                    s += cotangent[i] * out[i];
                return s;
            },
            input, 1e-6);
        for (std::size_t i = 0; i < input.size(); ++i)
            CHECK(g.input[i] == doctest::Approx(input_numeric[i]).epsilon(1e-5).scale(1.0));
    }
}

TEST_CASE("fan-in assignment groups parameters by layer input width") {
    const NetSpec spec = mlp_spec({2, 3, 1});
    const std::vector<int> fans = fan_in_per_param(spec);
    REQUIRE(fans.size() == 13);
    for (int i = 0; i < 9; ++i)
        CHECK(fans[i] == 2); // first layer: 6 weights + 3 biases
    for (int i = 9; i < 13; ++i)
        CHECK(fans[i] == 3); // second layer: 3 weights + 1 bias
}

TEST_CASE("descriptors round-trip through parsing") {
    const std::vector<NetSpec> specs = {
        mlp_spec({2, 32, 32, 16}),
        mlp_spec({1, 1}, Activation::Tanh),
        phase_shared_spec({1, 16}, {16, 32, 1}),
    };
    for (const NetSpec& spec : specs) {
        const NetSpec parsed = parse_descriptor(spec.descriptor());
        CHECK(parsed.descriptor() == spec.descriptor());
        CHECK(parsed.hash() == spec.hash());
    }
    CHECK_THROWS_AS(parse_descriptor("gibberish"), std::invalid_argument);
}

TEST_CASE("spec and weight validation reject malformed input") {
    CHECK_THROWS_AS(mlp_spec({3}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(mlp_spec({0, 2}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(phase_shared_spec({2, 4}, {4, 1}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(phase_shared_spec({1, 4}, {4, 2}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(phase_shared_spec({1, 4}, {3, 1}).validate(), std::invalid_argument);

    const NetSpec spec = mlp_spec({1, 1});
    CHECK_THROWS_AS(make_weights(spec, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(make_weights(spec, {1.0, std::nan("")}), std::invalid_argument);

    const NetSpec other = mlp_spec({1, 2});
    const WeightVector w = zero_weights(other);
    CHECK_THROWS_AS(forward(spec, w, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(forward(spec, zero_weights(spec), std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}

TEST_CASE("relu kink detector reports the smallest hidden preactivation") {
    const NetSpec spec = mlp_spec({1, 2, 1});
    const WeightVector w = make_weights(spec, {1.0, -1.0, 0.5, 0.5, 2.0, 3.0, -1.0});
    // preactivations at x=1: [1.5, -0.5]; the output layer does not count
    CHECK(min_abs_relu_preact(spec, w, std::vector<double>{1.0}) == doctest::Approx(0.5));
    const NetSpec tanh_spec = mlp_spec({1, 2, 1}, Activation::Tanh);
    const WeightVector tw = make_weights(tanh_spec, w.values);
    CHECK(std::isinf(min_abs_relu_preact(tanh_spec, tw, std::vector<double>{1.0})));
}
