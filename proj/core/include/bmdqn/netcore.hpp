#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bmdqn::net {

enum class Activation { Relu, Tanh };

enum class NetKind {
    Mlp,         // plain fully connected chain
    PhaseShared, // per-movement embedding net + per-phase scoring net, weights shared
};

/// Architecture description. The same spec instance must be used for weight
/// construction, forward, and backward; weight vectors are stamped with the
/// spec hash and the pairing is checked at every call.
struct NetSpec {
    NetKind kind = NetKind::Mlp;
    Activation activation = Activation::Relu;

    /// Mlp: full list of layer widths, input first, at least two entries.
    std::vector<int> layer_sizes;

    /// PhaseShared: the embedding chain maps one scalar (a movement's queue
    /// feature) to an embedding vector, so embed_layers.front() must be 1.
    /// The scoring chain maps the element-wise sum of a phase's two movement
    /// embeddings to one scalar, so score_layers.front() must equal
    /// embed_layers.back() and score_layers.back() must be 1.
    std::vector<int> embed_layers;
    std::vector<int> score_layers;

    int n_movements = 8;
    int n_phases = 8;

    void validate() const; // throws std::invalid_argument
    int input_size() const;
    int output_size() const;

    /// Canonical one-line description, parseable by parse_descriptor().
    std::string descriptor() const;

    /// FNV-1a hash of descriptor(). Stamped onto weight vectors.
    std::uint64_t hash() const;
};

NetSpec mlp_spec(std::vector<int> layer_sizes, Activation act = Activation::Relu);
NetSpec phase_shared_spec(std::vector<int> embed_layers, std::vector<int> score_layers,
                          Activation act = Activation::Relu);
NetSpec parse_descriptor(std::string_view text);

/// Flat parameter vector tied to a spec. Layout: chains in declaration order
/// (Mlp has one chain; PhaseShared has the embedding chain then the scoring
/// chain), and within a chain, per layer, the weight matrix in row-major
/// [out][in] order followed by the bias vector.
struct WeightVector {
    std::vector<double> values;
    std::uint64_t spec_hash = 0;
};

long param_count(const NetSpec& spec);

/// Validates length and finiteness, stamps the spec hash.
WeightVector make_weights(const NetSpec& spec, std::vector<double> values);
WeightVector zero_weights(const NetSpec& spec);

/// Fan-in of the layer each parameter belongs to (biases included), used for
/// width-scaled initialization.
std::vector<int> fan_in_per_param(const NetSpec& spec);

/// Q-values for one input. Hidden layers apply the spec activation, the
/// output layer is linear. PhaseShared: per-phase scalar scores where phase p
/// reads the summed embeddings of its two movements.
std::vector<double> forward(const NetSpec& spec, const WeightVector& w,
                            std::span<const double> input);

struct Gradients {
    WeightVector weights;
    std::vector<double> input;
};

/// Reverse-mode gradients of output_grad . output with respect to weights and
/// input. Relu uses subgradient 0 at exactly zero preactivation.
Gradients backward(const NetSpec& spec, const WeightVector& w,
                   std::span<const double> input, std::span<const double> output_grad);

/// Central-difference gradient of an arbitrary scalar function of the
/// weights. This is the reference oracle the analytic backward pass is
/// checked against; it must stay independent of backward().
WeightVector numeric_grad(const std::function<double(const WeightVector&)>& loss,
                          const WeightVector& w, double h);

/// Central differences for a plain vector argument.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h);

/// Smallest |preactivation| over all hidden relu units for this input, or
/// +infinity when no relu unit exists. Gradient checks use it to reject
/// instances sitting on a relu kink, where finite differences are invalid.
double min_abs_relu_preact(const NetSpec& spec, const WeightVector& w,
                           std::span<const double> input);

} // namespace bmdqn::net
