#pragma once

#include "tedl/matrix.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tedl {

enum class Activation { identity, tanh, relu, elu };

/// How the final layer's output is turned into the network output.
/// `logits` passes it through; `softmax` yields class probabilities;
/// the evidence heads yield per-class Dirichlet evidence.
enum class Head { logits, softmax, relu_evidence, elu_evidence };

std::string_view to_string(Activation a) noexcept;
std::string_view to_string(Head h) noexcept;
std::optional<Activation> parse_activation(std::string_view s) noexcept;
std::optional<Head> parse_head(std::string_view s) noexcept;

inline bool is_evidence_head(Head h) noexcept {
    return h == Head::relu_evidence || h == Head::elu_evidence;
}

double apply_activation(Activation a, double z) noexcept;

// ELU with unit scale: z for z > 0, e^z - 1 otherwise.
inline double elu(double z) noexcept { return z > 0.0 ? z : std::expm1(z); }

class Layer {
public:
    Layer(Matrix weights, Matrix bias, Activation activation);

    std::size_t fan_in() const noexcept { return weights_.rows(); }
    std::size_t fan_out() const noexcept { return weights_.cols(); }
    Activation activation() const noexcept { return activation_; }

    // fan_in x fan_out
    Matrix& weights() noexcept { return weights_; }
    const Matrix& weights() const noexcept { return weights_; }
    // 1 x fan_out
    Matrix& bias() noexcept { return bias_; }
    const Matrix& bias() const noexcept { return bias_; }

    friend bool operator==(const Layer&, const Layer&) = default;

private:
    Matrix weights_;
    Matrix bias_;
    Activation activation_;
};

class Network {
public:
    Network(std::vector<Layer> layers, Head head);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    Head head() const noexcept { return head_; }
    std::size_t input_dim() const noexcept { return layers_.front().fan_in(); }
    std::size_t classes() const noexcept { return layers_.back().fan_out(); }
    std::size_t parameter_count() const noexcept;

    friend bool operator==(const Network&, const Network&) = default;

private:
    std::vector<Layer> layers_;
    Head head_;
};

struct LayerSpec {
    std::size_t units;
    Activation activation;
};

struct NetworkSpec {
    std::size_t inputs = 0;
    // The last entry is the output layer; its width is the class count.
    std::vector<LayerSpec> layers;
    Head head = Head::softmax;
};

enum class InitMode { standard, hostile };

std::string_view to_string(InitMode m) noexcept;
std::optional<InitMode> parse_init_mode(std::string_view s) noexcept;

struct InitOptions {
    InitMode mode = InitMode::standard;
    // Hostile mode sets every output-layer bias to -hostile_bias.
    double hostile_bias = 4.0;
};

/// Glorot-uniform weights in (-a, a) with a = sqrt(6 / (fan_in + fan_out)),
/// zero biases. Bitwise deterministic in (spec, seed, options).
Network init_network(const NetworkSpec& spec, std::uint64_t seed, const InitOptions& options = {});

// Same parameters, different head. The input network is left untouched.
Network swap_head(const Network& net, Head head);

/// Per-layer values recorded by a forward pass. activations[0] is the input,
/// activations[l + 1] the output of layer l; pre[l] its pre-activation.
struct ForwardTrace {
    std::vector<Matrix> activations;
    std::vector<Matrix> pre;
    Matrix output;

    const Matrix& logits() const noexcept { return activations.back(); }
};

ForwardTrace forward_trace(const Network& net, const Matrix& x);
Matrix forward(const Network& net, const Matrix& x);

// Applies a head to final-layer outputs.
Matrix apply_head(Head head, const Matrix& logits);

/// Parameter gradients, shaped exactly like the network's parameters.
struct GradientTape {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    std::size_t batch_size = 0;

    static GradientTape zeros_like(const Network& net);
    void zero() noexcept;
    double norm() const noexcept;
    bool all_finite() const noexcept;
};

/// Gradient of a loss with respect to every parameter, given the gradient
/// with respect to the head output.
GradientTape backward(const Network& net, const Matrix& x, const Matrix& upstream);
GradientTape backward(const Network& net, const ForwardTrace& trace, const Matrix& upstream);
// Same, but `logit_grad` is taken with respect to the final-layer output (before the head).
GradientTape backward_from_logits(const Network& net, const ForwardTrace& trace, const Matrix& logit_grad);

} // namespace tedl
