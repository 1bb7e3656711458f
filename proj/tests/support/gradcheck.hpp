#pragma once

// Finite-difference gradient checks of loss-through-network compositions on
// random small networks.

#include "oracles.hpp"

#include "tedl/losses.hpp"
#include "tedl/network.hpp"
#include "tedl/rng.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace oracle {

enum class LossKind { cross_entropy, edl_base, edl_total };

inline const char* name(LossKind k) {
    switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::edl_base: return "edl_base";
    case LossKind::edl_total: return "edl_total";
    }
    return "?";
}

struct GradTrial {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
    std::string description;
};

inline tedl::Matrix random_labels(tedl::Rng& rng, std::size_t n, std::size_t k, bool soft) {
    tedl::Matrix y(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        if (soft) {
            double s = 0.0;
            for (double& v : y.row(i)) s += (v = rng.uniform());
            for (double& v : y.row(i)) v /= s;
        } else {
            y(i, static_cast<std::size_t>(rng.below(k))) = 1.0;
        }
    }
    return y;
}

/// One random trial. Returns nullopt when the draw lands within 1e-3 of a ReLU
/// kink (where central differences are meaningless); callers redraw.
inline std::optional<GradTrial> gradient_trial(LossKind kind, std::uint64_t seed) {
    using namespace tedl;
    Rng rng(seed);
    const std::size_t inputs = 2 + rng.below(3);
    const std::size_t classes = 2 + rng.below(2);
    const std::size_t depth = 1 + rng.below(2);
    const Activation acts[] = {Activation::tanh, Activation::elu, Activation::identity, Activation::relu};

    NetworkSpec spec;
    spec.inputs = inputs;
    for (std::size_t l = 0; l < depth; ++l) spec.layers.push_back({3 + rng.below(3), acts[rng.below(4)]});
    spec.layers.push_back({classes, Activation::identity});
    if (kind == LossKind::cross_entropy)
        spec.head = Head::softmax;
    else
        spec.head = rng.below(2) ? Head::elu_evidence : Head::relu_evidence;

    Network net = init_network(spec, seed * 7 + 1);
    // Nonzero biases and some positive shift so relu evidence heads are not all dead.
    for (auto& layer : net.layers())
        for (double& b : layer.bias().values()) b = rng.uniform(-0.5, 0.5);
    if (spec.head == Head::relu_evidence)
        for (double& b : net.layers().back().bias().values()) b += 0.8;

    const std::size_t batch = 4 + rng.below(4);
    Matrix x(batch, inputs);
    for (double& v : x.values()) v = 1.5 * rng.normal();
    const bool soft = rng.below(2) == 1;
    const Matrix y = random_labels(rng, batch, classes, soft);
    const double lambda_t = kind == LossKind::edl_total ? rng.uniform() : 0.0;

    const ForwardTrace trace = forward_trace(net, x);
    for (std::size_t l = 0; l < depth; ++l)
        if (spec.layers[l].activation == Activation::relu)
            for (double z : trace.pre[l].values())
                if (std::abs(z) < 1e-3) return std::nullopt;
    if (spec.head == Head::relu_evidence)
        for (double z : trace.logits().values())
            if (std::abs(z) < 1e-3) return std::nullopt;

    auto loss_at = [&](const Network& n) {
        const Matrix out = forward(n, x);
        switch (kind) {
        case LossKind::cross_entropy: return cross_entropy_loss(out, y).value;
        case LossKind::edl_base: return edl_base_loss(evidence_to_alpha(out, n.head()), y).value;
        case LossKind::edl_total: return edl_total_loss(evidence_to_alpha(out, n.head()), y, lambda_t).value.total;
        }
        return 0.0;
    };

    GradientTape tape;
    switch (kind) {
    case LossKind::cross_entropy:
        tape = backward_from_logits(net, trace, cross_entropy_loss(trace.output, y).grad);
        break;
    case LossKind::edl_base:
        tape = backward(net, trace, edl_base_loss(evidence_to_alpha(trace.output, net.head()), y).grad);
        break;
    case LossKind::edl_total:
        tape = backward(net, trace, edl_total_loss(evidence_to_alpha(trace.output, net.head()), y, lambda_t).grad);
        break;
    }

    Network probe = net;
    const auto numeric = central_differences(
        [&](const std::vector<double>& theta) {
            unflatten(probe, theta);
            return loss_at(probe);
        },
        flatten(net));
    const auto analytic = flatten(tape);

    GradTrial t;
    t.parameters = analytic.size();
    for (std::size_t i = 0; i < analytic.size(); ++i)
        t.max_rel_error = std::max(t.max_rel_error, relative_error(analytic[i], numeric[i]));
    t.description = std::string(name(kind)) + " head=" + std::string(to_string(spec.head)) +
                    (soft ? " soft" : " hard") + " seed=" + std::to_string(seed);
    return t;
}

/// Runs `trials` accepted trials and returns the worst one.
inline GradTrial worst_gradient_trial(LossKind kind, std::size_t trials, std::uint64_t base_seed) {
    GradTrial worst;
    std::size_t accepted = 0;
    for (std::uint64_t s = base_seed; accepted < trials; ++s) {
        auto t = gradient_trial(kind, s);
        if (!t) continue;
        ++accepted;
        if (t->max_rel_error >= worst.max_rel_error) worst = *t;
    }
    return worst;
}

} // namespace oracle
