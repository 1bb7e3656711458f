#include "tedl/network.hpp"

#include "tedl/errors.hpp"
#include "tedl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tedl {

namespace {

// Smallest ELU evidence value is -1 + kEluEvidenceFloor so that alpha stays positive
// once e^z - 1 rounds to -1 (z below about -37).
constexpr double kEluEvidenceFloor = 1e-12;

double activation_derivative(Activation a, double pre, double out) noexcept {
    switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::elu: return pre > 0.0 ? 1.0 : out + 1.0;
    }
    return 1.0;
}

void check_finite(const Matrix& m, std::size_t layer, const char* what) {
    if (!m.all_finite())
        throw NumericError(std::string("non-finite ") + what + " at layer " + std::to_string(layer));
}

} // namespace

std::string_view to_string(Activation a) noexcept {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    }
    return "?";
}

std::string_view to_string(Head h) noexcept {
    switch (h) {
    case Head::logits: return "logits";
    case Head::softmax: return "softmax";
    case Head::relu_evidence: return "relu_evidence";
    case Head::elu_evidence: return "elu_evidence";
    }
    return "?";
}

std::string_view to_string(InitMode m) noexcept {
    return m == InitMode::standard ? "standard" : "hostile";
}

std::optional<Activation> parse_activation(std::string_view s) noexcept {
    for (auto a : {Activation::identity, Activation::tanh, Activation::relu, Activation::elu})
        if (to_string(a) == s) return a;
    return std::nullopt;
}

std::optional<Head> parse_head(std::string_view s) noexcept {
    for (auto h : {Head::logits, Head::softmax, Head::relu_evidence, Head::elu_evidence})
        if (to_string(h) == s) return h;
    return std::nullopt;
}

std::optional<InitMode> parse_init_mode(std::string_view s) noexcept {
    if (s == "standard") return InitMode::standard;
    if (s == "hostile") return InitMode::hostile;
    return std::nullopt;
}

double apply_activation(Activation a, double z) noexcept {
    switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::elu: return elu(z);
    }
    return z;
}

Layer::Layer(Matrix weights, Matrix bias, Activation activation)
    : weights_(std::move(weights)), bias_(std::move(bias)), activation_(activation) {
    if (weights_.rows() == 0 || weights_.cols() == 0) throw ShapeError("layer with empty weight matrix");
    if (bias_.rows() != 1 || bias_.cols() != weights_.cols())
        throw ShapeError("layer bias must be 1x" + std::to_string(weights_.cols()));
}

Network::Network(std::vector<Layer> layers, Head head) : layers_(std::move(layers)), head_(head) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 1; l < layers_.size(); ++l)
        if (layers_[l].fan_in() != layers_[l - 1].fan_out())
            throw ShapeError("layer " + std::to_string(l) + " fan_in " + std::to_string(layers_[l].fan_in()) +
                             " does not match previous fan_out " + std::to_string(layers_[l - 1].fan_out()));
    if (classes() < 2) throw ShapeError("network output must have at least 2 classes");
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights().size() + l.bias().size();
    return n;
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed, const InitOptions& options) {
    if (spec.inputs == 0) throw ShapeError("network spec needs a positive input dimension");
    if (spec.layers.empty()) throw ShapeError("network spec needs at least one layer");
    if (spec.layers.back().units < 2) throw ShapeError("output layer needs at least 2 classes");

    Rng rng(seed);
    std::vector<Layer> layers;
    std::size_t fan_in = spec.inputs;
    for (const auto& ls : spec.layers) {
        if (ls.units == 0) throw ShapeError("layer with zero units");
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + ls.units));
        Matrix w(fan_in, ls.units);
        for (double& v : w.values()) v = rng.uniform(-a, a);
        layers.emplace_back(std::move(w), Matrix(1, ls.units), ls.activation);
        fan_in = ls.units;
    }
    if (options.mode == InitMode::hostile) layers.back().bias().fill(-options.hostile_bias);
    return Network(std::move(layers), spec.head);
}

Network swap_head(const Network& net, Head head) { return Network(net.layers(), head); }

Matrix apply_head(Head head, const Matrix& logits) {
    Matrix out = logits;
    switch (head) {
    case Head::logits: break;
    case Head::softmax:
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto r = out.row(i);
            const double m = *std::max_element(r.begin(), r.end());
            double sum = 0.0;
            for (double& v : r) sum += (v = std::exp(v - m));
            for (double& v : r) v /= sum;
        }
        break;
    case Head::relu_evidence:
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        break;
    case Head::elu_evidence:
        for (double& v : out.values()) v = std::max(elu(v), -1.0 + kEluEvidenceFloor);
        break;
    }
    return out;
}

ForwardTrace forward_trace(const Network& net, const Matrix& x) {
    if (x.cols() != net.input_dim())
        throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
    if (!x.all_finite()) throw NumericError("forward: non-finite input");

    ForwardTrace t;
    t.activations.reserve(net.layers().size() + 1);
    t.pre.reserve(net.layers().size());
    t.activations.push_back(x);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const Layer& layer = net.layers()[l];
        Matrix z = matmul(t.activations.back(), layer.weights());
        const auto b = layer.bias().values();
        for (std::size_t i = 0; i < z.rows(); ++i) {
            auto r = z.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
        }
        check_finite(z, l, "pre-activation");
        Matrix a = z;
        if (layer.activation() != Activation::identity)
            for (double& v : a.values()) v = apply_activation(layer.activation(), v);
        check_finite(a, l, "activation");
        t.pre.push_back(std::move(z));
        t.activations.push_back(std::move(a));
    }
    t.output = apply_head(net.head(), t.logits());
    return t;
}

Matrix forward(const Network& net, const Matrix& x) { return forward_trace(net, x).output; }

GradientTape GradientTape::zeros_like(const Network& net) {
    GradientTape g;
    for (const auto& l : net.layers()) {
        g.weights.emplace_back(l.weights().rows(), l.weights().cols());
        g.biases.emplace_back(1, l.bias().cols());
    }
    return g;
}

void GradientTape::zero() noexcept {
    for (auto& m : weights) m.fill(0.0);
    for (auto& m : biases) m.fill(0.0);
}

double GradientTape::norm() const noexcept {
    double s = 0.0;
    for (const auto* group : {&weights, &biases})
        for (const auto& m : *group)
            for (double v : m.values()) s += v * v;
    return std::sqrt(s);
}

bool GradientTape::all_finite() const noexcept {
    for (const auto* group : {&weights, &biases})
        for (const auto& m : *group)
            if (!m.all_finite()) return false;
    return true;
}

GradientTape backward(const Network& net, const Matrix& x, const Matrix& upstream) {
    return backward(net, forward_trace(net, x), upstream);
}

GradientTape backward(const Network& net, const ForwardTrace& trace, const Matrix& upstream) {
    const Matrix& out = trace.output;
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
        throw ShapeError("backward: upstream gradient shape does not match network output");

    Matrix g = upstream;
    const Matrix& z = trace.logits();
    switch (net.head()) {
    case Head::logits: break;
    case Head::softmax:
        for (std::size_t i = 0; i < g.rows(); ++i) {
            auto gr = g.row(i);
            auto pr = out.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < gr.size(); ++j) dot += gr[j] * pr[j];
            for (std::size_t j = 0; j < gr.size(); ++j) gr[j] = pr[j] * (gr[j] - dot);
        }
        break;
    case Head::relu_evidence:
        for (std::size_t k = 0; k < g.size(); ++k)
            if (!(z.values()[k] > 0.0)) g.values()[k] = 0.0;
        break;
    case Head::elu_evidence:
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double zk = z.values()[k];
            if (zk > 0.0) continue;
            const double e = elu(zk);
            g.values()[k] *= e > -1.0 + kEluEvidenceFloor ? e + 1.0 : 0.0;
        }
        break;
    }
    return backward_from_logits(net, trace, g);
}

GradientTape backward_from_logits(const Network& net, const ForwardTrace& trace, const Matrix& logit_grad) {
    const std::size_t depth = net.layers().size();
    if (trace.pre.size() != depth) throw ShapeError("backward: trace does not belong to this network");
    if (logit_grad.rows() != trace.logits().rows() || logit_grad.cols() != trace.logits().cols())
        throw ShapeError("backward: logit gradient shape does not match network output");

    GradientTape tape = GradientTape::zeros_like(net);
    tape.batch_size = logit_grad.rows();

    Matrix delta = logit_grad;
    for (std::size_t l = depth; l-- > 0;) {
        const Layer& layer = net.layers()[l];
        if (layer.activation() != Activation::identity) {
            const Matrix& pre = trace.pre[l];
            const Matrix& act = trace.activations[l + 1];
            for (std::size_t k = 0; k < delta.size(); ++k)
                delta.values()[k] *= activation_derivative(layer.activation(), pre.values()[k], act.values()[k]);
        }
        tape.weights[l] = matmul_tn(trace.activations[l], delta);
        auto bias = tape.biases[l].values();
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            auto r = delta.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) bias[j] += r[j];
        }
        if (l > 0) delta = matmul_nt(delta, layer.weights());
    }
    return tape;
}

} // namespace tedl
