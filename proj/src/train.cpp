#include "tedl/train.hpp"

#include "tedl/errors.hpp"
#include "tedl/losses.hpp"
#include "tedl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tedl {

namespace {

constexpr double kDeadEvidence = 1e-8;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5eed;

std::uint64_t shuffle_seed(std::uint64_t seed, Stage stage, std::size_t epoch) {
    const std::uint64_t tag = (static_cast<std::uint64_t>(stage == Stage::stage1 ? 1 : 2) << 32) | epoch;
    return derive_seed(derive_seed(seed, kShuffleStream), tag);
}

template <class F>
void for_each_param(Network& net, const GradientTape& g, F&& f) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        f(net.layers()[l].weights().values(), g.weights[l].values(), l, 0);
        f(net.layers()[l].bias().values(), g.biases[l].values(), l, 1);
    }
}

std::span<double> moment(GradientTape& t, std::size_t layer, int which) {
    return which == 0 ? t.weights[layer].values() : t.biases[layer].values();
}

// Runs one stage. `evidential` selects the loss; the head is already set on `net`.
StageResult run_stage(Network net, const TrainData& data, const TrainPlan& plan, Stage stage,
                      std::size_t epochs, std::size_t epoch_offset) {
    const bool evidential = stage == Stage::stage2;
    const OptimizerSettings& opt = evidential ? plan.stage2_optimizer : plan.stage1_optimizer;
    OptimizerState state = OptimizerState::create(net, opt);

    const Dataset& train = data.train;
    validate(train);
    validate(data.validation);
    if (train.dims() != net.input_dim() || data.validation.dims() != net.input_dim())
        throw ShapeError("dataset dimension does not match network input");
    if (train.classes() != net.classes() || data.validation.classes() != net.classes())
        throw ShapeError("dataset class count does not match network output");

    const auto val_classes = data.validation.hard_labels();
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);

    StageResult result{std::move(net), {}, {}};
    Network& model = result.network;
    for (std::size_t t = 0; t < epochs; ++t) {
        const std::size_t epoch = epoch_offset + t;
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(shuffle_seed(plan.seed, stage, t));
        rng.shuffle(std::span<std::size_t>(order));

        const double lambda_t = evidential ? lambda_schedule(t, plan.lambda) : 0.0;
        double sum_total = 0.0;
        double sum_base = 0.0;
        double sum_kl = 0.0;
        double norm_sum = 0.0;
        double norm_max = 0.0;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < n; start += plan.batch_size) {
            const std::size_t stop = std::min(n, start + plan.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Matrix xb = select_rows(train.features, idx);
            const Matrix yb = select_rows(train.labels, idx);
            const ForwardTrace trace = forward_trace(model, xb);
            const double rows = static_cast<double>(idx.size());

            GradientTape grad;
            double total = 0.0;
            if (evidential) {
                const TotalLoss loss = edl_total_loss(evidence_to_alpha(trace.output, model.head()), yb, lambda_t);
                grad = backward(model, trace, loss.grad);
                total = loss.value.total;
                sum_base += loss.value.base * rows;
                sum_kl += loss.value.kl * rows;
            } else {
                const LossGrad loss = cross_entropy_loss(trace.output, yb);
                grad = backward_from_logits(model, trace, loss.grad);
                total = loss.value;
                sum_base += loss.value * rows;
            }
            if (!std::isfinite(total) || !grad.all_finite())
                throw NumericError("non-finite loss or gradient in " + std::string(to_string(stage)) + " epoch " +
                                   std::to_string(t) + " batch " + std::to_string(batches));
            sum_total += total * rows;
            const double norm = grad.norm();
            norm_sum += norm;
            norm_max = std::max(norm_max, norm);
            step(model, state, grad);
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.stage = stage;
        rec.loss_total = sum_total / static_cast<double>(n);
        rec.loss_base = sum_base / static_cast<double>(n);
        if (evidential) {
            rec.loss_kl = sum_kl / static_cast<double>(n);
            rec.lambda_t = lambda_t;
        }
        rec.grad_norm_mean = batches ? norm_sum / static_cast<double>(batches) : 0.0;
        rec.grad_norm_max = norm_max;

        Predictions pred = predict(model, data.validation.features);
        rec.val_auc = classification_auc(pred.probs, val_classes);
        rec.dead_evidence_frac = pred.dead_evidence_frac;
        result.records.push_back(rec);
        result.scores.push_back(EpochScores{epoch, std::string(method_tag(plan.mode)), std::string(to_string(stage)),
                                            std::move(pred.probs), std::move(pred.uncertainty), val_classes});
    }
    return result;
}

} // namespace

std::string_view to_string(OptimizerKind k) noexcept { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

std::optional<OptimizerKind> parse_optimizer(std::string_view s) noexcept {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    return std::nullopt;
}

std::string_view to_string(Mode m) noexcept {
    switch (m) {
    case Mode::ce_only: return "ce_only";
    case Mode::edl_only: return "edl_only";
    case Mode::tedl: return "tedl";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view s) noexcept {
    if (s == "ce_only" || s == "ce") return Mode::ce_only;
    if (s == "edl_only" || s == "edl") return Mode::edl_only;
    if (s == "tedl") return Mode::tedl;
    return std::nullopt;
}

std::string_view method_tag(Mode m) noexcept {
    switch (m) {
    case Mode::ce_only: return "ce";
    case Mode::edl_only: return "edl";
    case Mode::tedl: return "tedl";
    }
    return "?";
}

std::string_view to_string(Stage s) noexcept { return s == Stage::stage1 ? "stage1" : "stage2"; }

OptimizerState OptimizerState::create(const Network& net, const OptimizerSettings& settings) {
    OptimizerState s;
    s.settings = settings;
    if (settings.kind == OptimizerKind::adam) {
        s.first_moment = GradientTape::zeros_like(net);
        s.second_moment = GradientTape::zeros_like(net);
    }
    return s;
}

void step(Network& net, OptimizerState& state, const GradientTape& grad) {
    if (grad.weights.size() != net.layers().size() || grad.biases.size() != net.layers().size())
        throw ShapeError("step: gradient does not mirror the network");
    for (std::size_t l = 0; l < net.layers().size(); ++l)
        if (grad.weights[l].size() != net.layers()[l].weights().size() ||
            grad.biases[l].size() != net.layers()[l].bias().size())
            throw ShapeError("step: gradient shape mismatch at layer " + std::to_string(l));

    const OptimizerSettings& s = state.settings;
    state.steps += 1;
    bool finite = true;
    if (s.kind == OptimizerKind::sgd) {
        for_each_param(net, grad, [&](std::span<double> p, std::span<const double> g, std::size_t, int) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                p[i] -= s.learning_rate * g[i];
                finite = finite && std::isfinite(p[i]);
            }
        });
    } else {
        if (state.first_moment.weights.size() != net.layers().size()) {
            state.first_moment = GradientTape::zeros_like(net);
            state.second_moment = GradientTape::zeros_like(net);
        }
        const double t = static_cast<double>(state.steps);
        const double c1 = 1.0 - std::pow(s.beta1, t);
        const double c2 = 1.0 - std::pow(s.beta2, t);
        for_each_param(net, grad, [&](std::span<double> p, std::span<const double> g, std::size_t l, int which) {
            auto m = moment(state.first_moment, l, which);
            auto v = moment(state.second_moment, l, which);
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
                v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
                p[i] -= s.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.epsilon);
                finite = finite && std::isfinite(p[i]);
            }
        });
    }
    if (!finite) throw NumericError("step produced a non-finite parameter");
}

void validate(const TrainPlan& plan) {
    std::vector<std::string> problems;
    if (plan.mode == Mode::tedl && (plan.stage1_epochs < 1 || plan.stage2_epochs < 1))
        problems.emplace_back("tedl needs stage1_epochs >= 1 and stage2_epochs >= 1");
    if (!(plan.lambda >= 0.0) || !std::isfinite(plan.lambda)) problems.emplace_back("lambda must be >= 0");
    if (plan.batch_size == 0) problems.emplace_back("batch_size must be >= 1");
    for (const auto* o : {&plan.stage1_optimizer, &plan.stage2_optimizer})
        if (!(o->learning_rate >= 0.0) || !std::isfinite(o->learning_rate))
            problems.emplace_back("learning rates must be finite and >= 0");
    if (plan.evidence_head_stage2 && !is_evidence_head(*plan.evidence_head_stage2))
        problems.emplace_back("evidence_head_stage2 must be relu_evidence or elu_evidence");
    for (const auto& h : plan.hidden)
        if (h.units == 0) problems.emplace_back("hidden layers need at least 1 unit");
    if (plan.report.histogram_bins == 0) problems.emplace_back("histogram_bins must be >= 1");
    if (problems.empty()) return;
    std::string msg = "invalid train plan:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
}

Head stage2_head(const TrainPlan& plan) noexcept {
    if (plan.evidence_head_stage2) return *plan.evidence_head_stage2;
    return plan.mode == Mode::edl_only ? Head::relu_evidence : Head::elu_evidence;
}

Network initial_network(const TrainPlan& plan, std::size_t inputs, std::size_t classes, Head head) {
    NetworkSpec spec;
    spec.inputs = inputs;
    spec.layers = plan.hidden;
    spec.layers.push_back({classes, Activation::identity});
    spec.head = head;
    return init_network(spec, derive_seed(plan.seed, kInitStream), plan.init);
}

Predictions predict(const Network& net, const Matrix& features) {
    const ForwardTrace trace = forward_trace(net, features);
    Predictions p;
    if (is_evidence_head(net.head())) {
        EvidentialOutput out = evidence_to_alpha(trace.output, net.head());
        std::size_t dead = 0;
        for (std::size_t i = 0; i < trace.output.rows(); ++i) {
            const auto e = trace.output.row(i);
            if (std::all_of(e.begin(), e.end(), [](double v) { return v <= kDeadEvidence; })) ++dead;
        }
        p.dead_evidence_frac = trace.output.rows() ? static_cast<double>(dead) / static_cast<double>(trace.output.rows()) : 0.0;
        p.probs = std::move(out.p_hat);
        p.uncertainty = std::move(out.uncertainty);
    } else {
        p.probs = net.head() == Head::softmax ? trace.output : apply_head(Head::softmax, trace.output);
    }
    return p;
}

StageResult train_stage1(const Network& net, const TrainData& data, const TrainPlan& plan, std::size_t epoch_offset) {
    if (net.head() != Head::softmax) throw DomainError("train_stage1 needs a softmax head");
    return run_stage(net, data, plan, Stage::stage1, plan.stage1_epochs, epoch_offset);
}

StageResult train_stage2(const Network& net, const TrainData& data, const TrainPlan& plan, std::size_t epoch_offset) {
    if (!is_evidence_head(stage2_head(plan)))
        throw DomainError("train_stage2 needs an evidence head in the plan");
    return run_stage(swap_head(net, stage2_head(plan)), data, plan, Stage::stage2, plan.stage2_epochs,
                     epoch_offset);
}

RunResult run_plan(const TrainPlan& plan, const TrainData& data) {
    validate(plan);
    validate(data.train);
    const std::size_t inputs = data.train.dims();
    const std::size_t classes = data.train.classes();

    std::vector<EpochRecord> records;
    std::vector<EpochScores> scores;
    auto absorb = [&](StageResult& s) {
        records.insert(records.end(), s.records.begin(), s.records.end());
        std::move(s.scores.begin(), s.scores.end(), std::back_inserter(scores));
    };

    std::optional<Network> final_net;
    switch (plan.mode) {
    case Mode::ce_only: {
        StageResult s1 = train_stage1(initial_network(plan, inputs, classes, Head::softmax), data, plan);
        absorb(s1);
        final_net = std::move(s1.network);
        break;
    }
    case Mode::edl_only: {
        StageResult s2 =
            train_stage2(initial_network(plan, inputs, classes, stage2_head(plan)), data, plan);
        absorb(s2);
        final_net = std::move(s2.network);
        break;
    }
    case Mode::tedl: {
        StageResult s1 = train_stage1(initial_network(plan, inputs, classes, Head::softmax), data, plan);
        absorb(s1);
        StageResult s2 = train_stage2(s1.network, data, plan, s1.records.size());
        absorb(s2);
        final_net = std::move(s2.network);
        break;
    }
    }

    auto [reports, summary] = assemble_report(scores, plan.report);
    RunResult r{std::move(*final_net), std::move(records), std::move(reports), std::move(summary), false};
    r.kl_labels_hardened = plan.mode != Mode::ce_only && !is_one_hot(data.train.labels);
    return r;
}

} // namespace tedl
