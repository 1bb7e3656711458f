#pragma once

#include "tedl/data.hpp"
#include "tedl/metrics.hpp"
#include "tedl/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tedl {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k) noexcept;
std::optional<OptimizerKind> parse_optimizer(std::string_view s) noexcept;

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    OptimizerSettings settings;
    GradientTape first_moment;
    GradientTape second_moment;
    std::uint64_t steps = 0;

    static OptimizerState create(const Network& net, const OptimizerSettings& settings);
};

/// One update: plain gradient descent for sgd, bias-corrected Adam otherwise.
/// Throws NumericError if any updated parameter is non-finite.
void step(Network& net, OptimizerState& state, const GradientTape& grad);

enum class Mode { ce_only, edl_only, tedl };

std::string_view to_string(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view s) noexcept;
// "ce", "edl" or "tedl": the method tag used in reports.
std::string_view method_tag(Mode m) noexcept;

struct TrainPlan {
    Mode mode = Mode::tedl;
    std::size_t stage1_epochs = 10;
    std::size_t stage2_epochs = 10;
    double lambda = 0.1;  // per-epoch KL annealing increment
    std::size_t batch_size = 128;
    OptimizerSettings stage1_optimizer;
    OptimizerSettings stage2_optimizer;
    std::uint64_t seed = 1;
    // Unset: relu_evidence for edl_only, elu_evidence for tedl.
    std::optional<Head> evidence_head_stage2;
    InitOptions init;
    std::vector<LayerSpec> hidden = {{64, Activation::relu}, {64, Activation::relu}};
    ReportOptions report;
};

// Throws ConfigError listing every violated constraint.
void validate(const TrainPlan& plan);

// The evidence head used by stage 2 (and by edl_only) under this plan.
Head stage2_head(const TrainPlan& plan) noexcept;

struct TrainData {
    const Dataset& train;
    const Dataset& validation;
};

enum class Stage { stage1, stage2 };
std::string_view to_string(Stage s) noexcept;

struct EpochRecord {
    std::size_t epoch = 0;  // running index across the whole run
    Stage stage = Stage::stage1;
    double loss_total = 0.0;
    double loss_base = 0.0;              // cross-entropy in stage 1
    std::optional<double> loss_kl;       // stage 2 only
    std::optional<double> lambda_t;      // stage 2 only
    double grad_norm_mean = 0.0;
    double grad_norm_max = 0.0;
    std::optional<double> val_auc;
    double dead_evidence_frac = 0.0;     // share of validation rows with all evidence <= 1e-8

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct StageResult {
    Network network;
    std::vector<EpochRecord> records;
    std::vector<EpochScores> scores;
};

// Softmax network for the plan's architecture (head as given), seeded from plan.seed.
Network initial_network(const TrainPlan& plan, std::size_t inputs, std::size_t classes, Head head);

/// Cross-entropy training of a softmax network for plan.stage1_epochs.
StageResult train_stage1(const Network& net, const TrainData& data, const TrainPlan& plan,
                         std::size_t epoch_offset = 0);

/// Swaps the head to stage2_head(plan) and trains on the evidential
/// loss for plan.stage2_epochs, with lambda_t = min(1, t * lambda) restarting at t = 0.
StageResult train_stage2(const Network& net, const TrainData& data, const TrainPlan& plan,
                         std::size_t epoch_offset = 0);

struct RunResult {
    Network network;
    std::vector<EpochRecord> records;
    std::vector<EvalReport> reports;
    std::vector<MethodSummary> summary;
    // True when soft labels were argmax-hardened for the KL term.
    bool kl_labels_hardened = false;
};

RunResult run_plan(const TrainPlan& plan, const TrainData& data);

// Validation predictions of a network: probabilities (or p_hat) and, for
// evidence heads, uncertainty and the dead-evidence share.
struct Predictions {
    Matrix probs;
    std::optional<std::vector<double>> uncertainty;
    double dead_evidence_frac = 0.0;
};
Predictions predict(const Network& net, const Matrix& features);

} // namespace tedl
