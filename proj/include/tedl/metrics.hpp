#pragma once

#include "tedl/losses.hpp"
#include "tedl/matrix.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tedl {

/// ROC AUC as the Mann-Whitney statistic
///   (#correctly ordered pairs + 0.5 * #tied pairs) / (#pos * #neg),
/// via one sort and exact integer pair counts. Absent when either class is missing.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

/// AUC of a probability matrix against class indices. For K = 2 the score is
/// the class-1 probability; for K > 2 the macro mean of one-vs-rest AUCs over
/// the classes for which it is defined.
std::optional<double> classification_auc(const Matrix& probs, std::span<const std::size_t> classes);

struct ThresholdPoint {
    double threshold = 0.0;
    std::optional<double> auc;  // absent for empty or single-class subsets
    std::size_t count = 0;

    friend bool operator==(const ThresholdPoint&, const ThresholdPoint&) = default;
};

// {0.1, 0.2, ..., 1.0}, plus the successor of max_u when that exceeds 1.
std::vector<double> default_thresholds(double max_uncertainty);

/// For each threshold t, AUC over the samples with uncertainty strictly below t.
/// Thresholds must be strictly increasing.
std::vector<ThresholdPoint> auc_vs_uncertainty(const EvidentialOutput& out, std::span<const std::size_t> classes,
                                               std::span<const double> thresholds);
std::vector<ThresholdPoint> auc_vs_uncertainty(const Matrix& probs, std::span<const double> uncertainty,
                                               std::span<const std::size_t> classes,
                                               std::span<const double> thresholds);

struct UncertaintyHistogram {
    double upper = 1.0;  // bins cover [0, upper] in equal widths
    std::vector<std::size_t> counts;

    std::size_t total() const noexcept;
    friend bool operator==(const UncertaintyHistogram&, const UncertaintyHistogram&) = default;
};

UncertaintyHistogram uncertainty_histogram(std::span<const double> uncertainty, std::size_t bins);
inline UncertaintyHistogram uncertainty_histogram(const EvidentialOutput& out, std::size_t bins) {
    return uncertainty_histogram(out.uncertainty, bins);
}

struct ReportOptions {
    std::size_t histogram_bins = 20;
    // Empty means default_thresholds().
    std::vector<double> thresholds;
};

/// Validation-set predictions captured at the end of one epoch.
struct EpochScores {
    std::size_t epoch = 0;
    std::string method;
    std::string stage;
    Matrix probs;
    std::optional<std::vector<double>> uncertainty;  // evidence heads only
    std::vector<std::size_t> classes;
};

struct EvalReport {
    std::size_t epoch = 0;
    std::string method;
    std::string stage;
    std::optional<double> overall_auc;
    std::vector<ThresholdPoint> threshold_curve;                // empty without uncertainty
    std::optional<UncertaintyHistogram> uncertainty_histogram;  // idem
    std::size_t samples = 0;
};

struct MethodSummary {
    std::string method;
    std::size_t epochs = 0;
    std::optional<double> final_auc;
};

EvalReport evaluate_epoch(const EpochScores& scores, const ReportOptions& options = {});

// One report per epoch in input order, and each method's final AUC.
std::pair<std::vector<EvalReport>, std::vector<MethodSummary>> assemble_report(std::span<const EpochScores> epochs,
                                                                               const ReportOptions& options = {});

} // namespace tedl
