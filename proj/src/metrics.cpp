#include "tedl/metrics.hpp"

#include "tedl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace tedl {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
    for (double s : scores)
        if (std::isnan(s)) throw NumericError("roc_auc: NaN score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // twice_u counts 2 per correctly ordered pair and 1 per tied pair.
    std::int64_t neg_below = 0;
    std::int64_t pos_total = 0;
    std::int64_t twice_u = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::int64_t pos = 0;
        std::int64_t neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] != 0 ? pos : neg) += 1;
            ++j;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    const std::int64_t neg_total = neg_below;
    if (pos_total == 0 || neg_total == 0) return std::nullopt;
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

std::optional<double> classification_auc(const Matrix& probs, std::span<const std::size_t> classes) {
    if (probs.rows() != classes.size()) throw ShapeError("classification_auc: row count mismatch");
    const std::size_t k = probs.cols();
    std::vector<double> scores(probs.rows());
    std::vector<int> labels(probs.rows());
    auto one_vs_rest = [&](std::size_t c) {
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            scores[i] = probs(i, c);
            labels[i] = classes[i] == c ? 1 : 0;
        }
        return roc_auc(scores, labels);
    };
    if (k == 2) return one_vs_rest(1);

    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (auto a = one_vs_rest(c)) {
            sum += *a;
            ++defined;
        }
    }
    if (defined == 0) return std::nullopt;
    return sum / static_cast<double>(defined);
}

std::vector<double> default_thresholds(double max_uncertainty) {
    std::vector<double> t;
    for (int k = 1; k <= 10; ++k) t.push_back(k / 10.0);
    const double full = std::nextafter(max_uncertainty, std::numeric_limits<double>::infinity());
    if (full > 1.0) t.push_back(full);
    return t;
}

std::vector<ThresholdPoint> auc_vs_uncertainty(const Matrix& probs, std::span<const double> uncertainty,
                                               std::span<const std::size_t> classes,
                                               std::span<const double> thresholds) {
    if (probs.rows() != uncertainty.size() || probs.rows() != classes.size())
        throw ShapeError("auc_vs_uncertainty: row count mismatch");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1]))
            throw DomainError("auc_vs_uncertainty: thresholds must be strictly increasing");

    std::vector<ThresholdPoint> curve;
    curve.reserve(thresholds.size());
    std::vector<std::size_t> keep;
    for (double t : thresholds) {
        keep.clear();
        for (std::size_t i = 0; i < uncertainty.size(); ++i)
            if (uncertainty[i] < t) keep.push_back(i);
        ThresholdPoint p{t, std::nullopt, keep.size()};
        if (!keep.empty()) {
            std::vector<std::size_t> sub_classes(keep.size());
            for (std::size_t i = 0; i < keep.size(); ++i) sub_classes[i] = classes[keep[i]];
            p.auc = classification_auc(select_rows(probs, keep), sub_classes);
        }
        curve.push_back(p);
    }
    return curve;
}

std::vector<ThresholdPoint> auc_vs_uncertainty(const EvidentialOutput& out, std::span<const std::size_t> classes,
                                               std::span<const double> thresholds) {
    return auc_vs_uncertainty(out.p_hat, out.uncertainty, classes, thresholds);
}

std::size_t UncertaintyHistogram::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

UncertaintyHistogram uncertainty_histogram(std::span<const double> uncertainty, std::size_t bins) {
    if (bins == 0) throw DomainError("uncertainty_histogram: bins must be >= 1");
    UncertaintyHistogram h;
    h.counts.assign(bins, 0);
    for (double u : uncertainty) {
        if (!std::isfinite(u) || u < 0.0) throw NumericError("uncertainty_histogram: invalid uncertainty value");
        h.upper = std::max(h.upper, u);
    }
    const double width = h.upper / static_cast<double>(bins);
    for (double u : uncertainty) {
        auto idx = static_cast<std::size_t>(u / width);
        h.counts[std::min(idx, bins - 1)] += 1;
    }
    return h;
}

EvalReport evaluate_epoch(const EpochScores& s, const ReportOptions& options) {
    EvalReport r;
    r.epoch = s.epoch;
    r.method = s.method;
    r.stage = s.stage;
    r.samples = s.probs.rows();
    r.overall_auc = classification_auc(s.probs, s.classes);
    if (s.uncertainty) {
        const auto& u = *s.uncertainty;
        const double max_u = u.empty() ? 0.0 : *std::max_element(u.begin(), u.end());
        const auto thresholds = options.thresholds.empty() ? default_thresholds(max_u) : options.thresholds;
        r.threshold_curve = auc_vs_uncertainty(s.probs, u, s.classes, thresholds);
        r.uncertainty_histogram = uncertainty_histogram(u, options.histogram_bins);
    }
    return r;
}

std::pair<std::vector<EvalReport>, std::vector<MethodSummary>> assemble_report(std::span<const EpochScores> epochs,
                                                                               const ReportOptions& options) {
    std::vector<EvalReport> reports;
    std::vector<MethodSummary> summary;
    reports.reserve(epochs.size());
    for (const auto& e : epochs) {
        reports.push_back(evaluate_epoch(e, options));
        const auto& r = reports.back();
        auto it = std::find_if(summary.begin(), summary.end(), [&](const auto& m) { return m.method == r.method; });
        if (it == summary.end()) {
            summary.push_back({r.method, 0, std::nullopt});
            it = std::prev(summary.end());
        }
        it->epochs += 1;
        it->final_auc = r.overall_auc;
    }
    return {std::move(reports), std::move(summary)};
}

} // namespace tedl
