#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the library code paths it is used to check.

#include "tedl/losses.hpp"
#include "tedl/network.hpp"
#include "tedl/rng.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

/// O(n^2) Mann-Whitney count: (#correctly ordered + 0.5 * #tied) / (#pos * #neg).
/// NaN when a class is missing.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1.0;
            if (scores[i] > scores[j])
                good += 1.0;
            else if (scores[i] == scores[j])
                good += 0.5;
        }
    }
    return pairs == 0.0 ? std::numeric_limits<double>::quiet_NaN() : good / pairs;
}

/// KL(Beta(a, b) || Uniform) = integral of f ln f over (0, 1), by tanh-sinh
/// quadrature; the normalizer uses std::lgamma.
inline double beta_kl_by_quadrature(double a, double b) {
    const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    auto integrand = [&](double p) {
        const double q = 1.0 - p;
        if (p <= 0.0 || q <= 0.0) return 0.0;
        const double log_f = log_norm + (a - 1.0) * std::log(p) + (b - 1.0) * std::log(q);
        return std::exp(log_f) * log_f;
    };
    boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(integrand, 0.0, 1.0);
}

/// First written form of the expected sum-of-squares loss, per sample:
///   sum_j (y_j - p_j)^2 + p_j (1 - p_j) / (S + 1).
inline double edl_base_first_form(const std::vector<double>& alpha, const std::vector<double>& y) {
    double s = 0.0;
    for (double a : alpha) s += a;
    double v = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        const double p = alpha[j] / s;
        v += (y[j] - p) * (y[j] - p) + p * (1.0 - p) / (s + 1.0);
    }
    return v;
}

/// Relative error used by the gradient checks: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

/// Central differences of `f` at `x` (perturbing every entry of x), step h.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Flattened parameter vector of a network (weights then bias, layer by layer).
inline std::vector<double> flatten(const tedl::Network& net) {
    std::vector<double> out;
    for (const auto& l : net.layers()) {
        out.insert(out.end(), l.weights().values().begin(), l.weights().values().end());
        out.insert(out.end(), l.bias().values().begin(), l.bias().values().end());
    }
    return out;
}

inline void unflatten(tedl::Network& net, const std::vector<double>& theta) {
    std::size_t k = 0;
    for (auto& l : net.layers()) {
        for (double& v : l.weights().values()) v = theta[k++];
        for (double& v : l.bias().values()) v = theta[k++];
    }
}

inline std::vector<double> flatten(const tedl::GradientTape& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.insert(out.end(), g.weights[l].values().begin(), g.weights[l].values().end());
        out.insert(out.end(), g.biases[l].values().begin(), g.biases[l].values().end());
    }
    return out;
}

} // namespace oracle
