#pragma once

#include "tedl/matrix.hpp"
#include "tedl/network.hpp"

#include <cstddef>
#include <vector>

namespace tedl {

/// Dirichlet parameters derived from evidence, with the per-sample
/// summaries used for prediction and uncertainty.
struct EvidentialOutput {
    Matrix alpha;                     // batch x K, alpha = evidence + 1 > 0
    std::vector<double> strength;     // S_i = sum_j alpha_ij
    Matrix p_hat;                     // alpha_ij / S_i
    std::vector<double> uncertainty;  // K / S_i

    std::size_t samples() const noexcept { return alpha.rows(); }
    std::size_t classes() const noexcept { return alpha.cols(); }
};

EvidentialOutput evidence_to_alpha(const Matrix& evidence, Head head);
// Builds the summaries directly from alpha (alpha > 0).
EvidentialOutput from_alpha(Matrix alpha);

/// A scalar loss averaged over the batch, and its gradient.
struct LossGrad {
    double value = 0.0;
    Matrix grad;
};

/// Expected sum-of-squares loss under Dir(alpha):
///   sum_j (y_j - alpha_j/S)^2 + alpha_j (S - alpha_j) / (S^2 (S + 1)).
/// `grad` is with respect to alpha (equivalently, evidence). Soft labels allowed.
LossGrad edl_base_loss(const EvidentialOutput& out, const Matrix& y);

// Per-sample values of edl_base_loss, before averaging.
std::vector<double> edl_base_loss_rows(const EvidentialOutput& out, const Matrix& y);

/// alpha~ = y + (1 - y) * alpha: the true class parameter is reset to 1 so
/// only misleading evidence is regularized. `y` must be one-hot.
Matrix make_alpha_tilde(const Matrix& alpha, const Matrix& y);

/// KL(Dir(alpha~) || Dir(1, ..., 1)) averaged over rows, with the gradient
/// with respect to alpha~.
LossGrad kl_to_uniform(const Matrix& alpha_tilde);

// Per-sample KL values.
std::vector<double> kl_to_uniform_rows(const Matrix& alpha_tilde);

struct LossValue {
    double total = 0.0;
    double base = 0.0;
    double kl = 0.0;  // before weighting
    double lambda_t = 0.0;
};

struct TotalLoss {
    LossValue value;
    Matrix grad;  // with respect to alpha / evidence
};

/// base + lambda_t * KL(alpha~). Soft labels are argmax-hardened for the KL
/// term only.
TotalLoss edl_total_loss(const EvidentialOutput& out, const Matrix& y, double lambda_t);

// KL annealing coefficient min(1, t * lambda) for zero-based epoch t.
double lambda_schedule(std::size_t epoch, double lambda);

/// Mean cross-entropy -sum_j y_j ln p_j of softmax probabilities. The gradient
/// is with respect to the logits that produced `probs` (p - y, averaged).
LossGrad cross_entropy_loss(const Matrix& probs, const Matrix& y);

bool is_one_hot(const Matrix& y) noexcept;
Matrix harden_labels(const Matrix& y);

} // namespace tedl
