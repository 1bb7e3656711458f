#include "tedl/losses.hpp"

#include "tedl/errors.hpp"
#include "tedl/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tedl {

namespace {

constexpr double kLabelSumTolerance = 1e-6;
constexpr double kLogClamp = 1e-15;

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(what) + ": label matrix shape does not match predictions");
}

void require_distributions(const Matrix& y, const char* what) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double s = 0.0;
        for (double v : y.row(i)) {
            if (!(v >= 0.0)) throw DomainError(std::string(what) + ": negative label in row " + std::to_string(i));
            s += v;
        }
        if (std::abs(s - 1.0) > kLabelSumTolerance)
            throw DomainError(std::string(what) + ": label row " + std::to_string(i) + " sums to " +
                              std::to_string(s));
    }
}

} // namespace

EvidentialOutput from_alpha(Matrix alpha) {
    EvidentialOutput out;
    const std::size_t n = alpha.rows();
    const double k = static_cast<double>(alpha.cols());
    out.strength.resize(n);
    out.uncertainty.resize(n);
    out.p_hat = Matrix(n, alpha.cols());
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double a : alpha.row(i)) {
            if (!(a > 0.0) || !std::isfinite(a))
                throw DomainError("Dirichlet parameters must be finite and positive (row " + std::to_string(i) + ")");
            s += a;
        }
        out.strength[i] = s;
        out.uncertainty[i] = k / s;
        auto p = out.p_hat.row(i);
        auto a = alpha.row(i);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = a[j] / s;
    }
    out.alpha = std::move(alpha);
    return out;
}

EvidentialOutput evidence_to_alpha(const Matrix& evidence, Head head) {
    if (!is_evidence_head(head)) throw DomainError("evidence_to_alpha needs an evidence head");
    Matrix alpha = evidence;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        const double e = evidence.values()[k];
        const bool ok = head == Head::relu_evidence ? e >= 0.0 : e > -1.0;
        if (!ok || !std::isfinite(e))
            throw DomainError("evidence value " + std::to_string(e) + " out of range for " +
                              std::string(to_string(head)));
        alpha.values()[k] = e + 1.0;
    }
    return from_alpha(std::move(alpha));
}

std::vector<double> edl_base_loss_rows(const EvidentialOutput& out, const Matrix& y) {
    require_same_shape(out.alpha, y, "edl_base_loss");
    require_distributions(y, "edl_base_loss");
    std::vector<double> rows(out.samples());
    for (std::size_t i = 0; i < out.samples(); ++i) {
        const double s = out.strength[i];
        const auto a = out.alpha.row(i);
        const auto yi = y.row(i);
        double v = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double err = yi[j] - a[j] / s;
            v += err * err + a[j] * (s - a[j]) / (s * s * (s + 1.0));
        }
        rows[i] = v;
    }
    return rows;
}

LossGrad edl_base_loss(const EvidentialOutput& out, const Matrix& y) {
    const auto rows = edl_base_loss_rows(out, y);
    const std::size_t n = out.samples();
    const std::size_t k = out.classes();
    LossGrad r{0.0, Matrix(n, k)};
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);

    // With p = alpha/S and V = sum_j p_j (1 - p_j):
    //   dL/dalpha_k = (g_k - sum_j g_j p_j) / S - V / (S + 1)^2,
    //   g_j = -2 (y_j - p_j) + (1 - 2 p_j) / (S + 1).
    std::vector<double> g(k);
    for (std::size_t i = 0; i < n; ++i) {
        r.value += rows[i];
        const double s = out.strength[i];
        const auto p = out.p_hat.row(i);
        const auto yi = y.row(i);
        double gp = 0.0;
        double var = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = -2.0 * (yi[j] - p[j]) + (1.0 - 2.0 * p[j]) / (s + 1.0);
            gp += g[j] * p[j];
            var += p[j] * (1.0 - p[j]);
        }
        const double var_term = var / ((s + 1.0) * (s + 1.0));
        auto dst = r.grad.row(i);
        for (std::size_t j = 0; j < k; ++j) dst[j] = ((g[j] - gp) / s - var_term) * inv_n;
    }
    r.value *= inv_n;
    return r;
}

bool is_one_hot(const Matrix& y) noexcept {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        int ones = 0;
        for (double v : y.row(i)) {
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                return false;
        }
        if (ones != 1) return false;
    }
    return true;
}

Matrix harden_labels(const Matrix& y) {
    Matrix out(y.rows(), y.cols());
    const auto idx = row_argmax(y);
    for (std::size_t i = 0; i < y.rows(); ++i) out(i, idx[i]) = 1.0;
    return out;
}

Matrix make_alpha_tilde(const Matrix& alpha, const Matrix& y) {
    require_same_shape(alpha, y, "make_alpha_tilde");
    if (!is_one_hot(y)) throw DomainError("make_alpha_tilde requires one-hot labels");
    Matrix out = alpha;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double yk = y.values()[k];
        out.values()[k] = yk + (1.0 - yk) * alpha.values()[k];
    }
    return out;
}

std::vector<double> kl_to_uniform_rows(const Matrix& alpha_tilde) {
    const double k = static_cast<double>(alpha_tilde.cols());
    const double ln_gamma_k = specfun::ln_gamma(k);
    std::vector<double> rows(alpha_tilde.rows());
    for (std::size_t i = 0; i < alpha_tilde.rows(); ++i) {
        const auto a = alpha_tilde.row(i);
        double s = 0.0;
        for (double v : a) {
            if (!(v > 0.0)) throw DomainError("kl_to_uniform requires positive parameters");
            s += v;
        }
        const double psi_s = specfun::digamma(s);
        double v = specfun::ln_gamma(s) - ln_gamma_k;
        for (double aj : a) v += -specfun::ln_gamma(aj) + (aj - 1.0) * (specfun::digamma(aj) - psi_s);
        rows[i] = v;
    }
    return rows;
}

LossGrad kl_to_uniform(const Matrix& alpha_tilde) {
    const auto rows = kl_to_uniform_rows(alpha_tilde);
    const std::size_t n = alpha_tilde.rows();
    LossGrad r{0.0, Matrix(n, alpha_tilde.cols())};
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double k = static_cast<double>(alpha_tilde.cols());
    // dKL/dalpha_j = (alpha_j - 1) psi'(alpha_j) - (S - K) psi'(S)
    for (std::size_t i = 0; i < n; ++i) {
        r.value += rows[i];
        const auto a = alpha_tilde.row(i);
        double s = 0.0;
        for (double v : a) s += v;
        const double common = (s - k) * specfun::trigamma(s);
        auto dst = r.grad.row(i);
        for (std::size_t j = 0; j < a.size(); ++j)
            dst[j] = ((a[j] - 1.0) * specfun::trigamma(a[j]) - common) * inv_n;
    }
    r.value *= inv_n;
    return r;
}

TotalLoss edl_total_loss(const EvidentialOutput& out, const Matrix& y, double lambda_t) {
    if (!(lambda_t >= 0.0 && lambda_t <= 1.0))
        throw DomainError("lambda_t must lie in [0, 1], got " + std::to_string(lambda_t));
    LossGrad base = edl_base_loss(out, y);
    const Matrix y_kl = is_one_hot(y) ? y : harden_labels(y);
    LossGrad kl = kl_to_uniform(make_alpha_tilde(out.alpha, y_kl));

    TotalLoss r;
    r.value.base = base.value;
    r.value.kl = kl.value;
    r.value.lambda_t = lambda_t;
    r.value.total = base.value + lambda_t * kl.value;
    r.grad = std::move(base.grad);
    // d alpha~ / d alpha = 1 - y, so the true class gets nothing through the KL path.
    for (std::size_t k = 0; k < r.grad.size(); ++k)
        r.grad.values()[k] += lambda_t * (1.0 - y_kl.values()[k]) * kl.grad.values()[k];
    if (!std::isfinite(r.value.total)) throw NumericError("edl_total_loss: non-finite loss");
    return r;
}

double lambda_schedule(std::size_t epoch, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("lambda must be non-negative");
    return std::min(1.0, static_cast<double>(epoch) * lambda);
}

LossGrad cross_entropy_loss(const Matrix& probs, const Matrix& y) {
    require_same_shape(probs, y, "cross_entropy_loss");
    const std::size_t n = probs.rows();
    LossGrad r{0.0, Matrix(n, probs.cols())};
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = probs.row(i);
        const auto yi = y.row(i);
        auto dst = r.grad.row(i);
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (yi[j] != 0.0) r.value -= yi[j] * std::log(std::max(p[j], kLogClamp));
            dst[j] = (p[j] - yi[j]) * inv_n;
        }
    }
    r.value *= inv_n;
    return r;
}

} // namespace tedl
