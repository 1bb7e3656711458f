#include "doctest.h"

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include "tedl/errors.hpp"
#include "tedl/losses.hpp"
#include "tedl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace tedl;

namespace {

Matrix alpha_row(std::initializer_list<double> a) { return Matrix{a}; }

double kl_grad_norm(double a0, double a1) {
    const auto g = kl_to_uniform(alpha_row({a0, a1})).grad;
    return std::hypot(g(0, 0), g(0, 1));
}

// Random alpha in (e^-3, e^7): covers ELU-only values below 1 and large strengths.
Matrix random_alpha(Rng& rng, std::size_t n, std::size_t k) {
    Matrix a(n, k);
    for (double& v : a.values()) v = std::exp(rng.uniform(-3.0, 7.0));
    return a;
}

// Max relative error of `analytic` against central differences of `f` over the entries of `at`.
template <class F>
double fd_error(F&& f, const Matrix& at, const Matrix& analytic) {
    Matrix probe = at;
    const auto numeric = oracle::central_differences(
        [&](const std::vector<double>& v) {
            std::copy(v.begin(), v.end(), probe.values().begin());
            return f(probe);
        },
        std::vector<double>(at.values().begin(), at.values().end()), 1e-6);
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
        worst = std::max(worst, oracle::relative_error(analytic.values()[i], numeric[i]));
    return worst;
}

} // namespace

TEST_CASE("evidence_to_alpha examples") {
    auto z = evidence_to_alpha(Matrix{{0.0, 0.0}}, Head::relu_evidence);
    CHECK(z.alpha == Matrix{{1.0, 1.0}});
    CHECK(z.strength[0] == 2.0);
    CHECK(z.p_hat == Matrix{{0.5, 0.5}});
    CHECK(z.uncertainty[0] == 1.0);

    auto a = evidence_to_alpha(Matrix{{9.0, 0.0}}, Head::relu_evidence);
    CHECK(a.strength[0] == 11.0);
    CHECK(a.p_hat(0, 0) == doctest::Approx(10.0 / 11.0).epsilon(1e-15));
    CHECK(a.p_hat(0, 1) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
    CHECK(a.uncertainty[0] == doctest::Approx(2.0 / 11.0).epsilon(1e-15));

    auto e = evidence_to_alpha(Matrix{{-0.5, 1.0}}, Head::elu_evidence);
    CHECK(e.alpha == Matrix{{0.5, 2.0}});
    CHECK(e.strength[0] == 2.5);
    CHECK(e.uncertainty[0] == doctest::Approx(0.8).epsilon(1e-15));

    CHECK_THROWS_AS(evidence_to_alpha(Matrix{{-0.5, 1.0}}, Head::relu_evidence), DomainError);
    CHECK_THROWS_AS(evidence_to_alpha(Matrix{{-1.0, 1.0}}, Head::elu_evidence), DomainError);
    CHECK_THROWS_AS(evidence_to_alpha(Matrix{{0.0, 1.0}}, Head::softmax), DomainError);
}

TEST_CASE("evidential output invariants") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + rng.below(4);
        Matrix ev(5, k);
        const bool relu = trial % 2 == 0;
        for (double& v : ev.values()) v = relu ? std::max(0.0, 5.0 * rng.normal()) : std::max(-0.999, 3.0 * rng.normal());
        const auto out = evidence_to_alpha(ev, relu ? Head::relu_evidence : Head::elu_evidence);
        for (std::size_t i = 0; i < out.samples(); ++i) {
            double min_a = out.alpha(i, 0);
            double psum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                REQUIRE(out.alpha(i, j) > 0.0);
                min_a = std::min(min_a, out.alpha(i, j));
                psum += out.p_hat(i, j);
                if (relu) REQUIRE(out.alpha(i, j) >= 1.0);
            }
            REQUIRE(out.strength[i] >= static_cast<double>(k) * min_a);
            REQUIRE(std::abs(psum - 1.0) < 1e-12);
            REQUIRE(out.uncertainty[i] > 0.0);
            if (relu) REQUIRE(out.uncertainty[i] <= 1.0);
        }
    }
}

TEST_CASE("edl_base_loss examples") {
    const auto uniform = from_alpha(alpha_row({1.0, 1.0}));
    CHECK(edl_base_loss(uniform, Matrix{{1.0, 0.0}}).value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto skew = from_alpha(alpha_row({2.0, 1.0}));
    CHECK(edl_base_loss(skew, Matrix{{1.0, 0.0}}).value == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    for (double c : {0.01, 0.5, 1.0, 7.0, 1e4}) {
        const auto out = from_alpha(alpha_row({c, c}));
        CHECK(edl_base_loss(out, Matrix{{0.5, 0.5}}).value ==
              doctest::Approx(1.0 / (2.0 * (2.0 * c + 1.0))).epsilon(1e-13));
    }
    CHECK_THROWS_AS(edl_base_loss(uniform, Matrix{{0.7, 0.2}}), DomainError);
    CHECK_THROWS_AS(edl_base_loss(uniform, Matrix{{1.0, 0.0, 0.0}}), ShapeError);
}

TEST_CASE("both written forms of the expected squared error agree") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.below(5);
        const Matrix alpha = random_alpha(rng, 1, k);
        const Matrix y = oracle::random_labels(rng, 1, k, trial % 2 == 0);
        const double lib = edl_base_loss_rows(from_alpha(alpha), y)[0];
        const std::vector<double> a(alpha.values().begin(), alpha.values().end());
        const std::vector<double> yy(y.values().begin(), y.values().end());
        worst = std::max(worst, std::abs(lib - oracle::edl_base_first_form(a, yy)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("make_alpha_tilde examples") {
    CHECK(make_alpha_tilde(alpha_row({5.0, 3.0}), Matrix{{1.0, 0.0}}) == alpha_row({1.0, 3.0}));
    CHECK(make_alpha_tilde(alpha_row({1.0, 1.0}), Matrix{{0.0, 1.0}}) == alpha_row({1.0, 1.0}));
    CHECK(make_alpha_tilde(alpha_row({1.0, 1.0}), Matrix{{1.0, 0.0}}) == alpha_row({1.0, 1.0}));
    CHECK(make_alpha_tilde(alpha_row({2.0, 7.0}), Matrix{{0.0, 1.0}}) == alpha_row({2.0, 1.0}));
    CHECK_THROWS_AS(make_alpha_tilde(alpha_row({2.0, 7.0}), Matrix{{0.5, 0.5}}), DomainError);
}

TEST_CASE("kl_to_uniform examples") {
    CHECK(kl_to_uniform(alpha_row({1.0, 1.0})).value == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(kl_to_uniform(alpha_row({1.0, 1.0})).value) < 1e-12);
    CHECK(std::abs(kl_to_uniform(alpha_row({2.0, 1.0})).value - (std::log(2.0) - 0.5)) < 1e-13);
    CHECK(std::abs(kl_to_uniform(alpha_row({2.0, 1.0})).value - 0.1931) < 1e-4);
    const double kl10 = kl_to_uniform(alpha_row({10.0, 10.0})).value;
    CHECK(kl10 > 0.0);
    CHECK(kl10 > kl_to_uniform(alpha_row({2.0, 2.0})).value);
    CHECK(std::abs(kl10 - oracle::beta_kl_by_quadrature(10.0, 10.0)) < 1e-6);
    CHECK_THROWS_AS(kl_to_uniform(alpha_row({0.0, 1.0})), DomainError);
}

TEST_CASE("kl_to_uniform matches numerical integration of the Beta density") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = rng.uniform(0.5, 20.0);
        const double b = rng.uniform(0.5, 20.0);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(std::abs(kl_to_uniform(alpha_row({a, b})).value - oracle::beta_kl_by_quadrature(a, b)) < 1e-6);
    }
}

TEST_CASE("kl_to_uniform is nonnegative and zero only at the all-ones vector") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.below(5);
        const Matrix a = random_alpha(rng, 1, k);
        REQUIRE(kl_to_uniform(a).value > 0.0);
    }
    for (std::size_t k = 2; k < 8; ++k) CHECK(std::abs(kl_to_uniform(Matrix(1, k, 1.0)).value) < 1e-12);
}

TEST_CASE("KL gradient: bounded as one parameter grows, unbounded as one shrinks") {
    // With the other parameter fixed at 1 the gradient tends to (0, -1) as a0 grows.
    CHECK(std::abs(kl_grad_norm(1e4, 1.0) - 1.0) < 1e-3);
    CHECK(std::abs(kl_grad_norm(1e6, 1.0) - 1.0) < 1e-5);
    CHECK(kl_grad_norm(1e4, 1.0) / kl_grad_norm(10.0, 1.0) < 2.0);
    // Toward zero the gradient grows like 1/a^2.
    CHECK(kl_grad_norm(1.0, 1e-2) / kl_grad_norm(1.0, 1e-1) > 10.0);
    CHECK(kl_grad_norm(1.0, 1e-3) > 1e5);
}

TEST_CASE("edl_total_loss examples") {
    const Matrix y{{1.0, 0.0}};
    const auto out53 = from_alpha(alpha_row({5.0, 3.0}));
    const auto zero = edl_total_loss(out53, y, 0.0);
    CHECK(zero.value.total == edl_base_loss(out53, y).value);
    CHECK(zero.grad == edl_base_loss(out53, y).grad);

    const auto uniform = edl_total_loss(from_alpha(alpha_row({1.0, 1.0})), y, 1.0);
    CHECK(uniform.value.total == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(uniform.value.kl == doctest::Approx(0.0));

    const auto half = edl_total_loss(out53, y, 0.5);
    const double expected = oracle::edl_base_first_form({5.0, 3.0}, {1.0, 0.0}) +
                            0.5 * oracle::beta_kl_by_quadrature(1.0, 3.0);
    CHECK(std::abs(half.value.total - expected) < 1e-6);
    // The true-class parameter gets no gradient through the KL path.
    CHECK(half.grad(0, 0) == edl_base_loss(out53, y).grad(0, 0));
    CHECK(std::abs(half.value.total - (half.value.base + half.value.lambda_t * half.value.kl)) < 1e-12);

    CHECK_THROWS_AS(edl_total_loss(out53, y, 1.5), DomainError);
    CHECK_THROWS_AS(edl_total_loss(out53, y, -0.1), DomainError);
}

TEST_CASE("total loss is affine in lambda_t with slope kl") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 2 + rng.below(3);
        const auto out = from_alpha(random_alpha(rng, 4, k));
        const Matrix y = oracle::random_labels(rng, 4, k, false);
        const auto l0 = edl_total_loss(out, y, 0.0).value;
        for (double t : {0.25, 0.6, 1.0}) {
            const auto lt = edl_total_loss(out, y, t).value;
            REQUIRE(std::abs(lt.total - (l0.total + t * l0.kl)) < 1e-12 * std::max(1.0, lt.total));
        }
    }
}

TEST_CASE("soft labels are hardened for the KL term only") {
    const auto out = from_alpha(alpha_row({4.0, 2.0}));
    const Matrix soft{{0.3, 0.7}};
    const auto total = edl_total_loss(out, soft, 1.0);
    CHECK(total.value.base == edl_base_loss(out, soft).value);
    CHECK(total.value.kl == kl_to_uniform(alpha_row({4.0, 1.0})).value);
    CHECK(harden_labels(soft) == Matrix{{0.0, 1.0}});
    CHECK(is_one_hot(Matrix{{0.0, 1.0}}));
    CHECK_FALSE(is_one_hot(soft));
}

TEST_CASE("lambda_schedule") {
    CHECK(lambda_schedule(0, 0.1) == 0.0);
    CHECK(lambda_schedule(5, 0.1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(lambda_schedule(12, 0.1) == 1.0);
    CHECK(lambda_schedule(3, 0.0) == 0.0);
    for (std::size_t t = 0; t < 30; ++t) CHECK(lambda_schedule(t, 0.25) == std::min(1.0, t * 0.25));
}

TEST_CASE("cross_entropy_loss examples") {
    CHECK(cross_entropy_loss(apply_head(Head::softmax, Matrix{{0.0, 0.0}}), Matrix{{1.0, 0.0}}).value ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const Matrix y{{0.2, 0.3, 0.5}};
    const double entropy = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
    CHECK(cross_entropy_loss(y, y).value == doctest::Approx(entropy).epsilon(1e-14));
    CHECK(std::abs(cross_entropy_loss(apply_head(Head::softmax, Matrix{{4.0, 0.0}}), Matrix{{1.0, 0.0}}).value -
                   0.01814992791780978) < 1e-12);
    // The log clamp keeps a zero probability finite.
    CHECK(std::isfinite(cross_entropy_loss(Matrix{{1.0, 0.0}}, Matrix{{0.0, 1.0}}).value));
}

TEST_CASE("loss gradients with respect to their inputs match finite differences") {
    Rng rng(77);
    double base_worst = 0.0, kl_worst = 0.0, total_worst = 0.0, ce_worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t k = 2 + rng.below(4);
        const std::size_t n = 1 + rng.below(4);
        Matrix alpha(n, k);
        for (double& v : alpha.values()) v = std::exp(rng.uniform(-1.5, 3.5));
        const Matrix y = oracle::random_labels(rng, n, k, trial % 3 == 0);
        const double lt = rng.uniform();

        base_worst = std::max(base_worst, fd_error([&](const Matrix& a) { return edl_base_loss(from_alpha(a), y).value; },
                                                   alpha, edl_base_loss(from_alpha(alpha), y).grad));
        kl_worst = std::max(kl_worst, fd_error([&](const Matrix& a) { return kl_to_uniform(a).value; }, alpha,
                                               kl_to_uniform(alpha).grad));
        total_worst = std::max(total_worst,
                               fd_error([&](const Matrix& a) { return edl_total_loss(from_alpha(a), y, lt).value.total; },
                                        alpha, edl_total_loss(from_alpha(alpha), y, lt).grad));

        Matrix logits(n, k);
        for (double& v : logits.values()) v = 2.0 * rng.normal();
        ce_worst = std::max(ce_worst,
                            fd_error([&](const Matrix& z) { return cross_entropy_loss(apply_head(Head::softmax, z), y).value; },
                                     logits, cross_entropy_loss(apply_head(Head::softmax, logits), y).grad));
    }
    CHECK(base_worst < 1e-4);
    CHECK(kl_worst < 1e-4);
    CHECK(total_worst < 1e-4);
    CHECK(ce_worst < 1e-4);
}

TEST_CASE("loss gradients through random networks match finite differences") {
    for (auto kind : {oracle::LossKind::cross_entropy, oracle::LossKind::edl_base, oracle::LossKind::edl_total}) {
        const auto worst = oracle::worst_gradient_trial(kind, 100, 1000);
        CAPTURE(worst.description);
        CHECK(worst.max_rel_error < 1e-4);
    }
}
