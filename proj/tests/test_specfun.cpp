#include "doctest.h"

#include "tedl/errors.hpp"
#include "tedl/specfun.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <numbers>
#include <vector>

using namespace tedl::specfun;

namespace {

// Log-spaced grid over [lo, hi].
std::vector<double> log_grid(double lo, double hi, int points) {
    std::vector<double> xs;
    for (int i = 0; i < points; ++i)
        xs.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
    return xs;
}

} // namespace

TEST_CASE("ln_gamma reference values") {
    CHECK(ln_gamma(1.0) == 0.0);
    CHECK(ln_gamma(2.0) == 0.0);
    // ln sqrt(pi)
    CHECK(ln_gamma(0.5) == doctest::Approx(0.57236494292470008707).epsilon(1e-15));
    CHECK(std::abs(ln_gamma(0.5) - 0.5 * std::log(std::numbers::pi)) < 1e-14);
    // Gamma(6) = 5! = 120
    CHECK(std::abs(ln_gamma(6.0) - std::log(120.0)) < 1e-13);
    CHECK(std::abs(ln_gamma(6.0) - 4.7874917427820459942) < 1e-13);
}

TEST_CASE("ln_gamma agrees with Boost.Math across [1e-3, 1e6]") {
    double worst = 0.0;
    for (double x : log_grid(1e-3, 1e6, 2000)) {
        const long double ref = boost::math::lgamma(static_cast<long double>(x));
        // Absolute error where |ln Gamma| <= 1, relative above (the value itself
        // is only representable to ~1e-16 relative).
        const double scale = std::max(1.0L, std::fabs(ref));
        worst = std::max(worst, static_cast<double>(std::fabs(ln_gamma(x) - ref) / scale));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("ln_gamma reflection identity") {
    for (double x = 1e-3; x <= 1.0 - 1e-3; x += 1e-3) {
        const double lhs = ln_gamma(x) + ln_gamma(1.0 - x);
        const double rhs = std::log(std::numbers::pi / std::sin(std::numbers::pi * x));
        REQUIRE(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("digamma reference values") {
    constexpr double euler_gamma = 0.57721566490153286061;
    CHECK(std::abs(digamma(1.0) + euler_gamma) < 1e-14);
    CHECK(std::abs(digamma(1.0) - (-0.5772156649)) < 1e-10);
    CHECK(std::abs(digamma(2.0) - digamma(1.0) - 1.0) < 1e-14);
    CHECK(std::abs(digamma(0.5) - (-euler_gamma - 2.0 * std::numbers::ln2)) < 1e-14);
    CHECK(std::abs(digamma(0.5) - (-1.9635100260)) < 1e-10);
}

TEST_CASE("digamma agrees with Boost.Math across [1e-3, 1e6]") {
    double worst = 0.0;
    for (double x : log_grid(1e-3, 1e6, 2000)) {
        const long double ref = boost::math::digamma(static_cast<long double>(x));
        worst = std::max(worst, static_cast<double>(std::fabs(digamma(x) - ref)));
    }
    // psi(1e-3) is about -1000, so a few ulps there are ~1e-13.
    CHECK(worst < 1e-10);
}

TEST_CASE("digamma recurrence and monotonicity") {
    for (double x = 0.01; x <= 100.0; x += 0.01)
        REQUIRE(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-10);
    double prev = digamma(1e-3);
    for (double x : log_grid(1e-3, 1e6, 5000)) {
        if (x == 1e-3) continue;
        const double v = digamma(x);
        REQUIRE(v > prev);
        prev = v;
    }
}

TEST_CASE("trigamma agrees with Boost.Math and its recurrence") {
    for (double x : log_grid(1e-3, 1e6, 500)) {
        const long double ref = boost::math::trigamma(static_cast<long double>(x));
        REQUIRE(std::fabs(trigamma(x) - ref) / ref < 1e-13);
    }
    for (double x = 0.05; x < 50.0; x += 0.05)
        REQUIRE(std::abs(trigamma(x) - trigamma(x + 1.0) - 1.0 / (x * x)) < 1e-10 * (1.0 + 1.0 / (x * x)));
}

TEST_CASE("special functions reject non-positive arguments") {
    CHECK_THROWS_AS(ln_gamma(0.0), tedl::DomainError);
    CHECK_THROWS_AS(ln_gamma(-1.5), tedl::DomainError);
    CHECK_THROWS_AS(digamma(0.0), tedl::DomainError);
    CHECK_THROWS_AS(digamma(-2.0), tedl::DomainError);
    CHECK_THROWS_AS(digamma(std::nan("")), tedl::DomainError);
    CHECK_THROWS_AS(trigamma(0.0), tedl::DomainError);
}
