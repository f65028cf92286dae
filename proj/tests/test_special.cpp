#include <doctest.h>

#include <cmath>
#include <vector>

#include "nhnn/special.hpp"

using namespace nhnn;

namespace {

// Student-t pdf, used by the numerical-integration oracle below.
double t_pdf(double x, int df) {
    const double v = df;
    return std::exp(std::lgamma((v + 1.0) / 2.0) - std::lgamma(v / 2.0)) /
           std::sqrt(v * M_PI) * std::pow(1.0 + x * x / v, -(v + 1.0) / 2.0);
}

}  // namespace

TEST_CASE("digamma matches reference values") {
    constexpr double euler = 0.57721566490153286;
    CHECK(digamma(1.0) == doctest::Approx(-euler).epsilon(1e-12));
    CHECK(digamma(0.5) == doctest::Approx(-euler - 2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(digamma(2.0) == doctest::Approx(1.0 - euler).epsilon(1e-12));
    // psi(10) = H_9 - euler
    double h9 = 0.0;
    for (int i = 1; i <= 9; ++i) h9 += 1.0 / i;
    CHECK(digamma(10.0) == doctest::Approx(h9 - euler).epsilon(1e-12));
}

TEST_CASE("digamma recurrence psi(x+1) = psi(x) + 1/x") {
    for (double x : {0.1, 0.37, 1.5, 3.25, 7.0, 42.5})
        CHECK(digamma(x + 1.0) == doctest::Approx(digamma(x) + 1.0 / x).epsilon(1e-12));
}

TEST_CASE("regularized incomplete beta identities") {
    for (double x : {0.0, 0.2, 0.5, 0.77, 1.0})
        CHECK(ibeta_reg(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    for (double a : {0.5, 1.0, 2.5, 7.0})
        CHECK(ibeta_reg(a, a, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
    // complement symmetry
    for (double x : {0.1, 0.3, 0.6, 0.9})
        CHECK(ibeta_reg(2.5, 4.0, x) + ibeta_reg(4.0, 2.5, 1.0 - x) ==
              doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("incomplete beta against direct integration") {
    // integrate t^(a-1)(1-t)^(b-1) by Simpson and normalize
    auto oracle = [](double a, double b, double x) {
        const int n = 100000;
        auto f = [&](double t) { return std::pow(t, a - 1.0) * std::pow(1.0 - t, b - 1.0); };
        auto simpson = [&](double hi) {
            const double h = hi / n;
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                const double t0 = i * h, t1 = t0 + h;
                s += (f(t0 + 1e-12) + 4.0 * f(0.5 * (t0 + t1)) + f(t1 - 1e-12)) * h / 6.0;
            }
            return s;
        };
        return simpson(x) / (std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)));
    };
    CHECK(ibeta_reg(2.0, 3.0, 0.4) == doctest::Approx(oracle(2.0, 3.0, 0.4)).epsilon(1e-7));
    CHECK(ibeta_reg(5.0, 1.5, 0.7) == doctest::Approx(oracle(5.0, 1.5, 0.7)).epsilon(1e-7));
}

TEST_CASE("student t two-sided p reference value") {
    CHECK(student_t_two_sided_p(3.4641, 2) == doctest::Approx(0.0742).epsilon(2e-3));
    CHECK(student_t_two_sided_p(0.0, 5) == doctest::Approx(1.0).epsilon(1e-12));
    // symmetry in the sign of t
    CHECK(student_t_two_sided_p(-1.7, 10) ==
          doctest::Approx(student_t_two_sided_p(1.7, 10)).epsilon(1e-12));
}

TEST_CASE("student t p matches numerical t-density integration") {
    // p = 1 - integral of the density over [-t, t], Simpson rule
    for (int df : {2, 5, 10, 30}) {
        for (double t : {0.5, 1.3, 2.2, 3.4641}) {
            const int n = 20000;
            const double h = 2.0 * t / n;
            double central = 0.0;
            for (int i = 0; i < n; ++i) {
                const double x0 = -t + i * h, x1 = x0 + h;
                central += (t_pdf(x0, df) + 4.0 * t_pdf(0.5 * (x0 + x1), df) + t_pdf(x1, df)) *
                           h / 6.0;
            }
            CHECK(student_t_two_sided_p(t, df) == doctest::Approx(1.0 - central).epsilon(1e-6));
        }
    }
}

TEST_CASE("log_sum_exp") {
    std::vector<double> v{0.0, 0.0, 0.0};
    CHECK(log_sum_exp(v.data(), 3) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    std::vector<double> big{1000.0, 1000.0};
    CHECK(log_sum_exp(big.data(), 2) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
    std::vector<double> mixed{-1.0, 2.0, 0.5};
    double direct = std::log(std::exp(-1.0) + std::exp(2.0) + std::exp(0.5));
    CHECK(log_sum_exp(mixed.data(), 3) == doctest::Approx(direct).epsilon(1e-12));
}
