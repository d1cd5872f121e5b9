#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pexp/pexp_dist.hpp"
#include "pexp/special.hpp"

using namespace pexp;

TEST(LogDensity, ClosedFormValues) {
    EXPECT_NEAR(PExp(1.0).log_density(0.0), -std::log(2.0), 1e-15);
    EXPECT_NEAR(PExp(2.0).log_density(0.0), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(PExp(2.0).log_density(1.0), -0.5 - 0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
}

TEST(LogDensity, NormalizerFormula) {
    for (double p : {1.0, 1.25, 1.5, 1.75, 2.0}) {
        EXPECT_NEAR(PExp(p).normalizer(), 2.0 * std::tgamma(1.0 / p) * std::pow(p, 1.0 / p - 1.0), 1e-13);
    }
}

TEST(LogDensity, RejectsShapeOutsideRange) {
    EXPECT_THROW(PExp(0.9), DomainError);
    EXPECT_THROW(PExp(2.1), DomainError);
}

TEST(LogDensity, IntegratesToOneByTrapezoid) {
    for (double p : {1.0, 1.3, 1.5, 2.0}) {
        const PExp d(p);
        const double h = 1e-4;
        const int m = static_cast<int>(40.0 / h);
        double s = 0.5 * (std::exp(d.log_density(-20.0)) + std::exp(d.log_density(20.0)));
        for (int i = 1; i < m; ++i) s += std::exp(d.log_density(-20.0 + i * h));
        EXPECT_NEAR(s * h, 1.0, 1e-8) << "p=" << p;
    }
}

TEST(LogDensity, LogConcaveOnRandomTriples) {
    Rng rng(5);
    for (double p : {1.0, 1.2, 1.7, 2.0}) {
        const PExp d(p);
        for (int k = 0; k < 1000; ++k) {
            const double a = 6.0 * rng.normal(), b = 6.0 * rng.normal();
            const double mid = d.log_density(0.5 * (a + b));
            EXPECT_GE(mid, 0.5 * (d.log_density(a) + d.log_density(b)) - 1e-12);
        }
    }
}

TEST(Cdf, Examples) {
    for (double p : {1.0, 1.4, 2.0}) EXPECT_EQ(PExp(p).cdf(0.0), 0.5);
    EXPECT_NEAR(PExp(1.0).cdf(1.0), 1.0 - std::exp(-1.0) / 2.0, 1e-15);
    EXPECT_NEAR(PExp(1.0).cdf(1.0), 0.8160603, 1e-7);
    EXPECT_NEAR(PExp(2.0).cdf(1.959964), 0.975, 1e-7);
}

TEST(Cdf, MatchesDirectQuadrature) {
    for (double p : {1.1, 1.5, 1.9})
        for (double x : {-3.0, -0.7, 0.2, 1.0, 2.5})
            EXPECT_NEAR(PExp(p).cdf(x), oracle::pexp_cdf_by_quadrature(x, p), 1e-11) << p << ' ' << x;
}

TEST(Cdf, StrictlyIncreasingAndSymmetric) {
    for (double p : {1.0, 1.5, 2.0}) {
        const PExp d(p);
        double prev = 0.0;
        for (double x = -8.0; x <= 8.0; x += 0.05) {
            const double F = d.cdf(x);
            EXPECT_GT(F, prev);
            prev = F;
            EXPECT_NEAR(F + d.cdf(-x), 1.0, 1e-15);
        }
    }
}

TEST(Cdf, ClosedFormBranchesMatchIncompleteGammaPath) {
    for (double x : {0.01, 0.3, 1.0, 2.0, 5.0, 9.0}) {
        const double lap = 0.5 + 0.5 * special::reg_lower_inc_gamma(1.0, x);
        EXPECT_NEAR(PExp(1.0).cdf(x), lap, 1e-10);
        EXPECT_NEAR(PExp(1.0).cdf(x), 0.5 + 0.5 * (1.0 - std::exp(-x)), 1e-15);
        const double gau = 0.5 + 0.5 * special::reg_lower_inc_gamma(0.5, x * x / 2.0);
        EXPECT_NEAR(PExp(2.0).cdf(x), gau, 1e-10);
        EXPECT_NEAR(PExp(2.0).cdf(x), oracle::std_normal_cdf(x), 1e-15);
    }
}

TEST(InvCdf, RejectsEndpoints) {
    const PExp d(1.5);
    EXPECT_THROW(d.inv_cdf(0.0), DomainError);
    EXPECT_THROW(d.inv_cdf(1.0), DomainError);
    EXPECT_THROW(d.inv_cdf(-0.1), DomainError);
}

// Each inverse is checked on the side where its argument keeps full
// precision; together they cover [-10, 10].
TEST(InvCdf, RoundTrip) {
    for (double p : {1.0, 1.25, 1.5, 1.75, 2.0}) {
        const PExp d(p);
        for (double x = -10.0; x <= 10.0; x += 0.01) {
            if (x <= 0.0 || d.ccdf(x) > 1e-7) {
                EXPECT_NEAR(d.inv_cdf(d.cdf(x)), x, 1e-9) << "p=" << p << " x=" << x;
            }
            if (x >= 0.0 || d.cdf(x) > 1e-7) {
                EXPECT_NEAR(d.inv_ccdf(d.ccdf(x)), x, 1e-9) << "p=" << p << " x=" << x;
            }
        }
    }
}

TEST(Sample, GaussianVariance) {
    Rng rng(1);
    const PExp d(2.0);
    double s = 0.0;
    const int N = 1000000;
    for (int i = 0; i < N; ++i) {
        const double x = d.sample(rng);
        s += x * x;
    }
    EXPECT_NEAR(s / N, 1.0, 0.01);
}

TEST(Sample, LaplaceVariance) {
    Rng rng(2);
    const PExp d(1.0);
    double s = 0.0;
    const int N = 1000000;
    for (int i = 0; i < N; ++i) {
        const double x = d.sample(rng);
        s += x * x;
    }
    EXPECT_NEAR(s / N, 2.0, 0.02);
}

TEST(Sample, AbsoluteMomentFormula) {
    EXPECT_NEAR(PExp(2.0).variance(), 1.0, 1e-14);
    EXPECT_NEAR(PExp(1.0).variance(), 2.0, 1e-14);
    // p = 1.5, k = 2: 1.5^{4/3} Gamma(2) / Gamma(2/3)
    EXPECT_NEAR(PExp(1.5).abs_moment(2.0), std::pow(1.5, 4.0 / 3.0) / std::tgamma(2.0 / 3.0), 1e-13);
}

TEST(Sample, KolmogorovSmirnovIntermediateShape) {
    Rng rng(3);
    const PExp d(1.5);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = d.sample(rng);
    const double D = oracle::ks_statistic(xs, [&](double x) { return d.cdf(x); });
    EXPECT_LT(D, oracle::ks_critical_1pct(xs.size()));
}

TEST(Special, IncompleteGammaExamples) {
    EXPECT_NEAR(special::reg_lower_inc_gamma(1.0, 1.0), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(special::reg_lower_inc_gamma(1.0, 1.0), 0.6321206, 1e-7);
    EXPECT_NEAR(special::reg_lower_inc_gamma(0.5, 0.5), 2.0 * oracle::std_normal_cdf(1.0) - 1.0, 1e-14);
    EXPECT_NEAR(special::reg_lower_inc_gamma(0.5, 0.5), 0.6826895, 1e-7);
    EXPECT_NEAR(special::log_gamma(0.5), 0.5 * std::log(std::numbers::pi), 1e-15);
    EXPECT_NEAR(special::log_gamma(0.5), 0.5723649, 1e-7);
}

TEST(Special, IncompleteGammaLimitsAndMonotonicity) {
    for (double a : {0.5, 1.0, 2.5, 10.0}) {
        EXPECT_EQ(special::reg_lower_inc_gamma(a, 0.0), 0.0);
        EXPECT_EQ(special::reg_lower_inc_gamma(a, INFINITY), 1.0);
        double prev = 0.0;
        for (double x = 0.05; x < 40.0; x *= 1.2) {
            const double P = special::reg_lower_inc_gamma(a, x);
            EXPECT_GE(P, prev);
            prev = P;
            EXPECT_NEAR(P + special::reg_upper_inc_gamma(a, x), 1.0, 1e-14);
        }
    }
    EXPECT_THROW(special::reg_lower_inc_gamma(0.0, 1.0), DomainError);
    EXPECT_THROW(special::reg_lower_inc_gamma(1.0, -1.0), DomainError);
    EXPECT_THROW(special::log_gamma(0.0), DomainError);
}

TEST(Special, IncompleteGammaAgainstSeriesOracle) {
    // P(a, x) = x^a e^{-x} sum_k x^k / Gamma(a + k + 1), summed in long double
    for (double a : {0.5, 0.8, 1.5, 3.0})
        for (double x : {0.1, 1.0, 3.0, 7.0}) {
            long double term = std::exp(static_cast<long double>(a) * std::log((long double)x) - x -
                                        std::lgamma((long double)a + 1));
            long double s = 0;
            for (int k = 0; k < 400; ++k) {
                s += term;
                term *= x / ((long double)a + k + 1);
            }
            EXPECT_NEAR(special::reg_lower_inc_gamma(a, x), static_cast<double>(s), 1e-14) << a << ' ' << x;
        }
}

TEST(Special, InverseIncompleteGamma) {
    for (double a : {0.5, 2.0 / 3.0, 1.0, 2.0})
        for (double u : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
            const double x = special::inv_reg_lower_inc_gamma(a, u);
            EXPECT_NEAR(special::reg_lower_inc_gamma(a, x), u, 1e-12) << a << ' ' << u;
        }
    EXPECT_THROW(special::inv_reg_lower_inc_gamma(1.0, 1.5), DomainError);
}

TEST(Special, NormalQuantile) {
    for (double p : {1e-300, 1e-20, 1e-5, 0.025, 0.3, 0.5, 0.8, 0.975, 1 - 1e-10}) {
        const double x = special::normal_quantile(p);
        const double back = x < 0 ? oracle::std_normal_cdf(x) : 1.0 - oracle::std_normal_cdf(-x);
        EXPECT_NEAR(back / p, 1.0, 1e-12) << p;
    }
    EXPECT_NEAR(special::normal_quantile(0.975), 1.959963984540054, 1e-13);
}
