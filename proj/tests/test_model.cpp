#include "doctest.h"

#include "flhom/errors.hpp"
#include "flhom/model.hpp"
#include "flhom/rng.hpp"
#include "flhom/units.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace flhom;

TEST_CASE("fwhm and rms conversions invert each other")
{
    CHECK(kFwhmPerSigma == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0))).epsilon(1e-15));
    for (double s : {1e-3, 0.5, 2.08, 100.0}) {
        CHECK(sigma_from_fwhm(fwhm_from_sigma(s)) == doctest::Approx(s).epsilon(1e-15));
        CHECK(fwhm_from_sigma(sigma_from_fwhm(s)) == doctest::Approx(s).epsilon(1e-15));
    }
}

TEST_CASE("model params validation")
{
    ModelParams p;
    CHECK_NOTHROW(p.validate());
    p.lifetime_mu = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.ref_sigma = -1e-3;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.visibility = 1.5;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.baseline = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.delay_offset_t0 = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("fluorescence profile")
{
    SUBCASE("delta excitation is the bare exponential")
    {
        const std::vector<double> grid{-1.0, 0.0, 1.0, 2.0};
        const auto v = fluorescence_profile(DeltaPulse{}, 1.0, grid);
        CHECK(v[0] == 0.0);
        CHECK(v[2] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
        CHECK(v[3] == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
    }
    SUBCASE("narrow gaussian approaches the exponential")
    {
        const std::vector<double> grid{7.22};
        const auto v = fluorescence_profile(GaussianPulse{1e-4}, 7.22, grid);
        CHECK(v[0] == doctest::Approx(std::exp(-1.0) / 7.22).epsilon(1e-6));
    }
    SUBCASE("gaussian excitation matches trapezoid convolution on a 100x finer grid")
    {
        const double t = 1.0;
        const std::vector<double> grid{t};
        const auto v = fluorescence_profile(GaussianPulse{0.5}, 2.0, grid);
        // Grid spacing of the oracle: 100x finer than a 0.01 ps sampling grid.
        const double ref = oracle::gaussian_profile_trapezoid(t, 2.0, 0.5, 1e-4);
        CHECK(v[0] == doctest::Approx(ref).epsilon(1e-9));
    }
    SUBCASE("unit integral on a wide grid")
    {
        for (const PulseShape& shape : {PulseShape{DeltaPulse{}}, PulseShape{GaussianPulse{0.7}},
                                        PulseShape{TabulatedPulse{{-1.0, 0.0, 0.5, 1.0}, {0.0, 2.0, 1.0, 0.0}}}}) {
            const double mu = 1.3;
            std::vector<double> grid;
            for (double t = -10.0; t <= 25.0 * mu + 10.0; t += 1e-3) {
                grid.push_back(t);
            }
            const auto v = fluorescence_profile(shape, mu, grid);
            double area = 0.0;
            for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
                area += 0.5 * (v[i] + v[i + 1]) * (grid[i + 1] - grid[i]);
            }
            // The trapezoid rule loses up to half a 1e-3 ps bin at a step onset.
            CHECK(area == doctest::Approx(1.0).epsilon(1e-3));
        }
    }
    SUBCASE("tabulated excitation matches quadrature of its interpolant")
    {
        const TabulatedPulse tab{{-0.4, 0.0, 0.3, 1.0}, {0.0, 2.0, 1.5, 0.0}};
        const double mu = 0.8;
        const double t = 0.6;
        auto ex = [&](double u) {
            for (std::size_t k = 0; k + 1 < tab.time.size(); ++k) {
                if (u >= tab.time[k] && u <= tab.time[k + 1]) {
                    const double f = (u - tab.time[k]) / (tab.time[k + 1] - tab.time[k]);
                    return tab.intensity[k] + f * (tab.intensity[k + 1] - tab.intensity[k]);
                }
            }
            return 0.0;
        };
        double norm = 0.0;
        for (std::size_t k = 0; k + 1 < tab.time.size(); ++k) {
            norm += oracle::integrate(ex, tab.time[k], tab.time[k + 1]);
        }
        double conv = 0.0;
        const double edges[] = {-0.4, 0.0, 0.3, 0.6};
        for (int k = 0; k < 3; ++k) {
            conv += oracle::integrate([&](double u) { return ex(u) * std::exp(-(t - u) / mu) / mu; }, edges[k],
                                      edges[k + 1]);
        }
        const std::vector<double> grid{t};
        CHECK(fluorescence_profile(tab, mu, grid)[0] == doctest::Approx(conv / norm).epsilon(1e-10));
    }
    SUBCASE("errors")
    {
        const std::vector<double> grid{0.0, 1.0};
        CHECK_THROWS_AS(fluorescence_profile(DeltaPulse{}, 0.0, grid), DomainError);
        CHECK_THROWS_AS(fluorescence_profile(DeltaPulse{}, 1.0, std::vector<double>{}), DomainError);
        CHECK_THROWS_AS(fluorescence_profile(DeltaPulse{}, 1.0, std::vector<double>{1.0, 0.0}), DomainError);
        CHECK_THROWS_AS(fluorescence_profile(TabulatedPulse{{0.0, 1.0}, {-1.0, 1.0}}, 1.0, grid), DomainError);
        CHECK_THROWS_AS(fluorescence_profile(TabulatedPulse{{0.0, 0.0}, {1.0, 1.0}}, 1.0, grid), DomainError);
        CHECK_THROWS_AS(fluorescence_profile(TabulatedPulse{{0.0, 1.0}, {0.0, 0.0}}, 1.0, grid), DomainError);
    }
}

TEST_CASE("dip kernel examples")
{
    CHECK(dip_kernel(0.0, 1.0, 1e-4) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(std::abs(dip_kernel(1.0, 1.0, 1e-6) - std::exp(-1.0)) < 1e-6);
    CHECK(dip_kernel(2.0, 1.0, 0.5) == doctest::Approx(oracle::dip_kernel(2.0, 1.0, 0.5)).epsilon(1e-9));
    CHECK(dip_kernel(0.0, 1.0, 0.0) == 0.5);
    CHECK(dip_kernel(-1e-9, 1.0, 0.0) == 0.0);
    CHECK(dip_kernel(1.0, 1.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK_THROWS_AS(dip_kernel(std::numeric_limits<double>::quiet_NaN(), 1.0, 0.1), DomainError);
    CHECK_THROWS_AS(dip_kernel(std::numeric_limits<double>::infinity(), 1.0, 0.1), DomainError);
    CHECK_THROWS_AS(dip_kernel(0.0, 0.0, 0.1), DomainError);
    CHECK_THROWS_AS(dip_kernel(0.0, 1.0, -0.1), DomainError);
}

TEST_CASE("dip kernel matches quadrature convolution on random draws")
{
    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 300; ++i) {
        const double mu = std::exp(std::log(0.1) + rng.uniform() * std::log(1000.0));
        const double r = std::exp(std::log(1e-3) + rng.uniform() * std::log(3e3));
        const double s = r * mu;
        const double tau = -3.0 * s + rng.uniform() * (8.0 * mu + 6.0 * s);
        const double k = dip_kernel(tau, mu, s);
        const double ref = oracle::dip_kernel(tau, mu, s);
        worst = std::max(worst, std::abs(k - ref) / ref);
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("dip kernel stays finite and small far into the tail")
{
    for (double tau : {50.0, 200.0, 700.0}) {
        const double k = dip_kernel(tau, 1.0, 0.3);
        CHECK(std::isfinite(k));
        CHECK(k >= 0.0);
        CHECK(std::log(k) == doctest::Approx(0.045 - tau).epsilon(1e-12));
    }
    // Far before the dip the Gaussian tail dominates; the scaled form must not produce 0 * inf.
    const double k = dip_kernel(-30.0, 1.0, 1.0);
    CHECK(std::isfinite(k));
    CHECK(k >= 0.0);
    CHECK(k < 1e-190);
}

TEST_CASE("short-pulse limit reproduces the exponential tail")
{
    for (double mu : {0.5, 7.22, 65.0}) {
        double worst = 0.0;
        for (int i = 0; i <= 1000; ++i) {
            const double tau = mu * (0.1 + 4.9 * i / 1000.0);
            worst = std::max(worst, std::abs(dip_kernel(tau, mu, 1e-4 * mu) - std::exp(-tau / mu)));
        }
        CHECK(worst <= 1e-3);
    }
}

TEST_CASE("dip kernel is unimodal")
{
    for (double r : {0.01, 0.3, 1.0, 3.0}) {
        const double mu = 2.0;
        const double s = r * mu;
        int sign_changes = 0;
        double prev = dip_kernel(-6.0 * s, mu, s);
        int prev_sign = 1;
        for (int i = 1; i <= 4000; ++i) {
            const double tau = -6.0 * s + (6.0 * s + 10.0 * mu) * i / 4000.0;
            const double v = dip_kernel(tau, mu, s);
            const int sign = v > prev ? 1 : (v < prev ? -1 : prev_sign);
            if (sign != prev_sign) {
                ++sign_changes;
            }
            prev_sign = sign;
            prev = v;
        }
        CHECK(sign_changes == 1);
    }
}

TEST_CASE("field-overlap kernel matches direct overlap quadrature")
{
    for (double r : {0.05, 0.4, 1.0, 2.5}) {
        const double mu = 3.0;
        const double s = r * mu;
        for (double tau : {-1.0 * s, 0.0, 0.7 * mu, 3.0 * mu}) {
            const double v = field_overlap_kernel(tau, mu, s);
            CHECK(v == doctest::Approx(oracle::field_overlap(tau, mu, s)).epsilon(1e-8));
            CHECK(v <= 1.0);
            CHECK(v >= 0.0);
        }
    }
    CHECK(field_overlap_kernel(1.0, 1.0, 0.0) == 0.0);
}

TEST_CASE("dip model examples")
{
    ModelParams p;
    p.lifetime_mu = 7.22;
    p.ref_sigma = 1e-6;
    p.visibility = 0.5;
    p.baseline = 1.0;
    CHECK(dip_model(p.lifetime_mu, p) == doctest::Approx(1.0 - 0.5 * std::exp(-1.0)).epsilon(1e-9));
    CHECK(dip_model(1e4, p) == doctest::Approx(1.0));
    p.visibility = 0.0;
    for (double t : {-5.0, 0.0, 3.0}) {
        CHECK(dip_model(t, p) == 1.0);
    }
    p.visibility = 0.4;
    p.baseline = 2.0;
    p.ref_sigma = 1.0;
    for (double t = -10.0; t < 50.0; t += 0.37) {
        const double v = dip_model(t, p);
        CHECK(v >= p.baseline * (1.0 - p.visibility));
        CHECK(v <= p.baseline);
    }
}

TEST_CASE("dip model gradient matches central differences")
{
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        ModelParams p;
        p.lifetime_mu = 0.5 + 10.0 * rng.uniform();
        p.ref_sigma = 0.05 + 2.0 * rng.uniform();
        p.visibility = rng.uniform();
        p.baseline = 0.5 + rng.uniform();
        p.delay_offset_t0 = rng.uniform() - 0.5;
        const double tau = p.delay_offset_t0 - 2.0 * p.ref_sigma + rng.uniform() * 4.0 * p.lifetime_mu;
        for (KernelKind kind : {KernelKind::Emg, KernelKind::FieldOverlap}) {
            const auto g = dip_model_gradient(tau, p, kind);
            const auto a = to_array(p);
            for (std::size_t k = 0; k < kParamCount; ++k) {
                const double fd = oracle::central_difference(
                    [&](double x) {
                        auto b = a;
                        b[k] = x;
                        return dip_model(tau, from_array(b), kind);
                    },
                    a[k], 1e-5);
                const double scale = std::max(1e-6, std::abs(fd));
                // The field-overlap gradient is itself a central difference.
                CHECK(std::abs(g[k] - fd) / scale < (kind == KernelKind::Emg ? 1e-5 : 1e-4));
            }
        }
    }
}

TEST_CASE("visibility curve")
{
    SUBCASE("argmax near 0.7 on the reference grid and unimodal")
    {
        const auto c = visibility_curve(0.05, 5.0, 200);
        CHECK(c.peak_ratio >= 0.6);
        CHECK(c.peak_ratio <= 0.8);
        const auto peak = std::max_element(c.visibility.begin(), c.visibility.end()) - c.visibility.begin();
        for (long i = 1; i <= peak; ++i) {
            CHECK(c.visibility[static_cast<std::size_t>(i)] >= c.visibility[static_cast<std::size_t>(i - 1)]);
        }
        for (std::size_t i = static_cast<std::size_t>(peak) + 1; i < c.visibility.size(); ++i) {
            CHECK(c.visibility[i] <= c.visibility[i - 1]);
        }
        CHECK(*std::max_element(c.visibility.begin(), c.visibility.end()) <= 0.5 + 1e-12);
    }
    SUBCASE("matches the overlap oracle")
    {
        const std::vector<double> ratios{0.05, 0.3, 0.7, 1.5, 3.0};
        const auto c = visibility_curve(ratios);
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            CHECK(c.visibility[i] / c.scale == doctest::Approx(oracle::visibility_raw(ratios[i])).epsilon(1e-6));
        }
        CHECK(oracle::visibility_raw(0.7) / oracle::visibility_raw(3.0) > 1.0);
        CHECK(visibility_raw(0.7) / visibility_raw(3.0) > 1.0);
    }
    SUBCASE("vanishing overlap for very short pulses")
    {
        for (RatioConvention conv : {RatioConvention::Rms, RatioConvention::Fwhm}) {
            VisibilityOptions o;
            o.convention = conv;
            const auto c = visibility_curve(0.05, 5.0, 200, o);
            const double vmax = *std::max_element(c.visibility.begin(), c.visibility.end());
            const double ratio = visibility_raw(0.01, o) * c.scale / vmax;
            // Under the RMS convention the ratio is 0.06; see README.
            CHECK(ratio < (conv == RatioConvention::Rms ? 0.065 : 0.05));
        }
    }
    SUBCASE("scale invariance: V depends on sigma/mu only")
    {
        for (double r : {0.2, 0.7, 2.0}) {
            const double base = oracle::field_overlap(0.5 * r, 1.0, r);
            for (double k : {0.1, 10.0}) {
                CHECK(field_overlap_kernel(0.5 * r * k, k, r * k) == doctest::Approx(base).epsilon(1e-10));
            }
        }
    }
    SUBCASE("cap is configurable")
    {
        VisibilityOptions o;
        o.cap = 1.0;
        const auto c = visibility_curve(0.05, 5.0, 50, o);
        CHECK(*std::max_element(c.visibility.begin(), c.visibility.end()) <= 1.0 + 1e-12);
        CHECK(*std::max_element(c.visibility.begin(), c.visibility.end()) > 0.99);
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(visibility_curve(std::vector<double>{0.0}), DomainError);
        CHECK_THROWS_AS(visibility_curve(0.1, 1.0, 1), DomainError);
        CHECK_THROWS_AS(visibility_raw(-1.0), DomainError);
    }
}

TEST_CASE("snr law")
{
    CHECK(snr_coincidence(0.0) == 0.0);
    CHECK(snr_coincidence(4.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(snr_coincidence(1e6) == doctest::Approx(std::sqrt(1e6 / 2.0)).epsilon(1e-5));
    double prev_err = 1.0;
    for (double n : {1e3, 1e4, 1e6}) {
        const double err = std::abs(snr_coincidence(n) * std::sqrt(2.0) / std::sqrt(n) - 1.0);
        CHECK(err < prev_err);
        prev_err = err;
    }
    double prev = -1.0;
    for (double n = 0.0; n < 100.0; n += 0.5) {
        CHECK(snr_coincidence(n) > prev);
        prev = snr_coincidence(n);
    }
    CHECK_THROWS_AS(snr_coincidence(-1.0), DomainError);
    CHECK(snr_poisson(100.0) == 10.0);
}

TEST_CASE("kernel names")
{
    CHECK(parse_kernel("emg") == KernelKind::Emg);
    CHECK(parse_kernel("field-overlap") == KernelKind::FieldOverlap);
    CHECK(kernel_name(KernelKind::FieldOverlap) == "field-overlap");
    CHECK_THROWS_AS(parse_kernel("lorentz"), ConfigError);
}
