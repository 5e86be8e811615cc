#include "doctest.h"

#include "flhom/errors.hpp"
#include "flhom/rheology.hpp"
#include "flhom/rng.hpp"
#include "flhom/units.hpp"
#include "oracles.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdlib>
#include <numeric>

using namespace flhom;

namespace {

std::vector<CalibrationPoint> exact_points(double k, double x, double rel_std = 0.0)
{
    std::vector<CalibrationPoint> pts;
    for (double eta : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0}) {
        const double mu = k * std::pow(eta, x);
        pts.push_back({eta, mu, rel_std * mu});
    }
    return pts;
}

double sd_of(const std::vector<double>& v)
{
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double s = 0.0;
    for (double a : v) {
        s += (a - m) * (a - m);
    }
    return std::sqrt(s / double(v.size() - 1));
}

} // namespace

TEST_CASE("law names")
{
    CHECK(parse_calibration_law("power-law") == CalibrationLaw::PowerLaw);
    CHECK(calibration_law_name(CalibrationLaw::MonotoneSpline) == "monotone-spline");
    CHECK_THROWS_AS(parse_calibration_law("cubic"), ConfigError);
}

TEST_CASE("exact power law is recovered")
{
    const auto pts = exact_points(7.0, 0.5);
    const auto cal = fit_calibration(pts);
    CHECK(std::abs(cal.k - 7.0) < 1e-9 * 7.0);
    CHECK(std::abs(cal.x - 0.5) < 1e-9);
    CHECK(cal.warnings.empty());
    CHECK(cal.reduced_chi2 < 1e-20);
}

TEST_CASE("forward and inverse are inverse")
{
    const auto cal = fit_calibration(exact_points(7.0, 0.5));
    CHECK(viscosity_from_lifetime(cal.k, 0.0, cal).eta == doctest::Approx(1.0).epsilon(1e-15));
    for (double eta : {1e-3, 0.37, 1.0, 42.0, 999.0}) {
        const double back = viscosity_from_lifetime(cal.lifetime_at(eta), 0.0, cal).eta;
        CHECK(std::abs(back / eta - 1.0) < 1e-12);
    }
    const auto spl = fit_calibration(exact_points(6.5, 0.3), CalibrationLaw::MonotoneSpline);
    for (double eta : {0.1, 1.0, 3.3, 70.0, 1000.0, 5000.0}) {
        const double back = viscosity_from_lifetime(spl.lifetime_at(eta), 0.0, spl).eta;
        CHECK(std::abs(back / eta - 1.0) < 1e-10);
    }
}

TEST_CASE("noisy calibration: exponent within 3 standard errors in 95 of 100 seeds")
{
    int inside = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(Rng(77).substream(s).seed());
        auto pts = exact_points(6.5, 0.2, 0.02);
        for (auto& p : pts) {
            p.mu *= 1.0 + 0.02 * rng.normal();
        }
        const auto cal = fit_calibration(pts);
        inside += std::abs(cal.x - 0.2) < 3.0 * cal.x_std();
    }
    CHECK(inside >= 95);
}

TEST_CASE("monotone when all pairwise slopes are positive")
{
    std::vector<CalibrationPoint> pts{{1, 5, 0}, {2, 5.5, 0}, {3, 9, 0}, {10, 9.2, 0}, {30, 20, 0}};
    for (auto law : {CalibrationLaw::PowerLaw, CalibrationLaw::MonotoneSpline}) {
        const auto cal = fit_calibration(pts, law);
        double prev = 0.0;
        for (double eta = 1.0; eta <= 30.0; eta += 0.05) {
            const double mu = cal.lifetime_at(eta);
            CHECK(mu > prev);
            prev = mu;
        }
    }
    // The spline interpolates the data.
    const auto spl = fit_calibration(pts, CalibrationLaw::MonotoneSpline);
    for (const auto& p : pts) {
        CHECK(spl.lifetime_at(p.eta) == doctest::Approx(p.mu).epsilon(1e-12));
    }
}

TEST_CASE("uncertainty propagation")
{
    SUBCASE("zero covariance: relative eta error is relative mu error over x")
    {
        auto cal = fit_calibration(exact_points(7.0, 0.5));
        cal.fit_covariance.setZero();
        const double mu = 12.0, mu_std = 0.3;
        const auto e = viscosity_from_lifetime(mu, mu_std, cal);
        CHECK(e.eta_std / e.eta == doctest::Approx((mu_std / mu) / 0.5).epsilon(1e-12));
        const double d = oracle::central_difference(
            [&](double m) { return viscosity_from_lifetime(m, 0.0, cal).eta; }, mu, 1e-6);
        CHECK(e.eta_std == doctest::Approx(std::abs(d) * mu_std).epsilon(1e-6));
    }
    SUBCASE("shipped calibration agrees with a Monte Carlo over the fit covariance")
    {
        const auto cal = fit_calibration_file(std::filesystem::path(FLHOM_SOURCE_DIR) / "data/fig5_calibration.csv");
        const Eigen::LLT<Eigen::Matrix2d> llt(cal.fit_covariance);
        const Eigen::Matrix2d l = llt.matrixL();
        for (double mu : {4.0, 8.0, 12.0}) {
            const double mu_std = 0.03 * mu;
            Rng rng(55);
            std::vector<double> etas;
            etas.reserve(100000);
            for (int i = 0; i < 100000; ++i) {
                const Eigen::Vector2d z(rng.normal(), rng.normal());
                const Eigen::Vector2d d = l * z;
                const double lnk = std::log(cal.k) + d[0];
                const double x = cal.x + d[1];
                const double m = mu + mu_std * rng.normal();
                etas.push_back(std::exp((std::log(m) - lnk) / x));
            }
            const auto e = viscosity_from_lifetime(mu, mu_std, cal);
            CHECK(std::abs(e.eta_std / sd_of(etas) - 1.0) < 0.1);
        }
    }
}

TEST_CASE("viscosity units only rescale k")
{
    const auto pts = exact_points(6.5, 0.17, 0.02);
    auto pa = pts;
    for (auto& p : pa) {
        p.eta *= 1e-3; // mPa s -> Pa s
    }
    const auto a = fit_calibration(pts);
    const auto b = fit_calibration(pa);
    CHECK(b.x == doctest::Approx(a.x).epsilon(1e-12));
    CHECK(viscosity_from_lifetime(9.0, 0.1, b).eta == doctest::Approx(1e-3 * viscosity_from_lifetime(9.0, 0.1, a).eta).epsilon(1e-10));
    CHECK(viscosity_from_lifetime(9.0, 0.1, b).eta_std ==
          doctest::Approx(1e-3 * viscosity_from_lifetime(9.0, 0.1, a).eta_std).epsilon(1e-8));
}

TEST_CASE("minimum resolvable viscosity")
{
    // Water-anchored shipped calibration: mu(1 mPa s) is about 6.5 ps.
    const auto cal = fit_calibration_file(std::filesystem::path(FLHOM_SOURCE_DIR) / "data/fig5_calibration.csv");
    CHECK(cal.lifetime_at(1.0) > 6.0);
    CHECK(cal.lifetime_at(1.0) < 7.0);
    CHECK(min_resolvable_viscosity(0.0, cal) == 0.0);
    double prev = 0.0;
    for (double s = 0.05; s < 3.0; s += 0.05) {
        const double e = min_resolvable_viscosity(s, cal);
        CHECK(e > prev);
        prev = e;
    }
    CHECK(default_resolution_multiplier() * sigma_from_fwhm(2.08) == doctest::Approx(2.8));
    const double eta_min = min_resolvable_viscosity(sigma_from_fwhm(2.08), cal);
    CHECK(eta_min < 1e-2);
    CHECK(eta_min > 1e-4);
    CHECK_THROWS_AS(min_resolvable_viscosity(-1.0, cal), DomainError);
    CHECK_THROWS_AS(min_resolvable_viscosity(1.0, cal, 0.0), DomainError);
}

TEST_CASE("extrapolation is flagged")
{
    const auto cal = fit_calibration(exact_points(6.5, 0.2));
    CHECK(!viscosity_from_lifetime(8.0, 0.1, cal).extrapolated);
    const auto e = viscosity_from_lifetime(1.0, 0.1, cal);
    CHECK(e.extrapolated);
    CHECK(e.warnings.size() == 1);
}

TEST_CASE("calibration errors")
{
    CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationPoint>{{1, 1, 0}, {2, 2, 0}}), DomainError);
    CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationPoint>{{1, 1, 0}, {2, 2, 0}, {-3, 3, 0}}), DomainError);
    CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationPoint>{{1, 1, 0.1}, {2, 2, 0}, {3, 3, 0}}), DomainError);
    CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationPoint>{{1, 3, 0}, {2, 2, 0}, {3, 1, 0}}), NumericalError);
    CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationPoint>{{1, 1, 0}, {2, 2, 0}, {3, 3, 0}},
                                    CalibrationLaw::MonotoneSpline),
                    DomainError);
    const auto narrow = fit_calibration(std::vector<CalibrationPoint>{{1, 1, 0}, {2, 1.2, 0}, {3, 1.3, 0}});
    CHECK(narrow.warnings.size() == 1);
    const auto cal = fit_calibration(exact_points(6.5, 0.2));
    CHECK_THROWS_AS(viscosity_from_lifetime(0.0, 0.0, cal), DomainError);
    CHECK_THROWS_AS(viscosity_from_lifetime(1.0, -1.0, cal), DomainError);
}

TEST_CASE("csv and text round trips")
{
    const auto pts = exact_points(6.5, 0.2, 0.02);
    const std::string csv = calibration_points_to_csv(pts);
    const auto back = calibration_points_from_csv(csv);
    REQUIRE(back.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(back[i].eta == pts[i].eta);
        CHECK(back[i].mu == pts[i].mu);
        CHECK(back[i].mu_std == pts[i].mu_std);
    }
    CHECK_THROWS_AS(calibration_points_from_csv("eta,mu\n1,2\n"), IoError);
    CHECK_THROWS_AS(calibration_points_from_csv(std::string(kCalibrationCsvHeader) + "\n1,x,3\n"), IoError);

    for (auto law : {CalibrationLaw::PowerLaw, CalibrationLaw::MonotoneSpline}) {
        auto cal = fit_calibration(pts, law);
        cal.provenance = {"cal.csv", "0123456789abcdef", "2024-01-01", "0.1.0"};
        const std::string text = calibration_to_text(cal);
        const auto re = calibration_from_text(text);
        CHECK(calibration_to_text(re) == text);
        CHECK(re.k == cal.k);
        CHECK(re.x == cal.x);
        CHECK(re.provenance.input_hash == cal.provenance.input_hash);
        for (double mu : {5.0, 9.0, 20.0}) {
            CHECK(viscosity_from_lifetime(mu, 0.1, re).eta == viscosity_from_lifetime(mu, 0.1, cal).eta);
        }
    }
    CHECK_THROWS_AS(calibration_from_text("format = other\n"), IoError);
    CHECK_THROWS_AS(calibration_from_text("format = flhom-calibration/1\nlaw = power-law\n"), IoError);
}

TEST_CASE("provenance date honours SOURCE_DATE_EPOCH")
{
    setenv("SOURCE_DATE_EPOCH", "86400", 1);
    CHECK(provenance_date() == "1970-01-02");
    unsetenv("SOURCE_DATE_EPOCH");
    CHECK(provenance_date().size() == 10);
}
