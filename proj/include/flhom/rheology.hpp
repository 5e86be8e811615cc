#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flhom {

/// One calibration measurement. Viscosity in mPa s, lifetimes in ps.
struct CalibrationPoint {
    double eta = 0.0;
    double mu = 0.0;
    double mu_std = 0.0; // 0 for unweighted data
};

/// Power law mu = k eta^x fitted in log-log space, or a monotone cubic (PCHIP) interpolant of
/// ln mu against ln eta. The spline continues linearly in log-log space beyond the data.
enum class CalibrationLaw { PowerLaw, MonotoneSpline };

CalibrationLaw parse_calibration_law(std::string_view name);
std::string_view calibration_law_name(CalibrationLaw law);

struct CalibrationProvenance {
    std::string input_file;
    std::string input_hash; // FNV-1a 64 of the input bytes
    std::string fit_date;   // YYYY-MM-DD, UTC
    std::string tool_version;
};

class LogLogSpline;

struct ViscosityCalibration {
    std::vector<CalibrationPoint> points; // sorted by eta
    CalibrationLaw law = CalibrationLaw::PowerLaw;
    double k = 1.0;               // ps at 1 mPa s
    double x = 1.0;               // exponent
    Eigen::Matrix2d fit_covariance = Eigen::Matrix2d::Zero(); // of (ln k, x)
    double reduced_chi2 = 0.0;
    std::vector<std::string> warnings;
    CalibrationProvenance provenance;
    std::shared_ptr<const LogLogSpline> spline; // MonotoneSpline only

    double k_std() const;
    double x_std() const;
    double eta_min() const { return points.front().eta; }
    double eta_max() const { return points.back().eta; }
    double mu_min() const;
    double mu_max() const;

    /// Forward law: predicted lifetime at viscosity eta (eta >= 0; eta == 0 gives 0 for the power law).
    double lifetime_at(double eta) const;
};

/// Weighted least squares of ln mu on ln eta (weights from mu_std / mu). Needs >= 3 points
/// (>= 4 for the spline law); throws DomainError on non-positive inputs and NumericalError when
/// the fitted exponent is not positive.
ViscosityCalibration fit_calibration(std::span<const CalibrationPoint> points,
                                     CalibrationLaw law = CalibrationLaw::PowerLaw);

struct ViscosityEstimate {
    double eta = 0.0;
    double eta_std = 0.0;
    bool extrapolated = false; // mu outside [0.5 mu_min, 2 mu_max]
    std::vector<std::string> warnings;
};

/// Inverse law with first-order propagation of the lifetime error and the calibration covariance.
ViscosityEstimate viscosity_from_lifetime(double mu, double mu_std, const ViscosityCalibration& cal);

/// Resolution-floor multiplier: 2.8 ps floor for a 2.08 ps FWHM reference pulse.
double default_resolution_multiplier();

/// Viscosity whose predicted lifetime equals c * irf_sigma.
double min_resolvable_viscosity(double irf_sigma, const ViscosityCalibration& cal,
                                double multiplier = default_resolution_multiplier());

// ---------------------------------------------------------------------------
// Files

inline constexpr std::string_view kCalibrationCsvHeader = "eta_mPas,mu_ps,mu_std_ps";

std::vector<CalibrationPoint> calibration_points_from_csv(std::string_view text,
                                                          const std::string& source = "<memory>");
std::string calibration_points_to_csv(std::span<const CalibrationPoint> points);

/// Reads the CSV, fits, and fills provenance (input hash, date, version).
ViscosityCalibration fit_calibration_file(const std::filesystem::path& csv,
                                          CalibrationLaw law = CalibrationLaw::PowerLaw);

/// Key-value text with provenance; round-trips through calibration_from_text.
std::string calibration_to_text(const ViscosityCalibration& cal);
ViscosityCalibration calibration_from_text(std::string_view text, const std::string& source = "<memory>");

/// Today's date (UTC, YYYY-MM-DD), or the date of SOURCE_DATE_EPOCH when that is set.
std::string provenance_date();

} // namespace flhom
