#pragma once

#include <cmath>
#include <numbers>

namespace flhom {

// Model-level times are picoseconds throughout; conversions happen only at I/O.
inline constexpr double kFsPerPs = 1000.0;
inline constexpr double kPsPerNs = 1000.0;
inline constexpr double kPsPerSecond = 1e12;

// FWHM = 2 sqrt(2 ln 2) * sigma for a Gaussian.
inline const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);

inline double fwhm_from_sigma(double sigma) { return kFwhmPerSigma * sigma; }
inline double sigma_from_fwhm(double fwhm) { return fwhm / kFwhmPerSigma; }

} // namespace flhom
