#pragma once

#include "flhom/errors.hpp"
#include "flhom/model.hpp"
#include "flhom/photonsim.hpp"
#include "flhom/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flhom {

enum class FitMethod { Tail, Nlls, Mcmc };

FitMethod parse_fit_method(std::string_view name);
std::string_view fit_method_name(FitMethod method);

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

using ParamMatrix = Eigen::Matrix<double, kParamCount, kParamCount>;

struct McmcOptions {
    std::size_t walkers = 32;
    std::size_t steps = 2000;
    double burn_in_fraction = 0.25;
    double stretch_scale = 2.0;
    double init_ball = 0.1; // walker spread in units of the initial standard errors
    std::uint64_t seed = kDefaultSeed;
};

struct FitOptions {
    // Unset bounds are derived from the trace (see resolve_bounds).
    std::array<std::optional<Bounds>, kParamCount> bounds{};
    // mu, sigma, visibility, baseline, t0. Sigma is fixed to irf_sigma by default.
    std::array<bool, kParamCount> free{true, false, true, true, true};
    double irf_sigma = 0.0;                 // ps RMS; fixed sigma (or its start value when free)
    std::optional<ModelParams> initial;     // automatic initialization when empty
    std::size_t max_iterations = 200;
    double tolerance = 1e-10;               // relative cost change
    std::optional<std::pair<double, double>> tail_region;
    KernelKind kernel = KernelKind::Emg;
    McmcOptions mcmc;

    std::size_t free_count() const;
    /// Throws ConfigError.
    void validate() const;
};

struct TailDiagnostics {
    double slope = 0.0;          // d ln(baseline - y) / d tau, 1/ps
    double slope_std = 0.0;
    double intercept = 0.0;
    double region_lo = 0.0;
    double region_hi = 0.0;
    std::size_t points = 0;
};

/// Post-burn-in chain, laid out [walker][step][param] over all five parameters.
struct PosteriorSamples {
    std::size_t walkers = 0;
    std::size_t steps = 0;
    std::size_t first_step = 0; // index of the first retained step in the full chain
    std::vector<double> values;

    double at(std::size_t walker, std::size_t step, Param p) const
    {
        return values[(walker * steps + step) * kParamCount + static_cast<std::size_t>(p)];
    }
};

struct FitResult {
    ModelParams params;
    std::array<double, kParamCount> std_errors{};
    ParamMatrix covariance = ParamMatrix::Zero();
    std::array<bool, kParamCount> free{};
    std::optional<PosteriorSamples> posterior;
    std::optional<std::pair<double, double>> mu_interval95; // mcmc only
    std::optional<TailDiagnostics> tail;
    double reduced_chi2 = 0.0;
    FitMethod method = FitMethod::Nlls;
    KernelKind kernel = KernelKind::Emg;
    std::size_t iterations = 0;
    double acceptance_fraction = 0.0;
    bool converged = false;
    std::vector<std::string> warnings;
};

/// Thrown when an optimizer gives up; carries the best parameters found.
class FitError : public NumericalError {
public:
    FitError(const std::string& what, FitResult best) : NumericalError(what), best_(std::move(best)) {}
    const FitResult& best() const { return best_; }

private:
    FitResult best_;
};

// ---------------------------------------------------------------------------

/// Median of the normalized values over the lowest- or highest-delay quartile.
double quartile_median(const Trace& trace, bool upper);

/// Larger of the lower- and upper-quartile medians; the default baseline estimate.
double flat_level(const Trace& trace);

std::array<Bounds, kParamCount> resolve_bounds(const Trace& trace, const FitOptions& options);

/// Baseline from the flatter quartile, t0 from the minimum, mu from a tail fit
/// (area estimate if that fails), visibility from the dip depth.
ModelParams initial_guess(const Trace& trace, const FitOptions& options);

/// [t0 + 2 FWHM_irf, last point whose log argument exceeds 3 noise sd before the run ends].
/// The run ends at a non-positive argument or three consecutive points below that floor.
std::pair<double, double> default_tail_region(const Trace& trace, double t0, double irf_sigma, double baseline);

struct TailOptions {
    std::optional<double> baseline; // flat_level when empty
    std::optional<double> t0;       // delay of the minimum when empty
    double irf_sigma = 0.0;
};

/// Weighted linear regression of ln(baseline - y) on delay over [lo, hi]; mu = -1/slope.
FitResult tail_fit(const Trace& trace, double region_lo, double region_hi, const TailOptions& options = {});

/// Damped least squares of dip_model against the normalized trace with delta-method weights.
FitResult nlls_fit(const Trace& trace, const FitOptions& options = {});

/// Affine-invariant ensemble (stretch move) refinement around `init`.
FitResult mcmc_refine(const Trace& trace, const FitResult& init, const FitOptions& options = {});

/// tail | nlls | nlls followed by mcmc.
FitResult fit_trace(const Trace& trace, FitMethod method, const FitOptions& options = {});

// ---------------------------------------------------------------------------

struct IrfOptions {
    double cutoff_fraction = 0.1; // low-pass -3 dB point as a fraction of the grid Nyquist frequency
};

struct IrfEstimate {
    double autocorr_sigma = 0.0; // ps, envelope RMS after removing the filter broadening
    double autocorr_fwhm = 0.0;
    double pulse_sigma = 0.0;    // autocorrelation width / sqrt 2 (Gaussian pulse)
    double pulse_fwhm = 0.0;
    double center = 0.0;
    double amplitude = 0.0;
    double offset = 0.0;
    double cutoff_frequency = 0.0; // 1/ps
    double filter_sigma = 0.0;     // ps
};

/// Zero-phase Gaussian low-pass of an autocorrelation scan followed by a Gaussian peak fit.
IrfEstimate irf_from_autocorrelation(const Trace& trace, const IrfOptions& options = {});

/// Zero-phase Gaussian smoothing with the -3 dB point at cutoff_fraction * Nyquist.
/// Returns the filtered samples; `filter_sigma_samples` receives the kernel RMS in samples.
std::vector<double> lowpass_zero_phase(std::span<const double> values, double cutoff_fraction,
                                       double* filter_sigma_samples = nullptr);

// ---------------------------------------------------------------------------

struct PrecisionRow {
    double total_time = 0.0; // s over the whole scan
    double sigma_mu = 0.0;   // sample sd of fitted lifetimes
    double mean_mu = 0.0;
    std::size_t fits = 0;
    std::size_t failures = 0;
    bool flagged = false;    // > 20% failures
};

struct PrecisionScan {
    std::vector<PrecisionRow> rows;
    double loglog_slope = 0.0;
};

struct PrecisionOptions {
    FitMethod method = FitMethod::Nlls;
    FitOptions fit;
    double sub_exposure = 0.05; // s
};

/// Lifetime spread vs total acquisition time; each repeat sums `sub_exposure` exposures per point.
PrecisionScan precision_scan(const ScanConfig& config, std::span<const double> acquisition_times,
                             std::size_t repeats, const PrecisionOptions& options = {});

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

} // namespace flhom
