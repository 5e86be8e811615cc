#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace flhom {

/// Parameters of the normalized coincidence dip
///   C(tau) = baseline * (1 - visibility * K(tau - t0; mu, sigma)).
/// Times are picoseconds.
struct ModelParams {
    double lifetime_mu = 1.0;     // fluorescence lifetime, > 0
    double ref_sigma = 0.0;       // Gaussian RMS width of the reference intensity, >= 0
    double visibility = 0.0;      // in [0, 1]
    double baseline = 1.0;        // coincidence level far from the dip, > 0
    double delay_offset_t0 = 0.0; // dip center

    /// Throws DomainError if any invariant is violated.
    void validate() const;
};

inline constexpr std::size_t kParamCount = 5;

// Index order used by gradients, covariances and fit masks.
enum class Param : std::size_t { Mu = 0, Sigma = 1, Visibility = 2, Baseline = 3, T0 = 4 };

std::array<double, kParamCount> to_array(const ModelParams& p);
ModelParams from_array(const std::array<double, kParamCount>& a);
std::string_view param_name(Param p);

/// Kernel shape of the dip.
///  Emg: Gaussian (sigma) convolved with exp(-t/mu) step; reduces to exp(-tau/mu) as sigma -> 0.
///  FieldOverlap: squared overlap of normalized Gaussian and exponential field envelopes.
enum class KernelKind { Emg, FieldOverlap };

KernelKind parse_kernel(std::string_view name);
std::string_view kernel_name(KernelKind kind);

struct DeltaPulse {};
struct GaussianPulse {
    double sigma = 0.0;
};
/// Piecewise-linear intensity on a strictly increasing time grid.
struct TabulatedPulse {
    std::vector<double> time;
    std::vector<double> intensity;
};
using PulseShape = std::variant<DeltaPulse, GaussianPulse, TabulatedPulse>;

void validate(const PulseShape& shape);

/// Fluorescence intensity I_ex * (exp(-t/mu)/mu) sampled on `grid`, unit integral over the real line.
std::vector<double> fluorescence_profile(const PulseShape& excitation, double lifetime_mu,
                                         std::span<const double> grid);

/// EMG dip kernel, 0.5 * exp(s^2/(2 mu^2) - tau/mu) * erfc((s/mu - tau/s)/sqrt 2).
/// sigma == 0 gives exp(-tau/mu) for tau > 0, 0.5 at tau == 0 and 0 before.
double dip_kernel(double tau, double lifetime_mu, double ref_sigma);

/// Squared overlap of the Gaussian reference field (intensity RMS sigma) and the exponential
/// fluorescence field (intensity decay mu), both normalized. Peaks at tau >= 0, at most 1.
double field_overlap_kernel(double tau, double lifetime_mu, double ref_sigma);

double kernel_value(KernelKind kind, double tau, double lifetime_mu, double ref_sigma);

struct KernelGradient {
    double value = 0.0;
    double d_tau = 0.0;
    double d_mu = 0.0;
    double d_sigma = 0.0;
};

/// Analytic value and partial derivatives of dip_kernel.
KernelGradient dip_kernel_gradient(double tau, double lifetime_mu, double ref_sigma);

double dip_model(double tau, const ModelParams& params, KernelKind kind = KernelKind::Emg);

/// d dip_model / d params in Param order. Analytic for Emg, central differences otherwise.
std::array<double, kParamCount> dip_model_gradient(double tau, const ModelParams& params,
                                                   KernelKind kind = KernelKind::Emg);

// ---------------------------------------------------------------------------
// Visibility vs. reference pulse duration

/// How the pulse-duration / lifetime ratio is measured.
enum class RatioConvention { Rms, Fwhm };

struct VisibilityOptions {
    double cap = 0.5; // classical two-source limit; 1.0 for single-photon references
    RatioConvention convention = RatioConvention::Rms;
    KernelKind kernel = KernelKind::FieldOverlap;
};

struct VisibilityCurve {
    std::vector<double> ratio;
    std::vector<double> visibility;
    double peak_ratio = 0.0;   // argmax over the sampled ratios
    double scale = 0.0;        // cap / (global raw maximum)
};

/// Unscaled visibility at ratio r: maximum over delay of the kernel overlap.
/// FieldOverlap is evaluated by adaptive quadrature of the field-envelope overlap.
double visibility_raw(double ratio, const VisibilityOptions& options = {});

VisibilityCurve visibility_curve(std::span<const double> ratios, const VisibilityOptions& options = {});
VisibilityCurve visibility_curve(double ratio_min, double ratio_max, std::size_t n_points,
                                 const VisibilityOptions& options = {});

// ---------------------------------------------------------------------------

/// Coincidence-counting SNR, N / sqrt(1 + 2N).
double snr_coincidence(double n);

/// Direct-intensity (Poisson) SNR, sqrt(N).
double snr_poisson(double n);

} // namespace flhom
