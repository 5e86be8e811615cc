#include "flhom/model.hpp"

#include "flhom/errors.hpp"
#include "flhom/special.hpp"
#include "flhom/units.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace flhom {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
const double kInvSqrtPi = 1.0 / std::sqrt(std::numbers::pi);

void require_finite(double v, const char* what)
{
    if (!std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be finite");
    }
}

void require_kernel_args(double tau, double mu, double sigma)
{
    require_finite(tau, "delay");
    require_finite(mu, "lifetime");
    require_finite(sigma, "reference sigma");
    if (mu <= 0.0) {
        throw DomainError("lifetime must be positive, got " + std::to_string(mu));
    }
    if (sigma < 0.0) {
        throw DomainError("reference sigma must be non-negative, got " + std::to_string(sigma));
    }
}

void require_grid(std::span<const double> grid)
{
    if (grid.empty()) {
        throw DomainError("time grid is empty");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        require_finite(grid[i], "time grid value");
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw DomainError("time grid must be strictly increasing (index " + std::to_string(i) + ")");
        }
    }
}

// Unchecked EMG kernel; caller guarantees mu > 0, sigma >= 0, finite tau.
double emg(double tau, double mu, double sigma)
{
    if (sigma == 0.0) {
        if (tau > 0.0) {
            return std::exp(-tau / mu);
        }
        return tau == 0.0 ? 0.5 : 0.0;
    }
    const double b = (sigma / mu - tau / sigma) / kSqrt2;
    double k;
    if (b > 5.0) {
        // exp(a) * erfc(b) == exp(a - b^2) * erfcx(b) and a - b^2 == -tau^2 / (2 sigma^2).
        k = 0.5 * std::exp(-tau * tau / (2.0 * sigma * sigma)) * erfcx(b);
    } else {
        const double a = sigma * sigma / (2.0 * mu * mu) - tau / mu;
        k = 0.5 * std::exp(a) * std::erfc(b);
    }
    return std::clamp(k, 0.0, 1.0);
}

double field_overlap(double tau, double mu, double sigma)
{
    if (sigma == 0.0) {
        return 0.0;
    }
    // Normalized Gaussian field (RMS sqrt2*sigma) against exp(-t/(2 mu)) field; the overlap is an
    // EMG in those field widths times (8 pi)^(1/4) sqrt(sigma/mu).
    const double c = std::pow(8.0 * std::numbers::pi, 0.25) * std::sqrt(sigma / mu);
    const double v = c * emg(tau, 2.0 * mu, kSqrt2 * sigma);
    return std::min(v * v, 1.0);
}

// x + expm1(-x) without cancellation for small x.
double x_plus_expm1_neg(double x)
{
    if (x < 1e-2) {
        const double x2 = x * x;
        return x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0);
    }
    return x + std::expm1(-x);
}

std::vector<double> tabulated_profile(const TabulatedPulse& pulse, double mu, std::span<const double> grid)
{
    const auto& s = pulse.time;
    const auto& f = pulse.intensity;
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        area += 0.5 * (f[k] + f[k + 1]) * (s[k + 1] - s[k]);
    }

    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < s.size(); ++k) {
            if (s[k] >= t) {
                break;
            }
            const double u = std::min(t, s[k + 1]);
            const double h = u - s[k];
            const double slope = (f[k + 1] - f[k]) / (s[k + 1] - s[k]);
            const double eu = std::exp(-(t - u) / mu);
            // int_{s_k}^{u} (f_k + slope (s - s_k)) exp(-(t - s)/mu) ds
            const double e_diff = -eu * std::expm1(-h / mu); // E(u) - E(s_k)
            acc += f[k] * mu * e_diff + slope * mu * mu * eu * x_plus_expm1_neg(h / mu);
        }
        out[i] = acc / (mu * area);
    }
    return out;
}

} // namespace

void ModelParams::validate() const
{
    require_finite(lifetime_mu, "lifetime");
    require_finite(ref_sigma, "reference sigma");
    require_finite(visibility, "visibility");
    require_finite(baseline, "baseline");
    require_finite(delay_offset_t0, "delay offset");
    if (lifetime_mu <= 0.0) {
        throw DomainError("lifetime must be positive");
    }
    if (ref_sigma < 0.0) {
        throw DomainError("reference sigma must be non-negative");
    }
    if (visibility < 0.0 || visibility > 1.0) {
        throw DomainError("visibility must lie in [0, 1]");
    }
    if (baseline <= 0.0) {
        throw DomainError("baseline must be positive");
    }
}

std::array<double, kParamCount> to_array(const ModelParams& p)
{
    return {p.lifetime_mu, p.ref_sigma, p.visibility, p.baseline, p.delay_offset_t0};
}

ModelParams from_array(const std::array<double, kParamCount>& a)
{
    return ModelParams{a[0], a[1], a[2], a[3], a[4]};
}

std::string_view param_name(Param p)
{
    switch (p) {
    case Param::Mu: return "mu_ps";
    case Param::Sigma: return "sigma_ps";
    case Param::Visibility: return "visibility";
    case Param::Baseline: return "baseline";
    case Param::T0: return "t0_ps";
    }
    return "?";
}

KernelKind parse_kernel(std::string_view name)
{
    if (name == "emg") {
        return KernelKind::Emg;
    }
    if (name == "field-overlap") {
        return KernelKind::FieldOverlap;
    }
    throw ConfigError("unknown kernel '" + std::string(name) + "' (expected emg or field-overlap)");
}

std::string_view kernel_name(KernelKind kind)
{
    return kind == KernelKind::Emg ? "emg" : "field-overlap";
}

void validate(const PulseShape& shape)
{
    if (const auto* g = std::get_if<GaussianPulse>(&shape)) {
        require_finite(g->sigma, "excitation sigma");
        if (g->sigma < 0.0) {
            throw DomainError("excitation sigma must be non-negative");
        }
    } else if (const auto* t = std::get_if<TabulatedPulse>(&shape)) {
        if (t->time.size() != t->intensity.size() || t->time.size() < 2) {
            throw DomainError("tabulated pulse needs >= 2 points and matching time/intensity lengths");
        }
        require_grid(t->time);
        double area = 0.0;
        for (std::size_t k = 0; k < t->intensity.size(); ++k) {
            require_finite(t->intensity[k], "tabulated intensity");
            if (t->intensity[k] < 0.0) {
                throw DomainError("tabulated intensity must be non-negative (index " + std::to_string(k) + ")");
            }
            if (k + 1 < t->intensity.size()) {
                area += 0.5 * (t->intensity[k] + t->intensity[k + 1]) * (t->time[k + 1] - t->time[k]);
            }
        }
        if (!(area > 0.0)) {
            throw DomainError("tabulated pulse has zero integral");
        }
    }
}

std::vector<double> fluorescence_profile(const PulseShape& excitation, double lifetime_mu,
                                         std::span<const double> grid)
{
    require_finite(lifetime_mu, "lifetime");
    if (lifetime_mu <= 0.0) {
        throw DomainError("lifetime must be positive");
    }
    require_grid(grid);
    validate(excitation);

    if (const auto* tab = std::get_if<TabulatedPulse>(&excitation)) {
        return tabulated_profile(*tab, lifetime_mu, grid);
    }
    const double sigma = std::holds_alternative<GaussianPulse>(excitation)
                             ? std::get<GaussianPulse>(excitation).sigma
                             : 0.0;
    std::vector<double> out(grid.size());
    std::transform(grid.begin(), grid.end(), out.begin(),
                   [&](double t) { return emg(t, lifetime_mu, sigma) / lifetime_mu; });
    return out;
}

double dip_kernel(double tau, double lifetime_mu, double ref_sigma)
{
    require_kernel_args(tau, lifetime_mu, ref_sigma);
    return emg(tau, lifetime_mu, ref_sigma);
}

double field_overlap_kernel(double tau, double lifetime_mu, double ref_sigma)
{
    require_kernel_args(tau, lifetime_mu, ref_sigma);
    return field_overlap(tau, lifetime_mu, ref_sigma);
}

double kernel_value(KernelKind kind, double tau, double lifetime_mu, double ref_sigma)
{
    return kind == KernelKind::Emg ? dip_kernel(tau, lifetime_mu, ref_sigma)
                                   : field_overlap_kernel(tau, lifetime_mu, ref_sigma);
}

KernelGradient dip_kernel_gradient(double tau, double mu, double sigma)
{
    require_kernel_args(tau, mu, sigma);
    KernelGradient g;
    g.value = emg(tau, mu, sigma);
    if (sigma == 0.0) {
        g.d_tau = -g.value / mu;
        g.d_mu = tau / (mu * mu) * g.value;
        return g;
    }
    // K = 0.5 exp(a) erfc(b):  dK = K da - exp(-tau^2/(2 sigma^2))/sqrt(pi) db
    const double gauss = kInvSqrtPi * std::exp(-tau * tau / (2.0 * sigma * sigma));
    const double mu2 = mu * mu;
    const double da_dtau = -1.0 / mu;
    const double db_dtau = -1.0 / (sigma * kSqrt2);
    const double da_dmu = -sigma * sigma / (mu2 * mu) + tau / mu2;
    const double db_dmu = -sigma / (mu2 * kSqrt2);
    const double da_dsigma = sigma / mu2;
    const double db_dsigma = (1.0 / mu + tau / (sigma * sigma)) / kSqrt2;
    g.d_tau = g.value * da_dtau - gauss * db_dtau;
    g.d_mu = g.value * da_dmu - gauss * db_dmu;
    g.d_sigma = g.value * da_dsigma - gauss * db_dsigma;
    return g;
}

double dip_model(double tau, const ModelParams& params, KernelKind kind)
{
    params.validate();
    const double k = kernel_value(kind, tau - params.delay_offset_t0, params.lifetime_mu, params.ref_sigma);
    return params.baseline * (1.0 - params.visibility * k);
}

std::array<double, kParamCount> dip_model_gradient(double tau, const ModelParams& params, KernelKind kind)
{
    params.validate();
    const double x = tau - params.delay_offset_t0;
    const double bv = params.baseline * params.visibility;
    KernelGradient g;
    if (kind == KernelKind::Emg) {
        g = dip_kernel_gradient(x, params.lifetime_mu, params.ref_sigma);
    } else {
        auto f = [&](double t, double m, double s) { return field_overlap_kernel(t, m, s); };
        const double ht = 1e-6 * std::max(1.0, std::abs(x));
        const double hm = 1e-6 * params.lifetime_mu;
        const double hs = 1e-6 * std::max(params.ref_sigma, 1e-6);
        g.value = f(x, params.lifetime_mu, params.ref_sigma);
        g.d_tau = (f(x + ht, params.lifetime_mu, params.ref_sigma) - f(x - ht, params.lifetime_mu, params.ref_sigma)) / (2 * ht);
        g.d_mu = (f(x, params.lifetime_mu + hm, params.ref_sigma) - f(x, params.lifetime_mu - hm, params.ref_sigma)) / (2 * hm);
        const double s_lo = std::max(0.0, params.ref_sigma - hs);
        g.d_sigma = (f(x, params.lifetime_mu, params.ref_sigma + hs) - f(x, params.lifetime_mu, s_lo)) /
                    (params.ref_sigma + hs - s_lo);
    }
    return {
        -bv * g.d_mu,
        -bv * g.d_sigma,
        -params.baseline * g.value,
        1.0 - params.visibility * g.value,
        bv * g.d_tau,
    };
}

// ---------------------------------------------------------------------------

namespace {

double sigma_for_ratio(double ratio, RatioConvention convention)
{
    return convention == RatioConvention::Rms ? ratio : sigma_from_fwhm(ratio);
}

// <psi_ref(t) | psi_fl(t - tau)> for unit lifetime, by adaptive Gauss-Kronrod.
double overlap_amplitude(double tau, double sigma)
{
    const double mu = 1.0;
    const double field_sd = kSqrt2 * sigma;
    const double norm_ref = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
    const double norm_fl = 1.0 / std::sqrt(mu);
    const double reach = 12.0 * field_sd;
    const double lo = std::max(tau, -reach);
    const double hi = std::min(reach, tau + 90.0 * mu);
    if (!(hi > lo)) {
        return 0.0;
    }
    auto integrand = [&](double t) {
        return norm_ref * std::exp(-t * t / (4.0 * sigma * sigma)) * norm_fl * std::exp(-(t - tau) / (2.0 * mu));
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 20, 1e-13);
}

template <class F>
double maximize(F f, double lo, double hi)
{
    const auto r = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, lo, hi,
                                                           std::numeric_limits<double>::digits / 2);
    return -r.second;
}

double raw_at_sigma(double sigma, KernelKind kind)
{
    const double mu = 1.0;
    if (kind == KernelKind::Emg) {
        if (sigma == 0.0) {
            return 1.0;
        }
        return maximize([&](double t) { return emg(t, mu, sigma); }, -3.0 * sigma, mu + 3.0 * sigma);
    }
    // Overlap(tau) is proportional to an EMG in -tau with field widths, mode in [-(2mu + 3s), 3s].
    const double s = kSqrt2 * sigma;
    return maximize(
        [&](double t) {
            const double a = overlap_amplitude(t, sigma);
            return a * a;
        },
        -(2.0 * mu + 3.0 * s), 3.0 * s);
}

double global_raw_max(KernelKind kind)
{
    if (kind == KernelKind::Emg) {
        return 1.0; // supremum as sigma -> 0
    }
    static const double value = [] {
        // Dense log grid in sigma/mu, then Brent refinement around the best cell.
        constexpr int n = 200;
        const double lo = std::log(1e-2), hi = std::log(1e2);
        int best = 0;
        double best_v = -1.0;
        for (int i = 0; i < n; ++i) {
            const double v = raw_at_sigma(std::exp(lo + (hi - lo) * i / (n - 1)), KernelKind::FieldOverlap);
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        const double step = (hi - lo) / (n - 1);
        const double a = lo + step * std::max(best - 1, 0);
        const double b = lo + step * std::min(best + 1, n - 1);
        return std::max(best_v, maximize([](double ls) { return raw_at_sigma(std::exp(ls), KernelKind::FieldOverlap); }, a, b));
    }();
    return value;
}

} // namespace

double visibility_raw(double ratio, const VisibilityOptions& options)
{
    if (!std::isfinite(ratio) || ratio <= 0.0) {
        throw DomainError("pulse/lifetime ratio must be positive, got " + std::to_string(ratio));
    }
    return raw_at_sigma(sigma_for_ratio(ratio, options.convention), options.kernel);
}

VisibilityCurve visibility_curve(std::span<const double> ratios, const VisibilityOptions& options)
{
    if (ratios.size() < 2) {
        throw DomainError("visibility curve needs at least 2 points");
    }
    if (!(options.cap > 0.0) || options.cap > 1.0) {
        throw DomainError("visibility cap must lie in (0, 1]");
    }
    VisibilityCurve curve;
    curve.scale = options.cap / global_raw_max(options.kernel);
    curve.ratio.assign(ratios.begin(), ratios.end());
    curve.visibility.reserve(ratios.size());
    double best = -1.0;
    for (double r : ratios) {
        const double v = curve.scale * visibility_raw(r, options);
        if (v > best) {
            best = v;
            curve.peak_ratio = r;
        }
        curve.visibility.push_back(v);
    }
    return curve;
}

VisibilityCurve visibility_curve(double ratio_min, double ratio_max, std::size_t n_points,
                                 const VisibilityOptions& options)
{
    if (n_points < 2) {
        throw DomainError("visibility curve needs at least 2 points");
    }
    if (!(ratio_min > 0.0) || !(ratio_max > ratio_min)) {
        throw DomainError("ratio range must satisfy 0 < min < max");
    }
    std::vector<double> r(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        r[i] = ratio_min + (ratio_max - ratio_min) * static_cast<double>(i) / static_cast<double>(n_points - 1);
    }
    return visibility_curve(r, options);
}

double snr_coincidence(double n)
{
    if (!std::isfinite(n) || n < 0.0) {
        throw DomainError("expected coincidence count must be non-negative");
    }
    return n / std::sqrt(1.0 + 2.0 * n);
}

double snr_poisson(double n)
{
    if (!std::isfinite(n) || n < 0.0) {
        throw DomainError("expected count must be non-negative");
    }
    return std::sqrt(n);
}

} // namespace flhom
