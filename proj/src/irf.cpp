#include "flhom/estimation.hpp"

#include "flhom/io.hpp"
#include "flhom/levenberg_marquardt.hpp"
#include "flhom/units.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flhom {

std::vector<double> lowpass_zero_phase(std::span<const double> values, double cutoff_fraction,
                                       double* filter_sigma_samples)
{
    if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0)) {
        throw DomainError("low-pass cutoff must lie in (0, 1] of the Nyquist frequency");
    }
    if (values.empty()) {
        throw DomainError("cannot filter an empty series");
    }
    // |H(f)|^2 = exp(-4 pi^2 s^2 f^2) = 1/2 at f = cutoff_fraction / 2 cycles per sample.
    const double s = std::sqrt(std::numbers::ln2) / (std::numbers::pi * cutoff_fraction);
    if (filter_sigma_samples) {
        *filter_sigma_samples = s;
    }
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(8.0 * s));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double total = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const double w = std::exp(-0.5 * static_cast<double>(k * k) / (s * s));
        kernel[static_cast<std::size_t>(k + half)] = w;
        total += w;
    }
    for (double& w : kernel) {
        w /= total;
    }

    const auto n = static_cast<std::ptrdiff_t>(values.size());
    // Symmetric (half-sample) reflection at both ends.
    auto at = [&](std::ptrdiff_t i) {
        if (n == 1) {
            return values[0];
        }
        const std::ptrdiff_t period = 2 * n;
        i %= period;
        if (i < 0) {
            i += period;
        }
        return values[static_cast<std::size_t>(i < n ? i : period - 1 - i)];
    };
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) {
            acc += kernel[static_cast<std::size_t>(k + half)] * at(i + k);
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

IrfEstimate irf_from_autocorrelation(const Trace& trace, const IrfOptions& options)
{
    trace.validate();
    const std::size_t n = trace.size();
    if (n < 8) {
        throw DomainError("autocorrelation scan needs at least 8 points");
    }
    const double step = (trace.delay.back() - trace.delay.front()) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (std::abs(trace.delay[i + 1] - trace.delay[i] - step) > 1e-6 * step) {
            throw DomainError("autocorrelation scan must use a uniform delay grid");
        }
    }
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        raw[i] = trace.is_normalized() ? trace.normalized[i] : static_cast<double>(trace.coincidences[i]);
    }

    IrfEstimate est;
    double fs = 0.0;
    const std::vector<double> y = lowpass_zero_phase(raw, options.cutoff_fraction, &fs);
    est.filter_sigma = fs * step;
    est.cutoff_frequency = options.cutoff_fraction * 0.5 / step;

    std::vector<double> sorted = y;
    std::sort(sorted.begin(), sorted.end());
    const double floor_level = sorted[n / 2];
    const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double height = y[imax] - floor_level;

    // Noise of the filtered series, from the robust spread of what the filter removed.
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        resid[i] = raw[i] - y[i];
    }
    std::vector<double> absdev(n);
    std::vector<double> rs = resid;
    std::sort(rs.begin(), rs.end());
    const double rmed = rs[n / 2];
    for (std::size_t i = 0; i < n; ++i) {
        absdev[i] = std::abs(resid[i] - rmed);
    }
    std::sort(absdev.begin(), absdev.end());
    const double raw_noise = 1.4826 * absdev[n / 2];
    const double filtered_noise = raw_noise / std::sqrt(2.0 * std::sqrt(std::numbers::pi) * fs);
    if (!(height > 5.0 * filtered_noise) || !(height > 0.0)) {
        throw NumericalError("no autocorrelation peak found (height " + format_double(height) + ", noise " +
                             format_double(filtered_noise) + ")");
    }

    const double half_level = floor_level + 0.5 * height;
    std::size_t modes = 0;
    bool above = false;
    for (double v : y) {
        const bool a = v > half_level;
        if (a && !above) {
            ++modes;
        }
        above = a;
    }
    if (modes != 1) {
        throw NumericalError("autocorrelation is multimodal after filtering: " + std::to_string(modes) + " modes");
    }
    std::size_t lo = imax;
    std::size_t hi = imax;
    while (lo > 0 && y[lo - 1] > half_level) {
        --lo;
    }
    while (hi + 1 < n && y[hi + 1] > half_level) {
        ++hi;
    }
    const double width0 = std::max(step, (static_cast<double>(hi - lo) + 1.0) * step);

    // Gaussian + offset fit to the filtered envelope.
    Eigen::VectorXd p0(4);
    p0 << height, trace.delay[imax], width0 / kFwhmPerSigma, floor_level;
    LmProblem prob;
    prob.residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (trace.delay[i] - p[1]) / p[2];
            r[static_cast<Eigen::Index>(i)] = (p[0] * std::exp(-0.5 * x * x) + p[3] - y[i]) / height;
        }
        return r;
    };
    prob.jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(static_cast<Eigen::Index>(n), 4);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (trace.delay[i] - p[1]) / p[2];
            const double g = std::exp(-0.5 * x * x);
            const auto r = static_cast<Eigen::Index>(i);
            j(r, 0) = g / height;
            j(r, 1) = p[0] * g * x / p[2] / height;
            j(r, 2) = p[0] * g * x * x / p[2] / height;
            j(r, 3) = 1.0 / height;
        }
        return j;
    };
    LmOptions lo_opts;
    lo_opts.max_iterations = 500;
    lo_opts.tolerance = 1e-15;
    const LmResult fit = levenberg_marquardt(prob, p0, lo_opts);
    if (!fit.converged || !fit.x.allFinite()) {
        throw NumericalError("Gaussian envelope fit did not converge (" + fit.message + ")");
    }
    const double s_obs = std::abs(fit.x[2]);
    const double var = s_obs * s_obs - est.filter_sigma * est.filter_sigma;
    if (!(var > 0.0)) {
        throw NumericalError("autocorrelation envelope is narrower than the low-pass filter; raise the cutoff");
    }
    est.amplitude = fit.x[0];
    est.center = fit.x[1];
    est.offset = fit.x[3];
    est.autocorr_sigma = std::sqrt(var);
    est.autocorr_fwhm = fwhm_from_sigma(est.autocorr_sigma);
    est.pulse_sigma = est.autocorr_sigma / std::numbers::sqrt2;
    est.pulse_fwhm = fwhm_from_sigma(est.pulse_sigma);
    return est;
}

} // namespace flhom
