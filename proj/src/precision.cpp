#include "flhom/estimation.hpp"

#include <cmath>

namespace flhom {

double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw DomainError("log-log slope needs at least two (x, y) pairs");
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw DomainError("log-log slope needs positive values");
        }
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    if (!(sxx > 0.0)) {
        throw DomainError("log-log slope needs distinct x values");
    }
    return sxy / sxx;
}

PrecisionScan precision_scan(const ScanConfig& config, std::span<const double> acquisition_times,
                             std::size_t repeats, const PrecisionOptions& options)
{
    if (repeats < 2) {
        throw DomainError("precision scan needs at least 2 repeats per time");
    }
    if (acquisition_times.empty()) {
        throw DomainError("precision scan needs acquisition times");
    }
    config.validate();
    const auto points = static_cast<double>(config.delay_grid.size());
    FitOptions fit = options.fit;
    if (fit.irf_sigma == 0.0) {
        fit.irf_sigma = config.model.ref_sigma;
    }

    PrecisionScan out;
    const Rng root(config.rng_seed);
    for (std::size_t t = 0; t < acquisition_times.size(); ++t) {
        const double total = acquisition_times[t];
        if (!(total > 0.0)) {
            throw DomainError("acquisition times must be positive");
        }
        PrecisionRow row;
        row.total_time = total;
        double mean = 0.0;
        double m2 = 0.0;
        const Rng per_time = root.substream(t);
        for (std::size_t r = 0; r < repeats; ++r) {
            ScanConfig c = config;
            c.dwell_time = total / points;
            c.sub_exposure = options.sub_exposure < c.dwell_time ? options.sub_exposure : 0.0;
            c.rng_seed = per_time.substream(r).seed();
            try {
                const Trace trace = simulate_scan(c);
                const FitResult f = fit_trace(trace, options.method, fit);
                const double mu = f.params.lifetime_mu;
                ++row.fits;
                const double d = mu - mean;
                mean += d / static_cast<double>(row.fits);
                m2 += d * (mu - mean);
            } catch (const NumericalError&) {
                ++row.failures;
            } catch (const DomainError&) {
                ++row.failures;
            }
        }
        row.mean_mu = mean;
        row.sigma_mu = row.fits > 1 ? std::sqrt(m2 / static_cast<double>(row.fits - 1)) : 0.0;
        row.flagged = static_cast<double>(row.failures) > 0.2 * static_cast<double>(repeats);
        out.rows.push_back(row);
    }

    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& row : out.rows) {
        if (row.fits > 1 && row.sigma_mu > 0.0) {
            xs.push_back(row.total_time);
            ys.push_back(row.sigma_mu);
        }
    }
    out.loglog_slope = xs.size() >= 2 ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

} // namespace flhom
