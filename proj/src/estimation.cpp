#include "flhom/estimation.hpp"

#include "flhom/ensemble_sampler.hpp"
#include "flhom/io.hpp"
#include "flhom/levenberg_marquardt.hpp"
#include "flhom/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace flhom {

namespace {

constexpr std::size_t idx(Param p) { return static_cast<std::size_t>(p); }

double median_of(std::vector<double> v)
{
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    const double hi = v[m];
    if (v.size() % 2 == 1) {
        return hi;
    }
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

void require_normalized(const Trace& trace)
{
    trace.validate();
    if (!trace.is_normalized()) {
        throw DomainError("trace is not normalized");
    }
}

std::size_t argmin_index(const Trace& trace)
{
    return static_cast<std::size_t>(std::min_element(trace.normalized.begin(), trace.normalized.end()) -
                                    trace.normalized.begin());
}

double median_spacing(const Trace& trace)
{
    if (trace.size() < 2) {
        return 0.0;
    }
    std::vector<double> d(trace.size() - 1);
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        d[i] = trace.delay[i + 1] - trace.delay[i];
    }
    return median_of(std::move(d));
}

// Box transform: p = lo + (hi - lo) (sin u + 1) / 2, optionally in log space.
struct Transform {
    double lo;
    double hi;
    bool log_space;

    double a() const { return log_space ? std::log(lo) : lo; }
    double b() const { return log_space ? std::log(hi) : hi; }

    double to_param(double u) const
    {
        const double s = a() + (b() - a()) * 0.5 * (std::sin(u) + 1.0);
        return std::clamp(log_space ? std::exp(s) : s, lo, hi);
    }
    double derivative(double u) const
    {
        const double ds = (b() - a()) * 0.5 * std::cos(u);
        return log_space ? to_param(u) * ds : ds;
    }
    double to_internal(double p) const
    {
        // Keep the start off the flat points of the sine.
        const double s = log_space ? std::log(p) : p;
        double f = 2.0 * (s - a()) / (b() - a()) - 1.0;
        f = std::clamp(f, -0.999, 0.999);
        return std::asin(f);
    }
};

struct FreeLayout {
    std::vector<Param> params;
};

FreeLayout free_layout(const FitOptions& options)
{
    FreeLayout out;
    for (std::size_t k = 0; k < kParamCount; ++k) {
        if (options.free[k]) {
            out.params.push_back(static_cast<Param>(k));
        }
    }
    return out;
}

std::string format_params(const ModelParams& p)
{
    std::ostringstream s;
    s << "mu=" << format_double(p.lifetime_mu) << " sigma=" << format_double(p.ref_sigma)
      << " V=" << format_double(p.visibility) << " B=" << format_double(p.baseline)
      << " t0=" << format_double(p.delay_offset_t0);
    return s.str();
}

double chi2(const Trace& trace, const std::vector<double>& sd, const ModelParams& p, KernelKind kernel)
{
    double s = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double r = (dip_model(trace.delay[i], p, kernel) - trace.normalized[i]) / sd[i];
        s += r * r;
    }
    return s;
}

void fill_std_errors(FitResult& r)
{
    for (std::size_t k = 0; k < kParamCount; ++k) {
        r.std_errors[k] = std::sqrt(std::max(0.0, r.covariance(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
    }
}

} // namespace

FitMethod parse_fit_method(std::string_view name)
{
    if (name == "tail") {
        return FitMethod::Tail;
    }
    if (name == "nlls") {
        return FitMethod::Nlls;
    }
    if (name == "mcmc") {
        return FitMethod::Mcmc;
    }
    throw ConfigError("unknown fit method '" + std::string(name) + "' (expected tail, nlls or mcmc)");
}

std::string_view fit_method_name(FitMethod method)
{
    switch (method) {
    case FitMethod::Tail: return "tail";
    case FitMethod::Nlls: return "nlls";
    case FitMethod::Mcmc: return "mcmc";
    }
    return "?";
}

std::size_t FitOptions::free_count() const
{
    return static_cast<std::size_t>(std::count(free.begin(), free.end(), true));
}

void FitOptions::validate() const
{
    for (std::size_t k = 0; k < kParamCount; ++k) {
        if (bounds[k] && !(bounds[k]->lo < bounds[k]->hi)) {
            throw ConfigError("bounds for " + std::string(param_name(static_cast<Param>(k))) + " are not ordered");
        }
    }
    if (free_count() == 0) {
        throw ConfigError("at least one parameter must be free");
    }
    if (!(irf_sigma >= 0.0) || !std::isfinite(irf_sigma)) {
        throw ConfigError("irf_sigma must be finite and >= 0");
    }
    if (max_iterations == 0) {
        throw ConfigError("max_iterations must be positive");
    }
    if (!(tolerance > 0.0)) {
        throw ConfigError("tolerance must be positive");
    }
    if (tail_region && !(tail_region->first < tail_region->second)) {
        throw ConfigError("tail region is not ordered");
    }
    if (mcmc.walkers < 2 * free_count() || mcmc.walkers % 2 != 0) {
        throw ConfigError("mcmc walkers must be even and at least twice the number of free parameters");
    }
    if (mcmc.steps == 0) {
        throw ConfigError("mcmc steps must be positive");
    }
    if (!(mcmc.burn_in_fraction >= 0.0 && mcmc.burn_in_fraction < 1.0)) {
        throw ConfigError("mcmc burn-in fraction must lie in [0, 1)");
    }
    if (!(mcmc.stretch_scale > 1.0)) {
        throw ConfigError("mcmc stretch scale must exceed 1");
    }
    if (!(mcmc.init_ball > 0.0)) {
        throw ConfigError("mcmc init ball must be positive");
    }
}

double quartile_median(const Trace& trace, bool upper)
{
    require_normalized(trace);
    const std::size_t q = std::max<std::size_t>(1, trace.size() / 4);
    std::vector<double> v = upper ? std::vector<double>(trace.normalized.end() - static_cast<std::ptrdiff_t>(q),
                                                        trace.normalized.end())
                                  : std::vector<double>(trace.normalized.begin(),
                                                        trace.normalized.begin() + static_cast<std::ptrdiff_t>(q));
    return median_of(std::move(v));
}

double flat_level(const Trace& trace)
{
    // A slow tail can still depress the upper quartile; the larger quartile level is the flatter one.
    return std::max(quartile_median(trace, false), quartile_median(trace, true));
}

std::array<Bounds, kParamCount> resolve_bounds(const Trace& trace, const FitOptions& options)
{
    require_normalized(trace);
    const double span = std::max(trace.delay.back() - trace.delay.front(), 1e-9);
    const double ymax = *std::max_element(trace.normalized.begin(), trace.normalized.end());
    std::array<Bounds, kParamCount> b{};
    b[idx(Param::Mu)] = {1e-4 * span, 10.0 * span};
    b[idx(Param::Sigma)] = {0.0, std::max(span, 5.0 * options.irf_sigma)};
    b[idx(Param::Visibility)] = {0.0, 1.0};
    b[idx(Param::Baseline)] = {1e-6, 10.0 * std::max(ymax, 1e-6)};
    b[idx(Param::T0)] = {trace.delay.front() - 0.5 * span, trace.delay.back() + 0.5 * span};
    for (std::size_t k = 0; k < kParamCount; ++k) {
        if (options.bounds[k]) {
            b[k] = *options.bounds[k];
        }
    }
    if (!(b[idx(Param::Mu)].lo > 0.0)) {
        throw ConfigError("lifetime lower bound must be positive");
    }
    return b;
}

std::pair<double, double> default_tail_region(const Trace& trace, double t0, double irf_sigma, double baseline)
{
    require_normalized(trace);
    const double lo = t0 + std::max(2.0 * fwhm_from_sigma(irf_sigma), median_spacing(trace));
    const auto sd = normalized_sigma(trace);
    // Walk out from lo; the run ends at a non-positive argument or three consecutive points
    // under the 3-sd floor, so one noisy point does not truncate the region.
    double hi = lo;
    int misses = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace.delay[i] < lo) {
            continue;
        }
        const double arg = baseline - trace.normalized[i];
        if (!(arg > 0.0)) {
            break;
        }
        if (arg > 3.0 * sd[i]) {
            hi = trace.delay[i];
            misses = 0;
        } else if (++misses >= 3) {
            break;
        }
    }
    return {lo, hi};
}

FitResult tail_fit(const Trace& trace, double region_lo, double region_hi, const TailOptions& options)
{
    require_normalized(trace);
    if (!(region_lo < region_hi)) {
        throw DomainError("tail region is empty");
    }
    const double baseline = options.baseline.value_or(flat_level(trace));
    const double t0 = options.t0.value_or(trace.delay[argmin_index(trace)]);
    const auto sd = normalized_sigma(trace);

    std::vector<std::size_t> pts;
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace.delay[i] >= region_lo && trace.delay[i] <= region_hi) {
            if (baseline - trace.normalized[i] > 0.0) {
                pts.push_back(i);
            } else {
                bad.push_back(i);
            }
        }
    }
    if (!bad.empty()) {
        std::ostringstream s;
        s << "tail region has non-positive log arguments at points";
        for (std::size_t k = 0; k < std::min<std::size_t>(bad.size(), 20); ++k) {
            s << ' ' << bad[k] << " (" << format_double(trace.delay[bad[k]]) << " ps)";
        }
        if (bad.size() > 20) {
            s << " ... (" << bad.size() << " total)";
        }
        throw NumericalError(s.str());
    }
    if (pts.size() < 4) {
        throw NumericalError("tail region [" + format_double(region_lo) + ", " + format_double(region_hi) +
                             "] ps holds " + std::to_string(pts.size()) + " points; at least 4 are needed");
    }

    // Weighted regression of z = ln(B - y) on delay, var z = (sd / (B - y))^2. The second pass
    // takes B - y from the first-pass line so upward fluctuations do not earn extra weight.
    double slope = 0.0;
    double intercept = 0.0;
    double slope_var = 0.0;
    double rss = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> w(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const std::size_t i = pts[k];
            const double arg = pass == 0 ? baseline - trace.normalized[i]
                                         : std::exp(intercept + slope * trace.delay[i]);
            w[k] = arg * arg / (sd[i] * sd[i]);
        }
        double sw = 0, sx = 0, sz = 0;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            sw += w[k];
            sx += w[k] * trace.delay[pts[k]];
            sz += w[k] * std::log(baseline - trace.normalized[pts[k]]);
        }
        const double xm = sx / sw;
        const double zm = sz / sw;
        double cxx = 0, cxz = 0;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double dx = trace.delay[pts[k]] - xm;
            cxx += w[k] * dx * dx;
            cxz += w[k] * dx * (std::log(baseline - trace.normalized[pts[k]]) - zm);
        }
        if (!(cxx > 0.0)) {
            throw NumericalError("tail region has no delay spread");
        }
        slope = cxz / cxx;
        intercept = zm - slope * xm;
        slope_var = 1.0 / cxx;
        if (!(slope < 0.0)) {
            throw NumericalError("tail slope " + format_double(slope) + " /ps is not negative; no decay in region");
        }
        rss = 0.0;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const std::size_t i = pts[k];
            const double r = std::log(baseline - trace.normalized[i]) - (intercept + slope * trace.delay[i]);
            rss += w[k] * r * r;
        }
    }

    // An estimated baseline shifts every log argument at once; fold its sampling error into the slope.
    if (!options.baseline) {
        const std::size_t q = std::max<std::size_t>(1, trace.size() / 4);
        const bool upper = quartile_median(trace, true) >= quartile_median(trace, false);
        double var_mean = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
            const std::size_t i = upper ? trace.size() - 1 - k : k;
            var_mean += sd[i] * sd[i];
        }
        // Median of q normal values: pi/2 times the variance of their mean.
        const double var_b = std::numbers::pi / 2.0 * var_mean / static_cast<double>(q * q);
        double sw = 0, sx = 0;
        std::vector<double> w(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double arg = std::exp(intercept + slope * trace.delay[pts[k]]);
            w[k] = arg * arg / (sd[pts[k]] * sd[pts[k]]);
            sw += w[k];
            sx += w[k] * trace.delay[pts[k]];
        }
        const double xm = sx / sw;
        double cxx = 0, cxg = 0;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double dx = trace.delay[pts[k]] - xm;
            cxx += w[k] * dx * dx;
            cxg += w[k] * dx / (baseline - trace.normalized[pts[k]]);
        }
        const double ds_db = cxg / cxx;
        slope_var += ds_db * ds_db * var_b;
    }

    FitResult out;
    out.method = FitMethod::Tail;
    out.kernel = KernelKind::Emg;
    const double mu = -1.0 / slope;
    const double s = options.irf_sigma;
    out.params.lifetime_mu = mu;
    out.params.ref_sigma = s;
    out.params.baseline = baseline;
    out.params.delay_offset_t0 = t0;
    out.params.visibility = std::clamp(std::exp(intercept - t0 / mu - s * s / (2.0 * mu * mu)) / baseline, 0.0, 1.0);
    out.free = {true, false, false, false, false};
    out.covariance(0, 0) = slope_var / (slope * slope * slope * slope);
    fill_std_errors(out);
    out.reduced_chi2 = rss / static_cast<double>(pts.size() - 2);
    out.iterations = 1;
    out.converged = true;
    TailDiagnostics d;
    d.slope = slope;
    d.slope_std = std::sqrt(slope_var);
    d.intercept = intercept;
    d.region_lo = region_lo;
    d.region_hi = region_hi;
    d.points = pts.size();
    out.tail = d;
    return out;
}

ModelParams initial_guess(const Trace& trace, const FitOptions& options)
{
    require_normalized(trace);
    const auto b = resolve_bounds(trace, options);
    const double baseline = flat_level(trace);
    const std::size_t imin = argmin_index(trace);
    const double t0 = trace.delay[imin];
    const double depth = std::clamp((baseline - trace.normalized[imin]) / baseline, 0.0, 1.0);

    ModelParams p;
    p.baseline = baseline;
    p.delay_offset_t0 = t0;
    p.ref_sigma = options.irf_sigma;
    p.visibility = depth;

    // Area under the dip approximates B V mu.
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        const double y0 = baseline - trace.normalized[i];
        const double y1 = baseline - trace.normalized[i + 1];
        area += 0.5 * (y0 + y1) * (trace.delay[i + 1] - trace.delay[i]);
    }
    double mu = area > 0.0 && depth > 0.0 ? area / (baseline * depth) : 0.0;

    try {
        const auto region = options.tail_region.value_or(default_tail_region(trace, t0, options.irf_sigma, baseline));
        TailOptions to;
        to.baseline = baseline;
        to.t0 = t0;
        to.irf_sigma = options.irf_sigma;
        const FitResult tf = tail_fit(trace, region.first, region.second, to);
        if (std::isfinite(tf.params.lifetime_mu) && tf.params.lifetime_mu > 0.0) {
            mu = tf.params.lifetime_mu;
        }
    } catch (const std::exception&) {
        // area estimate stands
    }
    const Bounds& mb = b[idx(Param::Mu)];
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        mu = std::sqrt(mb.lo * mb.hi);
    }
    p.lifetime_mu = std::clamp(mu, mb.lo, mb.hi);
    // For a sharp dip the peak depth of the EMG kernel is below 1; undo that so V starts near truth.
    if (options.kernel == KernelKind::Emg) {
        double kmax = 0.0;
        for (std::size_t i = 0; i < trace.size(); ++i) {
            kmax = std::max(kmax, dip_kernel(trace.delay[i] - t0, p.lifetime_mu, p.ref_sigma));
        }
        if (kmax > 0.05) {
            p.visibility = std::min(1.0, depth / kmax);
        }
    }
    auto a = to_array(p);
    for (std::size_t k = 0; k < kParamCount; ++k) {
        a[k] = std::clamp(a[k], b[k].lo, b[k].hi);
    }
    return from_array(a);
}

FitResult nlls_fit(const Trace& trace, const FitOptions& options)
{
    require_normalized(trace);
    options.validate();
    const auto bounds = resolve_bounds(trace, options);
    const auto layout = free_layout(options);
    const std::size_t nf = layout.params.size();
    const std::size_t n = trace.size();
    if (n <= nf) {
        throw NumericalError("trace has " + std::to_string(n) + " points for " + std::to_string(nf) +
                             " free parameters");
    }
    const auto sd = normalized_sigma(trace);

    ModelParams start = options.initial.value_or(initial_guess(trace, options));
    if (!options.free[idx(Param::Sigma)] && !options.initial) {
        start.ref_sigma = options.irf_sigma;
    }
    auto start_arr = to_array(start);
    for (std::size_t k = 0; k < kParamCount; ++k) {
        if (!std::isfinite(start_arr[k])) {
            throw DomainError("initial " + std::string(param_name(static_cast<Param>(k))) + " is not finite");
        }
        start_arr[k] = std::clamp(start_arr[k], bounds[k].lo, bounds[k].hi);
    }

    std::vector<Transform> tr;
    Eigen::VectorXd u0(static_cast<Eigen::Index>(nf));
    for (std::size_t j = 0; j < nf; ++j) {
        const std::size_t k = idx(layout.params[j]);
        tr.push_back({bounds[k].lo, bounds[k].hi, layout.params[j] == Param::Mu});
        u0[static_cast<Eigen::Index>(j)] = tr[j].to_internal(start_arr[k]);
    }

    auto params_of = [&](const Eigen::VectorXd& u) {
        auto a = start_arr;
        for (std::size_t j = 0; j < nf; ++j) {
            a[idx(layout.params[j])] = tr[j].to_param(u[static_cast<Eigen::Index>(j)]);
        }
        return from_array(a);
    };

    LmProblem problem;
    problem.residuals = [&](const Eigen::VectorXd& u) {
        const ModelParams p = params_of(u);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            r[static_cast<Eigen::Index>(i)] = (dip_model(trace.delay[i], p, options.kernel) - trace.normalized[i]) / sd[i];
        }
        return r;
    };
    problem.jacobian = [&](const Eigen::VectorXd& u) {
        const ModelParams p = params_of(u);
        Eigen::MatrixXd j(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = dip_model_gradient(trace.delay[i], p, options.kernel);
            for (std::size_t c = 0; c < nf; ++c) {
                j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                    g[idx(layout.params[c])] * tr[c].derivative(u[static_cast<Eigen::Index>(c)]) / sd[i];
            }
        }
        return j;
    };

    LmOptions lo;
    lo.max_iterations = options.max_iterations;
    lo.tolerance = options.tolerance;
    const LmResult lm = levenberg_marquardt(problem, u0, lo);

    FitResult out;
    out.method = FitMethod::Nlls;
    out.kernel = options.kernel;
    out.free = options.free;
    out.params = params_of(lm.x);
    out.iterations = lm.iterations;
    out.converged = lm.converged;
    out.reduced_chi2 = 2.0 * lm.cost / static_cast<double>(n - nf);

    if (!lm.converged) {
        throw FitError("least squares did not converge after " + std::to_string(lm.iterations) +
                           " iterations (" + lm.message + "); best " + format_params(out.params),
                       out);
    }

    // Covariance in natural parameters.
    Eigen::MatrixXd jn(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = dip_model_gradient(trace.delay[i], out.params, options.kernel);
        for (std::size_t c = 0; c < nf; ++c) {
            jn(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = g[idx(layout.params[c])] / sd[i];
        }
    }
    const Eigen::MatrixXd a = jn.transpose() * jn;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const double emax = eig.eigenvalues().maxCoeff();
    const double emin = eig.eigenvalues().minCoeff();
    if (!(emax > 0.0) || !(emin > 1e-13 * emax)) {
        std::string hint = options.free[idx(Param::Sigma)] ? "; try fixing sigma to the measured IRF" : "";
        throw FitError("normal equations are singular at the optimum" + hint, out);
    }
    const Eigen::MatrixXd cov = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                                eig.eigenvectors().transpose();
    for (std::size_t r = 0; r < nf; ++r) {
        for (std::size_t c = 0; c < nf; ++c) {
            out.covariance(static_cast<Eigen::Index>(idx(layout.params[r])),
                           static_cast<Eigen::Index>(idx(layout.params[c]))) =
                cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
    }
    fill_std_errors(out);
    return out;
}

FitResult mcmc_refine(const Trace& trace, const FitResult& init, const FitOptions& options)
{
    require_normalized(trace);
    options.validate();
    const auto bounds = resolve_bounds(trace, options);
    const auto layout = free_layout(options);
    const std::size_t nf = layout.params.size();
    const std::size_t n = trace.size();
    const auto sd = normalized_sigma(trace);
    const McmcOptions& mo = options.mcmc;

    // Walkers need a spread for every free parameter; a tail fit only supplies mu.
    FitResult start = init;
    bool spread_known = true;
    for (Param p : layout.params) {
        if (!(start.std_errors[idx(p)] > 0.0)) {
            spread_known = false;
        }
    }
    if (!spread_known) {
        FitOptions o = options;
        o.initial = init.params;
        try {
            start = nlls_fit(trace, o);
        } catch (const FitError& e) {
            start = e.best();
        }
    }

    const auto base = to_array(start.params);
    auto log_prob = [&](std::span<const double> x) {
        auto a = base;
        for (std::size_t j = 0; j < nf; ++j) {
            const std::size_t k = idx(layout.params[j]);
            if (!bounds[k].contains(x[j])) {
                return -std::numeric_limits<double>::infinity();
            }
            a[k] = x[j];
        }
        const ModelParams p = from_array(a);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = (dip_model(trace.delay[i], p, options.kernel) - trace.normalized[i]) / sd[i];
            s += r * r;
        }
        return -0.5 * s;
    };

    std::vector<double> centre(nf);
    std::vector<double> spread(nf);
    for (std::size_t j = 0; j < nf; ++j) {
        const std::size_t k = idx(layout.params[j]);
        centre[j] = std::clamp(base[k], bounds[k].lo, bounds[k].hi);
        const double se = start.std_errors[k];
        spread[j] = mo.init_ball * (se > 0.0 && std::isfinite(se) ? se : 1e-3 * std::max(std::abs(centre[j]), 1e-3));
    }
    {
        const double lp0 = log_prob(centre);
        if (!std::isfinite(lp0)) {
            std::ostringstream s;
            s << "likelihood is not finite at the starting point";
            for (std::size_t j = 0; j < nf; ++j) {
                s << ' ' << param_name(layout.params[j]) << '=' << format_double(centre[j]);
            }
            throw NumericalError(s.str());
        }
    }

    Rng rng(mo.seed);
    Rng ball = rng.substream(0);
    std::vector<std::vector<double>> walkers(mo.walkers, std::vector<double>(nf));
    for (auto& w : walkers) {
        for (int attempt = 0;; ++attempt) {
            for (std::size_t j = 0; j < nf; ++j) {
                w[j] = centre[j] + spread[j] * ball.normal();
            }
            if (std::isfinite(log_prob(w))) {
                break;
            }
            if (attempt > 1000) {
                w = centre;
                for (std::size_t j = 0; j < nf; ++j) {
                    const std::size_t k = idx(layout.params[j]);
                    w[j] = std::clamp(centre[j] + spread[j] * 1e-3 * ball.normal(), bounds[k].lo, bounds[k].hi);
                }
                break;
            }
        }
    }

    EnsembleOptions eo;
    eo.steps = mo.steps;
    eo.stretch_scale = mo.stretch_scale;
    eo.seed = rng.substream(1).seed();
    const EnsembleChain chain = run_ensemble(log_prob, walkers, eo);

    FitResult out;
    out.method = FitMethod::Mcmc;
    out.kernel = options.kernel;
    out.free = options.free;
    out.acceptance_fraction = chain.acceptance_fraction();
    out.iterations = mo.steps;
    out.warnings = start.warnings;

    const std::size_t burn = static_cast<std::size_t>(std::floor(mo.burn_in_fraction * static_cast<double>(mo.steps)));
    const std::size_t kept = mo.steps - burn;
    if (kept < 2) {
        throw ConfigError("mcmc keeps fewer than two steps after burn-in");
    }

    PosteriorSamples ps;
    ps.walkers = mo.walkers;
    ps.steps = kept;
    ps.first_step = burn;
    ps.values.resize(mo.walkers * kept * kParamCount);
    const std::size_t total = mo.walkers * kept;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nf));
    std::vector<double> mu_samples;
    mu_samples.reserve(total);
    for (std::size_t w = 0; w < mo.walkers; ++w) {
        for (std::size_t s = 0; s < kept; ++s) {
            auto a = base;
            for (std::size_t j = 0; j < nf; ++j) {
                const double v = chain.at(burn + s, w, j);
                a[idx(layout.params[j])] = v;
                mean[static_cast<Eigen::Index>(j)] += v;
            }
            std::copy(a.begin(), a.end(), ps.values.begin() + static_cast<std::ptrdiff_t>((w * kept + s) * kParamCount));
            mu_samples.push_back(a[idx(Param::Mu)]);
        }
    }
    mean /= static_cast<double>(total);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nf));
    for (std::size_t w = 0; w < mo.walkers; ++w) {
        for (std::size_t s = 0; s < kept; ++s) {
            Eigen::VectorXd d(static_cast<Eigen::Index>(nf));
            for (std::size_t j = 0; j < nf; ++j) {
                d[static_cast<Eigen::Index>(j)] = chain.at(burn + s, w, j) - mean[static_cast<Eigen::Index>(j)];
            }
            cov += d * d.transpose();
        }
    }
    cov /= static_cast<double>(total - 1);

    auto a = base;
    for (std::size_t j = 0; j < nf; ++j) {
        a[idx(layout.params[j])] = mean[static_cast<Eigen::Index>(j)];
        for (std::size_t c = 0; c < nf; ++c) {
            out.covariance(static_cast<Eigen::Index>(idx(layout.params[j])),
                           static_cast<Eigen::Index>(idx(layout.params[c]))) =
                cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
        }
    }
    out.params = from_array(a);
    fill_std_errors(out);

    std::sort(mu_samples.begin(), mu_samples.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(mu_samples.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, mu_samples.size() - 1);
        return mu_samples[lo] + (pos - static_cast<double>(lo)) * (mu_samples[hi] - mu_samples[lo]);
    };
    out.mu_interval95 = std::make_pair(quantile(0.025), quantile(0.975));
    out.posterior = std::move(ps);
    out.reduced_chi2 = chi2(trace, sd, out.params, options.kernel) / static_cast<double>(n > nf ? n - nf : 1);
    out.converged = true;

    if (out.acceptance_fraction < 0.05) {
        out.converged = false;
        throw FitError("mcmc acceptance fraction " + format_double(out.acceptance_fraction) +
                           " is below 0.05; re-parameterize or tighten the bounds",
                       out);
    }
    if (out.acceptance_fraction < 0.2 || out.acceptance_fraction > 0.5) {
        out.warnings.push_back("mcmc acceptance fraction " + format_double(out.acceptance_fraction) +
                               " outside [0.2, 0.5]");
    }
    return out;
}

FitResult fit_trace(const Trace& trace, FitMethod method, const FitOptions& options)
{
    require_normalized(trace);
    switch (method) {
    case FitMethod::Tail: {
        const double baseline = flat_level(trace);
        const double t0 = trace.delay[argmin_index(trace)];
        const auto region = options.tail_region.value_or(default_tail_region(trace, t0, options.irf_sigma, baseline));
        if (!(region.first < region.second)) {
            throw NumericalError("no decay above the noise floor after " + format_double(region.first) +
                                 " ps; tail region is empty");
        }
        TailOptions to;
        to.t0 = t0;
        to.irf_sigma = options.irf_sigma;
        FitResult first = tail_fit(trace, region.first, region.second, to);
        if (options.tail_region) {
            return first;
        }
        // Re-cut the far end where the fitted line (not the noisy data) meets the 3-sd floor.
        const auto sd = normalized_sigma(trace);
        const auto& d = *first.tail;
        double hi = region.first;
        for (std::size_t i = 0; i < trace.size(); ++i) {
            if (trace.delay[i] < region.first) {
                continue;
            }
            if (!(baseline - trace.normalized[i] > 0.0) ||
                !(std::exp(d.intercept + d.slope * trace.delay[i]) > 3.0 * sd[i])) {
                break;
            }
            hi = trace.delay[i];
        }
        if (hi == region.second) {
            return first;
        }
        try {
            return tail_fit(trace, region.first, hi, to);
        } catch (const NumericalError&) {
            return first;
        }
    }
    case FitMethod::Nlls:
        return nlls_fit(trace, options);
    case FitMethod::Mcmc: {
        const FitResult init = nlls_fit(trace, options);
        return mcmc_refine(trace, init, options);
    }
    }
    throw DomainError("unknown fit method");
}

} // namespace flhom
