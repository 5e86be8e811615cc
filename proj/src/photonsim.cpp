#include "flhom/photonsim.hpp"

#include "flhom/errors.hpp"
#include "flhom/units.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace flhom {

namespace {

constexpr double kPileupWarnProbability = 0.01;

std::string fmt_double(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

std::uint64_t sample_counts(Rng& rng, double mean, double dwell, double sub_exposure)
{
    if (sub_exposure > 0.0 && dwell > sub_exposure) {
        const auto k = static_cast<std::uint64_t>(std::max(1.0, std::round(dwell / sub_exposure)));
        std::uint64_t total = 0;
        for (std::uint64_t j = 0; j < k; ++j) {
            total += rng.poisson(mean / static_cast<double>(k));
        }
        return total;
    }
    return rng.poisson(mean);
}

double autocorrelation_shape(double tau, const ScanConfig& c)
{
    const auto& a = c.autocorrelation;
    // Autocorrelation of a Gaussian pulse is sqrt(2) wider than the pulse itself.
    const double s = std::numbers::sqrt2 * sigma_from_fwhm(a.pulse_fwhm);
    const double x = tau - c.model.delay_offset_t0;
    const double env = std::exp(-x * x / (2.0 * s * s));
    const double fringe = a.fringe_period > 0.0
                              ? a.fringe_modulation * std::cos(2.0 * std::numbers::pi * x / a.fringe_period)
                              : 0.0;
    return 1.0 + a.contrast * env * (1.0 + fringe);
}

// Relative coincidence level at delay tau (1 far from the dip / envelope).
double relative_level(double tau, const ScanConfig& c)
{
    if (c.mode == ScanMode::Autocorrelation) {
        return autocorrelation_shape(tau, c);
    }
    return dip_model(tau, c.model, c.kernel) / c.model.baseline;
}

// Draws excitation times; the tabulated CDF is built once.
class ExcitationSampler {
public:
    explicit ExcitationSampler(const PulseShape& shape) : shape_(shape)
    {
        if (const auto* t = std::get_if<TabulatedPulse>(&shape_)) {
            cdf_.assign(t->time.size(), 0.0);
            for (std::size_t k = 1; k < t->time.size(); ++k) {
                cdf_[k] = cdf_[k - 1] + 0.5 * (t->intensity[k] + t->intensity[k - 1]) * (t->time[k] - t->time[k - 1]);
            }
        }
    }

    double operator()(Rng& rng) const
    {
        if (const auto* g = std::get_if<GaussianPulse>(&shape_)) {
            return g->sigma > 0.0 ? rng.normal(0.0, g->sigma) : 0.0;
        }
        const auto* t = std::get_if<TabulatedPulse>(&shape_);
        if (t == nullptr) {
            return 0.0;
        }
        // Inverse CDF of the piecewise-linear density.
        const double target = rng.uniform() * cdf_.back();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        std::size_t k = static_cast<std::size_t>(std::distance(cdf_.begin(), it));
        k = std::clamp<std::size_t>(k, 1, cdf_.size() - 1);
        const double f0 = t->intensity[k - 1];
        const double h = t->time[k] - t->time[k - 1];
        const double slope = (t->intensity[k] - f0) / h;
        const double need = target - cdf_[k - 1];
        double x;
        if (std::abs(slope) < 1e-300) {
            x = f0 > 0.0 ? need / f0 : 0.5 * h;
        } else {
            // f0 x + slope x^2 / 2 == need
            x = (-f0 + std::sqrt(std::max(0.0, f0 * f0 + 2.0 * slope * need))) / slope;
        }
        return t->time[k - 1] + std::clamp(x, 0.0, h);
    }

private:
    const PulseShape& shape_;
    std::vector<double> cdf_;
};

} // namespace

double ScanConfig::detection_probability(int channel) const
{
    return (channel == 1 ? singles_rate_1 : singles_rate_2) / rep_rate;
}

std::vector<std::string> ScanConfig::validate() const
{
    std::vector<std::string> warnings;
    auto finite_nonneg = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ConfigError(std::string(name) + " must be finite and non-negative");
        }
    };
    if (!std::isfinite(rep_rate) || rep_rate <= 0.0) {
        throw ConfigError("rep_rate must be positive");
    }
    finite_nonneg(singles_rate_1, "singles_rate_1");
    finite_nonneg(singles_rate_2, "singles_rate_2");
    finite_nonneg(coincidence_rate_baseline, "coincidence_rate");
    finite_nonneg(sub_exposure, "sub_exposure");
    finite_nonneg(detector_jitter_fwhm, "jitter_fwhm");
    for (int ch = 1; ch <= 2; ++ch) {
        const double p = detection_probability(ch);
        if (p > 1.0) {
            throw ConfigError("per-pulse detection probability on channel " + std::to_string(ch) + " is " +
                              fmt_double(p) + " > 1; pile-up regime is not representable");
        }
        if (p > kPileupWarnProbability) {
            warnings.push_back("per-pulse detection probability on channel " + std::to_string(ch) + " is " +
                               fmt_double(p) + ", above the 1% pile-up-free operating point");
        }
    }
    if (coincidence_rate_baseline / rep_rate > 1.0) {
        throw ConfigError("per-pulse coincidence probability exceeds 1");
    }
    if (!std::isfinite(dwell_time) || dwell_time <= 0.0) {
        throw ConfigError("dwell_time must be positive");
    }
    if (!std::isfinite(coincidence_window) || coincidence_window <= 0.0) {
        throw ConfigError("coincidence_window must be positive");
    }
    if (delay_grid.empty()) {
        throw ConfigError("delay grid is empty");
    }
    for (std::size_t i = 0; i < delay_grid.size(); ++i) {
        if (!std::isfinite(delay_grid[i]) || (i > 0 && !(delay_grid[i] > delay_grid[i - 1]))) {
            throw ConfigError("delay grid must be finite and strictly increasing (index " + std::to_string(i) + ")");
        }
    }
    for (double f : reference_fraction) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ConfigError("reference_fraction must lie in [0, 1]");
        }
    }
    try {
        model.validate();
        flhom::validate(excitation);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (mode == ScanMode::Autocorrelation) {
        const auto& a = autocorrelation;
        if (!(a.pulse_fwhm > 0.0) || a.contrast < 0.0 || a.fringe_modulation < 0.0 || a.fringe_modulation > 1.0 ||
            a.fringe_period < 0.0) {
            throw ConfigError("invalid autocorrelation settings");
        }
    }
    return warnings;
}

std::vector<double> uniform_grid(double start, double step, std::size_t n)
{
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = start + step * static_cast<double>(i);
    }
    return g;
}

void Trace::validate() const
{
    const std::size_t n = delay.size();
    if (coincidences.size() != n || singles_1.size() != n || singles_2.size() != n ||
        (!normalized.empty() && normalized.size() != n)) {
        throw DomainError("trace columns have different lengths");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(delay[i] > delay[i - 1])) {
            throw DomainError("trace delays must be strictly increasing (index " + std::to_string(i) + ")");
        }
    }
}

std::vector<double> normalized_sigma(const Trace& trace)
{
    if (!trace.is_normalized()) {
        throw DomainError("trace is not normalized");
    }
    const std::size_t n = trace.size();
    // Recover the per-count scale (normalized / raw ratio) from the best-populated point.
    std::size_t ref = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (trace.coincidences[i] > trace.coincidences[ref]) {
            ref = i;
        }
    }
    double scale = 1.0;
    if (trace.coincidences[ref] > 0) {
        scale = trace.normalized[ref] * static_cast<double>(trace.singles_1[ref]) *
                static_cast<double>(trace.singles_2[ref]) / static_cast<double>(trace.coincidences[ref]);
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = static_cast<double>(trace.coincidences[i]);
        const double s1 = std::max(1.0, static_cast<double>(trace.singles_1[i]));
        const double s2 = std::max(1.0, static_cast<double>(trace.singles_2[i]));
        if (c > 0.0) {
            out[i] = std::abs(trace.normalized[i]) * std::sqrt(1.0 / c + 1.0 / s1 + 1.0 / s2);
        } else {
            out[i] = scale / (s1 * s2);
        }
    }
    return out;
}

Trace simulate_scan(const ScanConfig& config)
{
    config.validate();
    Trace t;
    const std::size_t n = config.delay_grid.size();
    t.delay = config.delay_grid;
    t.dwell_time = config.dwell_time;
    t.coincidences.resize(n);
    t.singles_1.resize(n);
    t.singles_2.resize(n);
    const Rng root(config.rng_seed);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = root.substream(i);
        const double level = relative_level(t.delay[i], config);
        const double dwell = config.dwell_time;
        t.singles_1[i] = sample_counts(rng, config.singles_rate_1 * dwell, dwell, config.sub_exposure);
        t.singles_2[i] = sample_counts(rng, config.singles_rate_2 * dwell, dwell, config.sub_exposure);
        t.coincidences[i] =
            sample_counts(rng, config.coincidence_rate_baseline * dwell * level, dwell, config.sub_exposure);
    }
    return normalize_trace(std::move(t), config.normalization);
}

Trace expected_trace(const ScanConfig& config)
{
    config.validate();
    Trace t;
    const std::size_t n = config.delay_grid.size();
    t.delay = config.delay_grid;
    t.dwell_time = config.dwell_time;
    for (std::size_t i = 0; i < n; ++i) {
        const double level = relative_level(t.delay[i], config);
        t.coincidences.push_back(static_cast<std::uint64_t>(std::llround(config.coincidence_rate_baseline * config.dwell_time * level)));
        t.singles_1.push_back(static_cast<std::uint64_t>(std::llround(config.singles_rate_1 * config.dwell_time)));
        t.singles_2.push_back(static_cast<std::uint64_t>(std::llround(config.singles_rate_2 * config.dwell_time)));
        t.normalized.push_back(config.mode == ScanMode::Dip ? dip_model(t.delay[i], config.model, config.kernel) : level);
    }
    return t;
}

std::vector<PhotonRecord> simulate_timestamps(const ScanConfig& config, double delay,
                                              std::optional<std::uint64_t> stream_key)
{
    config.validate();
    const double p1 = config.detection_probability(1);
    const double p2 = config.detection_probability(2);
    const double pair = config.coincidence_rate_baseline * relative_level(delay, config) / config.rep_rate;
    if (pair > std::min(p1, p2) || 1.0 - p1 - p2 + pair < 0.0) {
        throw ConfigError("coincidence probability per pulse (" + fmt_double(pair) +
                          ") is inconsistent with the singles probabilities");
    }
    const double only1 = p1 - pair;
    const double only2 = p2 - pair;
    const double any = only1 + only2 + pair;
    const auto n_pulses = static_cast<std::uint64_t>(std::llround(config.dwell_time * config.rep_rate));

    Rng rng = Rng(config.rng_seed).substream(stream_key.value_or(std::bit_cast<std::uint64_t>(delay)));
    std::vector<PhotonRecord> out;
    if (any <= 0.0 || n_pulses == 0) {
        return out;
    }
    out.reserve(static_cast<std::size_t>(static_cast<double>(n_pulses) * (p1 + p2) * 1.05) + 16);

    const double period_fs = config.pulse_period() * kFsPerPs;
    const double jitter_sd = sigma_from_fwhm(config.detector_jitter_fwhm);
    const ModelParams& m = config.model;
    const ExcitationSampler excitation(config.excitation);

    auto draw_time = [&](int channel) -> std::int64_t {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            double t;
            if (rng.uniform() < config.reference_fraction[channel - 1]) {
                t = delay + (m.ref_sigma > 0.0 ? rng.normal(0.0, m.ref_sigma) : 0.0);
            } else {
                t = excitation(rng) +
                    std::exponential_distribution<double>(1.0 / m.lifetime_mu)(rng);
            }
            if (jitter_sd > 0.0) {
                t += rng.normal(0.0, jitter_sd);
            }
            const double fs = std::round(t * kFsPerPs);
            if (std::abs(fs) < period_fs) {
                return static_cast<std::int64_t>(fs);
            }
        }
        throw ConfigError("detection times repeatedly fall outside the pulse period");
    };

    std::geometric_distribution<std::uint64_t> gap(any);
    std::uint64_t next_free = 0; // first pulse not yet visited
    while (next_free < n_pulses) {
        const std::uint64_t skip = gap(rng);
        if (skip >= n_pulses - next_free) {
            break;
        }
        const std::uint64_t pulse = next_free + skip;
        next_free = pulse + 1;
        const double u = rng.uniform() * any;
        const bool ch1 = u < only1 || u >= only1 + only2;
        const bool ch2 = u >= only1;
        if (ch1) {
            out.push_back({1, pulse, draw_time(1)});
        }
        if (ch2) {
            out.push_back({2, pulse, draw_time(2)});
        }
    }
    return out;
}

CoincidenceCounter::CoincidenceCounter(double window_ps)
{
    if (!std::isfinite(window_ps) || window_ps <= 0.0) {
        throw DomainError("coincidence window must be positive");
    }
    window_fs_ = static_cast<std::int64_t>(std::llround(window_ps * kFsPerPs));
}

void CoincidenceCounter::push(const PhotonRecord& r)
{
    if (r.channel != 1 && r.channel != 2) {
        throw DomainError("photon record has invalid channel " + std::to_string(r.channel));
    }
    if (have_pulse_ && r.pulse_index < pulse_) {
        throw DomainError("photon records are not sorted by pulse index (pulse " + std::to_string(r.pulse_index) +
                          " after " + std::to_string(pulse_) + ")");
    }
    if (!have_pulse_ || r.pulse_index != pulse_) {
        flush();
        pulse_ = r.pulse_index;
        have_pulse_ = true;
    }
    (r.channel == 1 ? ch1_ : ch2_).push_back(r.intra_pulse_time);
    ++singles_[r.channel - 1];
}

void CoincidenceCounter::flush()
{
    if (!ch1_.empty() && !ch2_.empty()) {
        // Two-pointer sweep over sorted times: pairs with |t1 - t2| <= window.
        std::sort(ch1_.begin(), ch1_.end());
        std::sort(ch2_.begin(), ch2_.end());
        std::size_t lo = 0, hi = 0;
        for (std::int64_t t : ch1_) {
            while (lo < ch2_.size() && ch2_[lo] < t - window_fs_) {
                ++lo;
            }
            hi = std::max(hi, lo);
            while (hi < ch2_.size() && ch2_[hi] <= t + window_fs_) {
                ++hi;
            }
            pairs_ += hi - lo;
        }
    }
    ch1_.clear();
    ch2_.clear();
}

std::uint64_t CoincidenceCounter::finish()
{
    flush();
    return pairs_;
}

std::uint64_t coincidence_histogram(std::span<const PhotonRecord> records, double window_ps)
{
    CoincidenceCounter counter(window_ps);
    for (const auto& r : records) {
        counter.push(r);
    }
    return counter.finish();
}

Trace normalize_trace(Trace raw, NormalizationMode mode)
{
    raw.validate();
    const std::size_t n = raw.size();
    if (n == 0) {
        throw DomainError("cannot normalize an empty trace");
    }
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw.singles_1[i] == 0 || raw.singles_2[i] == 0) {
            throw DomainError("zero singles at point " + std::to_string(i) + " (delay " + fmt_double(raw.delay[i]) +
                              " ps); cannot normalize");
        }
        const double s1 = static_cast<double>(raw.singles_1[i]);
        const double s2 = static_cast<double>(raw.singles_2[i]);
        const double c = static_cast<double>(raw.coincidences[i]);
        v[i] = mode == NormalizationMode::Product ? c / (s1 * s2) : c / (s1 + s2);
    }
    const std::size_t q = std::max<std::size_t>(1, n / 4);
    std::vector<double> upper(v.end() - static_cast<std::ptrdiff_t>(q), v.end());
    std::sort(upper.begin(), upper.end());
    const double med = q % 2 == 1 ? upper[q / 2] : 0.5 * (upper[q / 2 - 1] + upper[q / 2]);
    if (!(med > 0.0)) {
        throw DomainError("upper-quartile coincidence level is zero; cannot normalize");
    }
    for (double& x : v) {
        x /= med;
    }
    raw.normalized = std::move(v);
    return raw;
}

RateTradeoff rate_tradeoff(double rep_rate, double p, double reference_rep_rate, double reference_prob)
{
    auto check = [](double rate, double prob) {
        if (!std::isfinite(rate) || rate <= 0.0) {
            throw DomainError("repetition rate must be positive");
        }
        if (!std::isfinite(prob) || prob <= 0.0 || prob > 1.0) {
            throw DomainError("per-pulse probability must lie in (0, 1]");
        }
    };
    check(rep_rate, p);
    check(reference_rep_rate, reference_prob);
    RateTradeoff r;
    r.coincidence_rate = rep_rate * p * p;
    r.reference_rate = reference_rep_rate * reference_prob * reference_prob;
    r.time_factor = r.reference_rate / r.coincidence_rate;
    return r;
}

double empirical_snr(double expected_n, std::size_t samples, SnrMode mode, std::uint64_t seed, double accidental_ratio)
{
    if (!std::isfinite(expected_n) || expected_n <= 0.0) {
        throw DomainError("expected count must be positive");
    }
    if (samples < 2) {
        throw DomainError("need at least two samples");
    }
    if (!(accidental_ratio >= 0.0)) {
        throw DomainError("accidental ratio must be non-negative");
    }
    Rng rng(seed);
    const double b = accidental_ratio * expected_n;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        double x;
        if (mode == SnrMode::Poisson) {
            x = static_cast<double>(rng.poisson(expected_n));
        } else {
            x = static_cast<double>(rng.poisson(expected_n + b)) - static_cast<double>(rng.poisson(b));
        }
        const double d = x - mean;
        mean += d / static_cast<double>(k + 1);
        m2 += d * (x - mean);
    }
    const double sd = std::sqrt(m2 / static_cast<double>(samples - 1));
    return mean / sd;
}

} // namespace flhom
