#pragma once

#include "flhom/model.hpp"
#include "flhom/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flhom {

/// What `coincidences` are normalized by. Product of singles is the usual g2 estimator.
enum class NormalizationMode { Product, Sum };

/// Dip: the FL-HOM delay scan. Autocorrelation: linear autocorrelation of the reference pulse
/// (IRF measurement), a Gaussian envelope riding on first-order fringes.
enum class ScanMode { Dip, Autocorrelation };

struct AutocorrelationSettings {
    double pulse_fwhm = 2.08;         // ps, reference pulse intensity FWHM
    double contrast = 0.5;            // envelope height relative to the flat level
    double fringe_modulation = 0.5;   // relative fringe depth under the envelope
    double fringe_period = 0.0668;    // ps
};

struct ScanConfig {
    ScanMode mode = ScanMode::Dip;
    double rep_rate = 8e7;                    // Hz
    double singles_rate_1 = 1e6;              // counts/s
    double singles_rate_2 = 1e6;              // counts/s
    double coincidence_rate_baseline = 14e3;  // counts/s far from the dip
    std::vector<double> delay_grid;           // ps, strictly increasing
    double dwell_time = 2.0;                  // s per delay point
    double sub_exposure = 0.0;                // s; > 0 sums dwell/sub_exposure independent exposures
    double coincidence_window = 1250.0;       // ps
    double detector_jitter_fwhm = 0.0;        // ps, Gaussian
    ModelParams model;
    KernelKind kernel = KernelKind::Emg;
    NormalizationMode normalization = NormalizationMode::Product;
    std::uint64_t rng_seed = kDefaultSeed;

    // Event-level generator only.
    PulseShape excitation = DeltaPulse{};
    std::array<double, 2> reference_fraction{0.5, 0.5}; // chance a detection on channel i is a reference photon

    AutocorrelationSettings autocorrelation;

    double pulse_period() const { return 1e12 / rep_rate; } // ps
    double detection_probability(int channel) const;

    /// Throws ConfigError on invalid settings; returns non-fatal warnings.
    std::vector<std::string> validate() const;
};

/// Uniform delay grid start, start + step, ... (n points).
std::vector<double> uniform_grid(double start, double step, std::size_t n);

struct Trace {
    std::vector<double> delay;                // ps
    std::vector<std::uint64_t> coincidences;
    std::vector<std::uint64_t> singles_1;
    std::vector<std::uint64_t> singles_2;
    std::vector<double> normalized;           // empty until normalize_trace
    double dwell_time = 0.0;                  // s

    std::size_t size() const { return delay.size(); }
    bool is_normalized() const { return normalized.size() == delay.size() && !delay.empty(); }
    /// Throws DomainError on length mismatch or unsorted delays.
    void validate() const;
};

/// Standard deviation of each normalized value, propagated from Poisson counts (delta method).
std::vector<double> normalized_sigma(const Trace& trace);

/// Count-level scan: independent Poisson draws per delay point, one RNG substream per point.
Trace simulate_scan(const ScanConfig& config);

/// Expected (noise-free) counts for the scan; counts are rounded, `normalized` is the exact model.
Trace expected_trace(const ScanConfig& config);

struct PhotonRecord {
    std::uint8_t channel = 1;        // 1 or 2
    std::uint64_t pulse_index = 0;
    std::int64_t intra_pulse_time = 0; // fs relative to the pulse clock

    bool operator==(const PhotonRecord&) const = default;
};

/// Event-level stream for one delay setting over dwell_time * rep_rate pulses, ordered by
/// (pulse_index, channel). Same-pulse pair probability follows dip_model(delay).
/// `stream_key` selects the RNG substream (defaults to a fixed key per delay value).
std::vector<PhotonRecord> simulate_timestamps(const ScanConfig& config, double delay,
                                              std::optional<std::uint64_t> stream_key = std::nullopt);

/// Streaming same-pulse cross-channel pair counter.
class CoincidenceCounter {
public:
    explicit CoincidenceCounter(double window_ps);

    /// Records must arrive with non-decreasing pulse_index.
    void push(const PhotonRecord& record);
    std::uint64_t finish();
    std::uint64_t singles(int channel) const { return singles_[channel == 1 ? 0 : 1]; }

private:
    void flush();

    std::int64_t window_fs_;
    bool have_pulse_ = false;
    std::uint64_t pulse_ = 0;
    std::vector<std::int64_t> ch1_, ch2_;
    std::uint64_t pairs_ = 0;
    std::array<std::uint64_t, 2> singles_{0, 0};
};

/// Number of (channel 1, channel 2) pairs sharing a pulse with |dt| <= window.
std::uint64_t coincidence_histogram(std::span<const PhotonRecord> records, double window_ps);

/// Normalize coincidences by the singles (product or sum) and rescale so the median of the
/// upper delay quartile equals 1.
Trace normalize_trace(Trace raw, NormalizationMode mode = NormalizationMode::Product);

struct RateTradeoff {
    double coincidence_rate = 0.0; // counts/s, rep_rate * p^2
    double reference_rate = 0.0;
    double time_factor = 0.0;      // reference_rate / coincidence_rate
};

RateTradeoff rate_tradeoff(double rep_rate, double per_pulse_prob, double reference_rep_rate = 8e7,
                           double reference_prob = 0.01);

enum class SnrMode {
    Poisson,             // plain counting: mean / sd of C ~ Poisson(N)
    AccidentalSubtracted // C ~ Poisson(N + B) minus an independent accidental estimate A ~ Poisson(B)
};

/// Empirical SNR (mean / sample sd) of the coincidence estimator over `samples` draws with
/// N expected correlated coincidences. B = accidental_ratio * N.
double empirical_snr(double expected_n, std::size_t samples, SnrMode mode, std::uint64_t seed,
                     double accidental_ratio = 0.5);

} // namespace flhom
