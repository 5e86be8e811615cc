#include "doctest.h"

#include "flhom/errors.hpp"
#include "flhom/io.hpp"
#include "flhom/photonsim.hpp"
#include "flhom/units.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace flhom;

namespace {

ScanConfig small_config()
{
    ScanConfig c;
    c.model.lifetime_mu = 7.22;
    c.model.ref_sigma = sigma_from_fwhm(2.08);
    c.model.visibility = 0.5;
    c.delay_grid = uniform_grid(-8.0, 0.5, 60);
    c.dwell_time = 2.0;
    c.rng_seed = 42;
    return c;
}

// Median of the last quarter of normalized values, computed independently of the library.
double quartile_median_for_test(const Trace& t)
{
    const std::size_t q = t.size() / 4;
    std::vector<double> v(t.normalized.end() - std::ptrdiff_t(q), t.normalized.end());
    std::sort(v.begin(), v.end());
    return q % 2 ? v[q / 2] : 0.5 * (v[q / 2 - 1] + v[q / 2]);
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double var_of(const std::vector<double>& v)
{
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return s / double(v.size() - 1);
}

} // namespace

TEST_CASE("scan config validation")
{
    ScanConfig c = small_config();
    CHECK(c.validate().size() == 2); // 1e6 / 8e7 = 1.25% per pulse on each channel
    c.singles_rate_1 = c.singles_rate_2 = 5e5;
    CHECK(c.validate().empty());
    c.singles_rate_1 = 1e8;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.delay_grid = {0.0, 0.0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.delay_grid.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.dwell_time = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.model.lifetime_mu = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.coincidence_rate_baseline = 1e9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("count-level scan is deterministic per seed")
{
    const ScanConfig c = small_config();
    const Trace a = simulate_scan(c);
    const Trace b = simulate_scan(c);
    CHECK(a.coincidences == b.coincidences);
    CHECK(a.singles_1 == b.singles_1);
    CHECK(a.normalized == b.normalized);
    ScanConfig d = c;
    d.rng_seed = 43;
    CHECK(simulate_scan(d).coincidences != a.coincidences);
}

TEST_CASE("substreams make points independent of grid extent")
{
    ScanConfig c = small_config();
    const Trace a = simulate_scan(c);
    c.delay_grid.resize(30);
    const Trace b = simulate_scan(c);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(a.coincidences[i] == b.coincidences[i]);
    }
}

TEST_CASE("coincidence counts are Poisson-dispersed around the model mean")
{
    ScanConfig c = small_config();
    c.delay_grid = {c.model.lifetime_mu};
    const double expected = c.coincidence_rate_baseline * c.dwell_time * dip_model(c.model.lifetime_mu, c.model);
    std::vector<double> n;
    for (std::uint64_t s = 0; s < 2000; ++s) {
        c.rng_seed = 1000 + s;
        n.push_back(double(simulate_scan(c).coincidences[0]));
    }
    const double m = mean_of(n);
    const double v = var_of(n);
    CHECK(std::abs(m - expected) < 4.0 * std::sqrt(expected / 2000.0));
    // Fano factor: sd of the sample variance ratio is about sqrt(2 / 2000).
    CHECK(std::abs(v / expected - 1.0) < 4.0 * std::sqrt(2.0 / 2000.0));
}

TEST_CASE("sub-exposures leave the count mean unchanged")
{
    ScanConfig c = small_config();
    c.delay_grid = {30.0};
    c.sub_exposure = 0.05;
    std::vector<double> n;
    for (std::uint64_t s = 0; s < 500; ++s) {
        c.rng_seed = 7 + s;
        n.push_back(double(simulate_scan(c).coincidences[0]));
    }
    const double expected = c.coincidence_rate_baseline * c.dwell_time * dip_model(30.0, c.model);
    CHECK(std::abs(mean_of(n) - expected) < 4.0 * std::sqrt(expected / 500.0));
}

TEST_CASE("expected trace and normalization")
{
    const ScanConfig c = small_config();
    const Trace e = expected_trace(c);
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(e.normalized[i] == dip_model(e.delay[i], c.model));
    }
    Trace raw;
    raw.delay = {0, 1, 2, 3, 4, 5, 6, 7};
    raw.coincidences = {10, 20, 30, 40, 50, 60, 70, 80};
    raw.singles_1 = std::vector<std::uint64_t>(8, 10);
    raw.singles_2 = std::vector<std::uint64_t>(8, 10);
    const Trace n = normalize_trace(raw);
    // Upper quartile is {70, 80}, median 75.
    CHECK(n.normalized[7] == doctest::Approx(80.0 / 75.0));
    CHECK(n.normalized[0] == doctest::Approx(10.0 / 75.0));
    const Trace ns = normalize_trace(raw, NormalizationMode::Sum);
    CHECK(ns.normalized[0] == doctest::Approx(10.0 / 75.0));
    raw.singles_1[2] = 0;
    CHECK_THROWS_AS(normalize_trace(raw), DomainError);
}

TEST_CASE("normalized sigma follows the delta method")
{
    Trace t;
    t.delay = {0.0, 1.0};
    t.coincidences = {100, 400};
    t.singles_1 = {10000, 10000};
    t.singles_2 = {10000, 10000};
    t = normalize_trace(t);
    const auto s = normalized_sigma(t);
    CHECK(s[1] == doctest::Approx(1.0 * std::sqrt(1.0 / 400 + 2.0 / 10000)));
    CHECK(s[0] == doctest::Approx(0.25 * std::sqrt(1.0 / 100 + 2.0 / 10000)));
}

TEST_CASE("event-level stream")
{
    ScanConfig c = small_config();
    c.dwell_time = 2e-3;
    const auto rec = simulate_timestamps(c, 3.0);
    CHECK(rec == simulate_timestamps(c, 3.0));
    CHECK(rec != simulate_timestamps(c, 3.0, 99));
    for (std::size_t i = 1; i < rec.size(); ++i) {
        const bool ordered = rec[i - 1].pulse_index < rec[i].pulse_index ||
                             (rec[i - 1].pulse_index == rec[i].pulse_index && rec[i - 1].channel < rec[i].channel);
        CHECK(ordered);
    }
    const auto pulses = static_cast<double>(std::llround(c.dwell_time * c.rep_rate));
    std::size_t n1 = 0;
    for (const auto& r : rec) {
        n1 += r.channel == 1;
        CHECK(r.pulse_index < static_cast<std::uint64_t>(pulses));
    }
    const double m1 = pulses * c.detection_probability(1);
    CHECK(std::abs(double(n1) - m1) < 5.0 * std::sqrt(m1));
}

TEST_CASE("event-level and count-level coincidences agree in distribution")
{
    ScanConfig c = small_config();
    c.dwell_time = 1e-3;
    const double delay = 4.0;
    std::vector<double> events, counts;
    for (std::uint64_t k = 0; k < 400; ++k) {
        const auto rec = simulate_timestamps(c, delay, k);
        events.push_back(double(coincidence_histogram(rec, c.coincidence_window)));
    }
    ScanConfig cc = c;
    cc.delay_grid = {delay};
    for (std::uint64_t k = 0; k < 400; ++k) {
        cc.rng_seed = 5000 + k;
        counts.push_back(double(simulate_scan(cc).coincidences[0]));
    }
    const auto ks = oracle::ks_two_sample(events, counts);
    CHECK(ks.p > 0.01);
    const double expected = c.coincidence_rate_baseline * c.dwell_time * dip_model(delay, c.model);
    CHECK(std::abs(mean_of(events) - expected) < 4.0 * std::sqrt(expected / 400.0));
}

TEST_CASE("reference fraction and excitation shape the arrival times")
{
    ScanConfig c = small_config();
    c.dwell_time = 5e-3;
    c.reference_fraction = {1.0, 0.0};
    c.excitation = GaussianPulse{0.3};
    const auto rec = simulate_timestamps(c, 10.0);
    std::vector<double> t1, t2;
    for (const auto& r : rec) {
        (r.channel == 1 ? t1 : t2).push_back(double(r.intra_pulse_time) / 1000.0);
    }
    // Channel 1 is all reference photons at the delay; channel 2 is fluorescence with mean mu.
    CHECK(mean_of(t1) == doctest::Approx(10.0).epsilon(0.01));
    CHECK(mean_of(t2) == doctest::Approx(c.model.lifetime_mu).epsilon(0.05));
    CHECK(std::sqrt(var_of(t1)) == doctest::Approx(c.model.ref_sigma).epsilon(0.05));
}

TEST_CASE("inconsistent pair probability is rejected")
{
    ScanConfig c = small_config();
    c.singles_rate_1 = 1e3;
    CHECK_THROWS_AS(simulate_timestamps(c, 0.0), ConfigError);
}

TEST_CASE("streaming correlator equals brute force")
{
    Rng rng(3);
    for (int s = 0; s < 20; ++s) {
        std::vector<PhotonRecord> rec;
        const int n = 50 + int(rng.uniform() * 1500);
        std::uint64_t pulse = 0;
        for (int i = 0; i < n; ++i) {
            pulse += rng.uniform() < 0.3 ? 1 : 0;
            rec.push_back({std::uint8_t(rng.uniform() < 0.5 ? 1 : 2), pulse,
                           std::int64_t((rng.uniform() - 0.5) * 4e6)});
        }
        std::stable_sort(rec.begin(), rec.end(), [](const auto& a, const auto& b) { return a.pulse_index < b.pulse_index; });
        for (double w : {1.0, 250.0, 1250.0}) {
            CHECK(coincidence_histogram(rec, w) == oracle::brute_force_pairs(rec, w));
        }
    }
    CHECK_THROWS_AS(CoincidenceCounter(0.0), DomainError);
    CoincidenceCounter cc(10.0);
    cc.push({1, 5, 0});
    CHECK_THROWS_AS(cc.push({2, 4, 0}), DomainError);
    CHECK_THROWS_AS(cc.push({3, 6, 0}), DomainError);
}

TEST_CASE("window boundary is inclusive")
{
    const std::vector<PhotonRecord> rec{{1, 0, 0}, {2, 0, 1000}, {2, 0, 1001}};
    CHECK(coincidence_histogram(rec, 1.0) == 1);
}

TEST_CASE("rate trade-off")
{
    const auto r = rate_tradeoff(1e5, 0.10, 8e7, 0.01);
    CHECK(r.coincidence_rate == doctest::Approx(1e3));
    CHECK(r.reference_rate == doctest::Approx(8e3));
    CHECK(r.time_factor == doctest::Approx(8.0));
    CHECK(rate_tradeoff(8e7, 0.01).time_factor == doctest::Approx(1.0));
    CHECK_THROWS_AS(rate_tradeoff(0.0, 0.1), DomainError);
    CHECK_THROWS_AS(rate_tradeoff(1e5, 1.5), DomainError);
}

TEST_CASE("empirical snr")
{
    for (double n : {10.0, 100.0, 1e4}) {
        const double law = snr_coincidence(n);
        const double mc = empirical_snr(n, 20000, SnrMode::AccidentalSubtracted, 17);
        CHECK(std::abs(mc / law - 1.0) < 0.1);
        const double pm = empirical_snr(n, 20000, SnrMode::Poisson, 18);
        CHECK(std::abs(pm / std::sqrt(n) - 1.0) < 0.1);
    }
    CHECK(empirical_snr(50.0, 100, SnrMode::Poisson, 1) == empirical_snr(50.0, 100, SnrMode::Poisson, 1));
    CHECK_THROWS_AS(empirical_snr(0.0, 100, SnrMode::Poisson, 1), DomainError);
}

TEST_CASE("trace csv round trip")
{
    const Trace t = simulate_scan(small_config());
    const std::vector<std::string> comments{"flhom test", "seed=42"};
    const std::string csv = trace_to_csv(t, comments);
    CHECK(csv.rfind("# flhom test\n", 0) == 0);
    const Trace u = trace_from_csv(csv);
    CHECK(u.delay == t.delay);
    CHECK(u.coincidences == t.coincidences);
    CHECK(u.singles_1 == t.singles_1);
    CHECK(u.singles_2 == t.singles_2);
    CHECK(u.normalized == t.normalized);
    CHECK(u.dwell_time == t.dwell_time);
    CHECK(trace_to_csv(u, comments) == csv);
    CHECK_THROWS_AS(trace_from_csv("delay_ps,x\n1,2\n"), IoError);
    CHECK_THROWS_AS(trace_from_csv(std::string(kTraceCsvHeader) + "\n1,2,3\n"), IoError);
}

TEST_CASE("flh1 round trip")
{
    ScanConfig c = small_config();
    c.dwell_time = 1e-3;
    const auto rec = simulate_timestamps(c, 1.0);
    const std::string bytes = encode_flh1(c.rep_rate, rec);
    CHECK(bytes.size() == kFlh1HeaderSize + kFlh1RecordSize * rec.size());
    CHECK(bytes.substr(0, 4) == "FLH1");
    const auto back = decode_flh1(bytes);
    CHECK(back.rep_rate == c.rep_rate);
    CHECK(back.records == rec);
    CHECK_THROWS_AS(decode_flh1(bytes.substr(0, bytes.size() - 3)), IoError);
    CHECK_THROWS_AS(decode_flh1("XXXX" + bytes.substr(4)), IoError);
}

TEST_CASE("format_double round trips")
{
    for (double v : {0.1, 1.0 / 3.0, 7.22, 1e-300, -2.5e17}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("zero visibility gives a flat trace")
{
    ScanConfig c = small_config();
    c.model.visibility = 0.0;
    c.delay_grid = uniform_grid(-8.0, 1.0, 20);
    c.dwell_time = 0.2;
    std::vector<double> sum(c.delay_grid.size(), 0.0);
    const int runs = 500; // 10^4 dwells over the grid
    for (int s = 0; s < runs; ++s) {
        c.rng_seed = 100 + std::uint64_t(s);
        const Trace t = simulate_scan(c);
        for (std::size_t i = 0; i < t.size(); ++i) {
            sum[i] += t.normalized[i];
        }
    }
    const auto [lo, hi] = std::minmax_element(sum.begin(), sum.end());
    CHECK(*hi / *lo >= 1.0);
    CHECK(*hi / *lo <= 1.02);
}

TEST_CASE("full-scale baseline coincidences")
{
    ScanConfig c = small_config();
    c.delay_grid = {200.0};
    double total = 0.0;
    for (int s = 0; s < 100; ++s) {
        c.rng_seed = 9000 + std::uint64_t(s);
        total += double(simulate_scan(c).coincidences[0]);
    }
    CHECK(std::abs(total / 100.0 - 28000.0) < 3.0 * std::sqrt(28000.0));
}

TEST_CASE("normalization is invariant to laser power at one point")
{
    Trace raw;
    raw.delay = {0, 1, 2, 3, 4, 5, 6, 7};
    raw.coincidences = std::vector<std::uint64_t>(8, 100);
    raw.singles_1 = std::vector<std::uint64_t>(8, 1000);
    raw.singles_2 = std::vector<std::uint64_t>(8, 1000);
    const Trace a = normalize_trace(raw);
    for (double v : a.normalized) {
        CHECK(v == 1.0);
    }
    raw.coincidences[2] *= 4;
    raw.singles_1[2] *= 2;
    raw.singles_2[2] *= 2;
    CHECK(normalize_trace(raw).normalized[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("simulated full-shape trace normalizes to 1 in the upper quartile")
{
    ScanConfig c = small_config();
    c.delay_grid = uniform_grid(-8.0, 0.0167, 2400);
    const Trace t = simulate_scan(c);
    const double m = quartile_median_for_test(t);
    CHECK(std::abs(m - 1.0) < 0.02);
}

TEST_CASE("reference photons without jitter are a point mass")
{
    ScanConfig c = small_config();
    c.model.ref_sigma = 0.0;
    c.reference_fraction = {1.0, 1.0};
    c.dwell_time = 1e-3;
    for (const auto& r : simulate_timestamps(c, 2.5)) {
        CHECK(r.intra_pulse_time == 2500);
    }
}

TEST_CASE("binomial channel count")
{
    ScanConfig c = small_config();
    c.rep_rate = 1e6;
    c.singles_rate_1 = c.singles_rate_2 = 1e4; // p = 0.01
    c.coincidence_rate_baseline = 10.0;
    c.dwell_time = 1.0; // 10^6 pulses
    std::size_t n1 = 0;
    for (const auto& r : simulate_timestamps(c, 50.0)) {
        n1 += r.channel == 1;
    }
    CHECK(std::abs(double(n1) - 1e4) <= 300.0);
}

TEST_CASE("hand-built correlator cases")
{
    CHECK(coincidence_histogram(std::vector<PhotonRecord>{}, 1.0) == 0);
    // Pulse 0: one valid pair. Pulse 1: one pair outside the window. Pulse 2: one valid pair.
    const std::vector<PhotonRecord> rec{{1, 0, 0},    {2, 0, 500},  {1, 1, 0},
                                        {2, 1, 5000}, {1, 2, -200}, {2, 2, 100}};
    CHECK(coincidence_histogram(rec, 1.0) == 2);
}

TEST_CASE("rate trade-off is quadratic in p")
{
    CHECK(rate_tradeoff(8e7, 0.02).coincidence_rate == doctest::Approx(4.0 * rate_tradeoff(8e7, 0.01).coincidence_rate));
}
