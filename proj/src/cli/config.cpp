#include "flhom/cli.hpp"

#include "flhom/errors.hpp"
#include "flhom/io.hpp"
#include "flhom/units.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace flhom::cli {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> s{
        {"model", {"mu_ps", "sigma_ps", "irf_fwhm_ps", "visibility", "baseline", "t0_ps", "kernel"}},
        {"scan",
         {"mode", "rep_rate_hz", "singles_rate_1", "singles_rate_2", "coincidence_rate", "delay_start_ps",
          "delay_step_ps", "delay_points", "dwell_s", "sub_exposure_s", "window_ps", "jitter_fwhm_ps",
          "normalization", "seed"}},
        {"autocorrelation", {"pulse_fwhm_ps", "contrast", "fringe_modulation", "fringe_period_ps"}},
        {"timestamps",
         {"enabled", "delay_ps", "pulses", "reference_fraction_1", "reference_fraction_2", "excitation",
          "excitation_sigma_ps"}},
        {"fit",
         {"method", "kernel", "irf_sigma_ps", "irf_fwhm_ps", "free_sigma", "max_iterations", "tolerance",
          "tail_lo_ps", "tail_hi_ps"}},
        {"mcmc", {"walkers", "steps", "burn_in", "stretch_scale", "init_ball", "seed"}},
        {"precision", {"times_s", "repeats", "sub_exposure_s", "method"}},
        {"visibility", {"ratio_min", "ratio_max", "points", "cap", "convention", "kernel"}},
        {"irf", {"cutoff_fraction"}},
        {"calibration", {"file", "law", "irf_sigma_ps", "irf_fwhm_ps", "multiplier"}},
    };
    return s;
}

} // namespace

IniConfig IniConfig::parse(std::string_view text, std::string source)
{
    IniConfig c;
    c.source_ = std::move(source);
    c.text_ = std::string(text);
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::size_t hash = line.find_first_of("#;");
        if (hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = c.source_ + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(where + ": malformed section header '" + std::string(line) + "'");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) {
                throw ConfigError(where + ": empty section name");
            }
            c.sections_[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw ConfigError(where + ": missing key before '='");
        }
        if (section.empty()) {
            throw ConfigError(where + ": key '" + key + "' appears before any [section]");
        }
        auto& sec = c.sections_[section];
        if (sec.count(key)) {
            throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
        }
        sec[key] = Entry{value, line_no};
    }
    return c;
}

IniConfig IniConfig::load(const std::filesystem::path& path)
{
    return parse(read_file(path), path.string());
}

void IniConfig::check_known() const
{
    const auto& s = schema();
    for (const auto& [name, entries] : sections_) {
        auto it = s.find(name);
        if (it == s.end()) {
            std::size_t line = entries.empty() ? 0 : entries.begin()->second.line;
            throw ConfigError(source_ + (line ? ":" + std::to_string(line) : std::string()) + ": unknown section [" +
                              name + "]");
        }
        for (const auto& [key, e] : entries) {
            if (!it->second.count(key)) {
                throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "' in [" + name +
                                  "]");
            }
        }
    }
}

void IniConfig::fail(const std::string& section, const std::string& key, const std::string& why) const
{
    std::string where = source_;
    auto s = sections_.find(section);
    if (s != sections_.end()) {
        auto e = s->second.find(key);
        if (e != s->second.end()) {
            where += ":" + std::to_string(e->second.line);
        }
    }
    throw ConfigError(where + ": [" + section + "] " + key + ": " + why);
}

bool IniConfig::has(const std::string& section, const std::string& key) const
{
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::optional<std::string> IniConfig::get(const std::string& section, const std::string& key) const
{
    auto s = sections_.find(section);
    if (s == sections_.end()) {
        return std::nullopt;
    }
    auto e = s->second.find(key);
    if (e == s->second.end()) {
        return std::nullopt;
    }
    return e->second.value;
}

std::string IniConfig::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const
{
    return get(section, key).value_or(fallback);
}

double IniConfig::get_double(const std::string& section, const std::string& key, double fallback) const
{
    const auto v = get(section, key);
    if (!v) {
        return fallback;
    }
    double out = 0.0;
    const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
    if (r.ec != std::errc() || r.ptr != v->data() + v->size() || !std::isfinite(out)) {
        fail(section, key, "'" + *v + "' is not a finite number");
    }
    return out;
}

std::uint64_t IniConfig::get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const
{
    const auto v = get(section, key);
    if (!v) {
        return fallback;
    }
    std::uint64_t out = 0;
    const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
    if (r.ec != std::errc() || r.ptr != v->data() + v->size()) {
        fail(section, key, "'" + *v + "' is not a non-negative integer");
    }
    return out;
}

bool IniConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const
{
    const auto v = get(section, key);
    if (!v) {
        return fallback;
    }
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") {
        return true;
    }
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") {
        return false;
    }
    fail(section, key, "'" + *v + "' is not a boolean");
}

std::vector<double> IniConfig::get_list(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const
{
    const auto v = get(section, key);
    if (!v) {
        return fallback;
    }
    std::vector<double> out;
    std::string_view rest = *v;
    while (!rest.empty()) {
        const std::size_t comma = rest.find(',');
        const std::string_view item = trim(rest.substr(0, comma));
        double x = 0.0;
        const auto r = std::from_chars(item.data(), item.data() + item.size(), x);
        if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size()) {
            fail(section, key, "'" + std::string(item) + "' is not a number");
        }
        out.push_back(x);
        if (comma == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(comma + 1);
    }
    return out;
}

namespace {

double sigma_setting(const IniConfig& ini, const std::string& section, const std::string& sigma_key,
                     const std::string& fwhm_key, double fallback)
{
    if (ini.has(section, sigma_key) && ini.has(section, fwhm_key)) {
        throw ConfigError(ini.source() + ": [" + section + "] set only one of " + sigma_key + " and " + fwhm_key);
    }
    if (ini.has(section, fwhm_key)) {
        return sigma_from_fwhm(ini.get_double(section, fwhm_key, 0.0));
    }
    return ini.get_double(section, sigma_key, fallback);
}

} // namespace

ScanConfig scan_config_from(const IniConfig& ini)
{
    ScanConfig c;
    const std::string mode = ini.get_string("scan", "mode", "dip");
    if (mode == "dip") {
        c.mode = ScanMode::Dip;
    } else if (mode == "autocorrelation") {
        c.mode = ScanMode::Autocorrelation;
    } else {
        throw ConfigError(ini.source() + ": [scan] mode: '" + mode + "' is not dip or autocorrelation");
    }
    c.model.lifetime_mu = ini.get_double("model", "mu_ps", c.model.lifetime_mu);
    c.model.ref_sigma = sigma_setting(ini, "model", "sigma_ps", "irf_fwhm_ps", c.model.ref_sigma);
    c.model.visibility = ini.get_double("model", "visibility", 0.5);
    c.model.baseline = ini.get_double("model", "baseline", c.model.baseline);
    c.model.delay_offset_t0 = ini.get_double("model", "t0_ps", c.model.delay_offset_t0);
    c.kernel = parse_kernel(ini.get_string("model", "kernel", "emg"));

    c.rep_rate = ini.get_double("scan", "rep_rate_hz", c.rep_rate);
    c.singles_rate_1 = ini.get_double("scan", "singles_rate_1", c.singles_rate_1);
    c.singles_rate_2 = ini.get_double("scan", "singles_rate_2", c.singles_rate_2);
    c.coincidence_rate_baseline = ini.get_double("scan", "coincidence_rate", c.coincidence_rate_baseline);
    const double start = ini.get_double("scan", "delay_start_ps", -8.0);
    const double step = ini.get_double("scan", "delay_step_ps", 0.0167);
    const std::uint64_t points = ini.get_uint("scan", "delay_points", 2400);
    if (points == 0 || !(step > 0.0)) {
        throw ConfigError(ini.source() + ": [scan] needs delay_points > 0 and delay_step_ps > 0");
    }
    c.delay_grid = uniform_grid(start, step, points);
    c.dwell_time = ini.get_double("scan", "dwell_s", c.dwell_time);
    c.sub_exposure = ini.get_double("scan", "sub_exposure_s", c.sub_exposure);
    c.coincidence_window = ini.get_double("scan", "window_ps", c.coincidence_window);
    c.detector_jitter_fwhm = ini.get_double("scan", "jitter_fwhm_ps", c.detector_jitter_fwhm);
    const std::string norm = ini.get_string("scan", "normalization", "product");
    if (norm == "product") {
        c.normalization = NormalizationMode::Product;
    } else if (norm == "sum") {
        c.normalization = NormalizationMode::Sum;
    } else {
        throw ConfigError(ini.source() + ": [scan] normalization: '" + norm + "' is not product or sum");
    }
    c.rng_seed = ini.get_uint("scan", "seed", kDefaultSeed);

    c.autocorrelation.pulse_fwhm = ini.get_double("autocorrelation", "pulse_fwhm_ps", c.autocorrelation.pulse_fwhm);
    c.autocorrelation.contrast = ini.get_double("autocorrelation", "contrast", c.autocorrelation.contrast);
    c.autocorrelation.fringe_modulation =
        ini.get_double("autocorrelation", "fringe_modulation", c.autocorrelation.fringe_modulation);
    c.autocorrelation.fringe_period =
        ini.get_double("autocorrelation", "fringe_period_ps", c.autocorrelation.fringe_period);

    c.reference_fraction[0] = ini.get_double("timestamps", "reference_fraction_1", c.reference_fraction[0]);
    c.reference_fraction[1] = ini.get_double("timestamps", "reference_fraction_2", c.reference_fraction[1]);
    const std::string ex = ini.get_string("timestamps", "excitation", "delta");
    if (ex == "delta") {
        c.excitation = DeltaPulse{};
    } else if (ex == "gaussian") {
        c.excitation = GaussianPulse{ini.get_double("timestamps", "excitation_sigma_ps", 0.1)};
    } else {
        throw ConfigError(ini.source() + ": [timestamps] excitation: '" + ex + "' is not delta or gaussian");
    }
    return c;
}

FitOptions fit_options_from(const IniConfig& ini)
{
    FitOptions o;
    const double model_sigma = sigma_setting(ini, "model", "sigma_ps", "irf_fwhm_ps", 0.0);
    o.irf_sigma = sigma_setting(ini, "fit", "irf_sigma_ps", "irf_fwhm_ps", model_sigma);
    o.free[static_cast<std::size_t>(Param::Sigma)] = ini.get_bool("fit", "free_sigma", false);
    o.max_iterations = ini.get_uint("fit", "max_iterations", o.max_iterations);
    o.tolerance = ini.get_double("fit", "tolerance", o.tolerance);
    o.kernel = parse_kernel(ini.get_string("fit", "kernel", ini.get_string("model", "kernel", "emg")));
    const bool lo = ini.has("fit", "tail_lo_ps");
    const bool hi = ini.has("fit", "tail_hi_ps");
    if (lo != hi) {
        throw ConfigError(ini.source() + ": [fit] set both tail_lo_ps and tail_hi_ps or neither");
    }
    if (lo) {
        o.tail_region = std::make_pair(ini.get_double("fit", "tail_lo_ps", 0.0), ini.get_double("fit", "tail_hi_ps", 0.0));
    }
    o.mcmc.walkers = ini.get_uint("mcmc", "walkers", o.mcmc.walkers);
    o.mcmc.steps = ini.get_uint("mcmc", "steps", o.mcmc.steps);
    o.mcmc.burn_in_fraction = ini.get_double("mcmc", "burn_in", o.mcmc.burn_in_fraction);
    o.mcmc.stretch_scale = ini.get_double("mcmc", "stretch_scale", o.mcmc.stretch_scale);
    o.mcmc.init_ball = ini.get_double("mcmc", "init_ball", o.mcmc.init_ball);
    o.mcmc.seed = ini.get_uint("mcmc", "seed", o.mcmc.seed);
    o.validate();
    return o;
}

VisibilityOptions visibility_options_from(const IniConfig& ini)
{
    VisibilityOptions v;
    v.cap = ini.get_double("visibility", "cap", v.cap);
    const std::string conv = ini.get_string("visibility", "convention", "rms");
    if (conv == "rms") {
        v.convention = RatioConvention::Rms;
    } else if (conv == "fwhm") {
        v.convention = RatioConvention::Fwhm;
    } else {
        throw ConfigError(ini.source() + ": [visibility] convention: '" + conv + "' is not rms or fwhm");
    }
    v.kernel = parse_kernel(ini.get_string("visibility", "kernel", "field-overlap"));
    return v;
}

} // namespace flhom::cli
