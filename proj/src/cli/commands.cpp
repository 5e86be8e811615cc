#include "flhom/cli.hpp"

#include "flhom/errors.hpp"
#include "flhom/io.hpp"
#include "flhom/units.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <ostream>
#include <sstream>

namespace flhom::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, Common& c, bool with_seed = true)
{
    cmd->add_option("--config", c.config, "configuration file")->check(CLI::ExistingFile);
    if (with_seed) {
        cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
    }
    cmd->add_option("--out", c.out_dir, "output directory")->capture_default_str();
}

// Loads the config (empty when no file was given) and rejects unknown keys.
IniConfig load_config(const Common& c)
{
    IniConfig ini = c.config.empty() ? IniConfig::parse("", "<defaults>") : IniConfig::load(c.config);
    ini.check_known();
    return ini;
}

class Output {
public:
    Output(std::string command, const IniConfig& ini, const std::string& dir)
        : command_(std::move(command)), dir_(dir)
    {
        effective_ = "command=" + command_ + "\n" + ini.text();
    }

    void note(const std::string& key, const std::string& value) { effective_ += "\n--" + key + "=" + value; }

    std::string hash() const { return fnv1a64_hex(effective_); }

    std::vector<std::string> header() const
    {
        return {std::string("flhom ") + FLHOM_VERSION, "command " + command_, "config_hash " + hash()};
    }

    std::string header_text() const
    {
        std::string s;
        for (const auto& h : header()) {
            s += "# " + h + "\n";
        }
        return s;
    }

    fs::path write(const std::string& name, const std::string& contents) const
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) {
            throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
        }
        const fs::path p = dir_ / name;
        write_file_atomic(p, contents);
        return p;
    }

private:
    std::string command_;
    fs::path dir_;
    std::string effective_;
};

void print_warnings(std::ostream& err, const std::vector<std::string>& w)
{
    for (const auto& s : w) {
        err << "warning: " << s << '\n';
    }
}

std::string report_line(const std::string& key, double v) { return key + " = " + format_double(v) + "\n"; }

std::string fit_report(const FitResult& r, const Output& o, const std::string& trace_path)
{
    std::string s = o.header_text();
    s += "trace = " + trace_path + "\n";
    s += "method = " + std::string(fit_method_name(r.method)) + "\n";
    s += "kernel = " + std::string(kernel_name(r.kernel)) + "\n";
    s += std::string("converged = ") + (r.converged ? "true" : "false") + "\n";
    const auto v = to_array(r.params);
    for (std::size_t k = 0; k < kParamCount; ++k) {
        const std::string name(param_name(static_cast<Param>(k)));
        s += report_line(name, v[k]);
        s += report_line(name + "_std", r.std_errors[k]);
        s += name + "_free = " + (r.free[k] ? "true" : "false") + "\n";
    }
    if (r.mu_interval95) {
        s += report_line("mu_ps_ci95_lo", r.mu_interval95->first);
        s += report_line("mu_ps_ci95_hi", r.mu_interval95->second);
    }
    if (r.tail) {
        s += report_line("tail_slope_per_ps", r.tail->slope);
        s += report_line("tail_slope_std", r.tail->slope_std);
        s += report_line("tail_region_lo_ps", r.tail->region_lo);
        s += report_line("tail_region_hi_ps", r.tail->region_hi);
        s += "tail_points = " + std::to_string(r.tail->points) + "\n";
    }
    s += report_line("reduced_chi2", r.reduced_chi2);
    s += "iterations = " + std::to_string(r.iterations) + "\n";
    if (r.method == FitMethod::Mcmc) {
        s += report_line("acceptance_fraction", r.acceptance_fraction);
    }
    for (const auto& w : r.warnings) {
        s += "warning = " + w + "\n";
    }
    return s;
}

std::string posterior_csv(const PosteriorSamples& p, const Output& o)
{
    std::string s = o.header_text();
    s += "walker,step,mu_ps,sigma_ps,visibility,baseline,t0_ps\n";
    for (std::size_t w = 0; w < p.walkers; ++w) {
        for (std::size_t t = 0; t < p.steps; ++t) {
            s += std::to_string(w) + "," + std::to_string(p.first_step + t);
            for (std::size_t k = 0; k < kParamCount; ++k) {
                s += "," + format_double(p.at(w, t, static_cast<Param>(k)));
            }
            s += "\n";
        }
    }
    return s;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    Common common;
    std::optional<double> visibility;
    std::optional<std::string> kernel;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    ScanConfig c = scan_config_from(ini);
    Output o("simulate", ini, a.common.out_dir);
    if (a.common.seed) {
        c.rng_seed = *a.common.seed;
        o.note("seed", std::to_string(*a.common.seed));
    }
    if (a.visibility) {
        c.model.visibility = *a.visibility;
        o.note("visibility", format_double(*a.visibility));
    }
    if (a.kernel) {
        c.kernel = parse_kernel(*a.kernel);
        o.note("kernel", *a.kernel);
    }
    print_warnings(err, c.validate());
    const Trace t = simulate_scan(c);
    auto comments = o.header();
    comments.push_back("seed " + std::to_string(c.rng_seed));
    const fs::path p = o.write("trace.csv", trace_to_csv(t, comments));
    out << "wrote " << p.string() << " (" << t.size() << " points)\n";

    if (ini.get_bool("timestamps", "enabled", false)) {
        ScanConfig tc = c;
        const double pulses = static_cast<double>(ini.get_uint("timestamps", "pulses", 1000000));
        tc.dwell_time = pulses / tc.rep_rate;
        const double delay = ini.get_double("timestamps", "delay_ps", 0.0);
        const auto records = simulate_timestamps(tc, delay);
        const fs::path tp = o.write("timestamps.flh1", encode_flh1(tc.rep_rate, records));
        CoincidenceCounter counter(tc.coincidence_window);
        for (const auto& r : records) {
            counter.push(r);
        }
        const auto pairs = counter.finish();
        out << "wrote " << tp.string() << " (" << records.size() << " records, " << pairs << " coincidences)\n";
    }
    return kExitOk;
}

struct FitArgs {
    Common common;
    std::string trace;
    std::optional<std::string> method;
    std::optional<std::string> kernel;
    std::optional<double> irf_fwhm;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    FitOptions opts = fit_options_from(ini);
    Output o("fit", ini, a.common.out_dir);
    FitMethod method = parse_fit_method(ini.get_string("fit", "method", "nlls"));
    if (a.method) {
        method = parse_fit_method(*a.method);
        o.note("method", *a.method);
    }
    if (a.kernel) {
        opts.kernel = parse_kernel(*a.kernel);
        o.note("kernel", *a.kernel);
    }
    if (a.irf_fwhm) {
        opts.irf_sigma = sigma_from_fwhm(*a.irf_fwhm);
        o.note("irf-fwhm", format_double(*a.irf_fwhm));
    }
    if (a.common.seed) {
        opts.mcmc.seed = *a.common.seed;
        o.note("seed", std::to_string(*a.common.seed));
    }
    opts.validate();
    const Trace trace = read_trace_csv(a.trace);
    o.note("trace_hash", fnv1a64_hex(read_file(a.trace)));
    if (!trace.is_normalized()) {
        throw IoError(a.trace + ": trace has no normalized column");
    }

    FitResult r;
    int code = kExitOk;
    try {
        r = fit_trace(trace, method, opts);
    } catch (const FitError& e) {
        r = e.best();
        r.converged = false;
        r.warnings.push_back(e.what());
        err << "error: " << e.what() << '\n';
        code = kExitNumerical;
    }
    print_warnings(err, r.warnings);
    const fs::path rp = o.write("fit_report.txt", fit_report(r, o, a.trace));
    out << "mu = " << format_double(r.params.lifetime_mu) << " +/- " << format_double(r.std_errors[0]) << " ps ("
        << fit_method_name(r.method) << ")\n";
    out << "wrote " << rp.string() << '\n';
    if (r.posterior) {
        const fs::path pp = o.write("posterior.csv", posterior_csv(*r.posterior, o));
        out << "wrote " << pp.string() << '\n';
    }
    if (!r.converged && code == kExitOk) {
        code = kExitNumerical;
    }
    return code;
}

struct VisibilityArgs {
    Common common;
    std::optional<double> ratio_min, ratio_max, cap;
    std::optional<std::size_t> points;
    std::optional<std::string> convention, kernel;
};

int cmd_visibility(const VisibilityArgs& a, std::ostream& out, std::ostream&)
{
    const IniConfig ini = load_config(a.common);
    VisibilityOptions v = visibility_options_from(ini);
    Output o("visibility-curve", ini, a.common.out_dir);
    double lo = ini.get_double("visibility", "ratio_min", 0.05);
    double hi = ini.get_double("visibility", "ratio_max", 5.0);
    std::size_t n = ini.get_uint("visibility", "points", 200);
    if (a.ratio_min) {
        lo = *a.ratio_min;
        o.note("ratio-min", format_double(lo));
    }
    if (a.ratio_max) {
        hi = *a.ratio_max;
        o.note("ratio-max", format_double(hi));
    }
    if (a.points) {
        n = *a.points;
        o.note("points", std::to_string(n));
    }
    if (a.cap) {
        v.cap = *a.cap;
        o.note("cap", format_double(v.cap));
    }
    if (a.convention) {
        if (*a.convention == "rms") {
            v.convention = RatioConvention::Rms;
        } else if (*a.convention == "fwhm") {
            v.convention = RatioConvention::Fwhm;
        } else {
            throw ConfigError("--convention must be rms or fwhm");
        }
        o.note("convention", *a.convention);
    }
    if (a.kernel) {
        v.kernel = parse_kernel(*a.kernel);
        o.note("kernel", *a.kernel);
    }
    const VisibilityCurve curve = visibility_curve(lo, hi, n, v);
    std::string s = o.header_text();
    s += "# convention " + std::string(v.convention == RatioConvention::Rms ? "rms" : "fwhm") + "\n";
    s += "# kernel " + std::string(kernel_name(v.kernel)) + "\n";
    s += "# peak_ratio " + format_double(curve.peak_ratio) + "\n";
    s += "# scale " + format_double(curve.scale) + "\n";
    s += "ratio,visibility\n";
    for (std::size_t i = 0; i < curve.ratio.size(); ++i) {
        s += format_double(curve.ratio[i]) + "," + format_double(curve.visibility[i]) + "\n";
    }
    const fs::path p = o.write("visibility_curve.csv", s);
    out << "peak ratio = " << format_double(curve.peak_ratio) << "\nwrote " << p.string() << '\n';
    return kExitOk;
}

struct PrecisionArgs {
    Common common;
    std::optional<std::string> method;
    std::optional<std::size_t> repeats;
};

int cmd_precision(const PrecisionArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    ScanConfig c = scan_config_from(ini);
    Output o("precision-scan", ini, a.common.out_dir);
    if (a.common.seed) {
        c.rng_seed = *a.common.seed;
        o.note("seed", std::to_string(*a.common.seed));
    }
    PrecisionOptions po;
    po.fit = fit_options_from(ini);
    po.method = parse_fit_method(ini.get_string("precision", "method", "nlls"));
    if (a.method) {
        po.method = parse_fit_method(*a.method);
        o.note("method", *a.method);
    }
    po.sub_exposure = ini.get_double("precision", "sub_exposure_s", po.sub_exposure);
    std::size_t repeats = ini.get_uint("precision", "repeats", 50);
    if (a.repeats) {
        repeats = *a.repeats;
        o.note("repeats", std::to_string(repeats));
    }
    if (repeats < 20) {
        err << "warning: fewer than 20 repeats per time; spread estimates will be noisy\n";
    }
    const auto times = ini.get_list("precision", "times_s", {0.5, 1, 2, 5, 10, 20, 50});
    print_warnings(err, c.validate());
    const PrecisionScan scan = precision_scan(c, times, repeats, po);
    std::string s = o.header_text();
    s += "# loglog_slope " + format_double(scan.loglog_slope) + "\n";
    s += "total_time_s,sigma_mu_ps,mean_mu_ps,fits,failures,flagged\n";
    for (const auto& r : scan.rows) {
        s += format_double(r.total_time) + "," + format_double(r.sigma_mu) + "," + format_double(r.mean_mu) + "," +
             std::to_string(r.fits) + "," + std::to_string(r.failures) + "," + (r.flagged ? "1" : "0") + "\n";
        if (r.flagged) {
            err << "warning: T = " << format_double(r.total_time) << " s: " << r.failures << " of " << repeats
                << " fits failed\n";
        }
    }
    const fs::path p = o.write("precision_scan.csv", s);
    out << "log-log slope = " << format_double(scan.loglog_slope) << "\nwrote " << p.string() << '\n';
    return kExitOk;
}

struct IrfArgs {
    Common common;
    std::string trace;
    std::optional<double> cutoff;
};

int cmd_irf(const IrfArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    Output o("irf", ini, a.common.out_dir);
    IrfOptions io;
    io.cutoff_fraction = ini.get_double("irf", "cutoff_fraction", io.cutoff_fraction);
    if (a.cutoff) {
        io.cutoff_fraction = *a.cutoff;
        o.note("cutoff", format_double(io.cutoff_fraction));
    }
    Trace t;
    std::string source;
    if (!a.trace.empty()) {
        t = read_trace_csv(a.trace);
        source = a.trace;
        o.note("trace_hash", fnv1a64_hex(read_file(a.trace)));
    } else {
        ScanConfig c = scan_config_from(ini);
        c.mode = ScanMode::Autocorrelation;
        if (a.common.seed) {
            c.rng_seed = *a.common.seed;
            o.note("seed", std::to_string(*a.common.seed));
        }
        print_warnings(err, c.validate());
        t = simulate_scan(c);
        auto comments = o.header();
        comments.push_back("seed " + std::to_string(c.rng_seed));
        const fs::path tp = o.write("autocorrelation.csv", trace_to_csv(t, comments));
        out << "wrote " << tp.string() << '\n';
        source = tp.filename().string(); // sibling of the report
    }
    const IrfEstimate e = irf_from_autocorrelation(t, io);
    std::string s = o.header_text();
    s += "trace = " + source + "\n";
    s += report_line("cutoff_fraction", io.cutoff_fraction);
    s += report_line("cutoff_frequency_per_ps", e.cutoff_frequency);
    s += report_line("filter_sigma_ps", e.filter_sigma);
    s += report_line("autocorr_sigma_ps", e.autocorr_sigma);
    s += report_line("autocorr_fwhm_ps", e.autocorr_fwhm);
    s += report_line("pulse_sigma_ps", e.pulse_sigma);
    s += report_line("pulse_fwhm_ps", e.pulse_fwhm);
    s += report_line("center_ps", e.center);
    s += report_line("amplitude", e.amplitude);
    s += report_line("offset", e.offset);
    const fs::path p = o.write("irf_report.txt", s);
    out << "autocorrelation FWHM = " << format_double(e.autocorr_fwhm) << " ps, pulse FWHM = "
        << format_double(e.pulse_fwhm) << " ps\nwrote " << p.string() << '\n';
    return kExitOk;
}

struct CalibrateArgs {
    Common common;
    std::string csv;
    std::optional<std::string> law;
};

double calibration_irf_sigma(const IniConfig& ini, std::optional<double> fwhm)
{
    if (fwhm) {
        return sigma_from_fwhm(*fwhm);
    }
    if (ini.has("calibration", "irf_fwhm_ps")) {
        return sigma_from_fwhm(ini.get_double("calibration", "irf_fwhm_ps", 0.0));
    }
    return ini.get_double("calibration", "irf_sigma_ps", sigma_from_fwhm(2.08));
}

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    Output o("calibrate-viscosity", ini, a.common.out_dir);
    std::string csv = a.csv;
    if (csv.empty()) {
        csv = ini.get_string("calibration", "file", "");
        if (csv.empty()) {
            throw ConfigError("calibrate-viscosity needs a calibration CSV (argument or [calibration] file)");
        }
        if (fs::path(csv).is_relative() && !a.common.config.empty()) {
            csv = (fs::path(a.common.config).parent_path() / csv).string();
        }
    }
    CalibrationLaw law = parse_calibration_law(ini.get_string("calibration", "law", "power-law"));
    if (a.law) {
        law = parse_calibration_law(*a.law);
        o.note("law", *a.law);
    }
    const ViscosityCalibration cal = fit_calibration_file(csv, law);
    o.note("input_hash", cal.provenance.input_hash);
    print_warnings(err, cal.warnings);

    const double irf_sigma = calibration_irf_sigma(ini, std::nullopt);
    const double mult = ini.get_double("calibration", "multiplier", default_resolution_multiplier());
    const double eta_min = min_resolvable_viscosity(irf_sigma, cal, mult);

    std::string s = o.header_text();
    s += calibration_to_text(cal);
    s += "# resolution floor\n";
    s += report_line("irf_sigma_ps", irf_sigma);
    s += report_line("resolution_multiplier", mult);
    s += report_line("resolution_floor_ps", mult * irf_sigma);
    s += report_line("min_resolvable_viscosity_mPas", eta_min);
    const fs::path p = o.write("calibration.txt", s);

    std::string c = o.header_text();
    c += "eta_mPas,mu_ps\n";
    const double lo = std::log(0.5 * cal.eta_min());
    const double hi = std::log(2.0 * cal.eta_max());
    for (int i = 0; i < 100; ++i) {
        const double eta = std::exp(lo + (hi - lo) * i / 99.0);
        c += format_double(eta) + "," + format_double(cal.lifetime_at(eta)) + "\n";
    }
    const fs::path cp = o.write("calibration_curve.csv", c);
    out << "k = " << format_double(cal.k) << " ps, x = " << format_double(cal.x) << " +/- "
        << format_double(cal.x_std()) << "\nmin resolvable viscosity = " << format_double(eta_min)
        << " mPa s (floor " << format_double(mult * irf_sigma) << " ps, c = " << format_double(mult) << ")\n";
    out << "wrote " << p.string() << "\nwrote " << cp.string() << '\n';
    return kExitOk;
}

struct ViscosityArgs {
    Common common;
    std::string calibration;
    double mu = 0.0;
    double mu_std = 0.0;
    std::optional<double> irf_fwhm;
};

int cmd_viscosity(const ViscosityArgs& a, std::ostream& out, std::ostream& err)
{
    const IniConfig ini = load_config(a.common);
    Output o("viscosity", ini, a.common.out_dir);
    const std::string text = read_file(a.calibration);
    const ViscosityCalibration cal = calibration_from_text(text, a.calibration);
    o.note("calibration_hash", fnv1a64_hex(text));
    o.note("mu", format_double(a.mu));
    o.note("mu-std", format_double(a.mu_std));
    const ViscosityEstimate e = viscosity_from_lifetime(a.mu, a.mu_std, cal);
    print_warnings(err, e.warnings);
    const double irf_sigma = calibration_irf_sigma(ini, a.irf_fwhm);
    if (a.irf_fwhm) {
        o.note("irf-fwhm", format_double(*a.irf_fwhm));
    }
    const double mult = ini.get_double("calibration", "multiplier", default_resolution_multiplier());
    const double eta_min = min_resolvable_viscosity(irf_sigma, cal, mult);

    std::string s = o.header_text();
    s += "calibration = " + a.calibration + "\n";
    s += report_line("mu_ps", a.mu);
    s += report_line("mu_std_ps", a.mu_std);
    s += report_line("eta_mPas", e.eta);
    s += report_line("eta_std_mPas", e.eta_std);
    s += std::string("extrapolated = ") + (e.extrapolated ? "true" : "false") + "\n";
    s += report_line("resolution_floor_ps", mult * irf_sigma);
    s += report_line("min_resolvable_viscosity_mPas", eta_min);
    const fs::path p = o.write("viscosity_report.txt", s);
    out << "eta = " << format_double(e.eta) << " +/- " << format_double(e.eta_std) << " mPa s\nwrote " << p.string()
        << '\n';
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Fluorescence-lifetime HOM simulation and estimation toolkit", "flhom"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("flhom ") + FLHOM_VERSION);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "simulate a delay-scan trace (and optional timestamps)");
    add_common(s, sim.common);
    s->add_option("--visibility", sim.visibility, "override the dip visibility");
    s->add_option("--kernel", sim.kernel, "dip kernel: emg or field-overlap");

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "fit a trace CSV");
    f->add_option("trace", fit.trace, "trace CSV")->required();
    add_common(f, fit.common);
    f->add_option("--method", fit.method, "tail, nlls or mcmc");
    f->add_option("--kernel", fit.kernel, "emg or field-overlap");
    f->add_option("--irf-fwhm", fit.irf_fwhm, "reference pulse FWHM in ps (fixes sigma)");

    VisibilityArgs vis;
    auto* v = app.add_subcommand("visibility-curve", "visibility against pulse-duration/lifetime ratio");
    add_common(v, vis.common, false);
    v->add_option("--ratio-min", vis.ratio_min);
    v->add_option("--ratio-max", vis.ratio_max);
    v->add_option("--points", vis.points);
    v->add_option("--cap", vis.cap, "visibility cap (0.5 classical, 1 single-photon)");
    v->add_option("--convention", vis.convention, "ratio convention: rms or fwhm");
    v->add_option("--kernel", vis.kernel, "emg or field-overlap");

    PrecisionArgs prec;
    auto* p = app.add_subcommand("precision-scan", "lifetime spread against acquisition time");
    add_common(p, prec.common);
    p->add_option("--method", prec.method, "tail, nlls or mcmc");
    p->add_option("--repeats", prec.repeats, "repeats per acquisition time");

    IrfArgs irf;
    auto* i = app.add_subcommand("irf", "reference pulse width from an autocorrelation scan");
    i->add_option("trace", irf.trace, "autocorrelation trace CSV (simulated from the config when omitted)");
    add_common(i, irf.common);
    i->add_option("--cutoff", irf.cutoff, "low-pass cutoff as a fraction of the Nyquist frequency");

    CalibrateArgs calib;
    auto* c = app.add_subcommand("calibrate-viscosity", "fit a lifetime-viscosity calibration");
    c->add_option("csv", calib.csv, "calibration CSV (eta_mPas,mu_ps,mu_std_ps)");
    add_common(c, calib.common, false);
    c->add_option("--law", calib.law, "power-law or monotone-spline");

    ViscosityArgs visc;
    auto* w = app.add_subcommand("viscosity", "viscosity from a lifetime");
    add_common(w, visc.common, false);
    w->add_option("--calibration", visc.calibration, "calibration file from calibrate-viscosity")->required();
    w->add_option("--mu", visc.mu, "lifetime in ps")->required();
    w->add_option("--mu-std", visc.mu_std, "lifetime standard error in ps")->capture_default_str();
    w->add_option("--irf-fwhm", visc.irf_fwhm, "reference pulse FWHM in ps for the resolution floor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        // A missing --config file is an I/O problem, everything else a usage error.
        const std::string what = e.what();
        return what.find("File does not exist") != std::string::npos ? kExitIo : kExitConfig;
    }

    try {
        if (*s) {
            return cmd_simulate(sim, out, err);
        }
        if (*f) {
            return cmd_fit(fit, out, err);
        }
        if (*v) {
            return cmd_visibility(vis, out, err);
        }
        if (*p) {
            return cmd_precision(prec, out, err);
        }
        if (*i) {
            return cmd_irf(irf, out, err);
        }
        if (*c) {
            return cmd_calibrate(calib, out, err);
        }
        if (*w) {
            return cmd_viscosity(visc, out, err);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& e) {
        err << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

} // namespace flhom::cli
