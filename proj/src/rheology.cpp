#include "flhom/rheology.hpp"

#include "flhom/errors.hpp"
#include "flhom/io.hpp"
#include "flhom/units.hpp"

#include <cmath>
using std::isnan; // pchip.hpp in Boost 1.74 calls isnan unqualified
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <map>
#include <sstream>

namespace flhom {

/// PCHIP in (ln eta, ln mu) with log-log linear continuation past both ends.
class LogLogSpline {
public:
    explicit LogLogSpline(const std::vector<CalibrationPoint>& pts)
    {
        std::vector<double> lx;
        std::vector<double> ly;
        for (const auto& p : pts) {
            lx.push_back(std::log(p.eta));
            ly.push_back(std::log(p.mu));
        }
        x0_ = lx.front();
        x1_ = lx.back();
        y0_ = ly.front();
        y1_ = ly.back();
        const std::size_t n = lx.size();
        s0_ = (ly[1] - ly[0]) / (lx[1] - lx[0]);
        s1_ = (ly[n - 1] - ly[n - 2]) / (lx[n - 1] - lx[n - 2]);
        pchip_ = std::make_unique<boost::math::interpolators::pchip<std::vector<double>>>(std::move(lx), std::move(ly),
                                                                                            s0_, s1_);
    }

    double log_mu(double log_eta) const
    {
        if (log_eta <= x0_) {
            return y0_ + s0_ * (log_eta - x0_);
        }
        if (log_eta >= x1_) {
            return y1_ + s1_ * (log_eta - x1_);
        }
        return (*pchip_)(log_eta);
    }
    double slope(double log_eta) const
    {
        if (log_eta <= x0_) {
            return s0_;
        }
        if (log_eta >= x1_) {
            return s1_;
        }
        return pchip_->prime(log_eta);
    }
    double log_eta(double log_mu) const
    {
        if (log_mu <= y0_) {
            return x0_ + (log_mu - y0_) / s0_;
        }
        if (log_mu >= y1_) {
            return x1_ + (log_mu - y1_) / s1_;
        }
        std::uintmax_t iters = 200;
        const auto r = boost::math::tools::toms748_solve([&](double t) { return (*pchip_)(t) - log_mu; }, x0_, x1_,
                                                         y0_ - log_mu, y1_ - log_mu,
                                                         boost::math::tools::eps_tolerance<double>(52), iters);
        return 0.5 * (r.first + r.second);
    }

private:
    std::unique_ptr<boost::math::interpolators::pchip<std::vector<double>>> pchip_;
    double x0_ = 0, x1_ = 0, y0_ = 0, y1_ = 0, s0_ = 0, s1_ = 0;
};

namespace {

std::vector<CalibrationPoint> checked_sorted(std::span<const CalibrationPoint> points)
{
    std::vector<CalibrationPoint> pts(points.begin(), points.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        if (!(p.eta > 0.0) || !std::isfinite(p.eta) || !(p.mu > 0.0) || !std::isfinite(p.mu) ||
            !(p.mu_std >= 0.0) || !std::isfinite(p.mu_std)) {
            throw DomainError("calibration point " + std::to_string(i) + " needs eta > 0, mu > 0 and mu_std >= 0");
        }
    }
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.eta < b.eta; });
    return pts;
}

double parse_number(std::string_view s, const std::string& where)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw IoError(where + ": '" + std::string(s) + "' is not a number");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t p = s.find(sep, start);
        out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
        if (p == std::string_view::npos) {
            return out;
        }
        start = p + 1;
    }
}

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

} // namespace

CalibrationLaw parse_calibration_law(std::string_view name)
{
    if (name == "power-law") {
        return CalibrationLaw::PowerLaw;
    }
    if (name == "monotone-spline") {
        return CalibrationLaw::MonotoneSpline;
    }
    throw ConfigError("unknown calibration law '" + std::string(name) + "' (expected power-law or monotone-spline)");
}

std::string_view calibration_law_name(CalibrationLaw law)
{
    return law == CalibrationLaw::PowerLaw ? "power-law" : "monotone-spline";
}

double ViscosityCalibration::k_std() const { return k * std::sqrt(std::max(0.0, fit_covariance(0, 0))); }
double ViscosityCalibration::x_std() const { return std::sqrt(std::max(0.0, fit_covariance(1, 1))); }

double ViscosityCalibration::mu_min() const
{
    return std::min_element(points.begin(), points.end(), [](auto& a, auto& b) { return a.mu < b.mu; })->mu;
}
double ViscosityCalibration::mu_max() const
{
    return std::max_element(points.begin(), points.end(), [](auto& a, auto& b) { return a.mu < b.mu; })->mu;
}

double ViscosityCalibration::lifetime_at(double eta) const
{
    if (!(eta >= 0.0)) {
        throw DomainError("viscosity must be >= 0");
    }
    if (eta == 0.0) {
        return 0.0;
    }
    if (law == CalibrationLaw::MonotoneSpline && spline) {
        return std::exp(spline->log_mu(std::log(eta)));
    }
    return k * std::pow(eta, x);
}

ViscosityCalibration fit_calibration(std::span<const CalibrationPoint> points, CalibrationLaw law)
{
    if (points.size() < 3) {
        throw DomainError("calibration needs at least 3 points, got " + std::to_string(points.size()));
    }
    ViscosityCalibration cal;
    cal.points = checked_sorted(points);
    cal.law = law;
    const auto& pts = cal.points;
    const std::size_t n = pts.size();

    const bool any_std = std::any_of(pts.begin(), pts.end(), [](auto& p) { return p.mu_std > 0.0; });
    const bool all_std = std::all_of(pts.begin(), pts.end(), [](auto& p) { return p.mu_std > 0.0; });
    if (any_std && !all_std) {
        throw DomainError("calibration mixes weighted and unweighted points; give mu_std for all or none");
    }

    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = 1.0;
        a(r, 1) = std::log(pts[i].eta);
        y[r] = std::log(pts[i].mu);
        const double rel = all_std ? pts[i].mu_std / pts[i].mu : 1.0;
        w[r] = 1.0 / (rel * rel);
    }
    const Eigen::MatrixXd aw = w.asDiagonal() * a;
    const Eigen::Matrix2d normal = a.transpose() * aw;
    const Eigen::LDLT<Eigen::Matrix2d> ldlt(normal);
    if (ldlt.info() != Eigen::Success || std::abs(normal.determinant()) < 1e-300) {
        throw NumericalError("calibration viscosities do not span a range");
    }
    const Eigen::Vector2d beta = ldlt.solve(aw.transpose() * y);
    const Eigen::VectorXd resid = y - a * beta;
    const double chi2 = resid.dot(w.asDiagonal() * resid);
    cal.reduced_chi2 = n > 2 ? chi2 / static_cast<double>(n - 2) : 0.0;
    Eigen::Matrix2d cov = normal.inverse();
    if (!all_std) {
        // Unweighted: scale by the residual variance.
        cov *= cal.reduced_chi2;
    }
    cal.fit_covariance = cov;
    cal.k = std::exp(beta[0]);
    cal.x = beta[1];
    if (!(cal.x > 0.0)) {
        throw NumericalError("fitted exponent x = " + format_double(cal.x) +
                             " is not positive; lifetime must increase with viscosity");
    }
    if (pts.back().eta / pts.front().eta < 10.0) {
        cal.warnings.push_back("calibration spans less than one decade in viscosity");
    }
    if (law == CalibrationLaw::MonotoneSpline) {
        if (n < 4) {
            throw DomainError("the monotone spline law needs at least 4 points");
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(pts[i].eta > pts[i - 1].eta) || !(pts[i].mu > pts[i - 1].mu)) {
                throw DomainError("the monotone spline law needs strictly increasing eta and mu (point " +
                                  std::to_string(i) + ")");
            }
        }
        cal.spline = std::make_shared<const LogLogSpline>(pts);
    }
    return cal;
}

ViscosityEstimate viscosity_from_lifetime(double mu, double mu_std, const ViscosityCalibration& cal)
{
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw DomainError("lifetime must be positive, got " + format_double(mu));
    }
    if (!(mu_std >= 0.0) || !std::isfinite(mu_std)) {
        throw DomainError("lifetime uncertainty must be >= 0");
    }
    if (!(cal.x > 0.0) || !(cal.k > 0.0)) {
        throw DomainError("calibration law is invalid");
    }
    ViscosityEstimate est;
    const double rel_mu = mu_std / mu;
    if (cal.law == CalibrationLaw::MonotoneSpline && cal.spline) {
        const double le = cal.spline->log_eta(std::log(mu));
        est.eta = std::exp(le);
        est.eta_std = est.eta * rel_mu / cal.spline->slope(le);
    } else {
        const double le = (std::log(mu) - std::log(cal.k)) / cal.x;
        est.eta = std::exp(le);
        const Eigen::RowVector2d j(-1.0 / cal.x, -le / cal.x);
        const double var = rel_mu * rel_mu / (cal.x * cal.x) + j * cal.fit_covariance * j.transpose();
        est.eta_std = est.eta * std::sqrt(std::max(0.0, var));
    }
    if (!cal.points.empty() && (mu < 0.5 * cal.mu_min() || mu > 2.0 * cal.mu_max())) {
        est.extrapolated = true;
        est.warnings.push_back("lifetime " + format_double(mu) + " ps lies outside the calibrated range [" +
                               format_double(0.5 * cal.mu_min()) + ", " + format_double(2.0 * cal.mu_max()) +
                               "] ps; extrapolating");
    }
    return est;
}

double default_resolution_multiplier() { return 2.8 / sigma_from_fwhm(2.08); }

double min_resolvable_viscosity(double irf_sigma, const ViscosityCalibration& cal, double multiplier)
{
    if (!(irf_sigma >= 0.0) || !std::isfinite(irf_sigma)) {
        throw DomainError("irf_sigma must be finite and >= 0");
    }
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
        throw DomainError("resolution multiplier must be positive");
    }
    const double floor = multiplier * irf_sigma;
    if (floor == 0.0) {
        return 0.0;
    }
    return viscosity_from_lifetime(floor, 0.0, cal).eta;
}

std::vector<CalibrationPoint> calibration_points_from_csv(std::string_view text, const std::string& source)
{
    std::vector<CalibrationPoint> pts;
    bool header = false;
    std::size_t line_no = 0;
    for (std::string_view line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        if (!header) {
            if (line != kCalibrationCsvHeader) {
                throw IoError(where + ": expected header '" + std::string(kCalibrationCsvHeader) + "'");
            }
            header = true;
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 3) {
            throw IoError(where + ": expected 3 fields, got " + std::to_string(f.size()));
        }
        pts.push_back({parse_number(f[0], where), parse_number(f[1], where), parse_number(f[2], where)});
    }
    if (!header) {
        throw IoError(source + ": missing header '" + std::string(kCalibrationCsvHeader) + "'");
    }
    return pts;
}

std::string calibration_points_to_csv(std::span<const CalibrationPoint> points)
{
    std::string out(kCalibrationCsvHeader);
    out += '\n';
    for (const auto& p : points) {
        out += format_double(p.eta) + ',' + format_double(p.mu) + ',' + format_double(p.mu_std) + '\n';
    }
    return out;
}

std::string provenance_date()
{
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
        long long v = 0;
        const auto r = std::from_chars(sde, sde + std::char_traits<char>::length(sde), v);
        if (r.ec == std::errc()) {
            t = static_cast<std::time_t>(v);
        }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

ViscosityCalibration fit_calibration_file(const std::filesystem::path& csv, CalibrationLaw law)
{
    const std::string bytes = read_file(csv);
    ViscosityCalibration cal = fit_calibration(calibration_points_from_csv(bytes, csv.string()), law);
    cal.provenance.input_file = csv.filename().string();
    cal.provenance.input_hash = fnv1a64_hex(bytes);
    cal.provenance.fit_date = provenance_date();
    cal.provenance.tool_version = FLHOM_VERSION;
    return cal;
}

std::string calibration_to_text(const ViscosityCalibration& cal)
{
    std::ostringstream s;
    s << "# flhom viscosity calibration\n";
    s << "format = flhom-calibration/1\n";
    s << "law = " << calibration_law_name(cal.law) << '\n';
    s << "k_ps = " << format_double(cal.k) << '\n';
    s << "x = " << format_double(cal.x) << '\n';
    s << "k_std_ps = " << format_double(cal.k_std()) << '\n';
    s << "x_std = " << format_double(cal.x_std()) << '\n';
    s << "cov_lnk_lnk = " << format_double(cal.fit_covariance(0, 0)) << '\n';
    s << "cov_lnk_x = " << format_double(cal.fit_covariance(0, 1)) << '\n';
    s << "cov_x_x = " << format_double(cal.fit_covariance(1, 1)) << '\n';
    s << "reduced_chi2 = " << format_double(cal.reduced_chi2) << '\n';
    s << "input_file = " << cal.provenance.input_file << '\n';
    s << "input_hash = " << cal.provenance.input_hash << '\n';
    s << "fit_date = " << cal.provenance.fit_date << '\n';
    s << "tool_version = " << cal.provenance.tool_version << '\n';
    s << "points = " << cal.points.size() << '\n';
    for (std::size_t i = 0; i < cal.points.size(); ++i) {
        const auto& p = cal.points[i];
        s << "point." << i << " = " << format_double(p.eta) << ',' << format_double(p.mu) << ','
          << format_double(p.mu_std) << '\n';
    }
    return s.str();
}

ViscosityCalibration calibration_from_text(std::string_view text, const std::string& source)
{
    std::map<std::string, std::string, std::less<>> kv;
    std::size_t line_no = 0;
    for (std::string_view line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw IoError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw IoError(source + ": missing key '" + key + "'");
        }
        return it->second;
    };
    if (need("format") != "flhom-calibration/1") {
        throw IoError(source + ": unsupported calibration format '" + need("format") + "'");
    }
    ViscosityCalibration cal;
    cal.law = parse_calibration_law(need("law"));
    cal.k = parse_number(need("k_ps"), source);
    cal.x = parse_number(need("x"), source);
    cal.fit_covariance(0, 0) = parse_number(need("cov_lnk_lnk"), source);
    cal.fit_covariance(0, 1) = cal.fit_covariance(1, 0) = parse_number(need("cov_lnk_x"), source);
    cal.fit_covariance(1, 1) = parse_number(need("cov_x_x"), source);
    cal.reduced_chi2 = parse_number(need("reduced_chi2"), source);
    cal.provenance.input_file = kv.count("input_file") ? kv["input_file"] : "";
    cal.provenance.input_hash = kv.count("input_hash") ? kv["input_hash"] : "";
    cal.provenance.fit_date = kv.count("fit_date") ? kv["fit_date"] : "";
    cal.provenance.tool_version = kv.count("tool_version") ? kv["tool_version"] : "";
    const auto n = static_cast<std::size_t>(parse_number(need("points"), source));
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = split(need("point." + std::to_string(i)), ',');
        if (f.size() != 3) {
            throw IoError(source + ": point." + std::to_string(i) + " needs eta,mu,mu_std");
        }
        cal.points.push_back({parse_number(f[0], source), parse_number(f[1], source), parse_number(f[2], source)});
    }
    if (!(cal.k > 0.0) || !(cal.x > 0.0)) {
        throw IoError(source + ": calibration needs k > 0 and x > 0");
    }
    if (cal.law == CalibrationLaw::MonotoneSpline) {
        if (cal.points.size() < 4) {
            throw IoError(source + ": spline calibration needs at least 4 points");
        }
        cal.spline = std::make_shared<const LogLogSpline>(cal.points);
    }
    return cal;
}

} // namespace flhom
