#include "flhom/errors.hpp"
#include "flhom/estimation.hpp"
#include "flhom/io.hpp"
#include "flhom/model.hpp"
#include "flhom/photonsim.hpp"
#include "flhom/rheology.hpp"
#include "flhom/units.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace flhom;

PYBIND11_MODULE(_core, m)
{
    m.doc() = "flhom core: dip model, photon simulation, lifetime estimation and viscosity calibration";
    m.attr("__version__") = FLHOM_VERSION;

    auto base = py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    (void)base;

    m.def("sigma_from_fwhm", &sigma_from_fwhm, py::arg("fwhm"));
    m.def("fwhm_from_sigma", &fwhm_from_sigma, py::arg("sigma"));

    // model
    py::enum_<KernelKind>(m, "KernelKind").value("EMG", KernelKind::Emg).value("FIELD_OVERLAP", KernelKind::FieldOverlap);
    py::enum_<RatioConvention>(m, "RatioConvention")
        .value("RMS", RatioConvention::Rms)
        .value("FWHM", RatioConvention::Fwhm);

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init([](double mu, double sigma, double visibility, double baseline, double t0) {
                 ModelParams p{mu, sigma, visibility, baseline, t0};
                 p.validate();
                 return p;
             }),
             py::arg("lifetime_mu") = 1.0, py::arg("ref_sigma") = 0.0, py::arg("visibility") = 0.0,
             py::arg("baseline") = 1.0, py::arg("delay_offset_t0") = 0.0)
        .def_readwrite("lifetime_mu", &ModelParams::lifetime_mu)
        .def_readwrite("ref_sigma", &ModelParams::ref_sigma)
        .def_readwrite("visibility", &ModelParams::visibility)
        .def_readwrite("baseline", &ModelParams::baseline)
        .def_readwrite("delay_offset_t0", &ModelParams::delay_offset_t0)
        .def("validate", &ModelParams::validate)
        .def("__repr__", [](const ModelParams& p) {
            return "ModelParams(lifetime_mu=" + format_double(p.lifetime_mu) + ", ref_sigma=" +
                   format_double(p.ref_sigma) + ", visibility=" + format_double(p.visibility) + ", baseline=" +
                   format_double(p.baseline) + ", delay_offset_t0=" + format_double(p.delay_offset_t0) + ")";
        });

    m.def("dip_kernel", py::vectorize(&dip_kernel), py::arg("tau"), py::arg("lifetime_mu"), py::arg("ref_sigma"));
    m.def("field_overlap_kernel", py::vectorize(&field_overlap_kernel), py::arg("tau"), py::arg("lifetime_mu"),
          py::arg("ref_sigma"));
    m.def(
        "dip_model",
        [](py::array_t<double> tau, const ModelParams& p, KernelKind kind) {
            return py::vectorize([&](double t) { return dip_model(t, p, kind); })(tau);
        },
        py::arg("tau"), py::arg("params"), py::arg("kernel") = KernelKind::Emg);
    m.def("snr_coincidence", py::vectorize(&snr_coincidence), py::arg("n"));

    py::class_<VisibilityOptions>(m, "VisibilityOptions")
        .def(py::init<>())
        .def_readwrite("cap", &VisibilityOptions::cap)
        .def_readwrite("convention", &VisibilityOptions::convention)
        .def_readwrite("kernel", &VisibilityOptions::kernel);
    py::class_<VisibilityCurve>(m, "VisibilityCurve")
        .def_readonly("ratio", &VisibilityCurve::ratio)
        .def_readonly("visibility", &VisibilityCurve::visibility)
        .def_readonly("peak_ratio", &VisibilityCurve::peak_ratio)
        .def_readonly("scale", &VisibilityCurve::scale);
    m.def(
        "visibility_curve",
        [](double lo, double hi, std::size_t n, const VisibilityOptions& o) { return visibility_curve(lo, hi, n, o); },
        py::arg("ratio_min") = 0.05, py::arg("ratio_max") = 5.0, py::arg("points") = 200,
        py::arg("options") = VisibilityOptions{});

    // photonsim
    py::enum_<ScanMode>(m, "ScanMode").value("DIP", ScanMode::Dip).value("AUTOCORRELATION", ScanMode::Autocorrelation);
    py::class_<ScanConfig>(m, "ScanConfig")
        .def(py::init<>())
        .def_readwrite("mode", &ScanConfig::mode)
        .def_readwrite("rep_rate", &ScanConfig::rep_rate)
        .def_readwrite("singles_rate_1", &ScanConfig::singles_rate_1)
        .def_readwrite("singles_rate_2", &ScanConfig::singles_rate_2)
        .def_readwrite("coincidence_rate_baseline", &ScanConfig::coincidence_rate_baseline)
        .def_readwrite("delay_grid", &ScanConfig::delay_grid)
        .def_readwrite("dwell_time", &ScanConfig::dwell_time)
        .def_readwrite("sub_exposure", &ScanConfig::sub_exposure)
        .def_readwrite("coincidence_window", &ScanConfig::coincidence_window)
        .def_readwrite("detector_jitter_fwhm", &ScanConfig::detector_jitter_fwhm)
        .def_readwrite("model", &ScanConfig::model)
        .def_readwrite("kernel", &ScanConfig::kernel)
        .def_readwrite("rng_seed", &ScanConfig::rng_seed)
        .def("validate", &ScanConfig::validate);

    py::class_<Trace>(m, "Trace")
        .def(py::init<>())
        .def_readwrite("delay", &Trace::delay)
        .def_readwrite("coincidences", &Trace::coincidences)
        .def_readwrite("singles_1", &Trace::singles_1)
        .def_readwrite("singles_2", &Trace::singles_2)
        .def_readwrite("normalized", &Trace::normalized)
        .def_readwrite("dwell_time", &Trace::dwell_time)
        .def("__len__", &Trace::size);

    m.def("uniform_grid", &uniform_grid, py::arg("start"), py::arg("step"), py::arg("n"));
    m.def("simulate_scan", &simulate_scan, py::arg("config"));
    m.def("expected_trace", &expected_trace, py::arg("config"));
    m.def("trace_to_csv", [](const Trace& t) { return trace_to_csv(t); }, py::arg("trace"));
    m.def("trace_from_csv", [](const std::string& s) { return trace_from_csv(s); }, py::arg("text"));
    m.def("read_trace_csv", &read_trace_csv, py::arg("path"));

    py::class_<PhotonRecord>(m, "PhotonRecord")
        .def_readonly("channel", &PhotonRecord::channel)
        .def_readonly("pulse_index", &PhotonRecord::pulse_index)
        .def_readonly("intra_pulse_time", &PhotonRecord::intra_pulse_time);
    m.def(
        "simulate_timestamps",
        [](const ScanConfig& c, double delay) { return simulate_timestamps(c, delay); }, py::arg("config"),
        py::arg("delay"));
    m.def(
        "coincidence_histogram",
        [](const std::vector<PhotonRecord>& r, double w) { return coincidence_histogram(r, w); }, py::arg("records"),
        py::arg("window_ps"));

    py::class_<RateTradeoff>(m, "RateTradeoff")
        .def_readonly("coincidence_rate", &RateTradeoff::coincidence_rate)
        .def_readonly("reference_rate", &RateTradeoff::reference_rate)
        .def_readonly("time_factor", &RateTradeoff::time_factor);
    m.def("rate_tradeoff", &rate_tradeoff, py::arg("rep_rate"), py::arg("per_pulse_prob"),
          py::arg("reference_rep_rate") = 8e7, py::arg("reference_prob") = 0.01);

    // estimation
    py::enum_<FitMethod>(m, "FitMethod")
        .value("TAIL", FitMethod::Tail)
        .value("NLLS", FitMethod::Nlls)
        .value("MCMC", FitMethod::Mcmc);
    py::class_<McmcOptions>(m, "McmcOptions")
        .def(py::init<>())
        .def_readwrite("walkers", &McmcOptions::walkers)
        .def_readwrite("steps", &McmcOptions::steps)
        .def_readwrite("burn_in_fraction", &McmcOptions::burn_in_fraction)
        .def_readwrite("stretch_scale", &McmcOptions::stretch_scale)
        .def_readwrite("seed", &McmcOptions::seed);
    py::class_<FitOptions>(m, "FitOptions")
        .def(py::init<>())
        .def_readwrite("free", &FitOptions::free)
        .def_readwrite("irf_sigma", &FitOptions::irf_sigma)
        .def_readwrite("kernel", &FitOptions::kernel)
        .def_readwrite("max_iterations", &FitOptions::max_iterations)
        .def_readwrite("tail_region", &FitOptions::tail_region)
        .def_readwrite("mcmc", &FitOptions::mcmc);
    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_readonly("std_errors", &FitResult::std_errors)
        .def_readonly("covariance", &FitResult::covariance)
        .def_readonly("mu_interval95", &FitResult::mu_interval95)
        .def_readonly("reduced_chi2", &FitResult::reduced_chi2)
        .def_readonly("method", &FitResult::method)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("acceptance_fraction", &FitResult::acceptance_fraction)
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("warnings", &FitResult::warnings);
    m.def("fit_trace", &fit_trace, py::arg("trace"), py::arg("method") = FitMethod::Nlls,
          py::arg("options") = FitOptions{});

    py::class_<IrfEstimate>(m, "IrfEstimate")
        .def_readonly("autocorr_fwhm", &IrfEstimate::autocorr_fwhm)
        .def_readonly("pulse_fwhm", &IrfEstimate::pulse_fwhm)
        .def_readonly("center", &IrfEstimate::center);
    m.def(
        "irf_from_autocorrelation",
        [](const Trace& t, double cutoff) { return irf_from_autocorrelation(t, IrfOptions{cutoff}); },
        py::arg("trace"), py::arg("cutoff_fraction") = 0.1);

    // rheology
    py::enum_<CalibrationLaw>(m, "CalibrationLaw")
        .value("POWER_LAW", CalibrationLaw::PowerLaw)
        .value("MONOTONE_SPLINE", CalibrationLaw::MonotoneSpline);
    py::class_<CalibrationPoint>(m, "CalibrationPoint")
        .def(py::init([](double eta, double mu, double mu_std) { return CalibrationPoint{eta, mu, mu_std}; }),
             py::arg("eta"), py::arg("mu"), py::arg("mu_std") = 0.0)
        .def_readwrite("eta", &CalibrationPoint::eta)
        .def_readwrite("mu", &CalibrationPoint::mu)
        .def_readwrite("mu_std", &CalibrationPoint::mu_std);
    py::class_<ViscosityCalibration>(m, "ViscosityCalibration")
        .def_readonly("law", &ViscosityCalibration::law)
        .def_readonly("k", &ViscosityCalibration::k)
        .def_readonly("x", &ViscosityCalibration::x)
        .def_readonly("fit_covariance", &ViscosityCalibration::fit_covariance)
        .def_readonly("reduced_chi2", &ViscosityCalibration::reduced_chi2)
        .def_readonly("warnings", &ViscosityCalibration::warnings)
        .def("lifetime_at", &ViscosityCalibration::lifetime_at, py::arg("eta"));
    py::class_<ViscosityEstimate>(m, "ViscosityEstimate")
        .def_readonly("eta", &ViscosityEstimate::eta)
        .def_readonly("eta_std", &ViscosityEstimate::eta_std)
        .def_readonly("extrapolated", &ViscosityEstimate::extrapolated)
        .def_readonly("warnings", &ViscosityEstimate::warnings);
    m.def(
        "fit_calibration",
        [](const std::vector<CalibrationPoint>& p, CalibrationLaw law) { return fit_calibration(p, law); },
        py::arg("points"), py::arg("law") = CalibrationLaw::PowerLaw);
    m.def("viscosity_from_lifetime", &viscosity_from_lifetime, py::arg("mu"), py::arg("mu_std"), py::arg("calibration"));
    m.def("min_resolvable_viscosity", &min_resolvable_viscosity, py::arg("irf_sigma"), py::arg("calibration"),
          py::arg("multiplier") = default_resolution_multiplier());
}
