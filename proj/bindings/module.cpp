// Python bindings for the main operations: closed-form physics, Ellis
// fitting, flow simulation, the optical pipeline and splits.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vialcv/config.hpp"
#include "vialcv/dataset.hpp"
#include "vialcv/flowsim.hpp"
#include "vialcv/imaging.hpp"
#include "vialcv/pipeline.hpp"
#include "vialcv/rheology.hpp"

namespace py = pybind11;
using namespace vialcv;

namespace {

Fluid make_fluid(double eta, double rho, double gamma) {
  return Fluid(eta, rho, gamma);
}

py::dict report_dict(const DimensionlessReport& r) {
  py::dict d;
  d["u_vg"] = r.u_vg;
  d["re_vg"] = r.re_vg;
  d["re_flip"] = r.re_flip;
  d["bo"] = r.bo;
  d["sigma_taylor"] = r.sigma_taylor;
  d["initial_regime"] = to_string(r.initial_regime);
  return d;
}

}  // namespace

PYBIND11_MODULE(_vialcv, m) {
  m.doc() = "inverted-vial flow physics and viscosity inference core";

  m.def("taylor_stress",
        [](double eta, double rho, double radius) {
          return taylor_stress(make_fluid(eta, rho, 0.04),
                               VialGeometry::from_volumes(radius, 8e-6, 2e-6));
        },
        py::arg("eta"), py::arg("rho"), py::arg("radius") = 7.5e-3);

  m.def("film_thickness",
        [](double eta, double x, double t) {
          return film_thickness(make_fluid(eta, 900.0, 0.04), x, t);
        },
        py::arg("eta"), py::arg("x"), py::arg("t"));

  m.def("dimensionless_report",
        [](double eta, double rho, double gamma, double radius, double t_flip) {
          TestProtocol p;
          p.t_flip = t_flip;
          return report_dict(dimensionless_report(
              make_fluid(eta, rho, gamma),
              VialGeometry::from_volumes(radius, 8e-6, 2e-6), p));
        },
        py::arg("eta"), py::arg("rho"), py::arg("gamma") = 0.04,
        py::arg("radius") = 7.5e-3, py::arg("t_flip") = 2.0);

  m.def("ellis_viscosity",
        [](double eta0, double k, double a, double sigma) {
          return ellis_viscosity(EllisParams(eta0, k, a), sigma);
        },
        py::arg("eta0"), py::arg("k"), py::arg("a"), py::arg("sigma"));

  m.def("fit_ellis",
        [](const std::vector<std::pair<double, double>>& points) {
          FlowCurve c;
          c.points = points;
          const auto fit = fit_ellis(c);
          py::dict d;
          d["eta0"] = fit.params.eta0;
          d["k"] = fit.params.k;
          d["a"] = fit.params.a;
          d["sigma_crit"] = fit.params.sigma_crit();
          d["residual_norm"] = fit.residual_norm;
          return d;
        },
        py::arg("points"));

  m.def("deborah", &deborah, py::arg("tau"), py::arg("t_flow"));
  m.def("stress_amplitude", &stress_amplitude, py::arg("sigma_flow"),
        py::arg("sigma_crit"));

  m.def("simulate_drained",
        [](double eta, double rho, double t_obs) {
          TestProtocol p;
          p.t_obs = t_obs;
          p.frame_schedule = frame_schedule(p);
          const auto traj = simulate(make_fluid(eta, rho, 0.04),
                                     VialGeometry::standard_vial(), p);
          std::vector<std::tuple<double, double, std::string>> out;
          for (const auto& s : traj.states)
            out.emplace_back(s.t, drained_fraction(traj, s.t),
                             to_string(s.regime));
          return out;
        },
        py::arg("eta"), py::arg("rho") = 900.0, py::arg("t_obs") = 60.0,
        "List of (t, drained_fraction, regime) at the frame timestamps.");

  m.def("frame_schedule",
        [](double t_obs) {
          TestProtocol p;
          p.t_obs = t_obs;
          return frame_schedule(p);
        },
        py::arg("t_obs") = 60.0);

  m.def("preprocess_frame",
        [](const std::vector<std::vector<double>>& rows, double blur_sigma) {
          Frame f(int(rows.size()), rows.empty() ? 0 : int(rows[0].size()));
          for (int r = 0; r < f.height; ++r)
            for (int c = 0; c < f.width; ++c) f.at(r, c) = rows[r][c];
          const Frame out = sobel_magnitude(gaussian_blur(f, blur_sigma));
          std::vector<std::vector<double>> res(f.height,
                                               std::vector<double>(f.width));
          for (int r = 0; r < f.height; ++r)
            for (int c = 0; c < f.width; ++c) res[r][c] = out.at(r, c);
          return res;
        },
        py::arg("pixels"), py::arg("blur_sigma") = 1.0,
        "Gaussian blur + Sobel magnitude of one grayscale frame.");

  m.def("epistemic_holdout_groups",
        [](const std::vector<double>& group_etas, int n_holdout) {
          Manifest man;
          for (size_t i = 0; i < group_etas.size(); ++i) {
            SampleRecord r;
            r.sample_id = "s" + std::to_string(i);
            r.true_viscosity = group_etas[i];
            r.density = 900.0;
            r.viscosity_group_id = "g" + std::to_string(i);
            man.records.push_back(std::move(r));
          }
          const auto split = split_epistemic(man, n_holdout);
          std::vector<double> out;
          for (const auto& r : split.test.records) out.push_back(r.true_viscosity);
          return out;
        },
        py::arg("group_etas"), py::arg("n_holdout"),
        "Viscosities of the groups the epistemic split would hold out.");
}
