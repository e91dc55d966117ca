#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ebshrink/core_gauss.hpp"
#include "ebshrink/emfit.hpp"
#include "ebshrink/error.hpp"
#include "ebshrink/iocli.hpp"
#include "ebshrink/posterior.hpp"
#include "ebshrink/simmetrics.hpp"

namespace py = pybind11;
using namespace ebshrink;

namespace {

// NaN entries of y count as missing when no mask is given.
ResponsePanel panel_from_arrays(const MatrixXd& y, std::optional<MaskMatrix> mask,
                                std::vector<std::string> names) {
  MaskMatrix observed = mask ? *mask : MaskMatrix(y.array().isFinite());
  return make_panel(y, std::move(observed), std::move(names));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Empirical-Bayes multi-tissue regression (C++ core)";

  py::register_exception<Error>(m, "EbshrinkError", PyExc_RuntimeError);

  py::class_<Design>(m, "Design")
      .def(py::init<MatrixXd>(), py::arg("x"))
      .def_property_readonly("n", &Design::n)
      .def_property_readonly("p", &Design::p)
      .def_property_readonly("x", &Design::x)
      .def_property_readonly("gram", &Design::gram);

  m.def("ols", &ols, py::arg("design"), py::arg("y"), py::arg("mask"));
  m.def("log_mvn_projected", &log_mvn_projected, py::arg("resid"), py::arg("sigma2"),
        py::arg("eta"), py::arg("design"));
  m.def("log_mvn_masked", &log_mvn_masked, py::arg("resid_obs"), py::arg("sigma2"),
        py::arg("eta"), py::arg("design"), py::arg("mask"));

  py::class_<PriorParams>(m, "PriorParams")
      .def(py::init([](double tau1, VectorXd beta, double eta, double sigma2) {
             return PriorParams{tau1, std::move(beta), eta, sigma2};
           }),
           py::arg("tau1"), py::arg("beta"), py::arg("eta"), py::arg("sigma2"))
      .def_readwrite("tau1", &PriorParams::tau1)
      .def_readwrite("beta", &PriorParams::beta)
      .def_readwrite("eta", &PriorParams::eta)
      .def_readwrite("sigma2", &PriorParams::sigma2);

  py::class_<TissuePosterior>(m, "TissuePosterior")
      .def_readonly("h", &TissuePosterior::h)
      .def_readonly("post_mean", &TissuePosterior::post_mean)
      .def_readonly("cond_mean_active", &TissuePosterior::cond_mean_active)
      .def_readonly("log_bf", &TissuePosterior::log_bf)
      .def_readonly("log_odds", &TissuePosterior::log_odds);

  m.def("tissue_posterior", &tissue_posterior, py::arg("design"), py::arg("y"), py::arg("mask"),
        py::arg("params"));
  m.def("log_bayes_factor", &log_bayes_factor, py::arg("design"), py::arg("y"), py::arg("mask"),
        py::arg("params"));

  py::class_<ResponsePanel>(m, "ResponsePanel")
      .def_readonly("y", &ResponsePanel::y)
      .def_readonly("mask", &ResponsePanel::mask)
      .def_readonly("tissue_names", &ResponsePanel::tissue_names)
      .def_property_readonly("n", &ResponsePanel::n)
      .def_property_readonly("m", &ResponsePanel::m);
  m.def("make_panel", &panel_from_arrays, py::arg("y"), py::arg("mask") = py::none(),
        py::arg("names") = std::vector<std::string>{});

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("tol", &FitOptions::tol)
      .def_readwrite("max_iter", &FitOptions::max_iter)
      .def_readwrite("eta_floor", &FitOptions::eta_floor)
      .def_readwrite("tau_clamp", &FitOptions::tau_clamp);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("posteriors", &FitResult::posteriors)
      .def_readonly("tissue_names", &FitResult::tissue_names)
      .def_readonly("loglik_trace", &FitResult::loglik_trace)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("null_model", &FitResult::null_model)
      .def("to_json", &fit_to_json)
      .def_static("from_json", &fit_from_json);

  m.def(
      "e_step",
      [](const Design& d, const ResponsePanel& p, const PriorParams& params) {
        auto r = e_step(d, p, params);
        return py::make_tuple(r.resp, r.loglik);
      },
      py::arg("design"), py::arg("panel"), py::arg("params"));
  m.def("m_step_complete", &m_step_complete, py::arg("design"), py::arg("panel"), py::arg("resp"),
        py::arg("options") = FitOptions{});
  m.def("m_step_masked", &m_step_masked, py::arg("design"), py::arg("panel"), py::arg("resp"),
        py::arg("current"), py::arg("options") = FitOptions{});
  m.def("init_params", &init_params, py::arg("design"), py::arg("panel"),
        py::arg("options") = FitOptions{});
  m.def("fit", &fit, py::arg("design"), py::arg("panel"), py::arg("options") = FitOptions{},
        py::call_guard<py::gil_scoped_release>());
  m.def("predict", &predict, py::arg("x_new"), py::arg("fit"));

  py::enum_<Setting>(m, "Setting")
      .value("S1", Setting::S1)
      .value("S2", Setting::S2)
      .value("S3", Setting::S3)
      .value("S4", Setting::S4);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("setting", &SimConfig::setting)
      .def_readwrite("rho", &SimConfig::rho)
      .def_readwrite("beta_s", &SimConfig::beta_s)
      .def_readwrite("n", &SimConfig::n)
      .def_readwrite("p", &SimConfig::p)
      .def_readwrite("m", &SimConfig::m)
      .def_readwrite("tau1", &SimConfig::tau1)
      .def_readwrite("sigma2", &SimConfig::sigma2)
      .def_readwrite("missing_frac", &SimConfig::missing_frac)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("external_x", &SimConfig::external_x)
      .def_readwrite("model_eta", &SimConfig::model_eta);
  m.def("default_config", &default_config, py::arg("setting"), py::arg("rho") = 0.0,
        py::arg("beta_s") = 1.0, py::arg("seed") = 1);

  py::class_<SimData>(m, "SimData")
      .def_readonly("x", &SimData::x)
      .def_readonly("panel", &SimData::panel)
      .def_readonly("true_beta", &SimData::true_beta)
      .def_readonly("true_active", &SimData::true_active)
      .def_readonly("shared_beta", &SimData::shared_beta);
  m.def("simulate_setting", &simulate_setting, py::arg("config"));

  py::class_<SimRow>(m, "SimRow")
      .def_readonly("setting", &SimRow::setting)
      .def_readonly("rho", &SimRow::rho)
      .def_readonly("beta_s", &SimRow::beta_s)
      .def_readonly("reps", &SimRow::reps)
      .def_readonly("mse_ols", &SimRow::mse_ols)
      .def_readonly("mse_proposed", &SimRow::mse_proposed)
      .def_readonly("auc", &SimRow::auc)
      .def_readonly("failed", &SimRow::failed);
  m.def("run_replications", &run_replications, py::arg("config"), py::arg("reps"),
        py::arg("options") = FitOptions{}, py::call_guard<py::gil_scoped_release>());

  m.def("mse", &mse, py::arg("estimates"), py::arg("truth"));
  m.def("auc", &auc, py::arg("scores"), py::arg("labels"));

  py::class_<CvTissueRow>(m, "CvTissueRow")
      .def_readonly("tissue", &CvTissueRow::tissue)
      .def_readonly("n_test", &CvTissueRow::n_test)
      .def_readonly("pmse", &CvTissueRow::pmse)
      .def_readonly("r2", &CvTissueRow::r2)
      .def_readonly("pmse_ols", &CvTissueRow::pmse_ols)
      .def_readonly("r2_ols", &CvTissueRow::r2_ols);
  py::class_<CvReport>(m, "CvReport")
      .def_readonly("rows", &CvReport::rows)
      .def_readonly("folds", &CvReport::folds)
      .def_readonly("fold_of", &CvReport::fold_of)
      .def("to_csv", &CvReport::to_csv);
  m.def("kfold_cv", &kfold_cv, py::arg("design"), py::arg("panel"), py::arg("k"), py::arg("seed"),
        py::arg("options") = FitOptions{}, py::call_guard<py::gil_scoped_release>());

  m.def(
      "stouffer_combine",
      [](const VectorXd& z) {
        auto r = stouffer_combine(z);
        return py::make_tuple(r.z, r.p_value);
      },
      py::arg("z_scores"));
}
