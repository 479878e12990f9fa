#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "otsmc/diagnostics.hpp"
#include "otsmc/errors.hpp"
#include "otsmc/models.hpp"
#include "otsmc/resampling.hpp"
#include "otsmc/tempering.hpp"
#include "otsmc/transport.hpp"

namespace py = pybind11;
using namespace otsmc;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Ensemble make_ensemble(const Positions& positions, const std::optional<Vector>& log_weights) {
  if (!log_weights) return Ensemble(positions);
  return Ensemble(positions, *log_weights);
}

ReferenceMoments make_reference(const Vector& mean, const Vector& variance) {
  ReferenceMoments ref;
  ref.mean = mean;
  ref.diag_variance = variance;
  return ref;
}

py::dict coupling_dict(const Coupling& c) {
  const auto n = static_cast<Eigen::Index>(c.entries.size());
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> rows(n), cols(n);
  Vector mass(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    rows(k) = static_cast<std::int64_t>(c.entries[k].row);
    cols(k) = static_cast<std::int64_t>(c.entries[k].col);
    mass(k) = c.entries[k].mass;
  }
  py::dict d;
  d["rows"] = rows;
  d["cols"] = cols;
  d["mass"] = mass;
  d["objective"] = c.objective;
  d["dual_objective"] = c.dual_objective;
  d["row_potentials"] = c.row_potentials;
  d["col_potentials"] = c.col_potentials;
  d["pivots"] = c.pivots;
  d["dense"] = c.dense();
  return d;
}

py::dict moments_dict(const ReferenceMoments& ref) {
  py::dict d;
  d["mean"] = ref.mean;
  d["diag_variance"] = ref.diag_variance;
  d["provenance"] = ref.provenance;
  d["chain_length"] = ref.chain_length;
  d["burn_in"] = ref.burn_in;
  d["seed"] = ref.seed;
  d["acceptance_rate"] = ref.acceptance_rate;
  d["min_ess"] = ref.min_ess;
  d["warning"] = ref.warning;
  return d;
}

}  // namespace

PYBIND11_MODULE(otsmc, m) {
  m.doc() = "Optimal-transport tempered sampling: SET and adaptive SMC";
  m.attr("__version__") = OTSMC_VERSION;

  py::register_exception<WeightCollapse>(m, "WeightCollapse", PyExc_RuntimeError);
  py::register_exception<MarginalMismatch>(m, "MarginalMismatch", PyExc_ValueError);
  py::register_exception<CertificateFailure>(m, "CertificateFailure", PyExc_RuntimeError);
  py::register_exception<InvalidPotential>(m, "InvalidPotential", PyExc_ValueError);
  py::register_exception<SolverFailure>(m, "SolverFailure", PyExc_RuntimeError);

  // ensemble
  m.def("logsumexp", [](const Vector& v) { return logsumexp(v); });
  m.def("normalize_log_weights", [](const Vector& v) { return normalize_log_weights(v); });
  m.def("ess", [](const Vector& log_weights) { return ess_from_log_weights(log_weights); },
        "Normalized effective sample size in (0, 1].");

  // transport
  m.def("cost_matrix", [](const Positions& x) { return RowMatrix(build_cost_matrix(x)); });
  m.def(
      "solve_ot",
      [](const RowMatrix& cost, const Vector& alpha, const Vector& beta) {
        return coupling_dict(solve_discrete_ot(cost, alpha, beta));
      },
      py::arg("cost"), py::arg("alpha"), py::arg("beta"),
      "Exact discrete optimal transport. Returns the sparse plan, dense plan and dual potentials.");
  m.def(
      "ensemble_transform",
      [](const Positions& positions, const Vector& beta, std::optional<Vector> log_weights) {
        return ensemble_transform(make_ensemble(positions, log_weights), beta).positions();
      },
      py::arg("positions"), py::arg("beta"), py::arg("log_weights") = py::none());

  // resampling
  m.def(
      "resample",
      [](const Vector& weights, const std::string& scheme, std::uint64_t seed) {
        Rng rng = make_rng(seed, Stream::kResampling);
        return resample(parse_resampling_scheme(scheme), weights, rng);
      },
      py::arg("weights"), py::arg("scheme") = "stratified", py::arg("seed") = 1);

  // tempering
  m.def("tempered_ess", [](const Vector& v, double dtau) { return tempered_ess(v, dtau); }, py::arg("potentials"),
        py::arg("dtau"));
  m.def("next_temperature", [](double tau, const Vector& v, double xi) { return next_temperature(tau, v, xi); },
        py::arg("tau"), py::arg("potentials"), py::arg("xi") = 0.5);

  // models
  py::class_<TargetModel>(m, "TargetModel")
      .def_property_readonly("dimension", &TargetModel::dimension)
      .def_property_readonly("name", &TargetModel::name)
      .def("log_potential", [](const TargetModel& t, const Vector& u) { return t.log_potential(u); })
      .def("log_initial_density", [](const TargetModel& t, const Vector& u) { return t.log_initial_density(u); })
      .def(
          "sample_initial",
          [](const TargetModel& t, std::size_t count, std::uint64_t seed) {
            Rng rng = make_rng(seed, Stream::kInitial);
            Positions x(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(t.dimension()));
            for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = t.sample_initial(rng).transpose();
            return x;
          },
          py::arg("count"), py::arg("seed") = 1)
      .def("exact_moments", [](const TargetModel& t) -> std::optional<py::dict> {
        if (!t.exact_moments()) return std::nullopt;
        return moments_dict(analytic_reference(t));
      });

  py::class_<GaussianToy, TargetModel>(m, "GaussianToy")
      .def(py::init<std::size_t, double, double>(), py::arg("dim") = 20, py::arg("sigma") = 2.0,
           py::arg("length_scale") = 4.0)
      .def_property_readonly("covariance", &GaussianToy::covariance);

  py::class_<EllipticInverse, TargetModel>(m, "EllipticInverse")
      .def(py::init([](std::size_t grid, double biot, double delta, double gamma, double s, double noise_ratio,
                       double amplitude, std::size_t obs_per_side, std::uint64_t data_seed) {
             EllipticConfig cfg;
             cfg.grid = grid;
             cfg.biot = biot;
             cfg.delta = delta;
             cfg.gamma = gamma;
             cfg.s = s;
             cfg.noise_ratio = noise_ratio;
             cfg.truth_amplitude = amplitude;
             cfg.obs_per_side = obs_per_side;
             cfg.data_seed = data_seed;
             return std::make_unique<EllipticInverse>(cfg);
           }),
           py::arg("grid") = 10, py::arg("biot") = 0.1, py::arg("delta") = 1.0, py::arg("gamma") = 0.1,
           py::arg("s") = 2.0, py::arg("noise_ratio") = 0.05, py::arg("amplitude") = 1.0,
           py::arg("obs_per_side") = 5, py::arg("data_seed") = 20190501)
      .def("solve_forward", [](const EllipticInverse& e, const Vector& u) { return e.solve_forward(u); })
      .def("forward_map", [](const EllipticInverse& e, const Vector& u) { return e.forward_map(u); })
      .def("robin_boundary_integral",
           [](const EllipticInverse& e, const Vector& w) { return e.robin_boundary_integral(w); })
      .def_property_readonly("observations", [](const EllipticInverse& e) { return e.data().data; })
      .def_property_readonly("truth", [](const EllipticInverse& e) { return e.data().truth; })
      .def_property_readonly("noise_std", [](const EllipticInverse& e) { return e.data().noise_std; });

  // samplers
  m.def(
      "run",
      [](const TargetModel& model, const std::string& method, std::size_t particles, std::size_t mutations, double xi,
         std::uint64_t seed, const std::string& scheme, unsigned threads) {
        RunOptions opt;
        opt.method = parse_method(method);
        opt.particles = particles;
        opt.mutations = mutations;
        opt.xi = xi;
        opt.seed = seed;
        opt.scheme = parse_resampling_scheme(scheme);
        opt.threads = threads;
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run(model, opt);
        }
        std::vector<double> taus, ess_values, rhos;
        for (const auto& r : report.records) {
          taus.push_back(r.tau);
          ess_values.push_back(r.ess);
          rhos.push_back(r.rho);
        }
        py::dict d;
        d["positions"] = report.final_ensemble.positions();
        d["log_weights"] = report.final_ensemble.log_weights();
        d["temperatures"] = taus;
        d["ess"] = ess_values;
        d["rho"] = rhos;
        d["forward_solves"] = report.forward_solves;
        d["failed_evaluations"] = report.failed_evaluations;
        return d;
      },
      py::arg("model"), py::arg("method") = "set", py::arg("particles") = 512, py::arg("mutations") = 0,
      py::arg("xi") = 0.5, py::arg("seed") = 1, py::arg("scheme") = "stratified", py::arg("threads") = 1,
      "Adaptive tempered run from the initial law to the posterior.");

  // diagnostics
  m.def(
      "rmse_mean",
      [](const Positions& x, const Vector& mean, const Vector& variance, std::optional<Vector> log_weights) {
        return rmse_mean(make_ensemble(x, log_weights), make_reference(mean, variance));
      },
      py::arg("positions"), py::arg("mean"), py::arg("variance"), py::arg("log_weights") = py::none());
  m.def(
      "variance_ratio",
      [](const Positions& x, const Vector& mean, const Vector& variance, std::optional<Vector> log_weights) {
        return variance_ratio(make_ensemble(x, log_weights), make_reference(mean, variance));
      },
      py::arg("positions"), py::arg("mean"), py::arg("variance"), py::arg("log_weights") = py::none());
  m.def(
      "mcmc_reference",
      [](const TargetModel& model, std::size_t length, std::size_t burn_in, std::uint64_t seed) {
        OracleOptions opt;
        opt.length = length;
        opt.burn_in = burn_in;
        opt.seed = seed;
        ReferenceMoments ref;
        {
          py::gil_scoped_release release;
          ref = mcmc_reference(model, opt);
        }
        return moments_dict(ref);
      },
      py::arg("model"), py::arg("length") = 200000, py::arg("burn_in") = 0, py::arg("seed") = 1);
}
