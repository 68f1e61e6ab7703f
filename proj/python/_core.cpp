#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "karl/errors.hpp"
#include "karl/harness.hpp"
#include "karl/lqr.hpp"

namespace py = pybind11;
using namespace karl;

namespace {

// Rows of (x, u, x') matrices as transitions; rewards are recomputed from the env if given.
std::vector<Transition> to_transitions(const Matrix& X, const Matrix& U, const Matrix& Xn) {
  if (X.rows() != U.rows() || X.rows() != Xn.rows()) {
    throw DimensionMismatch("x, u and x_next must have the same number of rows");
  }
  std::vector<Transition> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    auto& t = out[static_cast<std::size_t>(i)];
    t.x = X.row(i).transpose();
    t.u = U.row(i).transpose();
    t.x_next = Xn.row(i).transpose();
  }
  return out;
}

py::tuple dataset_arrays(const std::vector<DatasetRow>& rows, const EnvironmentSpec& env) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix X(n, static_cast<Eigen::Index>(env.state_dim)), U(n, static_cast<Eigen::Index>(env.action_dim)),
      Xn(n, static_cast<Eigen::Index>(env.state_dim));
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = rows[static_cast<std::size_t>(i)].transition;
    X.row(i) = t.x.transpose();
    U.row(i) = t.u.transpose();
    Xn.row(i) = t.x_next.transpose();
    r[i] = t.reward;
  }
  return py::make_tuple(X, U, r, Xn);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Koopman tensors, soft Koopman value iteration, actor-critic and LQR baselines";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
  py::register_exception<ModelFormat>(m, "ModelFormat", PyExc_ValueError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_ValueError);
  py::register_exception<SingularSystem>(m, "SingularSystem", PyExc_ArithmeticError);
  py::register_exception<NonFiniteState>(m, "NonFiniteState", PyExc_ArithmeticError);
  py::register_exception<NoConvergence>(m, "NoConvergence", PyExc_ArithmeticError);

  py::class_<Rng>(m, "Rng").def(py::init<std::uint64_t>(), py::arg("seed") = 0);

  py::class_<EnvironmentSpec>(m, "Environment")
      .def(py::init([](const std::string& kind) { return make_environment(parse_env_kind(kind)); }),
           py::arg("kind"))
      .def_property_readonly("name", [](const EnvironmentSpec& e) { return env_name(e.kind); })
      .def_readonly("state_dim", &EnvironmentSpec::state_dim)
      .def_readonly("action_dim", &EnvironmentSpec::action_dim)
      .def_readwrite("dt", &EnvironmentSpec::dt)
      .def_readwrite("episode_len", &EnvironmentSpec::episode_len)
      .def_readwrite("action_low", &EnvironmentSpec::action_low)
      .def_readwrite("action_high", &EnvironmentSpec::action_high)
      .def_readwrite("x_e", &EnvironmentSpec::x_e)
      .def_readwrite("Q", &EnvironmentSpec::Q)
      .def_readwrite("R", &EnvironmentSpec::R)
      .def_readwrite("noise_scale", &EnvironmentSpec::noise_scale)
      .def("set_cost_scales", &set_cost_scales, py::arg("q_scale"), py::arg("r_scale"))
      .def("drift", &drift, py::arg("x"), py::arg("u"))
      .def("step", &step, py::arg("x"), py::arg("u"), py::arg("rng"))
      .def("cost", &cost, py::arg("x"), py::arg("u"))
      .def("reset", &reset, py::arg("rng"))
      .def("collect", [](const EnvironmentSpec& e, std::size_t paths, std::size_t steps, Rng& rng) {
            return dataset_arrays(collect_paths(e, paths, steps, rng), e);
          },
          py::arg("paths"), py::arg("steps_per_path"), py::arg("rng"),
          "Random-agent data as (x, u, reward, x_next) arrays.");

  py::class_<MonomialBasis>(m, "MonomialBasis")
      .def(py::init<std::size_t, std::size_t>(), py::arg("input_dim"), py::arg("max_degree"))
      .def_property_readonly("dim", &MonomialBasis::dim)
      .def("__call__", &MonomialBasis::eval, py::arg("z"))
      .def("term_name", &MonomialBasis::term_name)
      .def_property_readonly("terms", [](const MonomialBasis& b) {
        std::vector<std::string> out;
        for (std::size_t k = 0; k < b.dim(); ++k) out.push_back(b.term_name(k));
        return out;
      });

  py::class_<KoopmanTensor, std::shared_ptr<KoopmanTensor>>(m, "KoopmanTensor")
      .def_property_readonly("M", &KoopmanTensor::M)
      .def_property_readonly("d_x", &KoopmanTensor::d_x)
      .def_property_readonly("d_u", &KoopmanTensor::d_u)
      .def_property_readonly("phi", &KoopmanTensor::phi)
      .def_property_readonly("psi", &KoopmanTensor::psi)
      .def("K", &k_u, py::arg("u"), "Action-conditioned operator K^u.")
      .def("predict_phi", &predict_phi, py::arg("x"), py::arg("u"))
      .def("save", [](const KoopmanTensor& t, const std::filesystem::path& p) { save_tensor(p, t); })
      .def_static("load", [](const std::filesystem::path& p) {
        return std::make_shared<KoopmanTensor>(load_tensor(p));
      });

  m.def("fit_tensor",
        [](const Matrix& X, const Matrix& U, const Matrix& Xn, std::size_t phi_order,
           std::size_t psi_order, double ridge) {
          const auto data = to_transitions(X, U, Xn);
          return std::make_shared<KoopmanTensor>(
              fit_tensor(data, MonomialBasis(static_cast<std::size_t>(X.cols()), phi_order),
                         MonomialBasis(static_cast<std::size_t>(U.cols()), psi_order), ridge));
        },
        py::arg("x"), py::arg("u"), py::arg("x_next"), py::arg("phi_order") = 2,
        py::arg("psi_order") = 2, py::arg("ridge") = 1e-6,
        "Least-squares Koopman tensor from row-stacked transitions.");

  m.def("solve_lqr", [](const EnvironmentSpec& env) {
    const LqrSolution s = solve_lqr(env);
    return py::make_tuple(s.K, s.P);
  }, py::arg("env"), "Gain K and Riccati solution P for the linearization at x_e.");

  m.def("softmax_policy", &softmax_policy, py::arg("scores"), py::arg("alpha"));
  m.def("soft_backup", &soft_backup, py::arg("scores"), py::arg("alpha"));

  m.def("skvi",
        [](const EnvironmentSpec& env, std::shared_ptr<KoopmanTensor> tensor, const Matrix& states,
           std::size_t actions, double alpha, double gamma, std::size_t epochs,
           std::size_t batch, Rng& rng) {
          std::vector<Vector> xs;
          for (Eigen::Index i = 0; i < states.rows(); ++i) xs.push_back(states.row(i).transpose());
          SkviConfig cfg;
          cfg.alpha = alpha;
          cfg.gamma = gamma;
          cfg.max_iters = epochs;
          cfg.batch_size = batch;
          const SkviResult r =
              value_iteration(*tensor, env, xs, ActionGrid::from_env(env, actions), cfg, rng);
          return py::make_tuple(r.weights.w, r.abe_history);
        },
        py::arg("env"), py::arg("tensor"), py::arg("states"), py::arg("actions") = 101,
        py::arg("alpha") = 1.0, py::arg("gamma") = 0.99, py::arg("epochs") = 150,
        py::arg("batch") = 16384, py::arg("rng"),
        "Soft Koopman value iteration; returns (weights, ABE history).");

  m.def("interpret", &interpret, py::arg("w"), py::arg("basis"), py::arg("precision") = 6);

  m.def("evaluate_model",
        [](const std::filesystem::path& path, std::size_t episodes, std::vector<std::uint64_t> seeds) {
          const Model model = load_model(path);
          const EvalResult r = evaluate(model_policy(model), model_env(model), episodes, seeds);
          return py::make_tuple(r.mean, r.per_seed);
        },
        py::arg("path"), py::arg("episodes") = 100, py::arg("seeds") = std::vector<std::uint64_t>{0},
        "Mean evaluation return of a saved model file.");

  m.def("evaluate_lqr",
        [](const EnvironmentSpec& env, std::size_t episodes, std::vector<std::uint64_t> seeds) {
          const EvalResult r = evaluate(make_lqr_policy(env, solve_lqr(env)), env, episodes, seeds);
          return py::make_tuple(r.mean, r.per_seed);
        },
        py::arg("env"), py::arg("episodes") = 100, py::arg("seeds") = std::vector<std::uint64_t>{0});
}
