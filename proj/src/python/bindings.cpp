#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "plab/error.hpp"
#include "plab/learners/c51.hpp"
#include "plab/learners/ppo.hpp"
#include "plab/metrics/metrics.hpp"
#include "plab/mitigations/plan.hpp"
#include "plab/mitigations/regularizers.hpp"
#include "plab/mitigations/resets.hpp"
#include "plab/net/checkpoint.hpp"
#include "plab/numkit/linalg.hpp"
#include "plab/numkit/special.hpp"
#include "plab/runner/runner.hpp"

namespace py = pybind11;
using namespace plab;
using numkit::Matrix;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidInput("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

py::dict report_dict(const metrics::MetricReport& r) {
  py::dict d;
  d["step"] = r.step;
  d["scope"] = r.scope;
  d["rdu"] = r.rdu;
  d["fau"] = r.fau;
  d["stable_rank"] = r.stable_rank;
  d["effective_rank"] = r.effective_rank;
  d["weight_diff"] = r.weight_diff;
  d["weight_diff_per_param"] = r.weight_diff_per_param;
  d["grad_norm"] = r.grad_norm ? py::cast(*r.grad_norm) : py::none();
  return d;
}

py::dict record_dict(const metrics::MetricRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["scope"] = r.scope;
  d["metric"] = r.metric;
  d["value"] = r.value;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Plasticity-loss toolkit: networks, metrics, mitigations and learners";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<SpecError>(m, "SpecError", base.ptr());

  py::class_<numkit::RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream_id") = 0)
      .def("uniform01", &numkit::RngStream::uniform01)
      .def("normal", &numkit::RngStream::normal, py::arg("mean") = 0.0, py::arg("stddev") = 1.0)
      .def("below", &numkit::RngStream::below)
      .def("derive", &numkit::RngStream::derive)
      .def_property_readonly("position", &numkit::RngStream::position);

  m.def("erfi", &numkit::erfi, py::arg("x"));
  m.def("singular_values", [](const Array& a) { return numkit::svd_values(to_matrix(a)); });

  py::enum_<net::Activation>(m, "Activation")
      .value("relu", net::Activation::relu)
      .value("tanh", net::Activation::tanh)
      .value("crelu", net::Activation::crelu)
      .value("fourier", net::Activation::fourier)
      .value("linear", net::Activation::linear);

  py::class_<net::LayerSpec>(m, "LayerSpec")
      .def(py::init([](std::size_t in_dim, std::size_t out_dim, const std::string& activation, bool layer_norm,
                       double gain) {
             return net::LayerSpec{in_dim, out_dim, net::parse_activation(activation), layer_norm,
                                   net::InitScheme::orthogonal(gain)};
           }),
           py::arg("in_dim"), py::arg("out_dim"), py::arg("activation") = "relu", py::arg("layer_norm") = false,
           py::arg("gain") = 1.4142135623730951)
      .def_readonly("in_dim", &net::LayerSpec::in_dim)
      .def_readonly("out_dim", &net::LayerSpec::out_dim)
      .def_readonly("layer_norm", &net::LayerSpec::layer_norm)
      .def_property_readonly("width", &net::LayerSpec::width);

  py::class_<net::Network>(m, "Network")
      .def_static(
          "create",
          [](std::vector<net::LayerSpec> specs, numkit::RngStream& stream) {
            return net::Network::create(std::move(specs), stream);
          },
          py::arg("specs"), py::arg("stream"))
      .def("predict", [](const net::Network& n, const Array& x) { return to_array(n.predict(to_matrix(x))); })
      .def("hidden_activations",
           [](const net::Network& n, const Array& x) {
             const auto tr = n.forward(to_matrix(x));
             std::vector<Array> out;
             for (const auto* h : tr.hidden_activations()) out.push_back(to_array(*h));
             return out;
           })
      .def("parameters", [](const net::Network& n) { return net::flatten(n.params()); })
      .def("set_parameters",
           [](net::Network& n, const Array& flat) {
             const auto v = to_vector(flat);
             if (v.size() != net::parameter_count(n.params())) throw InvalidInput("set_parameters: wrong length");
             net::unflatten(n.params(), v);
           })
      .def("weight", [](const net::Network& n, std::size_t l) { return to_array(n.params().layers.at(l).weight); })
      .def_property_readonly("depth", &net::Network::depth)
      .def_property_readonly("injection_count", &net::Network::injection_count)
      .def("save", [](const net::Network& n, const std::filesystem::path& p) { net::save_checkpoint(p, n); })
      .def_static("load", [](const std::filesystem::path& p) { return net::load_checkpoint(p).network; });

  // metrics
  m.def("effective_rank", [](const Array& a) { return metrics::effective_rank(to_matrix(a)); });
  m.def("stable_rank", [](const Array& a) { return metrics::stable_rank(to_matrix(a)); });
  m.def("neuron_scores", [](const Array& a) { return metrics::neuron_scores(to_matrix(a)); });
  m.def(
      "dormant_ratio",
      [](const net::Network& n, const Array& probe, double tau) {
        return metrics::dormant_ratio(n.forward(to_matrix(probe)), tau).overall.ratio;
      },
      py::arg("net"), py::arg("probe"), py::arg("tau") = metrics::kDefaultDormancyTau);
  m.def(
      "active_fraction",
      [](const net::Network& n, const Array& probe) {
        return metrics::active_fraction(n.forward(to_matrix(probe))).overall;
      },
      py::arg("net"), py::arg("probe"));
  m.def(
      "collect_metrics",
      [](const net::Network& n, const Array& probe, double tau) {
        metrics::CollectOptions o;
        o.tau = tau;
        o.strict_ranks = false;
        py::list out;
        for (const auto& r : metrics::collect_metrics(n, to_matrix(probe), nullptr, nullptr, o))
          out.append(report_dict(r));
        return out;
      },
      py::arg("net"), py::arg("probe"), py::arg("tau") = metrics::kDefaultDormancyTau);

  // mitigations
  m.def("shrink_perturb", &mitigations::shrink_perturb, py::arg("net"), py::arg("beta"), py::arg("stream"));
  m.def("inject_plasticity", &mitigations::inject_plasticity, py::arg("net"), py::arg("stream"));
  m.def(
      "redo_reset",
      [](net::Network& n, const Array& probe, double tau, numkit::RngStream& s) {
        return mitigations::redo_reset(n, to_matrix(probe), tau, s);
      },
      py::arg("net"), py::arg("probe"), py::arg("tau"), py::arg("stream"));
  m.def(
      "reset_layers",
      [](net::Network& n, const std::string& scope, numkit::RngStream& s) {
        mitigations::reset_layers(n, mitigations::parse_reset_scope(scope), s);
      },
      py::arg("net"), py::arg("scope"), py::arg("stream"));
  m.def("nap_project", &mitigations::nap_project, py::arg("net"));
  m.def(
      "reg_loss",
      [](const std::string& kind, const net::Network& n, double alpha, double s) {
        return mitigations::reg_loss(mitigations::parse_reg_kind(kind), n, alpha, s).value;
      },
      py::arg("kind"), py::arg("net"), py::arg("alpha"), py::arg("s") = 1.0);

  // learners
  m.def(
      "gae",
      [](const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<bool>& dones,
         double bootstrap, double gamma, double lam) {
        auto r = learners::gae(rewards, values, dones, bootstrap, gamma, lam);
        return py::make_tuple(r.advantages, r.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap"), py::arg("gamma"),
      py::arg("lam"));
  m.def("c51_support", &learners::c51_support, py::arg("v_min"), py::arg("v_max"), py::arg("n"));
  m.def(
      "categorical_projection",
      [](const std::vector<double>& next_dist, double r, bool done, double gamma, double v_min, double v_max) {
        const auto head = learners::CategoricalHead::make(v_min, v_max, next_dist.size());
        return learners::categorical_projection(next_dist, r, done, gamma, head);
      },
      py::arg("next_dist"), py::arg("reward"), py::arg("done"), py::arg("gamma"), py::arg("v_min") = -10.0,
      py::arg("v_max") = 10.0);

  // runner
  m.def("list_methods", [](bool as_json) { return runner::list_methods(as_json); }, py::arg("as_json") = false);
  m.def("validate_config", [](const std::string& text) {
    return runner::parse_config(nlohmann::json::parse(text, nullptr, true, true)).resolved.dump();
  });
  m.def(
      "run",
      [](const std::string& config_text, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        auto cfg = runner::parse_config(nlohmann::json::parse(config_text, nullptr, true, true));
        if (seed) runner::override_seed(cfg, *seed);
        py::gil_scoped_release release;
        return runner::run_experiment(cfg, out).summary.dump();
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def("replay_metrics", [](const std::filesystem::path& ckpt) {
    py::list out;
    for (const auto& r : runner::replay_metrics(ckpt)) out.append(record_dict(r));
    return out;
  });
}
