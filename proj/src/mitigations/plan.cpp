#include "plab/mitigations/plan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plab/error.hpp"

namespace plab::mitigations {

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::reset: return "reset";
    case Category::normalization: return "normalization";
    case Category::regularization: return "regularization";
    case Category::activation: return "activation";
    case Category::optimizer: return "optimizer";
  }
  return "?";
}

std::string_view to_string(Trigger::Kind k) noexcept {
  switch (k) {
    case Trigger::Kind::every_k_steps: return "every_k_steps";
    case Trigger::Kind::on_task_switch: return "on_task_switch";
    case Trigger::Kind::once_at: return "once_at";
    case Trigger::Kind::per_gradient_step: return "per_gradient_step";
  }
  return "?";
}

Trigger::Kind parse_trigger_kind(std::string_view name) {
  for (auto k : {Trigger::Kind::every_k_steps, Trigger::Kind::on_task_switch, Trigger::Kind::once_at,
                 Trigger::Kind::per_gradient_step})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown trigger '" + std::string(name) + "'");
}

namespace {

using K = Trigger::Kind;
using T = ParamSchema::Type;

ParamSchema real(std::string name, double def, double lo, double hi, std::string doc) {
  ParamSchema p;
  p.name = std::move(name);
  p.type = T::real;
  p.default_value = def;
  p.min = lo;
  p.max = hi;
  p.description = std::move(doc);
  return p;
}

ParamSchema integer(std::string name, double def, double lo, double hi, std::string doc) {
  auto p = real(std::move(name), def, lo, hi, std::move(doc));
  p.type = T::integer;
  return p;
}

std::vector<MethodInfo> build_registry() {
  std::vector<MethodInfo> r;
  const std::vector<K> interventions = {K::every_k_steps, K::on_task_switch, K::once_at};

  {
    MethodInfo m{"shrink_perturb", Category::reset,
                 "theta <- (1-beta) theta + beta theta_fresh, theta_fresh a new draw from the init distribution",
                 "Ash & Adams (2020), On warm-starting neural network training", {}, Trigger::task_switch(),
                 {K::every_k_steps, K::on_task_switch, K::once_at, K::per_gradient_step}};
    auto beta = real("beta", 0.2, 0.0, 1.0, "interpolation weight toward the fresh draw");
    beta.per_gradient_step_default = 1e-4;
    m.params.push_back(beta);
    r.push_back(m);
  }
  r.push_back({"plasticity_injection", Category::reset,
               "freeze the head and add a fresh trainable head minus its frozen copy",
               "Nikishin et al. (2023), Deep reinforcement learning with plasticity injection", {},
               Trigger::task_switch(), interventions});
  r.push_back({"redo", Category::reset,
               "reinitialize incoming weights of tau-dormant neurons and zero their outgoing weights",
               "Sokar et al. (2023), The dormant neuron phenomenon in deep reinforcement learning",
               {real("tau", 0.025, 0.0, 1e9, "dormancy threshold on the normalized activation score")},
               Trigger::every(5000), interventions});
  {
    MethodInfo m{"reset_layers", Category::reset, "redraw the final layer or every layer from the init distribution",
                 "Nikishin et al. (2022), The primacy bias in deep reinforcement learning", {},
                 Trigger::task_switch(), interventions};
    ParamSchema scope;
    scope.name = "scope";
    scope.type = T::choice;
    scope.default_value = std::string("final");
    scope.choices = {"final", "all"};
    scope.description = "which layers to redraw";
    m.params.push_back(scope);
    r.push_back(m);
  }
  r.push_back({"layer_norm", Category::normalization, "layer normalization before every hidden nonlinearity",
               "Ba et al. (2016), Layer normalization", {}, Trigger::once(0), {K::once_at}, true});
  r.push_back({"nap", Category::normalization,
               "layer norm on hidden layers plus rescaling each weight matrix to its initial Frobenius norm",
               "Lyle et al. (2024), Normalization and effective learning rates in reinforcement learning", {},
               Trigger::gradient_step(), {K::per_gradient_step, K::every_k_steps}});
  r.push_back({"l2", Category::regularization, "alpha * ||theta||^2 added to the loss",
               "Lyle et al. (2023), Understanding plasticity in neural networks",
               {real("alpha", 1e-4, 0.0, 1e9, "penalty coefficient")}, Trigger::gradient_step(),
               {K::per_gradient_step}});
  r.push_back({"regenerative", Category::regularization, "alpha * ||theta - theta_init||^2 added to the loss",
               "Kumar et al. (2023), Maintaining plasticity in continual learning via regenerative regularization",
               {real("alpha", 1e-4, 0.0, 1e9, "penalty coefficient")}, Trigger::gradient_step(),
               {K::per_gradient_step}});
  r.push_back({"parseval", Category::regularization,
               "lambda * sum_W ||W W^T - s I||_F over hidden-layer weights",
               "Chung et al. (2024), Parseval regularization for continual reinforcement learning",
               {real("alpha", 1e-3, 0.0, 1e9, "regularization strength lambda"),
                real("s", 1.0, 1e-12, 1e9, "target scale of W W^T")},
               Trigger::gradient_step(), {K::per_gradient_step}});
  r.push_back({"crelu", Category::activation, "Concatenate(ReLU(x), ReLU(-x)) on every hidden layer",
               "Abbas et al. (2023), Loss of plasticity in continual deep reinforcement learning", {},
               Trigger::once(0), {K::once_at}, true});
  r.push_back({"fourier", Category::activation, "Concatenate(sin(x), cos(x)) on every hidden layer",
               "Lewandowski et al. (2025), Plastic learning with deep Fourier features", {}, Trigger::once(0),
               {K::once_at}, true});
  r.push_back({"trac", Category::optimizer,
               "erfi-potential tuners scale the base (Adam) displacement from a reference point",
               "Muppidi et al. (2024), Fast TRAC: a parameter-free optimizer for lifelong reinforcement learning",
               {real("eps", 1e-8, 1e-300, 1.0, "tuner scale numerator and denominator guard")}, Trigger::once(0),
               {K::once_at}});
  r.push_back({"kron", Category::optimizer,
               "Kronecker-factored preconditioning (S + lambda I)^-1 G (A + lambda I)^-1 per dense layer",
               "Castanyer et al. (2025), Stable gradients for stable learning at scale in deep reinforcement learning",
               {real("damping", 1e-3, 0.0, 1e9, "lambda added to both factors"),
                real("ema_decay", 0.95, 0.0, 1.0, "factor moving-average decay"),
                integer("inverse_interval", 10, 1, 1e9, "steps between factor inversions")},
               Trigger::once(0), {K::once_at}});
  return r;
}

std::string entry_label(std::size_t i, const PlanEntry& e) {
  return "mitigations[" + std::to_string(i) + "] (" + e.method + ")";
}

}  // namespace

const std::vector<MethodInfo>& method_registry() {
  static const std::vector<MethodInfo> registry = build_registry();
  return registry;
}

const MethodInfo* find_method(std::string_view name) {
  for (const auto& m : method_registry())
    if (m.name == name) return &m;
  return nullptr;
}

void validate_plan(const MitigationPlan& plan) {
  std::size_t optimizers = 0;
  bool crelu = false;
  bool fourier = false;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    const auto label = entry_label(i, e);
    const MethodInfo* info = find_method(e.method);
    if (!info) throw ValidationError(label + ": method is not in the registry");
    if (info->category == Category::optimizer) ++optimizers;
    crelu |= e.method == "crelu";
    fourier |= e.method == "fourier";

    for (const auto& [name, value] : e.params) {
      auto it = std::find_if(info->params.begin(), info->params.end(),
                             [&](const ParamSchema& p) { return p.name == name; });
      if (it == info->params.end()) throw ValidationError(label + ": unknown parameter '" + name + "'");
      if (it->type == ParamSchema::Type::choice) {
        const auto* s = std::get_if<std::string>(&value);
        if (!s || std::find(it->choices.begin(), it->choices.end(), *s) == it->choices.end())
          throw ValidationError(label + ": parameter '" + name + "' must be one of the listed choices");
      } else {
        const auto* d = std::get_if<double>(&value);
        if (!d) throw ValidationError(label + ": parameter '" + name + "' must be numeric");
        if (!std::isfinite(*d) || *d < it->min || *d > it->max)
          throw ValidationError(label + ": parameter '" + name + "' out of range [" + std::to_string(it->min) +
                                ", " + std::to_string(it->max) + "]");
        if (it->type == ParamSchema::Type::integer && std::floor(*d) != *d)
          throw ValidationError(label + ": parameter '" + name + "' must be an integer");
      }
    }

    if (e.trigger) {
      const auto& t = *e.trigger;
      if (std::find(info->allowed_triggers.begin(), info->allowed_triggers.end(), t.kind) ==
          info->allowed_triggers.end())
        throw ValidationError(label + ": trigger '" + std::string(to_string(t.kind)) + "' is not allowed");
      if (t.kind == Trigger::Kind::every_k_steps && t.k < 1) throw ValidationError(label + ": k must be >= 1");
      if (info->structural && t.step != 0)
        throw ValidationError(label + ": structural methods apply at construction (once_at 0)");
    }
  }
  if (optimizers > 1) throw ValidationError("mitigations: at most one optimizer method may be active");
  if (crelu && fourier) throw ValidationError("mitigations: crelu and fourier both replace the activation");
}

std::map<std::string, ParamValue> resolved_params(const PlanEntry& entry) {
  const MethodInfo* info = find_method(entry.method);
  if (!info) throw ValidationError("unknown method '" + entry.method + "'");
  std::map<std::string, ParamValue> out;
  const auto trig = resolved_trigger(entry);
  for (const auto& p : info->params) {
    if (auto it = entry.params.find(p.name); it != entry.params.end()) {
      out[p.name] = it->second;
    } else if (p.per_gradient_step_default && trig.kind == Trigger::Kind::per_gradient_step) {
      out[p.name] = *p.per_gradient_step_default;
    } else {
      out[p.name] = p.default_value;
    }
  }
  return out;
}

Trigger resolved_trigger(const PlanEntry& entry) {
  if (entry.trigger) return *entry.trigger;
  const MethodInfo* info = find_method(entry.method);
  if (!info) throw ValidationError("unknown method '" + entry.method + "'");
  return info->default_trigger;
}

double real_param(const std::map<std::string, ParamValue>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end() || !std::holds_alternative<double>(it->second))
    throw ValidationError("missing numeric parameter '" + name + "'");
  return std::get<double>(it->second);
}

const std::string& choice_param(const std::map<std::string, ParamValue>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end() || !std::holds_alternative<std::string>(it->second))
    throw ValidationError("missing choice parameter '" + name + "'");
  return std::get<std::string>(it->second);
}

}  // namespace plab::mitigations
