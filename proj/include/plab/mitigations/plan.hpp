#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace plab::mitigations {

enum class Category { reset, normalization, regularization, activation, optimizer };
std::string_view to_string(Category c) noexcept;

struct Trigger {
  enum class Kind { every_k_steps, on_task_switch, once_at, per_gradient_step };
  Kind kind = Kind::on_task_switch;
  std::size_t k = 1;     // every_k_steps
  std::size_t step = 0;  // once_at

  static Trigger every(std::size_t k) { return {Kind::every_k_steps, k, 0}; }
  static Trigger task_switch() { return {Kind::on_task_switch, 1, 0}; }
  static Trigger once(std::size_t step) { return {Kind::once_at, 1, step}; }
  static Trigger gradient_step() { return {Kind::per_gradient_step, 1, 0}; }

  friend bool operator==(const Trigger&, const Trigger&) = default;
};
std::string_view to_string(Trigger::Kind k) noexcept;
Trigger::Kind parse_trigger_kind(std::string_view name);

using ParamValue = std::variant<double, std::string>;

struct ParamSchema {
  enum class Type { real, integer, choice };
  std::string name;
  Type type = Type::real;
  ParamValue default_value = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> choices;
  /// Default used instead when the entry fires per gradient step (soft SnP).
  std::optional<double> per_gradient_step_default;
  std::string description;
};

struct MethodInfo {
  std::string name;
  Category category;
  std::string summary;
  std::string citation;
  std::vector<ParamSchema> params;
  Trigger default_trigger;
  std::vector<Trigger::Kind> allowed_triggers;
  /// Structural methods change the network spec at construction and never fire.
  bool structural = false;
};

/// The full catalog, grouped by category in declaration order.
const std::vector<MethodInfo>& method_registry();
/// nullptr when the name is not registered.
const MethodInfo* find_method(std::string_view name);

struct PlanEntry {
  std::string method;
  std::map<std::string, ParamValue> params;
  std::optional<Trigger> trigger;  // registry default when absent
};

struct MitigationPlan {
  std::vector<PlanEntry> entries;
};

/// Throws ValidationError naming the entry and the broken rule: unknown method,
/// unknown or out-of-range parameter, disallowed trigger, k < 1, more than one
/// optimizer method, or both width-doubling activations.
void validate_plan(const MitigationPlan& plan);

/// Entry parameters with registry defaults filled in.
std::map<std::string, ParamValue> resolved_params(const PlanEntry& entry);
Trigger resolved_trigger(const PlanEntry& entry);

double real_param(const std::map<std::string, ParamValue>& params, const std::string& name);
const std::string& choice_param(const std::map<std::string, ParamValue>& params, const std::string& name);

}  // namespace plab::mitigations
