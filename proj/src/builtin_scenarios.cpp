#include "swapcolor/scenario.hpp"

#include <algorithm>
#include <utility>

namespace swapcolor {

namespace {

// Scenario texts shipped with the tool. Thresholds are the acceptance
// tolerances.
const std::vector<std::pair<std::string, std::string>>& builtins() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"empty", R"(schema_version: 1
name: empty
description: no replicas and no comparisons
replicas: 0
comparisons: []
)"},
      {"closure", R"(schema_version: 1
name: closure
description: sum of the coloured solution against an independent heat solve
model: {lambda: 1, colors: 2}
initial: {amplitude: 0.5, coloring: step}
pde: {cells: 256, horizon: 0.25, frames: 25, scheme: explicit}
comparisons:
  - kind: color_closure
    thresholds: {linf_max: 1.0e-6}
)"},
      {"hydro_limit", R"(schema_version: 1
name: hydro_limit
description: replica-averaged empirical colour fields against the coloured PDE
seed: 20240501
model: {lambda: 1, colors: 2}
initial: {amplitude: 0.5, coloring: step}
sim:
  particles: [64, 256, 1024]
  dt_factor: 16
  horizon: 0.25
  snapshots: 5
  field_cells: 32
pde: {cells: 256, horizon: 0.25, frames: 5}
replicas: 32
comparisons:
  - kind: sim_vs_pde
    thresholds: {l1_max: 0.1, decreasing: true}
)"},
      {"swap_rate", R"(schema_version: 1
name: swap_rate
description: exchanges per unit accrued pair local time against lambda N
seed: 20240502
model: {lambda: 1, colors: 2}
sim: {particles: 256, horizon: 0.05, snapshots: 1, field_cells: 16}
replicas: 16
comparisons:
  - kind: swap_rate
    thresholds: {max_standard_errors: 3}
)"},
      {"replacement", R"(schema_version: 1
name: replacement
description: local-time increments against time integrals of local densities
seed: 20240503
model: {lambda: 1, colors: 2}
sim:
  particles: [64, 256]
  horizon: 0.05
  snapshots: 1
  field_cells: 16
  estimator: bridge
  density_eps: 0.05
replicas: 32
comparisons:
  - kind: replacement_residual
    options: {c1: 0, c2: 1}
    thresholds: {decreasing: true}
)"},
      {"tagged_lambda1", R"(schema_version: 1
name: tagged_lambda1
description: tagged-particle variance rate at lambda = 1 from the uniform start
seed: 20240504
model: {lambda: 1, colors: 2}
sim: {particles: 512, horizon: 0.001, snapshots: 10, field_cells: 16, tagged_index: 0}
replicas: 256
comparisons:
  - kind: tagged_variance
    thresholds: {rel_tol: 0.05}
)"},
      {"tagged_lambda3", R"(schema_version: 1
name: tagged_lambda3
description: tagged-particle variance rate at lambda = 3 from the uniform start
seed: 20240505
model: {lambda: 3, colors: 2}
sim: {particles: 512, horizon: 0.001, snapshots: 10, field_cells: 16, tagged_index: 0}
replicas: 256
comparisons:
  - kind: tagged_variance
    thresholds: {rel_tol: 0.05}
)"},
      {"rate_zero", R"(schema_version: 1
name: rate_zero
description: dynamic rate of the coloured solution itself, with one refinement
model: {lambda: 1, colors: 2}
initial: {amplitude: 0.5, coloring: smooth, skew: 0.6}
pde: {cells: 256, horizon: 0.1, frames: 100}
comparisons:
  - kind: rate_zero
    thresholds: {rate_max: 1.0e-6, decreasing: true}
)"},
      {"rate_cost", R"(schema_version: 1
name: rate_cost
description: dynamic rate of the optimally driven solution against the control cost
model: {lambda: 1, colors: 2}
initial: {amplitude: 0.5, coloring: smooth, skew: 0.6}
pde: {cells: 256, horizon: 0.1, frames: 100}
perturbation: {kind: gradient_control, amplitude: 0.2, mode: 1, eta: 0.02}
comparisons:
  - kind: rate_cost_match
    options: {cells: [256, 512]}
    thresholds: {rel_tol: [0.02, 0.01]}
)"},
      {"smoke", R"(schema_version: 1
name: smoke
description: small run touching every simulator comparison, used for reproducibility checks
seed: 7
model: {lambda: 2, colors: 2}
initial: {amplitude: 0.3, coloring: step}
sim:
  particles: [16, 32]
  horizon: 0.01
  snapshots: 2
  field_cells: 8
  density_eps: 0.1
pde: {cells: 32, horizon: 0.01, frames: 2}
replicas: 4
comparisons:
  - sim_vs_pde
  - kind: replacement_residual
  - kind: tightness
    options: {eps: 0.05, delta: 0.005}
  - swap_rate
  - color_closure
)"},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : builtins()) n.push_back(k);
    return n;
  }();
  return names;
}

std::string builtin_scenario_text(const std::string& name) {
  for (const auto& [k, v] : builtins())
    if (k == name) return v;
  throw ConfigError("no built-in scenario named '" + name + "'");
}

Scenario builtin_scenario(const std::string& name) { return parse_scenario(builtin_scenario_text(name)); }

}  // namespace swapcolor
