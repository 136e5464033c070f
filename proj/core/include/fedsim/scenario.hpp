#ifndef FEDSIM_SCENARIO_HPP
#define FEDSIM_SCENARIO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsim/flow.hpp"

namespace fedsim {

inline constexpr char kScenarioHeader[] = "fedsim-scenario v1";

/// One administrative setup step (registration, membership change,
/// vetting, ...), applied in document order between flows.
struct SetupStep {
  std::string op;
  std::map<std::string, std::string> args;
  int line = 0;
};

struct ExpectedFlow {
  int flow_index = 0;
  bool expect_granted = true;
  std::string expect_reason;  // exact reason code when denied
  TraceSkeleton skeleton;
};

/// A scenario: a topology reference, an ordered program of setup steps
/// and flows, and per-flow expectations.
struct Scenario {
  std::string name;
  std::string topology_path;
  Timestamp epoch = 0;

  struct Item {
    enum class Kind : std::uint8_t { kSetup, kFlow } kind = Kind::kFlow;
    SetupStep setup;
    FlowSpec flow;
  };
  std::vector<Item> items;
  std::vector<ExpectedFlow> expected;

  int flow_count() const;
};

Scenario load_scenario(const std::string& text, const std::string& base_dir);
Scenario load_scenario_file(const std::string& path);

struct FlowReport {
  FlowSpec spec;
  Decision decision;
  FlowTrace trace;
  bool expectation_checked = false;
  bool decision_matches = true;
  std::vector<TraceDiff> diffs;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Finding> findings;
  std::vector<FlowReport> flows;

  bool ok() const;
  /// All flows' events, one JSON line each, in execution order.
  std::string full_trace_jsonl() const;
  /// Human-readable per-flow summary.
  std::string render_text() const;
};

/// Loads the topology, applies setup steps and runs flows on a fresh
/// state with the scenario's clock epoch, then checks expectations and
/// aggregates topology findings. The seed is recorded for reproducibility;
/// scenario execution itself is deterministic.
ScenarioReport run_scenario(const Scenario& scenario, std::uint64_t seed = 0);

/// Applies one setup step to live state (also used by the CLI).
void apply_setup_step(SimState& state, const SetupStep& step);

}  // namespace fedsim

#endif  // FEDSIM_SCENARIO_HPP
