#include "fedsim/scenario.hpp"

#include <filesystem>
#include <sstream>

#include "fedsim/docparse.hpp"

namespace fedsim {

int Scenario::flow_count() const {
  int count = 0;
  for (const auto& item : items)
    if (item.kind == Item::Kind::kFlow) ++count;
  return count;
}

namespace {

FlowSpec parse_flow_section(const DocSection& section) {
  FlowSpec spec;
  for (const auto& entry : section.entries) {
    if (entry.key == "user") {
      spec.user = entry.value;
    } else if (entry.key == "sp") {
      spec.target_sp = EntityId(entry.value);
    } else if (entry.key == "tech") {
      auto tech = parse_technology(entry.value);
      if (!tech)
        throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                           ": bad tech " + entry.value);
      spec.tech = *tech;
    } else if (entry.key == "provider") {
      spec.provider = EntityId(entry.value);
    } else if (entry.key == "mode") {
      if (entry.value == "web") {
        spec.mode = FlowMode::kWeb;
      } else if (entry.value == "non-web") {
        spec.mode = FlowMode::kNonWeb;
      } else {
        throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                           ": bad mode " + entry.value);
      }
    } else if (entry.key == "attrs") {
      if (entry.value == "push") {
        spec.attr_mode = AttrMode::kPush;
      } else if (entry.value == "pull") {
        spec.attr_mode = AttrMode::kPull;
      } else {
        throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                           ": bad attrs " + entry.value);
      }
    } else if (entry.key == "cert-lifetime") {
      spec.cert_lifetime_s = std::stoll(entry.value);
    } else {
      throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                         ": unknown flow key " + entry.key);
    }
  }
  if (spec.user.empty() || spec.target_sp.empty() || spec.provider.empty())
    throw LoadError("unparseable",
                    "flow section needs user, sp and provider (line " +
                        std::to_string(section.line) + ")");
  return spec;
}

ExpectedFlow parse_expect_section(const DocSection& section) {
  ExpectedFlow expected;
  auto eq = section.arg.find('=');
  if (section.arg.rfind("flow", 0) != 0 || eq == std::string::npos)
    throw LoadError("unparseable", "expect section wants flow=<index>");
  expected.flow_index = std::stoi(section.arg.substr(eq + 1));

  for (const auto& entry : section.entries) {
    if (entry.key == "decision") {
      std::vector<std::string> positional;
      auto kv = parse_kv_tokens(split_tokens(entry.value), &positional);
      if (positional.empty())
        throw LoadError("unparseable",
                        "line " + std::to_string(entry.line) + ": decision");
      if (positional[0] == "granted") {
        expected.expect_granted = true;
      } else if (positional[0] == "denied") {
        expected.expect_granted = false;
        if (auto it = kv.find("reason"); it != kv.end())
          expected.expect_reason = it->second;
      } else {
        throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                           ": decision " + positional[0]);
      }
    } else if (entry.key == "strict") {
      expected.skeleton.strict =
          entry.value == "true" || entry.value == "yes";
    } else if (entry.key == "event") {
      auto tokens = split_tokens(entry.value);
      if (tokens.size() != 3)
        throw LoadError("unparseable",
                        "line " + std::to_string(entry.line) +
                            ": event wants <step> <actor-kind> <action>");
      SkeletonEvent event;
      event.step = std::stoi(tokens[0]);
      event.actor_kind = tokens[1];
      event.action = tokens[2];
      expected.skeleton.events.push_back(std::move(event));
    } else {
      throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                         ": unknown expect key " + entry.key);
    }
  }
  return expected;
}

}  // namespace

Scenario load_scenario(const std::string& text, const std::string& base_dir) {
  Document doc = parse_document(text);
  if (doc.header != kScenarioHeader)
    throw LoadError("unparseable", "expected header '" +
                                       std::string(kScenarioHeader) + "'");

  Scenario scenario;
  if (const DocEntry* name = doc.find_top("name")) scenario.name = name->value;
  if (const DocEntry* epoch = doc.find_top("epoch"))
    scenario.epoch = std::stoll(epoch->value);
  const DocEntry* topology = doc.find_top("topology");
  if (topology == nullptr)
    throw LoadError("unparseable", "scenario needs a topology reference");
  std::filesystem::path path(topology->value);
  if (path.is_relative() && !base_dir.empty())
    path = std::filesystem::path(base_dir) / path;
  scenario.topology_path = path.string();

  for (const auto& section : doc.sections) {
    if (section.kind == "setup") {
      for (const auto& entry : section.entries) {
        Scenario::Item item;
        item.kind = Scenario::Item::Kind::kSetup;
        item.setup.op = entry.key;
        item.setup.line = entry.line;
        item.setup.args = parse_kv_tokens(split_tokens(entry.value));
        scenario.items.push_back(std::move(item));
      }
    } else if (section.kind == "flow") {
      Scenario::Item item;
      item.kind = Scenario::Item::Kind::kFlow;
      item.flow = parse_flow_section(section);
      scenario.items.push_back(std::move(item));
    } else if (section.kind == "expect") {
      scenario.expected.push_back(parse_expect_section(section));
    } else {
      throw LoadError("unparseable", "unknown section " + section.kind);
    }
  }

  const int flows = scenario.flow_count();
  for (const auto& expected : scenario.expected) {
    if (expected.flow_index < 0 || expected.flow_index >= flows)
      throw LoadError("unparseable",
                      "expect index out of range: " +
                          std::to_string(expected.flow_index));
  }
  return scenario;
}

Scenario load_scenario_file(const std::string& path) {
  std::filesystem::path p(path);
  return load_scenario(read_text_file(path), p.parent_path().string());
}

void apply_setup_step(SimState& state, const SetupStep& step) {
  auto arg = [&step](const std::string& name) -> const std::string& {
    auto it = step.args.find(name);
    if (it == step.args.end())
      throw LoadError("unparseable", "setup step " + step.op +
                                         " missing arg " + name + " (line " +
                                         std::to_string(step.line) + ")");
    return it->second;
  };
  auto opt_arg = [&step](const std::string& name,
                         const std::string& fallback) -> std::string {
    auto it = step.args.find(name);
    return it == step.args.end() ? fallback : it->second;
  };

  if (step.op == "register-guest") {
    std::map<std::string, std::string> profile = step.args;
    profile.erase("provider");
    register_guest(state.topology, state.providers, EntityId(arg("provider")),
                   profile, state.now);
  } else if (step.op == "link-identity") {
    LinkedIdentityKind kind = LinkedIdentityKind::kGuest;
    const std::string kind_text = opt_arg("kind", "guest");
    if (kind_text == "social") kind = LinkedIdentityKind::kSocial;
    if (kind_text == "egov") kind = LinkedIdentityKind::kEgov;
    state.providers.link_identity(state.topology, arg("handle"),
                                  EntityId(arg("provider")), arg("subject"),
                                  kind);
    // Linked identities alias to the principal's first-seen binding.
    const PrincipalRecord* record =
        state.providers.find_principal(arg("handle"));
    if (record != nullptr && !record->home_identities.empty()) {
      const HomeIdentity& primary = record->home_identities.front();
      for (auto& [aggregator, registry] : state.registries) {
        (void)aggregator;
        registry.link_alias(EntityId(arg("provider")), arg("subject"),
                            primary.idp, primary.subject_id);
      }
    }
  } else if (step.op == "add-group" || step.op == "remove-group" ||
             step.op == "add-role" || step.op == "remove-role") {
    MembershipChange change = MembershipChange::kAddGroup;
    if (step.op == "remove-group") change = MembershipChange::kRemoveGroup;
    if (step.op == "add-role") change = MembershipChange::kAddRole;
    if (step.op == "remove-role") change = MembershipChange::kRemoveRole;
    manage_membership(state.topology, state.aa, EntityId(arg("aa")),
                      arg("admin"), change, arg("subject"), arg("group"),
                      opt_arg("role", ""));
  } else if (step.op == "grant-attr") {
    // Administrative custom-attribute grant (dataset permissions, vetting
    // outcomes and similar one-off community facts).
    AaRecord& record =
        state.aa.ensure(EntityId(arg("aa")), arg("subject"));
    record.custom[arg("name")] = arg("value");
  } else if (step.op == "raise-loa") {
    auto loa = parse_loa(arg("loa"));
    if (!loa) throw LoadError("unparseable", "bad loa in raise-loa");
    state.providers.raise_loa(EntityId(arg("provider")), arg("subject"), *loa);
  } else if (step.op == "deprovision") {
    const PrincipalRecord* record =
        state.providers.find_principal(arg("handle"));
    if (record == nullptr || !record->persistent_unique_id)
      throw Error("unknown user", arg("handle"));
    deprovision_local(state.accounts, EntityId(arg("sp")),
                      *record->persistent_unique_id);
  } else if (step.op == "offline" || step.op == "online") {
    auto it = state.topology.entities.find(EntityId(arg("entity")));
    if (it == state.topology.entities.end())
      throw Error("unknown entity", arg("entity"));
    it->second.offline = step.op == "offline";
  } else {
    throw LoadError("unparseable", "unknown setup op " + step.op);
  }
}

bool ScenarioReport::ok() const {
  if (!findings.empty()) return false;
  for (const auto& flow : flows) {
    if (!flow.decision_matches || !flow.diffs.empty()) return false;
  }
  return true;
}

std::string ScenarioReport::full_trace_jsonl() const {
  std::string out;
  for (const auto& flow : flows) out += trace_to_jsonl(flow.trace);
  return out;
}

std::string ScenarioReport::render_text() const {
  std::ostringstream out;
  out << "scenario " << name << " seed=" << seed << "\n";
  for (const auto& finding : findings) {
    out << "finding " << finding.rule << " entity=" << finding.entity.value;
    if (!finding.detail.empty()) out << " (" << finding.detail << ")";
    out << "\n";
  }
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const FlowReport& flow = flows[i];
    out << "flow " << i << " user=" << flow.spec.user
        << " sp=" << flow.spec.target_sp.value << " -> "
        << (flow.decision.granted ? "granted" : "denied");
    if (!flow.decision.granted) out << " (" << flow.decision.reason << ")";
    if (flow.expectation_checked) {
      if (!flow.decision_matches) {
        out << " [DECISION MISMATCH]";
      } else if (!flow.diffs.empty()) {
        out << " [TRACE DIFFS]";
      } else {
        out << " [ok]";
      }
    }
    out << "\n";
    for (const auto& diff : flow.diffs) {
      out << "  diff: expected (" << diff.expected.step << ", "
          << diff.expected.actor_kind << ", " << diff.expected.action << ") "
          << diff.note << "\n";
    }
  }
  return out.str();
}

ScenarioReport run_scenario(const Scenario& scenario, std::uint64_t seed) {
  ScenarioReport report;
  report.name = scenario.name;
  report.seed = seed;

  Topology topology = load_topology_file(scenario.topology_path);
  report.findings = validate_invariants(topology);

  SimState state(std::move(topology), scenario.epoch);

  for (const auto& item : scenario.items) {
    if (item.kind == Scenario::Item::Kind::kSetup) {
      apply_setup_step(state, item.setup);
      continue;
    }
    FlowReport flow;
    flow.spec = item.flow;
    FlowResult result = run_flow(state, item.flow);
    flow.decision = result.decision;
    flow.trace = std::move(result.trace);
    report.flows.push_back(std::move(flow));
  }

  for (const auto& expected : scenario.expected) {
    FlowReport& flow = report.flows[expected.flow_index];
    flow.expectation_checked = true;
    flow.decision_matches = flow.decision.granted == expected.expect_granted;
    if (flow.decision_matches && !expected.expect_granted &&
        !expected.expect_reason.empty())
      flow.decision_matches = flow.decision.reason == expected.expect_reason;
    flow.diffs = diff_trace(flow.trace, expected.skeleton);
  }

  return report;
}

}  // namespace fedsim
