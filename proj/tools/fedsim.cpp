#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/claims.hpp"
#include "fedsim/docparse.hpp"
#include "fedsim/flow.hpp"
#include "fedsim/integrity.hpp"
#include "fedsim/proxy.hpp"
#include "fedsim/scenario.hpp"
#include "fedsim/serialize.hpp"
#include "fedsim/topology.hpp"
#include "fedsim/translation.hpp"

namespace {

using namespace fedsim;

constexpr int kExitOk = 0;
constexpr int kExitDomainFailure = 1;
constexpr int kExitUsage = 2;

std::string scenario_dir(const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  if (const char* env = std::getenv("FEDSIM_SCENARIO_DIR")) return env;
  return "scenarios";
}

std::string resolve_scenario_path(const std::string& nameOrPath,
                                  const std::string& dir_flag) {
  namespace fs = std::filesystem;
  if (fs::exists(nameOrPath)) return nameOrPath;
  if (nameOrPath.find('/') == std::string::npos) {
    fs::path candidate =
        fs::path(scenario_dir(dir_flag)) / (nameOrPath + ".scenario");
    if (fs::exists(candidate)) return candidate.string();
  }
  return nameOrPath;
}

int cmd_validate(const std::string& path) {
  Topology topology;
  try {
    topology = load_topology_file(path);
  } catch (const Error& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kExitUsage;
  }
  auto findings = validate_invariants(topology);
  for (const auto& finding : findings) {
    std::cout << "finding " << finding.rule
              << " entity=" << finding.entity.value;
    if (!finding.detail.empty()) std::cout << " (" << finding.detail << ")";
    std::cout << "\n";
  }
  std::cout << (findings.empty() ? "ok" : "invalid") << ": " << path << " ("
            << findings.size() << " finding(s))\n";
  return findings.empty() ? kExitOk : kExitDomainFailure;
}

int cmd_run(const std::string& path, const std::string& trace_path,
            std::uint64_t seed) {
  ScenarioReport report;
  try {
    Scenario scenario = load_scenario_file(path);
    report = run_scenario(scenario, seed);
  } catch (const Error& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::cout << report.render_text();
  if (!trace_path.empty()) {
    std::ofstream out(trace_path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write trace: " << trace_path << "\n";
      return kExitUsage;
    }
    out << report.full_trace_jsonl();
  }
  return report.ok() ? kExitOk : kExitDomainFailure;
}

int cmd_flow(const std::string& topology_path, const FlowSpec& spec,
             Timestamp epoch, const std::string& trace_path) {
  SimState* state = nullptr;
  try {
    static SimState local(load_topology_file(topology_path), epoch);
    state = &local;
  } catch (const Error& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kExitUsage;
  }

  FlowResult result = run_flow(*state, spec);
  std::string jsonl = trace_to_jsonl(result.trace);
  if (trace_path.empty()) {
    std::cout << jsonl;
  } else {
    std::ofstream out(trace_path, std::ios::binary);
    out << jsonl;
  }
  std::cout << (result.decision.granted
                    ? "granted"
                    : "denied (" + result.decision.reason + ")")
            << "\n";
  return result.decision.granted ? kExitOk : kExitDomainFailure;
}

std::string summary_get(const FlowEvent& event, const char* key) {
  auto it = event.summary.find(key);
  return it == event.summary.end() ? "" : it->second;
}

// The counterparty of an event, for diagram arrows.
std::string event_peer(const FlowEvent& event) {
  for (const char* key : {"to", "audience", "requester"}) {
    std::string value = summary_get(event, key);
    if (!value.empty()) return value;
  }
  return event.actor.value;
}

int cmd_diagram(const std::string& trace_path, const std::string& format) {
  FlowTrace trace;
  try {
    trace = trace_from_jsonl(read_text_file(trace_path));
  } catch (const Error& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (format == "mermaid") {
    std::cout << "sequenceDiagram\n";
    std::vector<std::string> order;
    auto note = [&order](const std::string& actor) {
      if (std::find(order.begin(), order.end(), actor) == order.end())
        order.push_back(actor);
    };
    for (const auto& event : trace) {
      note(event.actor.value);
      note(event_peer(event));
    }
    for (const auto& actor : order)
      std::cout << "  participant " << actor << "\n";
    for (const auto& event : trace) {
      std::cout << "  " << event.actor.value << "->>" << event_peer(event)
                << ": " << event.action << " (step " << event.step << ")\n";
    }
  } else {
    for (const auto& event : trace) {
      std::cout << event.seq << ". [step " << event.step << "] "
                << event.actor.value << " --" << event.action << "--> "
                << event_peer(event) << "\n";
    }
  }
  return kExitOk;
}

int cmd_scenarios(const std::string& dir_flag) {
  namespace fs = std::filesystem;
  fs::path dir(scenario_dir(dir_flag));
  if (!fs::is_directory(dir)) {
    std::cerr << "no scenario directory: " << dir.string() << "\n";
    return kExitUsage;
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".scenario")
      names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& name : names) std::cout << name << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check suites
// ---------------------------------------------------------------------------

struct SuiteResult {
  int passed = 0;
  int failed = 0;

  void record(const std::string& property, bool ok, const std::string& detail) {
    std::cout << (ok ? "pass" : "FAIL") << " " << property;
    if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    (ok ? passed : failed) += 1;
  }
};

const char* kCheckTopology = R"(fedsim-topology v1
[entity idp:a]
kind = idp
federations = fed-1
user = alice subject=alice01 loa=substantial
user-attr = alice display-name "Alice"
user-attr = alice eduPersonAffiliation member
[entity sp:b]
kind = sp
federations = fed-1
[entity idp:c]
kind = idp
federations = fed-2
[entity proxy:h]
kind = proxy
federations = fed-2
anchor = idp:a
scope = check.example
route = saml-like oidc-like lifetime=3600
route = oidc-like saml-like lifetime=3600
route = saml-like x509-like lifetime=43200
[entity sp:d]
kind = sp
federations = fed-2
[entity sp:s]
kind = sp
behind = proxy:h
[federation fed-1]
model = full-mesh
members = idp:a sp:b
interfederated = true
[federation fed-2]
model = hub-and-spoke
hub = proxy:h
members = idp:c proxy:h sp:d
[policies]
release = idp:a proxy:h display-name eduPersonAffiliation
)";

int suite_trust() {
  SuiteResult result;
  Topology t = load_topology(kCheckTopology);

  const std::set<std::pair<std::string, std::string>> expected_true = {
      {"idp:a", "sp:b"},    {"sp:b", "idp:a"},   {"idp:c", "proxy:h"},
      {"idp:c", "sp:d"},    {"proxy:h", "idp:c"}, {"proxy:h", "sp:d"},
      {"sp:d", "idp:c"},    {"sp:d", "proxy:h"},  {"proxy:h", "idp:a"},
      {"sp:s", "proxy:h"},
  };
  const std::string ids[] = {"idp:a", "sp:b", "idp:c", "proxy:h", "sp:d",
                             "sp:s"};
  bool table_ok = true;
  for (const auto& v : ids) {
    for (const auto& i : ids) {
      if (v == i) continue;
      bool expected = expected_true.count({v, i}) > 0;
      if (trusts(t, EntityId(v), EntityId(i)) != expected) table_ok = false;
    }
  }
  result.record("trust.all-pairs-table", table_ok, "");

  std::set<std::string> trusted;
  for (const auto& [id, entity] : t.entities) {
    (void)entity;
    if (id.value != "sp:s" && trusts(t, EntityId("sp:s"), id))
      trusted.insert(id.value);
  }
  result.record("trust.internal-sp-single-trust",
                trusted == std::set<std::string>{"proxy:h"}, "");

  result.record("trust.asymmetry",
                trusts(t, EntityId("proxy:h"), EntityId("idp:a")) &&
                    !trusts(t, EntityId("idp:a"), EntityId("proxy:h")),
                "");
  return result.failed == 0 ? kExitOk : kExitDomainFailure;
}

int suite_ids(std::uint64_t seed, const std::string& registry_path) {
  SuiteResult result;

  if (!registry_path.empty()) {
    try {
      IdRegistry imported =
          IdRegistry::import_snapshot(read_text_file(registry_path));
      auto findings = imported.check_consistency();
      for (const auto& finding : findings)
        std::cout << "finding: " << finding << "\n";
      result.record("ids.non-reassignment", findings.empty(),
                    std::to_string(findings.size()) + " finding(s)");
      return result.failed == 0 ? kExitOk : kExitDomainFailure;
    } catch (const Error& e) {
      std::cerr << "registry error: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  IdRegistry registry;
  std::mt19937_64 rng(seed);
  std::set<std::string> rendered;
  bool deterministic = true;
  bool collision_free = true;
  const int kCount = 10000;
  std::vector<std::pair<EntityId, std::string>> keys;
  for (int i = 0; i < kCount; ++i) {
    EntityId issuer("idp:i" + std::to_string(rng() % 977));
    std::string subject = "s" + std::to_string(i);
    ScopedId id = registry.derive(issuer, subject, "check.example");
    if (registry.derive(issuer, subject, "check.example") != id)
      deterministic = false;
    if (!rendered.insert(id.render()).second) collision_free = false;
    keys.emplace_back(issuer, subject);
  }
  result.record("ids.determinism", deterministic, "");
  result.record("ids.collision-free-10000", collision_free, "");

  bool separated = true;
  ScopedId one = registry.derive(EntityId("idp:x"), "same-subject", "check.example");
  ScopedId two = registry.derive(EntityId("idp:y"), "same-subject", "check.example");
  if (one.local_part == two.local_part) separated = false;
  result.record("ids.issuer-separation", separated, "");

  bool stable = true;
  std::shuffle(keys.begin(), keys.end(), rng);
  for (const auto& [issuer, subject] : keys) {
    ScopedId again = registry.derive(issuer, subject, "check.example");
    if (rendered.count(again.render()) == 0) stable = false;
  }
  result.record("ids.non-reassignment", stable, "");

  result.record("ids.snapshot-round-trip",
                IdRegistry::import_snapshot(registry.export_snapshot())
                        .export_snapshot() == registry.export_snapshot(),
                "");
  return result.failed == 0 ? kExitOk : kExitDomainFailure;
}

int suite_translation(std::uint64_t seed) {
  SuiteResult result;
  Topology t = load_topology(kCheckTopology);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 2);
  std::uniform_int_distribution<int> attr_count(0, 4);
  std::uniform_int_distribution<Timestamp> lifetime(60, 7200);

  bool subject_ok = true, lifetime_ok = true, loa_ok = true, multiset_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    Assertion a;
    a.subject = "subj" + std::to_string(trial);
    a.issuer = EntityId("idp:a");
    a.audience = EntityId("proxy:h");
    a.auth_instant = 1000;
    a.not_before = 1000;
    a.not_after = 1000 + lifetime(rng);
    for (int i = 0, n = attr_count(rng); i < n; ++i) {
      AttributeStatement s;
      s.name = "attr" + std::to_string(i);
      s.value = "v" + std::to_string(int(rng() % 50));
      s.issuer = EntityId("idp:a");
      s.loa = static_cast<Loa>(level(rng));
      a.attributes.push_back(s);
    }
    Credential input = a;
    seal_credential(t.anchors, a.issuer, input);

    Technology target = (trial % 2 == 0) ? Technology::kOidcLike
                                         : Technology::kX509Like;
    Credential output =
        translate(t, nullptr, EntityId("proxy:h"), input, target, 1000);

    if (credential_subject(output) != a.subject) subject_ok = false;
    if (credential_not_after(output) > a.not_after) lifetime_ok = false;

    auto in_stmts = credential_statements(input);
    auto out_stmts = credential_statements(output);
    std::map<std::pair<std::string, std::string>, Loa> in_loa;
    for (const auto& s : in_stmts) in_loa[{s.name, s.value}] = s.loa;
    for (const auto& s : out_stmts) {
      auto it = in_loa.find({s.name, s.value});
      if (it == in_loa.end() || s.loa > it->second) loa_ok = false;
    }

    if (target == Technology::kOidcLike) {
      Credential back = translate(t, nullptr, EntityId("proxy:h"), output,
                                  Technology::kSamlLike, 1000);
      auto back_stmts = credential_statements(back);
      auto strip = [](std::vector<AttributeStatement> v) {
        for (auto& s : v) s.delivery = Delivery::kPush;
        sort_statements(v);
        return v;
      };
      if (strip(back_stmts) != strip(in_stmts)) multiset_ok = false;
      if (credential_subject(back) != a.subject) subject_ok = false;
    }
  }
  result.record("translation.subject-preservation", subject_ok, "");
  result.record("translation.lifetime-monotonicity", lifetime_ok, "");
  result.record("translation.loa-monotonicity", loa_ok, "");
  result.record("translation.round-trip-multiset", multiset_ok, "");
  return result.failed == 0 ? kExitOk : kExitDomainFailure;
}

// Independent re-check of the chain rules, structured differently from
// validate_chain on purpose.
bool chain_ok_reference(const TrustAnchorRegistry& anchors,
                        const CertChain& chain, Timestamp now) {
  if (chain.certs.empty()) return false;
  const EntityId& authority = chain.certs.back().integrity.issuer;
  const Bytes* key = anchors.find_key(authority);
  if (key == nullptr) return false;
  std::size_t ee = chain.certs.size();
  for (std::size_t i = 0; i < chain.certs.size(); ++i) {
    const Cert& cert = chain.certs[i];
    if (cert.integrity.issuer != authority) return false;
    if (hmac_sha256(*key, canonical_serialize_cert(cert)) !=
        cert.integrity.tag)
      return false;
    if (now < cert.not_before || now > cert.not_after) return false;
    if (i + 1 < chain.certs.size() &&
        cert.issuer_name != chain.certs[i + 1].subject_name)
      return false;
    if (!cert.is_proxy && ee == chain.certs.size()) ee = i;
    if (cert.is_proxy && ee != chain.certs.size()) return false;
  }
  if (ee == chain.certs.size()) return false;
  for (std::size_t i = 0; i < ee; ++i) {
    const Cert& proxy = chain.certs[i];
    const Cert& parent = chain.certs[i + 1];
    if (proxy.not_before < parent.not_before ||
        proxy.not_after > parent.not_after)
      return false;
    if (proxy.remaining_delegation_depth < 0 ||
        proxy.remaining_delegation_depth >= parent.remaining_delegation_depth)
      return false;
  }
  return true;
}

int suite_delegation(std::uint64_t seed) {
  SuiteResult result;
  Topology t = load_topology(kCheckTopology);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Timestamp> jitter(-400, 400);

  int checked = 0;
  bool agree = true;
  const Timestamp now = 100000;
  for (int trial = 0; trial < 200; ++trial) {
    Cert root;
    root.subject_name = "root:idp:a";
    root.issuer_name = root.subject_name;
    root.not_before = 0;
    root.not_after = int64_t{1} << 40;
    Cert ee;
    ee.subject_name = "cn=check";
    ee.issuer_name = root.subject_name;
    ee.not_before = now - 5000;
    ee.not_after = now + 5000;
    ee.remaining_delegation_depth = 3;
    CertChain chain;
    chain.certs = {ee, root};
    for (auto& cert : chain.certs)
      seal_cert(t.anchors, EntityId("idp:a"), cert);

    int depth = int(rng() % 5);
    for (int d = 0; d < depth; ++d) {
      Cert proxy;
      proxy.subject_name = "cn=check/p" + std::to_string(d);
      proxy.issuer_name = chain.certs.front().subject_name;
      proxy.not_before = chain.certs.front().not_before + jitter(rng);
      proxy.not_after = chain.certs.front().not_after + jitter(rng);
      proxy.is_proxy = true;
      proxy.remaining_delegation_depth =
          chain.certs.front().remaining_delegation_depth - 1 +
          int(rng() % 3) - 1;
      seal_cert(t.anchors, EntityId("idp:a"), proxy);
      chain.certs.insert(chain.certs.begin(), proxy);
    }
    ++checked;
    bool lib = validate_chain(t.anchors, chain, now).valid;
    bool ref = chain_ok_reference(t.anchors, chain, now);
    if (lib != ref) agree = false;
  }
  result.record("delegation.oracle-agreement",
                agree && checked == 200, std::to_string(checked));
  return result.failed == 0 ? kExitOk : kExitDomainFailure;
}

int suite_policy() {
  SuiteResult result;
  std::vector<AttributeStatement> pool;
  auto mk = [](const std::string& n, const std::string& v) {
    AttributeStatement s;
    s.name = n;
    s.value = v;
    s.issuer = EntityId("idp:a");
    s.loa = Loa::kSubstantial;
    return s;
  };
  pool.push_back(mk("group", "vo-atlas"));
  pool.push_back(mk("affiliation", "member"));
  pool.push_back(mk("role", "vo-atlas:production"));
  pool.push_back(mk("mail", "x@example"));

  std::vector<AuthzRule> rules(3);
  rules[0].require = {{"group", "vo-atlas"}};
  rules[0].min_loa = Loa::kLow;
  rules[1].require = {{"affiliation", "member"}, {"mail", "*"}};
  rules[1].min_loa = Loa::kSubstantial;
  rules[2].require = {{"role", "vo-atlas:production"}};
  rules[2].min_loa = Loa::kHigh;

  bool agree = true;
  for (unsigned mask = 0; mask < 16; ++mask) {
    CompositeIdentity cid;
    cid.persistent_unique_id = {std::string(32, 'a'), "check.example"};
    for (unsigned bit = 0; bit < 4; ++bit)
      if (mask & (1u << bit)) cid.statements.push_back(pool[bit]);
    cid.effective_loa = Loa::kSubstantial;

    AuthzPolicy policy{EntityId("sp:b"), rules};
    bool lib = authorize(policy, cid).granted;

    // Brute-force evaluation.
    bool expected = false;
    for (const auto& rule : rules) {
      bool all = true;
      for (const auto& [name, want] : rule.require) {
        bool found = false;
        for (const auto& s : cid.statements)
          if (s.name == name && (want == "*" || s.value == want)) found = true;
        if (!found) all = false;
      }
      if (all && cid.effective_loa >= rule.min_loa) expected = true;
    }
    if (lib != expected) agree = false;
  }
  result.record("policy.exhaustive-agreement", agree, "");
  return result.failed == 0 ? kExitOk : kExitDomainFailure;
}

int cmd_check(const std::string& suite, std::uint64_t seed,
              const std::string& registry_path) {
  if (suite == "trust") return suite_trust();
  if (suite == "ids") return suite_ids(seed, registry_path);
  if (suite == "translation") return suite_translation(seed);
  if (suite == "delegation") return suite_delegation(seed);
  if (suite == "policy") return suite_policy();
  if (suite == "all") {
    int worst = kExitOk;
    for (const char* name : {"trust", "ids", "translation", "delegation",
                             "policy"}) {
      std::cout << "== suite " << name << "\n";
      worst = std::max(worst, cmd_check(name, seed, registry_path));
    }
    return worst;
  }
  std::cerr << "unknown suite: " << suite << "\n";
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim - federated AAI engine and simulator"};
  app.require_subcommand(1);

  std::string validate_path;
  CLI::App* validate =
      app.add_subcommand("validate", "validate a topology document");
  validate->add_option("path", validate_path, "topology file")->required();

  std::string run_path, run_trace, run_dir;
  std::uint64_t run_seed = 0;
  CLI::App* run = app.add_subcommand("run", "run a scenario");
  run->add_option("scenario", run_path, "scenario file or bundled name")
      ->required();
  run->add_option("--trace", run_trace, "write the combined trace here");
  run->add_option("--seed", run_seed, "run seed (recorded in the report)");
  run->add_option("--scenario-dir", run_dir, "bundled scenario directory");

  std::string flow_topology, flow_user, flow_sp, flow_tech = "saml-like";
  std::string flow_provider, flow_mode = "web", flow_attrs = "push";
  std::string flow_trace;
  Timestamp flow_epoch = 1700000000;
  CLI::App* flow = app.add_subcommand("flow", "run one ad-hoc flow");
  flow->add_option("--topology", flow_topology, "topology file")->required();
  flow->add_option("--user", flow_user, "principal handle")->required();
  flow->add_option("--sp", flow_sp, "target service provider")->required();
  flow->add_option("--provider", flow_provider, "authenticating provider")
      ->required();
  flow->add_option("--tech", flow_tech, "saml-like|oidc-like|x509-like");
  flow->add_option("--mode", flow_mode, "web|non-web");
  flow->add_option("--attrs", flow_attrs, "push|pull");
  flow->add_option("--epoch", flow_epoch, "clock start");
  flow->add_option("--trace", flow_trace, "write the trace here");

  std::string diagram_path, diagram_format = "text";
  CLI::App* diagram =
      app.add_subcommand("diagram", "render a trace as a sequence diagram");
  diagram->add_option("trace", diagram_path, "trace file")->required();
  diagram->add_option("--format", diagram_format, "text|mermaid");

  std::string scenarios_dir;
  CLI::App* scenarios =
      app.add_subcommand("scenarios", "list bundled scenarios");
  scenarios->add_option("--dir", scenarios_dir, "scenario directory");

  std::string check_suite = "all", check_registry;
  std::uint64_t check_seed = 20160701;
  CLI::App* check = app.add_subcommand("check", "run invariant suites");
  check->add_option("--suite", check_suite,
                    "trust|ids|translation|delegation|policy|all");
  check->add_option("--seed", check_seed, "suite RNG seed");
  check->add_option("--registry", check_registry,
                    "registry snapshot to audit (suite ids)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(validate_path);
    if (run->parsed())
      return cmd_run(resolve_scenario_path(run_path, run_dir), run_trace,
                     run_seed);
    if (flow->parsed()) {
      FlowSpec spec;
      spec.user = flow_user;
      spec.target_sp = EntityId(flow_sp);
      spec.provider = EntityId(flow_provider);
      auto tech = parse_technology(flow_tech);
      if (!tech) {
        std::cerr << "bad tech: " << flow_tech << "\n";
        return kExitUsage;
      }
      spec.tech = *tech;
      if (flow_mode == "non-web") {
        spec.mode = FlowMode::kNonWeb;
      } else if (flow_mode != "web") {
        std::cerr << "bad mode: " << flow_mode << "\n";
        return kExitUsage;
      }
      if (flow_attrs == "pull") {
        spec.attr_mode = AttrMode::kPull;
      } else if (flow_attrs != "push") {
        std::cerr << "bad attrs: " << flow_attrs << "\n";
        return kExitUsage;
      }
      return cmd_flow(flow_topology, spec, flow_epoch, flow_trace);
    }
    if (diagram->parsed()) return cmd_diagram(diagram_path, diagram_format);
    if (scenarios->parsed()) return cmd_scenarios(scenarios_dir);
    if (check->parsed())
      return cmd_check(check_suite, check_seed, check_registry);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
