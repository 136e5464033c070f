#ifndef FEDSIM_FLOW_HPP
#define FEDSIM_FLOW_HPP

#include <map>
#include <string>
#include <vector>

#include "fedsim/attr_authority.hpp"
#include "fedsim/model.hpp"
#include "fedsim/providers.hpp"
#include "fedsim/proxy.hpp"
#include "fedsim/topology.hpp"
#include "fedsim/translation.hpp"

namespace fedsim {

enum class FlowMode : std::uint8_t { kWeb, kNonWeb };
enum class AttrMode : std::uint8_t { kPush, kPull };

/// One login workflow to execute. Discovery is deterministic: the
/// authenticating provider is an input.
struct FlowSpec {
  std::string user;
  EntityId target_sp;
  Technology tech = Technology::kSamlLike;
  EntityId provider;
  FlowMode mode = FlowMode::kWeb;
  AttrMode attr_mode = AttrMode::kPush;
  Timestamp cert_lifetime_s = 34128000;  // 395 days
};

// Closed action vocabulary.
inline constexpr char kActRedirect[] = "redirect";
inline constexpr char kActAuthenticate[] = "authenticate";
inline constexpr char kActIssue[] = "issue";
inline constexpr char kActTranslate[] = "translate";
inline constexpr char kActQueryAttrs[] = "query-attrs";
inline constexpr char kActAggregate[] = "aggregate";
inline constexpr char kActPresent[] = "present";
inline constexpr char kActExtract[] = "extract";
inline constexpr char kActAuthorize[] = "authorize";
inline constexpr char kActProvision[] = "provision";

struct FlowEvent {
  int seq = 0;   // strictly increasing across a scenario run
  int step = 1;  // 1..5, non-decreasing within a flow
  EntityId actor;
  std::string action;
  std::map<std::string, std::string> summary;  // includes actor-kind
};

using FlowTrace = std::vector<FlowEvent>;

struct Decision {
  bool granted = false;
  std::string reason;  // empty when granted

  static Decision grant() { return {true, ""}; }
  static Decision deny(std::string why) { return {false, std::move(why)}; }
};

struct AuthzPolicy {
  EntityId sp;
  std::vector<AuthzRule> rules;  // default deny when none match
};

/// Grants iff some rule's patterns all match the composite statements and
/// the effective LoA reaches the rule's minimum. Denial carries the first
/// failing requirement of the last rule tried.
Decision authorize(const AuthzPolicy& policy, const CompositeIdentity& cid);

/// All mutable simulation state, owned by the single-threaded flow loop.
struct SimState {
  Topology topology;
  ProviderDirectory providers;
  AaState aa;
  std::map<EntityId, IdRegistry> registries;  // per aggregating entity
  AccountStore accounts;
  Timestamp now = 0;
  int next_seq = 1;
  int flow_index = 0;

  SimState(Topology t, Timestamp epoch);
};

struct FlowResult {
  Decision decision;
  FlowTrace trace;
};

/// Executes one §-style login workflow: redirect/obtain, authenticate and
/// issue, present, extract/pull and aggregate, authorize (and provision
/// for non-web). Structural impossibilities become denied(reason) in the
/// trace, never an exception. The clock advances one second per event.
FlowResult run_flow(SimState& state, const FlowSpec& spec);

/// JSON Lines trace serialization with deterministic field and key order:
/// {"seq":..,"step":..,"actor":..,"action":..,"summary":{..}}.
std::string trace_to_jsonl(const FlowTrace& trace);
FlowTrace trace_from_jsonl(const std::string& text);

struct SkeletonEvent {
  int step = 0;
  std::string actor_kind;
  std::string action;
};

/// Expected (step, actor-kind, action) triples that must appear in order.
/// Extra events are allowed unless strict.
struct TraceSkeleton {
  std::vector<SkeletonEvent> events;
  bool strict = false;
};

struct TraceDiff {
  std::size_t expected_index = 0;
  SkeletonEvent expected;
  std::string note;
};

std::vector<TraceDiff> diff_trace(const FlowTrace& actual,
                                  const TraceSkeleton& skeleton);

}  // namespace fedsim

#endif  // FEDSIM_FLOW_HPP
