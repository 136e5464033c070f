#ifndef FEDSIM_PROXY_HPP
#define FEDSIM_PROXY_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/attr_authority.hpp"
#include "fedsim/model.hpp"
#include "fedsim/providers.hpp"
#include "fedsim/topology.hpp"

namespace fedsim {

/// The merged, harmonized attribute set keyed by the persistent unique
/// identifier.
struct CompositeIdentity {
  ScopedId persistent_unique_id;
  std::vector<AttributeStatement> statements;
  Loa effective_loa = Loa::kLow;
  std::vector<std::pair<EntityId, int>> source_log;
};

/// Persistent, append-only bindings from upstream identities to ScopedIds.
/// Bindings never change once written; linked identities alias to the
/// first-seen binding.
class IdRegistry {
 public:
  using UpstreamKey = std::pair<EntityId, std::string>;

  /// Returns the bound ScopedId, or derives, binds and returns a new one:
  /// local part = first 32 hex chars of the digest over
  /// "issuer-id|subject-id". A digest collision with a different binding
  /// is a hard error ("collision"), never silent reuse.
  ScopedId derive(const EntityId& issuer, const std::string& subject_id,
                  const std::string& scope);

  /// Makes (alias issuer, alias subject) resolve to the same ScopedId as
  /// the primary identity (account linking).
  void link_alias(const EntityId& alias_issuer, const std::string& alias_subject,
                  const EntityId& primary_issuer,
                  const std::string& primary_subject);

  const std::map<UpstreamKey, ScopedId>& bindings() const { return bindings_; }
  const std::map<UpstreamKey, UpstreamKey>& aliases() const { return aliases_; }

  /// Deterministic text snapshot ("fedsim-registry v1").
  std::string export_snapshot() const;
  static IdRegistry import_snapshot(const std::string& text);

  /// Injectivity both ways; findings name the violated property.
  std::vector<std::string> check_consistency() const;

 private:
  std::map<UpstreamKey, ScopedId> bindings_;
  std::map<std::string, UpstreamKey> reverse_;  // rendered id -> first binding
  std::map<UpstreamKey, UpstreamKey> aliases_;
};

/// Hex digest input for scoped-id derivation, "issuer-id|subject-id".
std::string unique_id_digest_input(const EntityId& issuer,
                                   const std::string& subject_id);

/// Maps raw statement names onto the canonical vocabulary: mapped names
/// are renamed, canonical and already-"raw:" names pass through, anything
/// else gains the "raw:" prefix. Values, issuers and LoA are untouched;
/// output is sorted by (name, issuer, value). Idempotent.
std::vector<AttributeStatement> harmonize(
    const std::map<std::string, std::string>& mapping,
    std::vector<AttributeStatement> raw);

/// Rewrites an internal SP's request into the proxy's own upstream
/// request toward the chosen provider; the upstream provider sees the
/// proxy, not the SP, and the proxy's configured upstream attribute set.
AuthnRequest handle_sp_request(const Topology& t, const EntityId& proxy,
                               const AuthnRequest& req,
                               const EntityId& upstream_provider);

/// Everything aggregate() needs besides the home statements.
struct AggregationContext {
  const Topology* topology = nullptr;
  const AaState* aa_state = nullptr;
  IdRegistry* registry = nullptr;
  EntityId aggregator;            // proxy or SP-side registry
  EntityId upstream_issuer;       // authenticating provider
  std::string upstream_subject;   // provider-local subject id
  /// Observer for per-source released statements (trace events).
  std::function<void(const EntityId&, const std::vector<AttributeStatement>&)>
      on_source;
};

/// Queries the aggregator's attribute sources in order, merges them with
/// the harmonized home statements under the documented precedence rules,
/// injects the unique-id statement and computes the effective LoA.
CompositeIdentity aggregate(const AggregationContext& ctx,
                            std::vector<AttributeStatement> home_statements);

/// Documented precedence merge:
///  - group/role: community sources win over home; union across sources;
///  - display-name/mail/affiliation: home wins; otherwise the
///    latest-listed source providing the name;
///  - everything else: union. Exact duplicates collapse.
std::vector<AttributeStatement> merge_statements(
    const std::vector<AttributeStatement>& home,
    const std::vector<std::vector<AttributeStatement>>& source_lists);

/// One performed translation hop during downstream issuance.
struct TranslationHop {
  EntityId translator;
  Technology from = Technology::kSamlLike;
  Technology to = Technology::kSamlLike;
};

struct DownstreamIssue {
  Credential credential;
  std::vector<TranslationHop> hops;
  std::vector<std::string> released_names;
};

/// Issues the downstream credential for an SP served via this proxy:
/// subject is the rendered ScopedId, statements filtered by the
/// (proxy, sp) release policy, technology reached through the proxy's own
/// routes or its central translation service ("no translation path" when
/// unreachable).
DownstreamIssue issue_downstream(const Topology& t, ProviderDirectory* tokens,
                                 const EntityId& proxy, const EntityId& sp,
                                 const CompositeIdentity& cid, Technology tech,
                                 Timestamp now);

}  // namespace fedsim

#endif  // FEDSIM_PROXY_HPP
