#ifndef FEDSIM_TOPOLOGY_HPP
#define FEDSIM_TOPOLOGY_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedsim/integrity.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class EntityKind : std::uint8_t {
  kIdP,
  kOP,
  kCA,
  kSP,
  kAA,
  kVOMS,
  kProxy,
  kTTS,
  kGuestIdP,
  kSocialIdP,
};

const char* to_string(EntityKind kind);
std::optional<EntityKind> parse_entity_kind(const std::string& text);

/// Entities of the User Identities layer; what they assert is
/// identity-bearing for effective-LoA purposes.
bool is_identity_provider_kind(EntityKind kind);

enum class AggregationLocus : std::uint8_t { kProxy, kSp };

/// Where a translation route converts credentials: owned by the entity it
/// is configured on (central proxy/TTS, or an SP's site service).
struct TranslationRoute {
  Technology from_tech = Technology::kSamlLike;
  Technology to_tech = Technology::kSamlLike;
  std::int64_t lifetime_s = 0;
  bool reference_access = false;  // token output uses a pull reference
};

/// Ordered attribute source consulted during aggregation.
struct AggregationSource {
  EntityId aa;
  bool required = false;
};

/// One authorization rule: all patterns must match and the composite
/// LoA must reach min_loa. Value "*" matches any value.
struct AuthzRule {
  std::vector<std::pair<std::string, std::string>> require;
  Loa min_loa = Loa::kLow;
};

/// Seed attribute stored at a provider for one user.
struct StoredAttribute {
  std::string name;
  std::string value;
  std::optional<Loa> loa;  // defaults to the user's level
};

/// Provider-local user entry seeded from the topology document.
struct StoredUser {
  std::string handle;
  std::string subject_id;
  Loa loa = Loa::kLow;
  std::vector<StoredAttribute> attributes;
};

/// AA record seed from the topology document.
struct AaRecordSeed {
  std::string subject_key;  // "home:<issuer>/<subject>" or "scoped:<id>@<scope>"
  std::set<std::string> groups;
  std::set<std::pair<std::string, std::string>> roles;
  std::map<std::string, std::string> custom;
};

struct Entity {
  EntityId id;
  EntityKind kind = EntityKind::kSP;
  std::set<std::string> federations;
  std::optional<EntityId> internal_behind;  // only for kind == SP
  std::set<Technology> protocols;
  Bytes signing_key;

  // Per-entity configuration carried by the topology document.
  std::set<EntityId> explicit_anchors;  // trust rule (e)
  bool egov = false;
  bool offline = false;
  bool requires_local_account = false;
  AggregationLocus aggregation_locus = AggregationLocus::kProxy;
  std::optional<EntityId> registry;  // SP-side aggregation registry
  std::optional<EntityId> site_tts;  // SP's site translation service
  std::optional<EntityId> via_proxy; // SP routes logins via this proxy
                                     // without the internal trust rule
  std::optional<EntityId> central_tts;  // proxy's translation service
  std::optional<EntityId> voms;      // CA's associated VOMS
  std::string scope;                 // ScopedId scope for aggregators
  std::optional<Technology> downstream_tech;  // proxy: fixed first hop
  std::vector<std::string> upstream_attributes;
  std::vector<AggregationSource> attribute_sources;
  std::map<std::string, std::string> harmonization_map;
  std::vector<TranslationRoute> routes;
  std::map<std::string, std::string> privilege_map;
  std::vector<AuthzRule> authz_rules;
  std::set<std::string> admins;
  bool aa_keyed_by_scoped_id = false;
  Loa assertion_loa = Loa::kSubstantial;  // cap on AA statements
  std::vector<StoredUser> users;
  std::vector<AaRecordSeed> aa_records;
};

enum class FederationModel : std::uint8_t { kFullMesh, kHubAndSpoke };

struct Federation {
  std::string id;
  FederationModel model = FederationModel::kFullMesh;
  std::optional<EntityId> hub;
  std::set<EntityId> members;
  bool interfederated = false;
};

/// The entity graph and trust fabric.
struct Topology {
  std::map<EntityId, Entity> entities;
  std::map<std::string, Federation> federations;
  TrustAnchorRegistry anchors;
  std::map<std::pair<EntityId, EntityId>, std::set<std::string>>
      release_policies;

  const Entity& entity(const EntityId& id) const;
  const Entity* find_entity(const EntityId& id) const;

  /// Attribute names releasable from issuer to audience. Deny-unlisted:
  /// no policy entry means nothing is released.
  const std::set<std::string>* release_policy(const EntityId& issuer,
                                              const EntityId& audience) const;

  std::vector<AttributeStatement> apply_release_policy(
      const EntityId& issuer, const EntityId& audience,
      std::vector<AttributeStatement> statements) const;
};

inline constexpr char kTopologyHeader[] = "fedsim-topology v1";

/// Parses and links a topology document. Distinct load errors:
/// "dangling entity reference", "hub missing", "hub invalid",
/// "duplicate entity id", "internal sp behind non-proxy",
/// "kind-protocol mismatch", "entity id contains separator",
/// "unparseable".
Topology load_topology(const std::string& text);
Topology load_topology_file(const std::string& path);

/// Trust predicate: may `verifier` accept credentials issued by `issuer`?
///  (a) same full-mesh federation;
///  (b) same hub-and-spoke federation, both linked via the hub;
///  (c) different federations, both interfederated;
///  (d) internal SPs trust exactly their own proxy, overriding the rest;
///  (e) explicitly anchored issuers.
bool trusts(const Topology& t, const EntityId& verifier,
            const EntityId& issuer);

/// Registration-sense check used by providers: `requester` is a known
/// relying party of `provider` when the verifier-side trust path exists.
bool registered_relying_party(const Topology& t, const EntityId& provider,
                              const EntityId& requester);

struct Finding {
  std::string rule;
  EntityId entity;
  std::string detail;
};

/// Structural and semantic re-validation; empty report iff all topology
/// invariants and the internal-SP single-trust rule hold.
std::vector<Finding> validate_invariants(const Topology& t);

inline constexpr char kMetadataHeader[] = "fedsim-metadata v1";

/// Deterministic federation metadata: member ids, kinds, protocols, and
/// anchor key fingerprints (plus key material, so anchors can be
/// re-imported; the simulator's tags are symmetric).
std::string export_metadata(const Topology& t, const std::string& federation);

/// Rebuilds the anchor subset carried by a metadata document.
std::map<EntityId, Bytes> import_metadata_anchors(const std::string& doc);

}  // namespace fedsim

#endif  // FEDSIM_TOPOLOGY_HPP
