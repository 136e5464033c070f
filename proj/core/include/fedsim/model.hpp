#ifndef FEDSIM_MODEL_HPP
#define FEDSIM_MODEL_HPP

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

/// Simulated time, integer seconds on the flow engine's logical clock.
using Timestamp = std::int64_t;

/// URI-like identifier of an entity, e.g. "idp:uni-x.example".
/// The scheme prefix is informal; the authoritative kind lives in the
/// topology.
struct EntityId {
  std::string value;

  EntityId() = default;
  explicit EntityId(std::string v) : value(std::move(v)) {}

  bool empty() const { return value.empty(); }
  auto operator<=>(const EntityId&) const = default;
};

/// Ordered assurance grade: low < substantial < high.
enum class Loa : std::uint8_t {
  kLow = 0,
  kSubstantial = 1,
  kHigh = 2,
};

const char* to_string(Loa level);
std::optional<Loa> parse_loa(const std::string& text);

/// Minimum over a non-empty list of levels.
Loa loa_combine(std::span<const Loa> levels);

/// Attribute delivery mode: embedded in the credential (push) or fetched
/// on demand by the relying party (pull).
enum class Delivery : std::uint8_t {
  kPull = 0,
  kPush = 1,
};

const char* to_string(Delivery delivery);

/// The fixed canonical attribute vocabulary. Inbound names outside this
/// set stay prefixed "raw:" until harmonized.
inline constexpr const char* kCanonicalAttributeNames[] = {
    "unique-id", "display-name", "mail", "affiliation",
    "group",     "role",         "loa",  "scope",
};

bool is_canonical_attribute_name(const std::string& name);
inline constexpr char kRawPrefix[] = "raw:";
inline const std::string kAttrUniqueId = "unique-id";

/// One named, issuer-attributed, LoA-tagged claim about a subject.
/// Immutable once issued.
struct AttributeStatement {
  std::string name;
  std::string value;
  EntityId issuer;
  Loa loa = Loa::kLow;
  std::optional<std::string> scope;
  Delivery delivery = Delivery::kPush;

  auto operator<=>(const AttributeStatement&) const = default;
};

/// Canonical ordering used everywhere statements are serialized or merged.
bool statement_canonical_less(const AttributeStatement& a,
                              const AttributeStatement& b);
void sort_statements(std::vector<AttributeStatement>& statements);

/// Keyed tag over the canonical serialization of a credential under the
/// issuer's registered key. Stands in for XML-DSig / JOSE / PKI signatures.
struct IntegrityTag {
  EntityId issuer;
  std::vector<std::uint8_t> tag;

  auto operator<=>(const IntegrityTag&) const = default;
};

/// Web-SSO assertion (SAML-like).
struct Assertion {
  std::string subject;
  EntityId issuer;
  EntityId audience;
  std::vector<AttributeStatement> attributes;
  Timestamp auth_instant = 0;
  Timestamp not_before = 0;
  Timestamp not_after = 0;
  IntegrityTag integrity;

  auto operator<=>(const Assertion&) const = default;
};

/// Access part of a token set: either self-contained claims under their
/// own tag, or an opaque reference resolved back at the issuer.
struct SelfContainedAccess {
  std::multimap<std::string, std::string> claims;
  IntegrityTag integrity;

  auto operator<=>(const SelfContainedAccess&) const = default;
};

struct ReferenceAccess {
  std::string id;

  auto operator<=>(const ReferenceAccess&) const = default;
};

using TokenAccess = std::variant<SelfContainedAccess, ReferenceAccess>;

/// OIDC-like token set.
struct TokenSet {
  std::multimap<std::string, std::string> id_claims;
  std::string subject;
  EntityId issuer;
  EntityId audience;
  TokenAccess access;
  Timestamp not_after = 0;
  IntegrityTag integrity;

  auto operator<=>(const TokenSet&) const = default;
};

/// One certificate in a chain. attr_extension carries VOMS-style pushed
/// community attributes.
struct Cert {
  std::string subject_name;
  std::string issuer_name;
  Timestamp not_before = 0;
  Timestamp not_after = 0;
  bool is_proxy = false;
  std::int64_t remaining_delegation_depth = 0;
  std::vector<AttributeStatement> attr_extension;
  IntegrityTag integrity;

  auto operator<=>(const Cert&) const = default;
};

/// Ordered leaf -> anchor.
struct CertChain {
  std::vector<Cert> certs;

  auto operator<=>(const CertChain&) const = default;
};

/// Sum type over the three credential technologies.
using Credential = std::variant<Assertion, TokenSet, CertChain>;

/// Technology idiom a credential or endpoint speaks.
enum class Technology : std::uint8_t {
  kSamlLike = 0,
  kOidcLike = 1,
  kX509Like = 2,
};

const char* to_string(Technology tech);
std::optional<Technology> parse_technology(const std::string& text);
Technology technology_of(const Credential& credential);

/// Persistent, non-reassignable, non-targeted subject identifier,
/// rendered "local_part@scope" with a 32-char lowercase-hex local part.
struct ScopedId {
  std::string local_part;
  std::string scope;

  std::string render() const { return local_part + "@" + scope; }
  bool valid() const;

  auto operator<=>(const ScopedId&) const = default;
};

std::optional<ScopedId> parse_scoped_id(const std::string& rendered);

enum class LinkedIdentityKind : std::uint8_t {
  kGuest = 0,
  kSocial = 1,
  kEgov = 2,
};

const char* to_string(LinkedIdentityKind kind);

struct HomeIdentity {
  EntityId idp;
  std::string subject_id;

  auto operator<=>(const HomeIdentity&) const = default;
};

struct LinkedIdentity {
  EntityId provider;
  std::string subject_id;
  LinkedIdentityKind kind = LinkedIdentityKind::kGuest;

  auto operator<=>(const LinkedIdentity&) const = default;
};

/// A user: home-organisation identities, linked guest/social identities,
/// the derived persistent unique identifier, provisioned local accounts.
struct PrincipalRecord {
  std::string handle;
  std::vector<HomeIdentity> home_identities;
  std::vector<LinkedIdentity> linked_identities;
  std::optional<ScopedId> persistent_unique_id;
  std::vector<std::pair<EntityId, std::string>> local_accounts;

  /// Provider-local subject id at `provider`, searching home identities
  /// first, then linked ones.
  std::optional<std::string> subject_at(const EntityId& provider) const;
};

}  // namespace fedsim

#endif  // FEDSIM_MODEL_HPP
