#ifndef FEDSIM_PROVIDERS_HPP
#define FEDSIM_PROVIDERS_HPP

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/topology.hpp"

namespace fedsim {

inline constexpr Timestamp kAssertionLifetimeS = 300;
inline constexpr Timestamp kTokenLifetimeS = 3600;
inline constexpr Timestamp kAuthCodeLifetimeS = 60;
inline constexpr Timestamp kCertLifetimeMinS = 864000;    // 10 days
inline constexpr Timestamp kCertLifetimeMaxS = 63072000;  // 2 years
inline constexpr std::int64_t kDefaultDelegationDepth = 3;

struct AuthnRequest {
  EntityId requester;
  EntityId audience;
  std::vector<std::string> wanted_attributes;
  enum class Binding : std::uint8_t { kRedirect, kBackChannel } binding =
      Binding::kRedirect;
};

/// Single-use authorization code (OIDC pull model).
struct AuthCode {
  std::string code;
  EntityId op;
  std::string subject;
  EntityId client;
  Timestamp expires = 0;
  bool redeemed = false;
};

enum class OidcMode : std::uint8_t { kCode, kSelfContained };

/// Mutable provider-side state: per-provider user stores, the principal
/// directory, issued auth codes, and reference-token records. Confined to
/// the flow engine's single-threaded loop.
class ProviderDirectory {
 public:
  struct TokenRecord {
    EntityId op;
    std::string subject;
    EntityId audience;
    std::multimap<std::string, std::string> claims;
    Timestamp not_after = 0;
  };

  /// Copies user seeds out of the topology and derives principal records
  /// (one per handle, with a home identity per provider entry).
  void seed(const Topology& t);

  const StoredUser* find_user(const EntityId& provider,
                              const std::string& subject_id) const;
  const PrincipalRecord* find_principal(const std::string& handle) const;
  PrincipalRecord* find_principal(const std::string& handle);

  /// Administrative LoA-raising event (identity vetting).
  void raise_loa(const EntityId& provider, const std::string& subject_id,
                 Loa loa);

  /// Links an additional identity to an existing principal, creating the
  /// provider-store entry when missing.
  void link_identity(const Topology& t, const std::string& handle,
                     const EntityId& provider, const std::string& subject_id,
                     LinkedIdentityKind kind);

  const AuthCode* find_code(const std::string& code) const;
  const TokenRecord* find_token(const std::string& reference) const;

  /// Statements a provider holds about a stored user (pre-release-policy).
  std::vector<AttributeStatement> stored_statements(
      const Entity& provider, const StoredUser& user) const;

  // Used by the issuing operations below.
  AuthCode& put_code(AuthCode code);
  AuthCode* find_code_mut(const std::string& code);
  std::string put_token(TokenRecord record);
  StoredUser& ensure_user(const EntityId& provider, StoredUser user);
  PrincipalRecord& put_principal(PrincipalRecord record);

 private:
  std::map<EntityId, std::map<std::string, StoredUser>> stores_;
  std::map<std::string, PrincipalRecord> principals_;
  std::map<std::string, AuthCode> codes_;
  std::map<std::string, TokenRecord> tokens_;
};

/// SAML-like authentication: assertion for the requesting relying party,
/// attributes filtered by the (idp, requester) release policy, validity
/// [now, now + 300 s].
Assertion authenticate_web(const Topology& t, const ProviderDirectory& dir,
                           const EntityId& idp, const PrincipalRecord& user,
                           const AuthnRequest& req, Timestamp now);

/// OIDC-like authentication: single-use code (pull) or a self-contained
/// token set (push).
std::variant<AuthCode, TokenSet> authenticate_oidc(
    const Topology& t, ProviderDirectory& dir, const EntityId& op,
    const PrincipalRecord& user, const EntityId& client, OidcMode mode,
    Timestamp now);

/// Redeems a code for a reference token set. Distinct errors: "expired",
/// "already redeemed", "client mismatch", "unknown code".
TokenSet redeem_code(const Topology& t, ProviderDirectory& dir,
                     const EntityId& op, const AuthCode& code,
                     const EntityId& client, Timestamp now);

/// Long-lived end-entity certificate (10 days to 2 years) under the CA
/// root. Error "lifetime out of range" outside the inclusive bounds.
CertChain issue_certificate(const Topology& t, const ProviderDirectory& dir,
                            const EntityId& ca, const PrincipalRecord& user,
                            Timestamp lifetime_s, Timestamp now);

/// Self-service registration at a guest or social provider. Profile keys
/// "handle" and "subject" are reserved; the rest become stored attributes.
/// Guest attributes carry LoA low (self-asserted); eGov-flagged providers
/// assert substantial.
PrincipalRecord& register_guest(const Topology& t, ProviderDirectory& dir,
                                const EntityId& guest_idp,
                                const std::map<std::string, std::string>& profile,
                                Timestamp now);

/// Name of an entity's self root certificate.
std::string root_cert_name(const EntityId& entity);

}  // namespace fedsim

#endif  // FEDSIM_PROVIDERS_HPP
