#ifndef FEDSIM_TRANSLATION_HPP
#define FEDSIM_TRANSLATION_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/providers.hpp"
#include "fedsim/topology.hpp"

namespace fedsim {

inline constexpr Timestamp kVomsExtensionLifetimeS = 43200;  // 12 h

/// Local service account mapped from a federated identity (non-web).
struct LocalAccount {
  EntityId sp;
  std::string account_name;
  ScopedId mapped_from;
  std::set<std::string> privileges;
  enum class State : std::uint8_t { kActive, kDeprovisioned } state =
      State::kActive;
};

/// Per-SP account tables. Account names are unique per SP and are never
/// reassigned to a different ScopedId.
class AccountStore {
 public:
  const LocalAccount* find_by_name(const EntityId& sp,
                                   const std::string& name) const;
  const LocalAccount* find_by_id(const EntityId& sp, const ScopedId& id) const;
  LocalAccount* find_by_id(const EntityId& sp, const ScopedId& id);
  LocalAccount& put(LocalAccount account);

 private:
  std::map<EntityId, std::map<std::string, LocalAccount>> accounts_;
};

/// Deterministic local account name for a federated identity.
std::string account_name_for(const ScopedId& id);

/// Extracts statements carried by a credential, regardless of technology:
/// assertion attributes, token claims, or certificate extensions.
std::vector<AttributeStatement> credential_statements(const Credential& c);

const std::string& credential_subject(const Credential& c);
Timestamp credential_not_after(const Credential& c);

/// The entity whose key anchors a credential (assertion/token issuer, or
/// the chain's tagging authority).
EntityId credential_authority(const Credential& c);

/// Translates a credential to another technology at `tts`. The subject is
/// preserved bit-exactly, statements are carried over unchanged except for
/// the delivery flag, and the output lifetime is the minimum of the route
/// lifetime and the input's remaining lifetime.
/// Distinct errors: "no route", "expired input", "unverifiable input".
Credential translate(const Topology& t, ProviderDirectory* tokens,
                     const EntityId& tts, const Credential& input,
                     Technology to_tech, Timestamp now);

/// Appends one delegation level to a chain. The new leaf nests inside the
/// parent's validity (clamped unless `clamp` is false) and decrements the
/// remaining delegation depth.
CertChain create_proxy_cert(const TrustAnchorRegistry& anchors,
                            const CertChain& parent,
                            const std::string& delegatee,
                            Timestamp requested_lifetime_s, Timestamp now,
                            bool clamp = true);

struct ChainValidation {
  bool valid = false;
  std::string reason;  // first failing rule when invalid
  std::string subject; // end-entity subject; proxies act on its behalf
  std::vector<AttributeStatement> attrs;  // union of leaf-ward extensions
};

/// Full chain check: per-cert tags under the chain authority, linkage,
/// anchored root, windows containing `now`, proxy window nesting, strictly
/// decreasing delegation depth.
ChainValidation validate_chain(const TrustAnchorRegistry& anchors,
                               const CertChain& chain, Timestamp now);

/// Provisions (or reactivates) the local account for `id` at `sp`.
/// Privileges are the image of group/role statement values under the SP's
/// privilege map. Refuses to reuse an account name for a different id.
LocalAccount provision_local(const Topology& t, AccountStore& accounts,
                             const EntityId& sp, const ScopedId& id,
                             const std::vector<AttributeStatement>& statements);

/// Retires the active account; subsequent non-web access fails until the
/// identity is re-provisioned.
void deprovision_local(AccountStore& accounts, const EntityId& sp,
                       const ScopedId& id);

}  // namespace fedsim

#endif  // FEDSIM_TRANSLATION_HPP
