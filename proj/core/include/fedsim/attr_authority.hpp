#ifndef FEDSIM_ATTR_AUTHORITY_HPP
#define FEDSIM_ATTR_AUTHORITY_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/providers.hpp"
#include "fedsim/topology.hpp"
#include "fedsim/translation.hpp"

namespace fedsim {

/// Canonical AA subject keys. Records are keyed either by the home
/// identity that authenticated upstream or by the persistent ScopedId.
std::string aa_key_home(const EntityId& issuer, const std::string& subject_id);
std::string aa_key_scoped(const ScopedId& id);

/// Community-managed record about one subject.
struct AaRecord {
  std::string subject_key;
  std::set<std::string> groups;
  std::set<std::pair<std::string, std::string>> roles;  // (group, role)
  std::map<std::string, std::string> custom;
};

/// Attribute-authority stores, one record table per AA entity.
class AaState {
 public:
  void seed(const Topology& t);

  const AaRecord* find(const EntityId& aa, const std::string& key) const;
  AaRecord& ensure(const EntityId& aa, const std::string& key);

 private:
  std::map<EntityId, std::map<std::string, AaRecord>> records_;
};

/// Pull query: group/role/custom statements about a subject, issuer = aa,
/// delivery = pull, capped at the AA's assertion LoA and filtered by the
/// (aa, requester) release policy. Unknown subjects yield an empty list.
std::vector<AttributeStatement> query_attributes(const Topology& t,
                                                 const AaState& state,
                                                 const EntityId& aa,
                                                 const std::string& subject_key,
                                                 const EntityId& requester);

/// VOMS push: re-issues the chain with the granted group/role statements
/// embedded in the leaf extension; the leaf validity is capped at
/// min(leaf not_after, now + 12 h). Membership is keyed by the chain's
/// issuing authority and end-entity subject.
CertChain voms_extend(const Topology& t, const AaState& state,
                      const EntityId& voms, const CertChain& chain,
                      const std::string& vo,
                      const std::set<std::string>& requested_roles,
                      Timestamp now);

/// OIDC userinfo endpoint: resolves the access part (self-contained or
/// reference) and returns the subject's claims filtered by the
/// (op, token audience) release policy.
std::multimap<std::string, std::string> userinfo(const Topology& t,
                                                 const ProviderDirectory& dir,
                                                 const EntityId& op,
                                                 const TokenAccess& access,
                                                 Timestamp now);

enum class MembershipChange : std::uint8_t {
  kAddGroup,
  kRemoveGroup,
  kAddRole,
  kRemoveRole,
};

/// Community-side administration. Removing a group cascades its roles.
void manage_membership(const Topology& t, AaState& state, const EntityId& aa,
                       const std::string& admin, MembershipChange change,
                       const std::string& subject_key, const std::string& group,
                       const std::string& role = "");

}  // namespace fedsim

#endif  // FEDSIM_ATTR_AUTHORITY_HPP
