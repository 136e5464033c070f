#include "fedsim/attr_authority.hpp"

#include <algorithm>

#include "fedsim/claims.hpp"
#include "fedsim/integrity.hpp"
#include "fedsim/serialize.hpp"

namespace fedsim {

std::string aa_key_home(const EntityId& issuer, const std::string& subject_id) {
  return "home:" + issuer.value + "/" + subject_id;
}

std::string aa_key_scoped(const ScopedId& id) {
  return "scoped:" + id.render();
}

void AaState::seed(const Topology& t) {
  for (const auto& [id, entity] : t.entities) {
    for (const auto& seed : entity.aa_records) {
      AaRecord record;
      record.subject_key = seed.subject_key;
      record.groups = seed.groups;
      record.roles = seed.roles;
      record.custom = seed.custom;
      records_[id][seed.subject_key] = std::move(record);
    }
  }
}

const AaRecord* AaState::find(const EntityId& aa,
                              const std::string& key) const {
  auto table = records_.find(aa);
  if (table == records_.end()) return nullptr;
  auto it = table->second.find(key);
  return it == table->second.end() ? nullptr : &it->second;
}

AaRecord& AaState::ensure(const EntityId& aa, const std::string& key) {
  auto& record = records_[aa][key];
  if (record.subject_key.empty()) record.subject_key = key;
  return record;
}

std::vector<AttributeStatement> query_attributes(
    const Topology& t, const AaState& state, const EntityId& aa,
    const std::string& subject_key, const EntityId& requester) {
  const Entity& authority = t.entity(aa);
  if (!registered_relying_party(t, aa, requester))
    throw Error("unknown relying party", requester.value);

  const AaRecord* record = state.find(aa, subject_key);
  if (record == nullptr) return {};  // unknown subjects are not an error

  std::vector<AttributeStatement> statements;
  auto emit = [&](const std::string& name, const std::string& value) {
    AttributeStatement s;
    s.name = name;
    s.value = value;
    s.issuer = aa;
    s.loa = authority.assertion_loa;
    s.delivery = Delivery::kPull;
    statements.push_back(std::move(s));
  };

  for (const auto& group : record->groups) emit("group", group);
  for (const auto& [group, role] : record->roles)
    emit("role", group + ":" + role);
  for (const auto& [name, value] : record->custom) emit(name, value);

  sort_statements(statements);
  return t.apply_release_policy(aa, requester, std::move(statements));
}

CertChain voms_extend(const Topology& t, const AaState& state,
                      const EntityId& voms, const CertChain& chain,
                      const std::string& vo,
                      const std::set<std::string>& requested_roles,
                      Timestamp now) {
  const Entity& authority = t.entity(voms);
  ChainValidation validation = validate_chain(t.anchors, chain, now);
  if (!validation.valid) throw Error("invalid chain", validation.reason);
  if (!chain.certs.front().is_proxy) throw Error("non-proxy leaf");

  const std::string key =
      aa_key_home(chain.certs.back().integrity.issuer, validation.subject);
  const AaRecord* record = state.find(voms, key);
  if (record == nullptr || record->groups.count(vo) == 0)
    throw Error("non-member", validation.subject + " in " + vo);
  for (const auto& role : requested_roles) {
    if (record->roles.count({vo, role}) == 0)
      throw Error("role not held", vo + ":" + role);
  }

  std::vector<AttributeStatement> granted;
  auto emit = [&](const std::string& name, const std::string& value) {
    AttributeStatement s;
    s.name = name;
    s.value = value;
    s.issuer = voms;
    s.loa = authority.assertion_loa;
    s.delivery = Delivery::kPush;
    granted.push_back(std::move(s));
  };
  emit("group", vo);
  for (const auto& role : requested_roles) emit("role", vo + ":" + role);

  CertChain extended = chain;
  Cert& leaf = extended.certs.front();
  for (auto& s : granted) {
    if (std::find(leaf.attr_extension.begin(), leaf.attr_extension.end(), s) ==
        leaf.attr_extension.end())
      leaf.attr_extension.push_back(s);
  }
  sort_statements(leaf.attr_extension);
  leaf.not_after = std::min(leaf.not_after, now + kVomsExtensionLifetimeS);
  seal_cert(t.anchors, extended.certs.back().integrity.issuer, leaf);
  return extended;
}

std::multimap<std::string, std::string> userinfo(const Topology& t,
                                                 const ProviderDirectory& dir,
                                                 const EntityId& op,
                                                 const TokenAccess& access,
                                                 Timestamp now) {
  t.entity(op);
  std::multimap<std::string, std::string> claims;

  if (const auto* self = std::get_if<SelfContainedAccess>(&access)) {
    if (self->integrity.issuer != op)
      throw Error("unverifiable access", "foreign tag");
    const Bytes* key = t.anchors.find_key(op);
    if (key == nullptr ||
        hmac_sha256(*key, canonical_serialize_claims(self->claims)) !=
            self->integrity.tag)
      throw Error("unverifiable access", "tag mismatch");
    auto exp = self->claims.find(kClaimExpiry);
    if (exp == self->claims.end() || now > std::stoll(exp->second))
      throw Error("expired");
    claims = self->claims;
  } else {
    const auto& reference = std::get<ReferenceAccess>(access);
    const ProviderDirectory::TokenRecord* record =
        dir.find_token(reference.id);
    if (record == nullptr || record->op != op)
      throw Error("unknown reference", reference.id);
    if (now > record->not_after) throw Error("expired", reference.id);
    claims = record->claims;
  }

  auto audience_it = claims.find(kClaimAudience);
  EntityId audience(audience_it == claims.end() ? "" : audience_it->second);

  // Rebuild the attribute claims through the release policy; reserved
  // claims pass through.
  std::vector<AttributeStatement> statements =
      statements_from_claims(claims, op, Delivery::kPull);
  statements = t.apply_release_policy(op, audience, std::move(statements));

  std::multimap<std::string, std::string> out =
      claims_from_statements(statements);
  for (const auto& [name, value] : claims) {
    if (name == kClaimSubject || name == kClaimAudience || name == kClaimExpiry)
      out.emplace(name, value);
  }
  return out;
}

void manage_membership(const Topology& t, AaState& state, const EntityId& aa,
                       const std::string& admin, MembershipChange change,
                       const std::string& subject_key, const std::string& group,
                       const std::string& role) {
  const Entity& authority = t.entity(aa);
  if (authority.admins.count(admin) == 0)
    throw Error("unauthorized admin", admin + " at " + aa.value);

  switch (change) {
    case MembershipChange::kAddGroup: {
      state.ensure(aa, subject_key).groups.insert(group);
      return;
    }
    case MembershipChange::kRemoveGroup: {
      const AaRecord* existing = state.find(aa, subject_key);
      if (existing == nullptr || existing->groups.count(group) == 0)
        throw Error("removing nonexistent membership", group);
      AaRecord& record = state.ensure(aa, subject_key);
      record.groups.erase(group);
      // Cascade: a removed group takes its roles with it.
      std::erase_if(record.roles,
                    [&group](const auto& r) { return r.first == group; });
      return;
    }
    case MembershipChange::kAddRole: {
      const AaRecord* existing = state.find(aa, subject_key);
      if (existing == nullptr || existing->groups.count(group) == 0)
        throw Error("unknown group", group);
      state.ensure(aa, subject_key).roles.insert({group, role});
      return;
    }
    case MembershipChange::kRemoveRole: {
      const AaRecord* existing = state.find(aa, subject_key);
      if (existing == nullptr || existing->roles.count({group, role}) == 0)
        throw Error("removing nonexistent membership", group + ":" + role);
      state.ensure(aa, subject_key).roles.erase({group, role});
      return;
    }
  }
}

}  // namespace fedsim
