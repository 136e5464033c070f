#include "fedsim/providers.hpp"

#include <algorithm>

#include "fedsim/claims.hpp"
#include "fedsim/integrity.hpp"
#include "fedsim/serialize.hpp"

namespace fedsim {

namespace {

// Far-future bound for self root certificates.
constexpr Timestamp kRootNotAfter = int64_t{1} << 62;

std::string short_digest(const std::string& input) {
  return to_hex(sha256(input)).substr(0, 16);
}

LinkedIdentityKind linked_kind_for(const Entity& provider) {
  if (provider.egov) return LinkedIdentityKind::kEgov;
  if (provider.kind == EntityKind::kSocialIdP) return LinkedIdentityKind::kSocial;
  return LinkedIdentityKind::kGuest;
}

}  // namespace

std::string root_cert_name(const EntityId& entity) {
  return "root:" + entity.value;
}

void ProviderDirectory::seed(const Topology& t) {
  for (const auto& [id, entity] : t.entities) {
    for (const auto& user : entity.users) {
      stores_[id][user.subject_id] = user;

      auto [it, inserted] = principals_.try_emplace(user.handle);
      PrincipalRecord& record = it->second;
      if (inserted) record.handle = user.handle;
      if (is_identity_provider_kind(entity.kind)) {
        if (entity.kind == EntityKind::kGuestIdP ||
            entity.kind == EntityKind::kSocialIdP) {
          record.linked_identities.push_back(
              {id, user.subject_id, linked_kind_for(entity)});
        } else {
          record.home_identities.push_back({id, user.subject_id});
        }
      }
    }
  }
}

const StoredUser* ProviderDirectory::find_user(
    const EntityId& provider, const std::string& subject_id) const {
  auto store = stores_.find(provider);
  if (store == stores_.end()) return nullptr;
  auto user = store->second.find(subject_id);
  return user == store->second.end() ? nullptr : &user->second;
}

const PrincipalRecord* ProviderDirectory::find_principal(
    const std::string& handle) const {
  auto it = principals_.find(handle);
  return it == principals_.end() ? nullptr : &it->second;
}

PrincipalRecord* ProviderDirectory::find_principal(const std::string& handle) {
  auto it = principals_.find(handle);
  return it == principals_.end() ? nullptr : &it->second;
}

void ProviderDirectory::raise_loa(const EntityId& provider,
                                  const std::string& subject_id, Loa loa) {
  auto store = stores_.find(provider);
  if (store == stores_.end()) throw Error("unknown user", subject_id);
  auto user = store->second.find(subject_id);
  if (user == store->second.end()) throw Error("unknown user", subject_id);
  user->second.loa = loa;
}

void ProviderDirectory::link_identity(const Topology& t,
                                      const std::string& handle,
                                      const EntityId& provider,
                                      const std::string& subject_id,
                                      LinkedIdentityKind kind) {
  PrincipalRecord* record = find_principal(handle);
  if (record == nullptr) throw Error("unknown user", handle);
  t.entity(provider);
  for (const auto& linked : record->linked_identities) {
    if (linked.provider == provider && linked.subject_id == subject_id)
      throw Error("duplicate", subject_id + " already linked");
  }
  record->linked_identities.push_back({provider, subject_id, kind});
  auto& store = stores_[provider];
  if (store.count(subject_id) == 0) {
    StoredUser user;
    user.handle = handle;
    user.subject_id = subject_id;
    user.loa = kind == LinkedIdentityKind::kEgov ? Loa::kSubstantial : Loa::kLow;
    store[subject_id] = std::move(user);
  }
}

const AuthCode* ProviderDirectory::find_code(const std::string& code) const {
  auto it = codes_.find(code);
  return it == codes_.end() ? nullptr : &it->second;
}

AuthCode* ProviderDirectory::find_code_mut(const std::string& code) {
  auto it = codes_.find(code);
  return it == codes_.end() ? nullptr : &it->second;
}

const ProviderDirectory::TokenRecord* ProviderDirectory::find_token(
    const std::string& reference) const {
  auto it = tokens_.find(reference);
  return it == tokens_.end() ? nullptr : &it->second;
}

AuthCode& ProviderDirectory::put_code(AuthCode code) {
  return codes_[code.code] = std::move(code);
}

std::string ProviderDirectory::put_token(TokenRecord record) {
  std::string reference =
      "ref-" + short_digest(record.op.value + "\n" + record.subject + "\n" +
                            record.audience.value + "\n" +
                            std::to_string(record.not_after) + "\n" +
                            std::to_string(tokens_.size()));
  tokens_[reference] = std::move(record);
  return reference;
}

StoredUser& ProviderDirectory::ensure_user(const EntityId& provider,
                                           StoredUser user) {
  return stores_[provider][user.subject_id] = std::move(user);
}

PrincipalRecord& ProviderDirectory::put_principal(PrincipalRecord record) {
  return principals_[record.handle] = std::move(record);
}

std::vector<AttributeStatement> ProviderDirectory::stored_statements(
    const Entity& provider, const StoredUser& user) const {
  std::vector<AttributeStatement> statements;
  for (const auto& attribute : user.attributes) {
    AttributeStatement s;
    s.name = attribute.name;
    s.value = attribute.value;
    s.issuer = provider.id;
    s.loa = attribute.loa.value_or(user.loa);
    s.delivery = Delivery::kPush;
    statements.push_back(std::move(s));
  }
  sort_statements(statements);
  return statements;
}

namespace {

const StoredUser& require_user(const Topology& t, const ProviderDirectory& dir,
                               const EntityId& provider,
                               const PrincipalRecord& user) {
  t.entity(provider);
  auto subject = user.subject_at(provider);
  if (!subject) throw Error("unknown user", user.handle + " at " + provider.value);
  const StoredUser* stored = dir.find_user(provider, *subject);
  if (stored == nullptr)
    throw Error("unknown user", user.handle + " at " + provider.value);
  return *stored;
}

}  // namespace

Assertion authenticate_web(const Topology& t, const ProviderDirectory& dir,
                           const EntityId& idp, const PrincipalRecord& user,
                           const AuthnRequest& req, Timestamp now) {
  const Entity& provider = t.entity(idp);
  const StoredUser& stored = require_user(t, dir, idp, user);
  if (!registered_relying_party(t, idp, req.requester))
    throw Error("unknown relying party", req.requester.value);

  Assertion assertion;
  assertion.subject = stored.subject_id;
  assertion.issuer = idp;
  assertion.audience = req.requester;
  assertion.attributes = t.apply_release_policy(
      idp, req.requester, dir.stored_statements(provider, stored));
  assertion.auth_instant = now;
  assertion.not_before = now;
  assertion.not_after = now + kAssertionLifetimeS;

  Credential credential = assertion;
  seal_credential(t.anchors, idp, credential);
  return std::get<Assertion>(credential);
}

std::variant<AuthCode, TokenSet> authenticate_oidc(
    const Topology& t, ProviderDirectory& dir, const EntityId& op,
    const PrincipalRecord& user, const EntityId& client, OidcMode mode,
    Timestamp now) {
  const Entity& provider = t.entity(op);
  const StoredUser& stored = require_user(t, dir, op, user);
  if (!registered_relying_party(t, op, client))
    throw Error("unregistered client", client.value);

  if (mode == OidcMode::kCode) {
    AuthCode code;
    code.code = "code-" + to_hex(sha256(op.value + "\n" + stored.subject_id +
                                        "\n" + client.value + "\n" +
                                        std::to_string(now)))
                              .substr(0, 16);
    code.op = op;
    code.subject = stored.subject_id;
    code.client = client;
    code.expires = now + kAuthCodeLifetimeS;
    return dir.put_code(std::move(code));
  }

  auto released = t.apply_release_policy(
      op, client, dir.stored_statements(provider, stored));

  TokenSet token;
  token.subject = stored.subject_id;
  token.issuer = op;
  token.audience = client;
  token.not_after = now + kTokenLifetimeS;
  token.id_claims = claims_from_statements(released);
  token.id_claims.emplace(kClaimSubject, stored.subject_id);

  SelfContainedAccess access;
  access.claims = token.id_claims;
  access.claims.emplace(kClaimAudience, client.value);
  access.claims.emplace(kClaimExpiry, std::to_string(token.not_after));
  token.access = std::move(access);

  Credential credential = token;
  seal_credential(t.anchors, op, credential);
  return std::get<TokenSet>(credential);
}

TokenSet redeem_code(const Topology& t, ProviderDirectory& dir,
                     const EntityId& op, const AuthCode& code,
                     const EntityId& client, Timestamp now) {
  const Entity& provider = t.entity(op);
  AuthCode* entry = dir.find_code_mut(code.code);
  if (entry == nullptr || entry->op != op)
    throw Error("unknown code", code.code);
  if (entry->client != client) throw Error("client mismatch", client.value);
  if (now > entry->expires) throw Error("expired", code.code);
  if (entry->redeemed) throw Error("already redeemed", code.code);
  entry->redeemed = true;

  const StoredUser* stored = dir.find_user(op, entry->subject);
  if (stored == nullptr) throw Error("unknown user", entry->subject);
  auto released = t.apply_release_policy(
      op, client, dir.stored_statements(provider, *stored));

  TokenSet token;
  token.subject = entry->subject;
  token.issuer = op;
  token.audience = client;
  token.not_after = now + kTokenLifetimeS;
  token.id_claims = claims_from_statements(released);
  token.id_claims.emplace(kClaimSubject, entry->subject);

  ProviderDirectory::TokenRecord record;
  record.op = op;
  record.subject = entry->subject;
  record.audience = client;
  record.claims = token.id_claims;
  record.claims.emplace(kClaimAudience, client.value);
  record.claims.emplace(kClaimExpiry, std::to_string(token.not_after));
  record.not_after = token.not_after;
  token.access = ReferenceAccess{dir.put_token(std::move(record))};

  Credential credential = token;
  seal_credential(t.anchors, op, credential);
  return std::get<TokenSet>(credential);
}

CertChain issue_certificate(const Topology& t, const ProviderDirectory& dir,
                            const EntityId& ca, const PrincipalRecord& user,
                            Timestamp lifetime_s, Timestamp now) {
  t.entity(ca);
  if (lifetime_s < kCertLifetimeMinS || lifetime_s > kCertLifetimeMaxS)
    throw Error("lifetime out of range", std::to_string(lifetime_s));
  const StoredUser& stored = require_user(t, dir, ca, user);

  Cert root;
  root.subject_name = root_cert_name(ca);
  root.issuer_name = root.subject_name;
  root.not_before = 0;
  root.not_after = kRootNotAfter;

  Cert leaf;
  leaf.subject_name = stored.subject_id;
  leaf.issuer_name = root.subject_name;
  leaf.not_before = now;
  leaf.not_after = now + lifetime_s;
  leaf.remaining_delegation_depth = kDefaultDelegationDepth;

  CertChain chain;
  chain.certs = {std::move(leaf), std::move(root)};
  Credential credential = chain;
  seal_credential(t.anchors, ca, credential);
  return std::get<CertChain>(credential);
}

PrincipalRecord& register_guest(
    const Topology& t, ProviderDirectory& dir, const EntityId& guest_idp,
    const std::map<std::string, std::string>& profile, Timestamp now) {
  (void)now;
  const Entity& provider = t.entity(guest_idp);
  if (provider.kind != EntityKind::kGuestIdP &&
      provider.kind != EntityKind::kSocialIdP)
    throw Error("not a guest provider", guest_idp.value);

  auto handle_it = profile.find("handle");
  if (handle_it == profile.end()) throw Error("missing handle");
  const std::string& handle = handle_it->second;
  auto subject_it = profile.find("subject");
  const std::string subject =
      subject_it == profile.end() ? handle : subject_it->second;

  if (dir.find_user(guest_idp, subject) != nullptr)
    throw Error("duplicate", subject + " at " + guest_idp.value);
  if (dir.find_principal(handle) != nullptr)
    throw Error("duplicate", "handle " + handle);

  StoredUser user;
  user.handle = handle;
  user.subject_id = subject;
  // Self-asserted unless the provider is an eGov identity source.
  user.loa = provider.egov ? Loa::kSubstantial : Loa::kLow;
  for (const auto& [name, value] : profile) {
    if (name == "handle" || name == "subject") continue;
    user.attributes.push_back({name, value, std::nullopt});
  }
  dir.ensure_user(guest_idp, std::move(user));

  PrincipalRecord record;
  record.handle = handle;
  record.linked_identities.push_back(
      {guest_idp, subject, linked_kind_for(provider)});
  return dir.put_principal(std::move(record));
}

}  // namespace fedsim
