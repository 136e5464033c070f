#include "fedsim/translation.hpp"

#include <algorithm>

#include "fedsim/claims.hpp"
#include "fedsim/integrity.hpp"
#include "fedsim/serialize.hpp"

namespace fedsim {

const LocalAccount* AccountStore::find_by_name(const EntityId& sp,
                                               const std::string& name) const {
  auto table = accounts_.find(sp);
  if (table == accounts_.end()) return nullptr;
  auto it = table->second.find(name);
  return it == table->second.end() ? nullptr : &it->second;
}

const LocalAccount* AccountStore::find_by_id(const EntityId& sp,
                                             const ScopedId& id) const {
  auto table = accounts_.find(sp);
  if (table == accounts_.end()) return nullptr;
  for (const auto& [name, account] : table->second) {
    if (account.mapped_from == id) return &account;
  }
  return nullptr;
}

LocalAccount* AccountStore::find_by_id(const EntityId& sp, const ScopedId& id) {
  return const_cast<LocalAccount*>(
      static_cast<const AccountStore*>(this)->find_by_id(sp, id));
}

LocalAccount& AccountStore::put(LocalAccount account) {
  return accounts_[account.sp][account.account_name] = std::move(account);
}

std::string account_name_for(const ScopedId& id) {
  return "u" + id.local_part.substr(0, 12);
}

std::vector<AttributeStatement> credential_statements(const Credential& c) {
  std::vector<AttributeStatement> statements;
  if (const auto* assertion = std::get_if<Assertion>(&c)) {
    statements = assertion->attributes;
  } else if (const auto* token = std::get_if<TokenSet>(&c)) {
    statements =
        statements_from_claims(token->id_claims, token->issuer, Delivery::kPush);
  } else {
    const auto& chain = std::get<CertChain>(c);
    for (const auto& cert : chain.certs) {
      for (const auto& s : cert.attr_extension) {
        if (std::find(statements.begin(), statements.end(), s) ==
            statements.end())
          statements.push_back(s);
      }
    }
  }
  sort_statements(statements);
  return statements;
}

const std::string& credential_subject(const Credential& c) {
  if (const auto* assertion = std::get_if<Assertion>(&c))
    return assertion->subject;
  if (const auto* token = std::get_if<TokenSet>(&c)) return token->subject;
  const auto& chain = std::get<CertChain>(c);
  // End-entity subject: first non-proxy cert from the leaf.
  for (const auto& cert : chain.certs) {
    if (!cert.is_proxy) return cert.subject_name;
  }
  return chain.certs.front().subject_name;
}

Timestamp credential_not_after(const Credential& c) {
  if (const auto* assertion = std::get_if<Assertion>(&c))
    return assertion->not_after;
  if (const auto* token = std::get_if<TokenSet>(&c)) return token->not_after;
  const auto& chain = std::get<CertChain>(c);
  Timestamp earliest = chain.certs.front().not_after;
  for (const auto& cert : chain.certs)
    earliest = std::min(earliest, cert.not_after);
  return earliest;
}

EntityId credential_authority(const Credential& c) {
  if (const auto* assertion = std::get_if<Assertion>(&c))
    return assertion->issuer;
  if (const auto* token = std::get_if<TokenSet>(&c)) return token->issuer;
  const auto& chain = std::get<CertChain>(c);
  return chain.certs.back().integrity.issuer;
}

namespace {

const TranslationRoute* find_route(const Entity& owner, Technology from,
                                   Technology to) {
  for (const auto& route : owner.routes) {
    if (route.from_tech == from && route.to_tech == to) return &route;
  }
  return nullptr;
}

Credential build_translated(const Topology& t, ProviderDirectory* tokens,
                            const Entity& tts, const Credential& input,
                            Technology to_tech, const TranslationRoute& route,
                            Timestamp now) {
  const std::string subject = credential_subject(input);
  std::vector<AttributeStatement> statements = credential_statements(input);
  const Timestamp not_after =
      std::min(now + route.lifetime_s, credential_not_after(input));

  // Audience carries over where the target technology has one.
  EntityId audience;
  if (const auto* assertion = std::get_if<Assertion>(&input)) {
    audience = assertion->audience;
  } else if (const auto* token = std::get_if<TokenSet>(&input)) {
    audience = token->audience;
  }

  switch (to_tech) {
    case Technology::kSamlLike: {
      Assertion out;
      out.subject = subject;
      out.issuer = tts.id;
      out.audience = audience;
      for (auto& s : statements) s.delivery = Delivery::kPush;
      out.attributes = statements;
      if (const auto* assertion = std::get_if<Assertion>(&input))
        out.auth_instant = assertion->auth_instant;
      else
        out.auth_instant = now;
      out.not_before = now;
      out.not_after = not_after;
      Credential credential = std::move(out);
      seal_credential(t.anchors, tts.id, credential);
      return credential;
    }
    case Technology::kOidcLike: {
      for (auto& s : statements)
        s.delivery = route.reference_access ? Delivery::kPull : Delivery::kPush;
      TokenSet out;
      out.subject = subject;
      out.issuer = tts.id;
      out.audience = audience;
      out.not_after = not_after;
      out.id_claims = claims_from_statements(statements);
      out.id_claims.emplace(kClaimSubject, subject);
      if (route.reference_access) {
        if (tokens == nullptr)
          throw Error("no route", "reference access needs a token table");
        ProviderDirectory::TokenRecord record;
        record.op = tts.id;
        record.subject = subject;
        record.audience = audience;
        record.claims = out.id_claims;
        record.claims.emplace(kClaimAudience, audience.value);
        record.claims.emplace(kClaimExpiry, std::to_string(not_after));
        record.not_after = not_after;
        out.access = ReferenceAccess{tokens->put_token(std::move(record))};
      } else {
        SelfContainedAccess access;
        access.claims = out.id_claims;
        access.claims.emplace(kClaimAudience, audience.value);
        access.claims.emplace(kClaimExpiry, std::to_string(not_after));
        out.access = std::move(access);
      }
      Credential credential = std::move(out);
      seal_credential(t.anchors, tts.id, credential);
      return credential;
    }
    case Technology::kX509Like: {
      for (auto& s : statements) s.delivery = Delivery::kPush;
      Cert root;
      root.subject_name = root_cert_name(tts.id);
      root.issuer_name = root.subject_name;
      root.not_before = 0;
      root.not_after = int64_t{1} << 62;

      Cert leaf;
      leaf.subject_name = subject;  // preserved bit-exactly
      leaf.issuer_name = root.subject_name;
      leaf.not_before = now;
      leaf.not_after = not_after;
      leaf.remaining_delegation_depth = kDefaultDelegationDepth;
      leaf.attr_extension = statements;

      CertChain chain;
      chain.certs = {std::move(leaf), std::move(root)};
      Credential credential = std::move(chain);
      seal_credential(t.anchors, tts.id, credential);
      return credential;
    }
  }
  throw Error("no route");
}

}  // namespace

Credential translate(const Topology& t, ProviderDirectory* tokens,
                     const EntityId& tts, const Credential& input,
                     Technology to_tech, Timestamp now) {
  const Entity& owner = t.entity(tts);
  const Technology from_tech = technology_of(input);
  const TranslationRoute* route = find_route(owner, from_tech, to_tech);
  if (route == nullptr)
    throw Error("no route", std::string(to_string(from_tech)) + " -> " +
                                to_string(to_tech) + " at " + tts.value);

  VerifyResult integrity = verify_integrity(t.anchors, input);
  if (!integrity.valid) throw Error("unverifiable input", integrity.reason);
  if (const auto* chain = std::get_if<CertChain>(&input)) {
    ChainValidation validation = validate_chain(t.anchors, *chain, now);
    if (!validation.valid) {
      if (validation.reason == "expired")
        throw Error("expired input", validation.reason);
      throw Error("unverifiable input", validation.reason);
    }
  }
  if (now > credential_not_after(input))
    throw Error("expired input", "credential expired");
  if (const auto* assertion = std::get_if<Assertion>(&input)) {
    if (now < assertion->not_before)
      throw Error("unverifiable input", "not yet valid");
  }

  return build_translated(t, tokens, owner, input, to_tech, *route, now);
}

CertChain create_proxy_cert(const TrustAnchorRegistry& anchors,
                            const CertChain& parent,
                            const std::string& delegatee,
                            Timestamp requested_lifetime_s, Timestamp now,
                            bool clamp) {
  ChainValidation validation = validate_chain(anchors, parent, now);
  if (!validation.valid) throw Error("invalid parent", validation.reason);

  const Cert& leaf = parent.certs.front();
  if (leaf.remaining_delegation_depth < 1) throw Error("depth exhausted");

  Timestamp requested_end = now + requested_lifetime_s;
  if (requested_end > leaf.not_after) {
    if (!clamp)
      throw Error("window outside parent",
                  std::to_string(requested_end) + " > " +
                      std::to_string(leaf.not_after));
    requested_end = leaf.not_after;
  }

  Cert child;
  child.subject_name = delegatee;
  child.issuer_name = leaf.subject_name;
  child.not_before = std::max(now, leaf.not_before);
  child.not_after = requested_end;
  child.is_proxy = true;
  child.remaining_delegation_depth = leaf.remaining_delegation_depth - 1;
  child.attr_extension = leaf.attr_extension;  // inherited

  seal_cert(anchors, parent.certs.back().integrity.issuer, child);

  CertChain chain;
  chain.certs.reserve(parent.certs.size() + 1);
  chain.certs.push_back(std::move(child));
  chain.certs.insert(chain.certs.end(), parent.certs.begin(),
                     parent.certs.end());
  return chain;
}

ChainValidation validate_chain(const TrustAnchorRegistry& anchors,
                               const CertChain& chain, Timestamp now) {
  ChainValidation out;
  if (chain.certs.empty()) {
    out.reason = "empty chain";
    return out;
  }

  const auto& certs = chain.certs;
  for (std::size_t i = 0; i + 1 < certs.size(); ++i) {
    if (certs[i].issuer_name != certs[i + 1].subject_name) {
      out.reason = "broken linkage";
      return out;
    }
  }

  // Root anchoring plus per-cert tags under the chain authority.
  const EntityId& authority = certs.back().integrity.issuer;
  const Bytes* key = anchors.find_key(authority);
  if (key == nullptr) {
    out.reason = "root not anchored";
    return out;
  }
  for (const auto& cert : certs) {
    if (cert.integrity.issuer != authority ||
        hmac_sha256(*key, canonical_serialize_cert(cert)) !=
            cert.integrity.tag) {
      out.reason = "tag mismatch";
      return out;
    }
  }

  for (const auto& cert : certs) {
    if (now < cert.not_before) {
      out.reason = "not yet valid";
      return out;
    }
    if (now > cert.not_after) {
      out.reason = "expired";
      return out;
    }
  }

  // Proxies form a contiguous prefix ending at the end entity.
  std::size_t end_entity = 0;
  while (end_entity < certs.size() && certs[end_entity].is_proxy) ++end_entity;
  if (end_entity == certs.size()) {
    out.reason = "no end entity";
    return out;
  }
  for (std::size_t i = end_entity + 1; i < certs.size(); ++i) {
    if (certs[i].is_proxy) {
      out.reason = "proxy above end entity";
      return out;
    }
  }

  for (std::size_t i = 0; i < end_entity; ++i) {
    const Cert& proxy = certs[i];
    const Cert& parent = certs[i + 1];
    if (proxy.not_before < parent.not_before ||
        proxy.not_after > parent.not_after) {
      out.reason = "window not nested";
      return out;
    }
    if (proxy.remaining_delegation_depth < 0 ||
        proxy.remaining_delegation_depth >=
            parent.remaining_delegation_depth) {
      out.reason = "depth not decreasing";
      return out;
    }
  }

  out.valid = true;
  out.subject = certs[end_entity].subject_name;
  for (std::size_t i = 0; i <= end_entity; ++i) {
    for (const auto& s : certs[i].attr_extension) {
      if (std::find(out.attrs.begin(), out.attrs.end(), s) == out.attrs.end())
        out.attrs.push_back(s);
    }
  }
  sort_statements(out.attrs);
  return out;
}

LocalAccount provision_local(
    const Topology& t, AccountStore& accounts, const EntityId& sp,
    const ScopedId& id, const std::vector<AttributeStatement>& statements) {
  const Entity& service = t.entity(sp);
  if (!service.requires_local_account)
    throw Error("local accounts not required", sp.value);

  std::set<std::string> privileges;
  for (const auto& s : statements) {
    if (s.name != "group" && s.name != "role") continue;
    auto it = service.privilege_map.find(s.value);
    if (it != service.privilege_map.end()) privileges.insert(it->second);
  }

  const std::string name = account_name_for(id);
  if (const LocalAccount* existing = accounts.find_by_name(sp, name)) {
    if (existing->mapped_from != id)
      throw Error("name reuse refused", name + " at " + sp.value);
  }

  LocalAccount account;
  account.sp = sp;
  account.account_name = name;
  account.mapped_from = id;
  account.privileges = std::move(privileges);
  account.state = LocalAccount::State::kActive;
  return accounts.put(std::move(account));
}

void deprovision_local(AccountStore& accounts, const EntityId& sp,
                       const ScopedId& id) {
  LocalAccount* account = accounts.find_by_id(sp, id);
  if (account == nullptr || account->state != LocalAccount::State::kActive)
    throw Error("no active account", id.render() + " at " + sp.value);
  account->state = LocalAccount::State::kDeprovisioned;
}

}  // namespace fedsim
