#include "fedsim/proxy.hpp"

#include <algorithm>
#include <sstream>

#include "fedsim/claims.hpp"
#include "fedsim/docparse.hpp"
#include "fedsim/integrity.hpp"
#include "fedsim/translation.hpp"

namespace fedsim {

std::string unique_id_digest_input(const EntityId& issuer,
                                   const std::string& subject_id) {
  return issuer.value + "|" + subject_id;
}

ScopedId IdRegistry::derive(const EntityId& issuer,
                            const std::string& subject_id,
                            const std::string& scope) {
  if (issuer.empty() || subject_id.empty())
    throw Error("empty issuer or subject");

  UpstreamKey key{issuer, subject_id};
  if (auto alias = aliases_.find(key); alias != aliases_.end())
    key = alias->second;

  if (auto bound = bindings_.find(key); bound != bindings_.end())
    return bound->second;

  const std::string local_part =
      to_hex(sha256(unique_id_digest_input(key.first, key.second)))
          .substr(0, 32);
  ScopedId id{local_part, scope};

  if (auto taken = reverse_.find(id.render()); taken != reverse_.end()) {
    if (taken->second != key)
      throw Error("collision", id.render());
  }

  bindings_.emplace(key, id);
  reverse_.emplace(id.render(), key);
  return id;
}

void IdRegistry::link_alias(const EntityId& alias_issuer,
                            const std::string& alias_subject,
                            const EntityId& primary_issuer,
                            const std::string& primary_subject) {
  UpstreamKey alias{alias_issuer, alias_subject};
  UpstreamKey primary{primary_issuer, primary_subject};
  if (bindings_.count(alias) > 0)
    throw Error("collision", "alias already bound: " + alias_subject);
  auto existing = aliases_.find(alias);
  if (existing != aliases_.end()) {
    if (existing->second != primary)
      throw Error("collision", "alias already linked: " + alias_subject);
    return;
  }
  aliases_.emplace(alias, primary);
}

namespace {

std::string quoted_if_needed(const std::string& s) {
  if (s.find(' ') == std::string::npos && s.find('\t') == std::string::npos &&
      !s.empty())
    return s;
  return "\"" + s + "\"";
}

}  // namespace

std::string IdRegistry::export_snapshot() const {
  std::ostringstream out;
  out << "fedsim-registry v1\n";
  for (const auto& [key, id] : bindings_) {
    out << "binding " << quoted_if_needed(key.first.value) << " "
        << quoted_if_needed(key.second) << " " << id.render() << "\n";
  }
  for (const auto& [alias, primary] : aliases_) {
    out << "alias " << quoted_if_needed(alias.first.value) << " "
        << quoted_if_needed(alias.second) << " "
        << quoted_if_needed(primary.first.value) << " "
        << quoted_if_needed(primary.second) << "\n";
  }
  return out.str();
}

IdRegistry IdRegistry::import_snapshot(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "fedsim-registry v1")
    throw LoadError("unparseable", "bad registry header");

  IdRegistry registry;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto tokens = split_tokens(line);
    if (tokens.size() == 4 && tokens[0] == "binding") {
      auto id = parse_scoped_id(tokens[3]);
      if (!id)
        throw LoadError("unparseable",
                        "line " + std::to_string(lineno) + ": bad scoped id");
      UpstreamKey key{EntityId(tokens[1]), tokens[2]};
      registry.bindings_.emplace(key, *id);
      registry.reverse_.emplace(id->render(), key);
    } else if (tokens.size() == 5 && tokens[0] == "alias") {
      registry.aliases_.emplace(
          UpstreamKey{EntityId(tokens[1]), tokens[2]},
          UpstreamKey{EntityId(tokens[3]), tokens[4]});
    } else {
      throw LoadError("unparseable",
                      "line " + std::to_string(lineno) + ": " + line);
    }
  }
  return registry;
}

std::vector<std::string> IdRegistry::check_consistency() const {
  std::vector<std::string> findings;
  std::map<std::string, UpstreamKey> seen;
  for (const auto& [key, id] : bindings_) {
    if (!id.valid())
      findings.push_back("malformed scoped id: " + id.render());
    auto [it, inserted] = seen.emplace(id.render(), key);
    if (!inserted && it->second != key)
      findings.push_back("non-reassignment violated: " + id.render() +
                         " bound to multiple identities");
  }
  for (const auto& [rendered, key] : reverse_) {
    auto bound = bindings_.find(key);
    if (bound == bindings_.end() || bound->second.render() != rendered)
      findings.push_back("reverse map inconsistent: " + rendered);
  }
  return findings;
}

std::vector<AttributeStatement> harmonize(
    const std::map<std::string, std::string>& mapping,
    std::vector<AttributeStatement> raw) {
  for (auto& statement : raw) {
    if (statement.name.rfind(kRawPrefix, 0) == 0) continue;
    auto mapped = mapping.find(statement.name);
    if (mapped != mapping.end()) {
      statement.name = mapped->second;
    } else if (!is_canonical_attribute_name(statement.name)) {
      statement.name = kRawPrefix + statement.name;
    }
  }
  sort_statements(raw);
  return raw;
}

AuthnRequest handle_sp_request(const Topology& t, const EntityId& proxy,
                               const AuthnRequest& req,
                               const EntityId& upstream_provider) {
  const Entity& broker = t.entity(proxy);
  const Entity& requester = t.entity(req.requester);
  const bool behind =
      (requester.internal_behind && *requester.internal_behind == proxy) ||
      (requester.via_proxy && *requester.via_proxy == proxy);
  if (!behind) throw Error("not my internal SP", req.requester.value);

  AuthnRequest upstream;
  upstream.requester = proxy;
  upstream.audience = upstream_provider;
  upstream.wanted_attributes = broker.upstream_attributes;
  upstream.binding = req.binding;
  return upstream;
}

namespace {

bool community_name(const std::string& name) {
  return name == "group" || name == "role";
}

bool home_name(const std::string& name) {
  return name == "display-name" || name == "mail" || name == "affiliation";
}

void append_unique(std::vector<AttributeStatement>& out,
                   const AttributeStatement& s) {
  if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
}

}  // namespace

std::vector<AttributeStatement> merge_statements(
    const std::vector<AttributeStatement>& home,
    const std::vector<std::vector<AttributeStatement>>& source_lists) {
  std::set<std::string> names;
  for (const auto& s : home) names.insert(s.name);
  for (const auto& list : source_lists)
    for (const auto& s : list) names.insert(s.name);

  std::vector<AttributeStatement> merged;
  for (const auto& name : names) {
    auto collect = [&name](const std::vector<AttributeStatement>& list,
                           std::vector<AttributeStatement>& out) {
      for (const auto& s : list)
        if (s.name == name) append_unique(out, s);
    };

    if (community_name(name)) {
      std::vector<AttributeStatement> community;
      for (const auto& list : source_lists) collect(list, community);
      if (community.empty()) {
        collect(home, merged);
      } else {
        for (const auto& s : community) append_unique(merged, s);
      }
    } else if (home_name(name)) {
      std::vector<AttributeStatement> own;
      collect(home, own);
      if (!own.empty()) {
        for (const auto& s : own) append_unique(merged, s);
      } else {
        // Later-listed sources win among sources.
        for (auto it = source_lists.rbegin(); it != source_lists.rend(); ++it) {
          std::vector<AttributeStatement> from_source;
          collect(*it, from_source);
          if (!from_source.empty()) {
            for (const auto& s : from_source) append_unique(merged, s);
            break;
          }
        }
      }
    } else {
      collect(home, merged);
      for (const auto& list : source_lists) collect(list, merged);
    }
  }
  sort_statements(merged);
  return merged;
}

CompositeIdentity aggregate(const AggregationContext& ctx,
                            std::vector<AttributeStatement> home_statements) {
  const Topology& t = *ctx.topology;
  const Entity& aggregator = t.entity(ctx.aggregator);

  ScopedId sid = ctx.registry->derive(ctx.upstream_issuer, ctx.upstream_subject,
                                      aggregator.scope);

  std::vector<AttributeStatement> home =
      harmonize(aggregator.harmonization_map, std::move(home_statements));

  CompositeIdentity cid;
  cid.persistent_unique_id = sid;
  cid.source_log.emplace_back(ctx.upstream_issuer,
                              static_cast<int>(home.size()));

  std::vector<std::vector<AttributeStatement>> source_lists;
  for (const auto& source : aggregator.attribute_sources) {
    const Entity* aa = t.find_entity(source.aa);
    if (aa == nullptr || aa->offline) {
      if (source.required)
        throw Error("required source unavailable", source.aa.value);
      cid.source_log.emplace_back(source.aa, -1);  // skipped
      continue;
    }
    const std::string key = aa->aa_keyed_by_scoped_id
                                ? aa_key_scoped(sid)
                                : aa_key_home(ctx.upstream_issuer,
                                              ctx.upstream_subject);
    std::vector<AttributeStatement> released = harmonize(
        aggregator.harmonization_map,
        query_attributes(t, *ctx.aa_state, source.aa, key, ctx.aggregator));
    cid.source_log.emplace_back(source.aa, static_cast<int>(released.size()));
    if (ctx.on_source) ctx.on_source(source.aa, released);
    source_lists.push_back(std::move(released));
  }

  cid.statements = merge_statements(home, source_lists);

  // Effective LoA from identity-bearing issuers only; community AAs never
  // raise it.
  std::vector<Loa> identity_loas;
  for (const auto& s : cid.statements) {
    const Entity* issuer = t.find_entity(s.issuer);
    if (issuer != nullptr && is_identity_provider_kind(issuer->kind))
      identity_loas.push_back(s.loa);
  }
  cid.effective_loa = identity_loas.empty()
                          ? Loa::kLow
                          : loa_combine(std::span<const Loa>(identity_loas));

  AttributeStatement unique_id;
  unique_id.name = kAttrUniqueId;
  unique_id.value = sid.render();
  unique_id.issuer = ctx.aggregator;
  unique_id.loa = cid.effective_loa;
  unique_id.scope = sid.scope;
  unique_id.delivery = Delivery::kPush;
  cid.statements.push_back(std::move(unique_id));
  sort_statements(cid.statements);
  return cid;
}

namespace {

struct HopPlan {
  EntityId translator;
  Technology to = Technology::kSamlLike;
};

std::optional<HopPlan> plan_hop(const Topology& t, const Entity& proxy,
                                const Entity& sp, Technology from,
                                Technology to) {
  auto has_route = [from, to](const Entity& owner) {
    for (const auto& route : owner.routes)
      if (route.from_tech == from && route.to_tech == to) return true;
    return false;
  };
  if (has_route(proxy)) return HopPlan{proxy.id, to};
  if (proxy.central_tts) {
    const Entity& tts = t.entity(*proxy.central_tts);
    if (has_route(tts)) return HopPlan{tts.id, to};
  }
  if (sp.site_tts) {
    const Entity& tts = t.entity(*sp.site_tts);
    if (has_route(tts)) return HopPlan{tts.id, to};
  }
  return std::nullopt;
}

}  // namespace

DownstreamIssue issue_downstream(const Topology& t, ProviderDirectory* tokens,
                                 const EntityId& proxy, const EntityId& sp,
                                 const CompositeIdentity& cid, Technology tech,
                                 Timestamp now) {
  const Entity& broker = t.entity(proxy);
  const Entity& service = t.entity(sp);
  const bool behind =
      (service.internal_behind && *service.internal_behind == proxy) ||
      (service.via_proxy && *service.via_proxy == proxy);
  if (!behind) throw Error("not my internal SP", sp.value);

  DownstreamIssue out;
  std::vector<AttributeStatement> released =
      t.apply_release_policy(proxy, sp, cid.statements);
  for (const auto& s : released) out.released_names.push_back(s.name);
  std::sort(out.released_names.begin(), out.released_names.end());
  out.released_names.erase(
      std::unique(out.released_names.begin(), out.released_names.end()),
      out.released_names.end());

  // The proxy natively acts as an IdP toward its services.
  Assertion native;
  native.subject = cid.persistent_unique_id.render();
  native.issuer = proxy;
  native.audience = sp;
  native.attributes = released;
  native.auth_instant = now;
  native.not_before = now;
  native.not_after = now + kAssertionLifetimeS;
  Credential credential = std::move(native);
  seal_credential(t.anchors, proxy, credential);

  Technology current = Technology::kSamlLike;
  std::vector<Technology> targets;
  if (broker.downstream_tech && *broker.downstream_tech != current)
    targets.push_back(*broker.downstream_tech);
  Technology reached = targets.empty() ? current : targets.back();
  if (tech != reached) {
    // A site-level route means the last hop happens at the SP's site,
    // after presentation, not here.
    bool site_handles_last = false;
    if (service.site_tts) {
      const Entity& site = t.entity(*service.site_tts);
      for (const auto& route : site.routes) {
        if (route.from_tech == reached && route.to_tech == tech)
          site_handles_last = true;
      }
    }
    if (!site_handles_last) targets.push_back(tech);
  }

  for (Technology target : targets) {
    if (target == current) continue;
    auto hop = plan_hop(t, broker, service, current, target);
    if (!hop)
      throw Error("no translation path",
                  std::string(to_string(current)) + " -> " + to_string(target));
    credential = translate(t, tokens, hop->translator, credential, target, now);
    out.hops.push_back({hop->translator, current, target});
    current = target;
  }

  out.credential = std::move(credential);
  return out;
}

}  // namespace fedsim
