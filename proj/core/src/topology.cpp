#include "fedsim/topology.hpp"

#include <algorithm>
#include <sstream>

#include "fedsim/docparse.hpp"

namespace fedsim {

const char* to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::kIdP:
      return "idp";
    case EntityKind::kOP:
      return "op";
    case EntityKind::kCA:
      return "ca";
    case EntityKind::kSP:
      return "sp";
    case EntityKind::kAA:
      return "aa";
    case EntityKind::kVOMS:
      return "voms";
    case EntityKind::kProxy:
      return "proxy";
    case EntityKind::kTTS:
      return "tts";
    case EntityKind::kGuestIdP:
      return "guest-idp";
    case EntityKind::kSocialIdP:
      return "social-idp";
  }
  return "sp";
}

std::optional<EntityKind> parse_entity_kind(const std::string& text) {
  static const std::map<std::string, EntityKind> kinds = {
      {"idp", EntityKind::kIdP},       {"op", EntityKind::kOP},
      {"ca", EntityKind::kCA},         {"sp", EntityKind::kSP},
      {"aa", EntityKind::kAA},         {"voms", EntityKind::kVOMS},
      {"proxy", EntityKind::kProxy},   {"tts", EntityKind::kTTS},
      {"guest-idp", EntityKind::kGuestIdP},
      {"social-idp", EntityKind::kSocialIdP},
  };
  auto it = kinds.find(text);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

bool is_identity_provider_kind(EntityKind kind) {
  switch (kind) {
    case EntityKind::kIdP:
    case EntityKind::kOP:
    case EntityKind::kCA:
    case EntityKind::kGuestIdP:
    case EntityKind::kSocialIdP:
      return true;
    default:
      return false;
  }
}

const Entity& Topology::entity(const EntityId& id) const {
  const Entity* e = find_entity(id);
  if (e == nullptr) throw Error("unknown entity", id.value);
  return *e;
}

const Entity* Topology::find_entity(const EntityId& id) const {
  auto it = entities.find(id);
  return it == entities.end() ? nullptr : &it->second;
}

const std::set<std::string>* Topology::release_policy(
    const EntityId& issuer, const EntityId& audience) const {
  auto it = release_policies.find({issuer, audience});
  return it == release_policies.end() ? nullptr : &it->second;
}

std::vector<AttributeStatement> Topology::apply_release_policy(
    const EntityId& issuer, const EntityId& audience,
    std::vector<AttributeStatement> statements) const {
  const std::set<std::string>* allowed = release_policy(issuer, audience);
  std::vector<AttributeStatement> released;
  if (allowed == nullptr) return released;  // deny-unlisted
  for (auto& statement : statements) {
    if (allowed->count(statement.name) > 0)
      released.push_back(std::move(statement));
  }
  return released;
}

namespace {

std::set<Technology> default_protocols(EntityKind kind) {
  switch (kind) {
    case EntityKind::kIdP:
    case EntityKind::kGuestIdP:
    case EntityKind::kSocialIdP:
    case EntityKind::kAA:
      return {Technology::kSamlLike};
    case EntityKind::kOP:
      return {Technology::kOidcLike};
    case EntityKind::kCA:
    case EntityKind::kVOMS:
      return {Technology::kX509Like};
    case EntityKind::kProxy:
    case EntityKind::kTTS:
      return {Technology::kSamlLike, Technology::kOidcLike,
              Technology::kX509Like};
    case EntityKind::kSP:
      return {Technology::kSamlLike};
  }
  return {Technology::kSamlLike};
}

// Empty result means no constraint.
std::set<Technology> required_protocols(EntityKind kind) {
  switch (kind) {
    case EntityKind::kIdP:
      return {Technology::kSamlLike};
    case EntityKind::kOP:
      return {Technology::kOidcLike};
    case EntityKind::kCA:
    case EntityKind::kVOMS:
      return {Technology::kX509Like};
    default:
      return {};
  }
}

bool parse_bool(const std::string& text) {
  return text == "true" || text == "yes" || text == "1";
}

Loa parse_loa_or_throw(const std::string& text, int line) {
  auto loa = parse_loa(text);
  if (!loa)
    throw LoadError("unparseable",
                    "line " + std::to_string(line) + ": bad loa " + text);
  return *loa;
}

Technology parse_tech_or_throw(const std::string& text, int line) {
  auto tech = parse_technology(text);
  if (!tech)
    throw LoadError("unparseable",
                    "line " + std::to_string(line) + ": bad technology " + text);
  return *tech;
}

std::string default_scope(const EntityId& id) {
  auto colon = id.value.find(':');
  return colon == std::string::npos ? id.value : id.value.substr(colon + 1);
}

void parse_entity_entry(Entity& entity, const DocEntry& entry) {
  const std::string& key = entry.key;
  const std::string& value = entry.value;
  const int line = entry.line;

  if (key == "kind") {
    auto kind = parse_entity_kind(value);
    if (!kind)
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": bad kind " + value);
    entity.kind = *kind;
  } else if (key == "federations") {
    for (const auto& token : split_tokens(value))
      entity.federations.insert(token);
  } else if (key == "protocols") {
    for (const auto& token : split_tokens(value))
      entity.protocols.insert(parse_tech_or_throw(token, line));
  } else if (key == "behind") {
    entity.internal_behind = EntityId(value);
  } else if (key == "anchor") {
    entity.explicit_anchors.insert(EntityId(value));
  } else if (key == "key") {
    auto bytes = from_hex(value);
    if (!bytes || bytes->empty())
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": bad key hex");
    entity.signing_key = *bytes;
  } else if (key == "egov") {
    entity.egov = parse_bool(value);
  } else if (key == "offline") {
    entity.offline = parse_bool(value);
  } else if (key == "requires-local-account") {
    entity.requires_local_account = parse_bool(value);
  } else if (key == "aggregation-locus") {
    if (value == "proxy") {
      entity.aggregation_locus = AggregationLocus::kProxy;
    } else if (value == "sp") {
      entity.aggregation_locus = AggregationLocus::kSp;
    } else {
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": bad locus " + value);
    }
  } else if (key == "registry") {
    entity.registry = EntityId(value);
  } else if (key == "site-tts") {
    entity.site_tts = EntityId(value);
  } else if (key == "via-proxy") {
    entity.via_proxy = EntityId(value);
  } else if (key == "tts") {
    entity.central_tts = EntityId(value);
  } else if (key == "voms") {
    entity.voms = EntityId(value);
  } else if (key == "scope") {
    entity.scope = value;
  } else if (key == "downstream-tech") {
    entity.downstream_tech = parse_tech_or_throw(value, line);
  } else if (key == "upstream-attrs") {
    for (const auto& token : split_tokens(value))
      entity.upstream_attributes.push_back(token);
  } else if (key == "attr-source") {
    auto tokens = split_tokens(value);
    if (tokens.empty())
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": empty attr-source");
    AggregationSource source;
    source.aa = EntityId(tokens[0]);
    source.required = tokens.size() > 1 && tokens[1] == "required";
    entity.attribute_sources.push_back(source);
  } else if (key == "map") {
    auto tokens = split_tokens(value);
    if (tokens.size() != 2)
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": map wants <from> <to>");
    entity.harmonization_map[tokens[0]] = tokens[1];
  } else if (key == "route") {
    std::vector<std::string> positional;
    auto kv = parse_kv_tokens(split_tokens(value), &positional);
    if (positional.size() != 2)
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": route wants <from> <to>");
    TranslationRoute route;
    route.from_tech = parse_tech_or_throw(positional[0], line);
    route.to_tech = parse_tech_or_throw(positional[1], line);
    route.lifetime_s = 3600;
    if (auto it = kv.find("lifetime"); it != kv.end())
      route.lifetime_s = std::stoll(it->second);
    if (auto it = kv.find("access"); it != kv.end())
      route.reference_access = it->second == "reference";
    if (route.lifetime_s <= 0)
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": route lifetime");
    entity.routes.push_back(route);
  } else if (key == "privilege") {
    auto tokens = split_tokens(value);
    if (tokens.size() != 2)
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": privilege wants <from> <to>");
    entity.privilege_map[tokens[0]] = tokens[1];
  } else if (key == "rule") {
    AuthzRule rule;
    std::vector<std::string> positional;
    auto tokens = split_tokens(value);
    for (const auto& token : tokens) {
      auto eq = token.find('=');
      if (eq == std::string::npos)
        throw LoadError("unparseable", "line " + std::to_string(line) +
                                           ": rule token " + token);
      std::string name = token.substr(0, eq);
      std::string val = token.substr(eq + 1);
      if (name == "min-loa") {
        rule.min_loa = parse_loa_or_throw(val, line);
      } else {
        rule.require.emplace_back(name, val);
      }
    }
    entity.authz_rules.push_back(std::move(rule));
  } else if (key == "admin") {
    entity.admins.insert(value);
  } else if (key == "aa-key-mode") {
    entity.aa_keyed_by_scoped_id = value == "scoped";
  } else if (key == "assertion-loa") {
    entity.assertion_loa = parse_loa_or_throw(value, line);
  } else if (key == "user") {
    std::vector<std::string> positional;
    auto kv = parse_kv_tokens(split_tokens(value), &positional);
    if (positional.size() != 1)
      throw LoadError("unparseable",
                      "line " + std::to_string(line) + ": user wants <handle>");
    StoredUser user;
    user.handle = positional[0];
    auto subject = kv.find("subject");
    user.subject_id = subject != kv.end() ? subject->second : user.handle;
    if (auto it = kv.find("loa"); it != kv.end())
      user.loa = parse_loa_or_throw(it->second, line);
    entity.users.push_back(std::move(user));
  } else if (key == "user-attr") {
    auto tokens = split_tokens(value);
    if (tokens.size() < 3)
      throw LoadError("unparseable",
                      "line " + std::to_string(line) +
                          ": user-attr wants <handle> <name> <value>");
    StoredAttribute attribute;
    attribute.name = tokens[1];
    attribute.value = tokens[2];
    for (std::size_t i = 3; i < tokens.size(); ++i) {
      if (tokens[i].rfind("loa=", 0) == 0)
        attribute.loa = parse_loa_or_throw(tokens[i].substr(4), line);
    }
    bool found = false;
    for (auto& user : entity.users) {
      if (user.handle == tokens[0]) {
        user.attributes.push_back(attribute);
        found = true;
        break;
      }
    }
    if (!found)
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": user-attr before user " +
                                         tokens[0]);
  } else if (key == "record") {
    auto tokens = split_tokens(value);
    if (tokens.empty())
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": record wants <subject-key>");
    AaRecordSeed seed;
    // Subject keys may contain '=' (certificate names), so the first
    // token is positional by definition.
    seed.subject_key = tokens[0];
    auto kv = parse_kv_tokens(
        std::vector<std::string>(tokens.begin() + 1, tokens.end()));
    if (auto it = kv.find("groups"); it != kv.end()) {
      std::istringstream groups(it->second);
      std::string group;
      while (std::getline(groups, group, ','))
        if (!group.empty()) seed.groups.insert(group);
    }
    if (auto it = kv.find("roles"); it != kv.end()) {
      std::istringstream roles(it->second);
      std::string role;
      while (std::getline(roles, role, ',')) {
        auto colon = role.rfind(':');
        if (colon == std::string::npos || colon == 0)
          throw LoadError("unparseable", "line " + std::to_string(line) +
                                             ": role wants <group>:<role>");
        seed.roles.insert({role.substr(0, colon), role.substr(colon + 1)});
      }
    }
    entity.aa_records.push_back(std::move(seed));
  } else if (key == "record-custom") {
    auto tokens = split_tokens(value);
    if (tokens.size() != 3)
      throw LoadError("unparseable",
                      "line " + std::to_string(line) +
                          ": record-custom wants <subject-key> <name> <value>");
    bool found = false;
    for (auto& seed : entity.aa_records) {
      if (seed.subject_key == tokens[0]) {
        seed.custom[tokens[1]] = tokens[2];
        found = true;
        break;
      }
    }
    if (!found)
      throw LoadError("unparseable", "line " + std::to_string(line) +
                                         ": record-custom before record");
  } else {
    throw LoadError("unparseable", "line " + std::to_string(line) +
                                       ": unknown entity key " + key);
  }
}

void check_reference(const Topology& t, const EntityId& id,
                     const std::string& context) {
  if (t.entities.count(id) == 0)
    throw LoadError("dangling entity reference", context + ": " + id.value);
}

}  // namespace

Topology load_topology(const std::string& text) {
  Document doc = parse_document(text);
  if (doc.header != kTopologyHeader)
    throw LoadError("unparseable", "expected header '" +
                                       std::string(kTopologyHeader) + "'");

  Topology t;

  for (const auto& section : doc.sections) {
    if (section.kind == "entity") {
      if (section.arg.empty())
        throw LoadError("unparseable", "entity section without id");
      EntityId id(section.arg);
      if (id.value.find('|') != std::string::npos)
        throw LoadError("entity id contains separator", id.value);
      if (t.entities.count(id) > 0)
        throw LoadError("duplicate entity id", id.value);
      Entity entity;
      entity.id = id;
      for (const auto& entry : section.entries)
        parse_entity_entry(entity, entry);
      if (entity.protocols.empty())
        entity.protocols = default_protocols(entity.kind);
      if (entity.scope.empty()) entity.scope = default_scope(entity.id);
      if (entity.signing_key.empty())
        entity.signing_key = derive_default_key(entity.id);
      t.entities.emplace(id, std::move(entity));
    } else if (section.kind == "federation") {
      if (section.arg.empty())
        throw LoadError("unparseable", "federation section without id");
      if (t.federations.count(section.arg) > 0)
        throw LoadError("duplicate entity id",
                        "federation " + section.arg);
      Federation federation;
      federation.id = section.arg;
      for (const auto& entry : section.entries) {
        if (entry.key == "model") {
          if (entry.value == "full-mesh") {
            federation.model = FederationModel::kFullMesh;
          } else if (entry.value == "hub-and-spoke") {
            federation.model = FederationModel::kHubAndSpoke;
          } else {
            throw LoadError("unparseable", "line " +
                                               std::to_string(entry.line) +
                                               ": bad model " + entry.value);
          }
        } else if (entry.key == "hub") {
          federation.hub = EntityId(entry.value);
        } else if (entry.key == "members") {
          for (const auto& token : split_tokens(entry.value))
            federation.members.insert(EntityId(token));
        } else if (entry.key == "interfederated") {
          federation.interfederated = parse_bool(entry.value);
        } else {
          throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                             ": unknown federation key " +
                                             entry.key);
        }
      }
      t.federations.emplace(federation.id, std::move(federation));
    } else if (section.kind == "policies") {
      for (const auto& entry : section.entries) {
        if (entry.key != "release")
          throw LoadError("unparseable", "line " + std::to_string(entry.line) +
                                             ": unknown policies key " +
                                             entry.key);
        auto tokens = split_tokens(entry.value);
        if (tokens.size() < 2)
          throw LoadError("unparseable",
                          "line " + std::to_string(entry.line) +
                              ": release wants <issuer> <audience> <names...>");
        EntityId issuer(tokens[0]);
        EntityId audience(tokens[1]);
        auto& names = t.release_policies[{issuer, audience}];
        for (std::size_t i = 2; i < tokens.size(); ++i)
          names.insert(tokens[i]);
      }
    } else {
      throw LoadError("unparseable", "unknown section " + section.kind);
    }
  }

  // Link checks: every reference must resolve.
  for (const auto& [fid, federation] : t.federations) {
    for (const auto& member : federation.members)
      check_reference(t, member, "federation " + fid + " member");
    if (federation.model == FederationModel::kHubAndSpoke) {
      if (!federation.hub || federation.members.count(*federation.hub) == 0)
        throw LoadError("hub missing", "federation " + fid);
    } else if (federation.hub) {
      throw LoadError("hub invalid",
                      "federation " + fid + " is full-mesh but has a hub");
    }
  }
  for (const auto& [id, entity] : t.entities) {
    if (entity.internal_behind) {
      if (entity.kind != EntityKind::kSP)
        throw LoadError("internal sp behind non-proxy",
                        id.value + " is not an SP");
      check_reference(t, *entity.internal_behind, id.value + " behind");
      if (t.entities.at(*entity.internal_behind).kind != EntityKind::kProxy)
        throw LoadError("internal sp behind non-proxy",
                        id.value + " behind " + entity.internal_behind->value);
    }
    for (const auto& anchor : entity.explicit_anchors)
      check_reference(t, anchor, id.value + " anchor");
    if (entity.registry)
      check_reference(t, *entity.registry, id.value + " registry");
    if (entity.site_tts)
      check_reference(t, *entity.site_tts, id.value + " site-tts");
    if (entity.via_proxy) {
      check_reference(t, *entity.via_proxy, id.value + " via-proxy");
      if (t.entities.at(*entity.via_proxy).kind != EntityKind::kProxy)
        throw LoadError("internal sp behind non-proxy",
                        id.value + " via " + entity.via_proxy->value);
    }
    if (entity.central_tts)
      check_reference(t, *entity.central_tts, id.value + " tts");
    if (entity.voms) check_reference(t, *entity.voms, id.value + " voms");
    for (const auto& source : entity.attribute_sources)
      check_reference(t, source.aa, id.value + " attr-source");

    auto required = required_protocols(entity.kind);
    if (!required.empty() && entity.protocols != required)
      throw LoadError("kind-protocol mismatch", id.value);
  }
  for (const auto& [pair, names] : t.release_policies) {
    (void)names;
    check_reference(t, pair.first, "policy issuer");
    check_reference(t, pair.second, "policy audience");
  }

  // Anchor registry covers every entity; all of them can issue something.
  for (const auto& [id, entity] : t.entities)
    t.anchors.register_key(id, entity.signing_key);

  return t;
}

Topology load_topology_file(const std::string& path) {
  return load_topology(read_text_file(path));
}

bool trusts(const Topology& t, const EntityId& verifier,
            const EntityId& issuer) {
  const Entity& v = t.entity(verifier);
  t.entity(issuer);  // unknown issuer -> error

  // (d) Internal SPs trust exactly their own proxy; nothing else.
  if (v.kind == EntityKind::kSP && v.internal_behind.has_value())
    return issuer == *v.internal_behind;

  // (e) Explicit anchor.
  if (v.explicit_anchors.count(issuer) > 0) return true;

  const Entity& i = t.entity(issuer);

  bool verifier_interfederated = false;
  for (const auto& fid : v.federations) {
    auto it = t.federations.find(fid);
    if (it == t.federations.end()) continue;
    const Federation& federation = it->second;
    if (federation.interfederated) verifier_interfederated = true;
    // (a) full mesh: direct; (b) hub-and-spoke: both linked via the hub.
    if (i.federations.count(fid) > 0) return true;
  }

  if (!verifier_interfederated) return false;

  // (c) metadata exchange between interfederated federations.
  for (const auto& fid : i.federations) {
    auto it = t.federations.find(fid);
    if (it != t.federations.end() && it->second.interfederated) return true;
  }
  return false;
}

bool registered_relying_party(const Topology& t, const EntityId& provider,
                              const EntityId& requester) {
  // Registration mirrors the verifier-side trust path: a provider knows
  // the relying parties that could legitimately verify its credentials.
  return trusts(t, requester, provider);
}

std::vector<Finding> validate_invariants(const Topology& t) {
  std::vector<Finding> findings;
  auto add = [&findings](std::string rule, const EntityId& entity,
                         std::string detail) {
    findings.push_back({std::move(rule), entity, std::move(detail)});
  };

  for (const auto& [fid, federation] : t.federations) {
    for (const auto& member : federation.members) {
      if (t.entities.count(member) == 0)
        add("dangling-entity-reference", member,
            "member of federation " + fid);
    }
    if (federation.model == FederationModel::kHubAndSpoke) {
      if (!federation.hub || federation.members.count(*federation.hub) == 0)
        add("hub-missing", EntityId(fid), "hub-and-spoke without hub");
    } else if (federation.hub) {
      add("hub-invalid", EntityId(fid), "full-mesh federation has a hub");
    }
  }

  for (const auto& [id, entity] : t.entities) {
    if (entity.internal_behind) {
      const Entity* target = t.find_entity(*entity.internal_behind);
      if (entity.kind != EntityKind::kSP) {
        add("internal-behind-non-proxy", id, "entity is not an SP");
      } else if (target == nullptr) {
        add("dangling-entity-reference", id,
            "behind " + entity.internal_behind->value);
      } else if (target->kind != EntityKind::kProxy) {
        add("internal-behind-non-proxy", id,
            "behind " + entity.internal_behind->value);
      }

      // SP friendliness: an internal SP may trust only its own proxy.
      for (const auto& anchor : entity.explicit_anchors) {
        if (anchor != *entity.internal_behind)
          add("internal-sp-multiple-trust", id, "anchor " + anchor.value);
      }
      if (!entity.federations.empty())
        add("internal-sp-multiple-trust", id, "joined a federation");
    }

    auto required = required_protocols(entity.kind);
    if (!required.empty() && entity.protocols != required)
      add("kind-protocol-mismatch", id, "");

    for (const auto& anchor : entity.explicit_anchors) {
      if (t.entities.count(anchor) == 0)
        add("dangling-entity-reference", id, "anchor " + anchor.value);
    }

    if (!t.anchors.has_key(id)) add("missing-anchor", id, "");
  }

  for (const auto& [pair, names] : t.release_policies) {
    (void)names;
    if (t.entities.count(pair.first) == 0)
      add("dangling-entity-reference", pair.first, "policy issuer");
    if (t.entities.count(pair.second) == 0)
      add("dangling-entity-reference", pair.second, "policy audience");
  }

  return findings;
}

std::string export_metadata(const Topology& t, const std::string& federation) {
  auto it = t.federations.find(federation);
  if (it == t.federations.end())
    throw Error("unknown federation", federation);
  const Federation& f = it->second;

  std::ostringstream out;
  out << kMetadataHeader << "\n";
  out << "federation " << f.id << " model="
      << (f.model == FederationModel::kFullMesh ? "full-mesh"
                                                : "hub-and-spoke")
      << " interfederated=" << (f.interfederated ? "true" : "false") << "\n";

  std::vector<EntityId> members(f.members.begin(), f.members.end());
  std::sort(members.begin(), members.end());
  for (const auto& member : members) {
    const Entity& entity = t.entity(member);
    out << "entity " << entity.id.value << " kind=" << to_string(entity.kind)
        << " protocols=";
    bool first = true;
    for (Technology tech : entity.protocols) {
      if (!first) out << "+";
      out << to_string(tech);
      first = false;
    }
    const Bytes* key = t.anchors.find_key(member);
    out << " fingerprint=" << (key ? key_fingerprint(*key) : "none");
    if (key) out << " key=" << to_hex(*key);
    out << "\n";
  }
  return out.str();
}

std::map<EntityId, Bytes> import_metadata_anchors(const std::string& doc) {
  std::istringstream in(doc);
  std::string line;
  if (!std::getline(in, line) || line != kMetadataHeader)
    throw LoadError("unparseable", "bad metadata header");

  std::map<EntityId, Bytes> anchors;
  while (std::getline(in, line)) {
    if (line.rfind("entity ", 0) != 0) continue;
    auto tokens = split_tokens(line);
    if (tokens.size() < 2) throw LoadError("unparseable", line);
    EntityId id(tokens[1]);
    for (const auto& token : tokens) {
      if (token.rfind("key=", 0) == 0) {
        auto bytes = from_hex(token.substr(4));
        if (!bytes) throw LoadError("unparseable", "bad key hex");
        anchors[id] = *bytes;
      }
    }
  }
  return anchors;
}

}  // namespace fedsim
