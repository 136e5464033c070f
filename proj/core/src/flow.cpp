#include "fedsim/flow.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "fedsim/claims.hpp"
#include "fedsim/integrity.hpp"
#include "json.hpp"

namespace fedsim {

Decision authorize(const AuthzPolicy& policy, const CompositeIdentity& cid) {
  if (policy.rules.empty()) return Decision::deny("no matching rule");

  std::string last_failure = "no matching rule";
  for (const auto& rule : policy.rules) {
    std::string failure;
    for (const auto& [name, want] : rule.require) {
      bool matched = false;
      for (const auto& s : cid.statements) {
        if (s.name == name && (want == "*" || s.value == want)) {
          matched = true;
          break;
        }
      }
      if (!matched) {
        failure = "missing " + name + "=" + want;
        break;
      }
    }
    if (failure.empty() && cid.effective_loa < rule.min_loa)
      failure = std::string("loa below ") + to_string(rule.min_loa);
    if (failure.empty()) return Decision::grant();
    last_failure = failure;
  }
  return Decision::deny(last_failure);
}

SimState::SimState(Topology t, Timestamp epoch)
    : topology(std::move(t)), now(epoch) {
  providers.seed(topology);
  aa.seed(topology);
}

namespace {

std::string credential_kind(const Credential& c) {
  if (std::holds_alternative<Assertion>(c)) return "assertion";
  if (std::holds_alternative<TokenSet>(c)) return "token-set";
  return "cert-chain";
}

std::string attr_names(const std::vector<AttributeStatement>& statements) {
  std::set<std::string> names;
  for (const auto& s : statements) names.insert(s.name);
  std::string out;
  for (const auto& name : names) {
    if (!out.empty()) out += ",";
    out += name;
  }
  return out;
}

/// Recomputes the SP-side composite view from a received credential.
CompositeIdentity composite_from_statements(
    const Topology& t, const ScopedId& sid,
    std::vector<AttributeStatement> statements) {
  CompositeIdentity cid;
  cid.persistent_unique_id = sid;
  cid.statements = std::move(statements);
  sort_statements(cid.statements);
  std::vector<Loa> identity_loas;
  for (const auto& s : cid.statements) {
    const Entity* issuer = t.find_entity(s.issuer);
    if (issuer != nullptr && is_identity_provider_kind(issuer->kind))
      identity_loas.push_back(s.loa);
  }
  cid.effective_loa = identity_loas.empty()
                          ? Loa::kLow
                          : loa_combine(std::span<const Loa>(identity_loas));
  return cid;
}

class FlowRunner {
 public:
  FlowRunner(SimState& state, const FlowSpec& spec)
      : state_(state), spec_(spec) {}

  FlowResult run() {
    try {
      return execute();
    } catch (const Error& e) {
      // Domain errors surface as denials with the reason in the trace.
      return deny(e.code());
    }
  }

 private:
  SimState& state_;
  const FlowSpec& spec_;
  FlowTrace trace_;
  int flow_index_ = state_.flow_index;

  std::string actor_kind(const EntityId& actor) const {
    if (actor.value.rfind("user:", 0) == 0) return "user";
    const Entity* entity = state_.topology.find_entity(actor);
    return entity == nullptr ? "unknown" : to_string(entity->kind);
  }

  void emit(int step, const EntityId& actor, const std::string& action,
            std::map<std::string, std::string> summary) {
    FlowEvent event;
    event.seq = state_.next_seq++;
    event.step = step;
    event.actor = actor;
    event.action = action;
    summary["actor-kind"] = actor_kind(actor);
    summary["flow"] = std::to_string(flow_index_);
    event.summary = std::move(summary);
    trace_.push_back(std::move(event));
    state_.now += 1;  // one second per event
  }

  FlowResult deny(const std::string& reason) {
    emit(5, spec_.target_sp, kActAuthorize,
         {{"decision", "denied"}, {"reason", reason}});
    return {Decision::deny(reason), std::move(trace_)};
  }

  // Presentation-time verification of a credential at a relying party.
  std::string verify_presentation(const EntityId& verifier,
                                  const Credential& credential) {
    const EntityId issuer = credential_authority(credential);
    if (!trusts(state_.topology, verifier, issuer)) return "no trust path";
    VerifyResult integrity = verify_integrity(state_.topology.anchors, credential);
    if (!integrity.valid) return "integrity invalid";
    if (const auto* assertion = std::get_if<Assertion>(&credential)) {
      if (assertion->audience != verifier) return "audience mismatch";
      if (state_.now < assertion->not_before) return "credential expired";
      if (state_.now > assertion->not_after) return "credential expired";
    } else if (const auto* token = std::get_if<TokenSet>(&credential)) {
      if (token->audience != verifier) return "audience mismatch";
      if (state_.now > token->not_after) return "credential expired";
    } else {
      ChainValidation validation = validate_chain(
          state_.topology.anchors, std::get<CertChain>(credential), state_.now);
      if (!validation.valid) return validation.reason;
    }
    return "";
  }

  FlowResult execute() {
    const Topology& t = state_.topology;

    const PrincipalRecord* principal = state_.providers.find_principal(spec_.user);
    if (principal == nullptr) return deny("unknown user");

    const Entity* target = t.find_entity(spec_.target_sp);
    if (target == nullptr || target->kind != EntityKind::kSP)
      return deny("unknown service");

    const Entity* provider = t.find_entity(spec_.provider);
    if (provider == nullptr || !is_identity_provider_kind(provider->kind))
      return deny("unknown provider");
    if (provider->protocols.count(spec_.tech) == 0)
      return deny("provider-tech mismatch");

    std::optional<EntityId> broker = target->internal_behind;
    if (!broker) broker = target->via_proxy;
    const EntityId rp = broker ? *broker : target->id;

    const bool web = spec_.mode == FlowMode::kWeb;
    const bool push = spec_.attr_mode == AttrMode::kPush;
    const EntityId user_actor("user:" + spec_.user);

    Credential upstream;
    std::optional<AuthCode> code;

    // ----- steps 1-2: obtain the upstream credential -----
    if (spec_.tech == Technology::kX509Like) {
      CertChain chain = issue_certificate(t, state_.providers, spec_.provider,
                                          *principal, spec_.cert_lifetime_s,
                                          state_.now);
      emit(1, spec_.provider, kActIssue,
           {{"credential", "cert-chain"},
            {"subject", chain.certs.front().subject_name},
            {"lifetime", std::to_string(spec_.cert_lifetime_s)}});

      CertChain delegated = create_proxy_cert(
          t.anchors, chain, chain.certs.front().subject_name + "/proxy",
          kVomsExtensionLifetimeS, state_.now);
      emit(2, user_actor, kActIssue,
           {{"credential", "proxy-cert"},
            {"subject", delegated.certs.front().subject_name}});

      if (push && provider->voms) {
        const std::string key =
            aa_key_home(spec_.provider, chain.certs.front().subject_name);
        const AaRecord* record = state_.aa.find(*provider->voms, key);
        if (record == nullptr || record->groups.empty())
          return deny("non-member");
        const std::string vo = *record->groups.begin();
        std::set<std::string> roles;
        for (const auto& [group, role] : record->roles)
          if (group == vo) roles.insert(role);
        delegated = voms_extend(t, state_.aa, *provider->voms, delegated, vo,
                                roles, state_.now);
        emit(2, *provider->voms, kActIssue,
             {{"credential", "voms-extension"},
              {"vo", vo},
              {"attrs", attr_names(delegated.certs.front().attr_extension)}});
      }
      upstream = std::move(delegated);
    } else {
      // Web flows redirect; non-web contacts the provider back-channel,
      // so authentication is the entry step.
      if (web) {
        emit(1, spec_.target_sp, kActRedirect,
             {{"to", broker ? broker->value : spec_.provider.value}});
        if (broker) {
          AuthnRequest initial;
          initial.requester = spec_.target_sp;
          initial.audience = *broker;
          handle_sp_request(t, *broker, initial, spec_.provider);
          emit(1, *broker, kActRedirect, {{"to", spec_.provider.value}});
        }
      }
      const int authn_step = web ? 2 : 1;
      auto subject = principal->subject_at(spec_.provider);
      emit(authn_step, spec_.provider, kActAuthenticate,
           {{"subject", subject.value_or("?")},
            {"binding", web ? "redirect" : "back-channel"}});

      if (spec_.tech == Technology::kSamlLike) {
        AuthnRequest req;
        req.requester = rp;
        req.audience = spec_.provider;
        req.binding = web ? AuthnRequest::Binding::kRedirect
                          : AuthnRequest::Binding::kBackChannel;
        if (broker)
          req.wanted_attributes = t.entity(*broker).upstream_attributes;
        Assertion assertion = authenticate_web(t, state_.providers,
                                               spec_.provider, *principal, req,
                                               state_.now);
        emit(2, spec_.provider, kActIssue,
             {{"credential", "assertion"},
              {"audience", rp.value},
              {"attrs", attr_names(assertion.attributes)}});
        upstream = std::move(assertion);
      } else {
        auto issued = authenticate_oidc(
            t, state_.providers, spec_.provider, *principal, rp,
            push ? OidcMode::kSelfContained : OidcMode::kCode, state_.now);
        if (push) {
          TokenSet token = std::get<TokenSet>(std::move(issued));
          emit(2, spec_.provider, kActIssue,
               {{"credential", "token-set"},
                {"access", "self-contained"},
                {"audience", rp.value},
                {"attrs",
                 attr_names(statements_from_claims(token.id_claims,
                                                   spec_.provider,
                                                   Delivery::kPush))}});
          upstream = std::move(token);
        } else {
          code = std::get<AuthCode>(std::move(issued));
          emit(2, spec_.provider, kActIssue,
               {{"credential", "auth-code"}, {"audience", rp.value}});
        }
      }
    }

    // ----- step 3: present at the relying party -----
    if (code) {
      emit(3, rp, kActPresent, {{"credential", "auth-code"}});
      TokenSet token = redeem_code(t, state_.providers, spec_.provider, *code,
                                   rp, state_.now);
      emit(3, spec_.provider, kActIssue,
           {{"credential", "token-set"},
            {"access", "reference"},
            {"audience", rp.value}});
      upstream = std::move(token);
    } else {
      emit(3, rp, kActPresent, {{"credential", credential_kind(upstream)}});
    }
    if (std::string reason = verify_presentation(rp, upstream); !reason.empty())
      return deny(reason);

    // ----- step 4: attributes -----
    const std::string upstream_subject = credential_subject(upstream);

    EntityId aggregator = broker ? *broker : target->id;
    if (!broker && target->aggregation_locus == AggregationLocus::kSp &&
        target->registry) {
      aggregator = *target->registry;
      emit(4, spec_.target_sp, kActRedirect, {{"to", aggregator.value}});
    }

    std::vector<AttributeStatement> home;
    if (push) {
      home = credential_statements(upstream);
      if (!home.empty() || spec_.tech != Technology::kX509Like)
        emit(4, aggregator, kActExtract,
             {{"attrs", attr_names(home)},
              {"from", credential_kind(upstream)}});
    } else if (spec_.tech == Technology::kOidcLike) {
      const TokenSet& token = std::get<TokenSet>(upstream);
      auto claims = userinfo(t, state_.providers, spec_.provider, token.access,
                             state_.now);
      home = statements_from_claims(claims, spec_.provider, Delivery::kPull);
      emit(4, spec_.provider, kActQueryAttrs,
           {{"requester", aggregator.value}, {"attrs", attr_names(home)}});
    } else if (spec_.tech == Technology::kSamlLike) {
      const StoredUser* stored =
          state_.providers.find_user(spec_.provider, upstream_subject);
      if (stored != nullptr) {
        home = t.apply_release_policy(
            spec_.provider, aggregator,
            state_.providers.stored_statements(*provider, *stored));
        for (auto& s : home) s.delivery = Delivery::kPull;
      }
      emit(4, spec_.provider, kActQueryAttrs,
           {{"requester", aggregator.value}, {"attrs", attr_names(home)}});
    }
    // x509 pull: the chain itself carries identity only; community
    // attributes come from the aggregator's sources below.

    AggregationContext ctx;
    ctx.topology = &t;
    ctx.aa_state = &state_.aa;
    ctx.registry = &state_.registries[aggregator];
    ctx.aggregator = aggregator;
    ctx.upstream_issuer = spec_.provider;
    ctx.upstream_subject = upstream_subject;
    ctx.on_source = [this, &aggregator](
                        const EntityId& source,
                        const std::vector<AttributeStatement>& released) {
      emit(4, source, kActQueryAttrs,
           {{"requester", aggregator.value}, {"attrs", attr_names(released)}});
    };
    CompositeIdentity cid = aggregate(ctx, std::move(home));
    emit(4, aggregator, kActAggregate,
         {{"attrs", attr_names(cid.statements)},
          {"unique-id", cid.persistent_unique_id.render()},
          {"loa", to_string(cid.effective_loa)},
          {"sources", std::to_string(cid.source_log.size())}});

    CompositeIdentity sp_view = cid;

    if (broker) {
      DownstreamIssue issued =
          issue_downstream(t, &state_.providers, *broker, spec_.target_sp, cid,
                           spec_.tech, state_.now);
      std::string released;
      for (const auto& name : issued.released_names) {
        if (!released.empty()) released += ",";
        released += name;
      }
      emit(4, *broker, kActIssue,
           {{"credential", credential_kind(issued.credential)},
            {"audience", spec_.target_sp.value},
            {"subject", cid.persistent_unique_id.render()},
            {"attrs", released}});
      for (const auto& hop : issued.hops) {
        emit(4, hop.translator, kActTranslate,
             {{"from", to_string(hop.from)},
              {"to", to_string(hop.to)},
              {"subject", credential_subject(issued.credential)},
              {"attrs", attr_names(credential_statements(issued.credential))}});
      }

      Credential down = std::move(issued.credential);
      emit(4, spec_.target_sp, kActPresent,
           {{"credential", credential_kind(down)}});
      if (std::string reason = verify_presentation(spec_.target_sp, down);
          !reason.empty())
        return deny(reason);

      // Site-level translation for natively accessed services.
      if (technology_of(down) != spec_.tech && target->site_tts) {
        Credential site_cred =
            translate(t, &state_.providers, *target->site_tts, down,
                      spec_.tech, state_.now);
        emit(4, *target->site_tts, kActTranslate,
             {{"from", to_string(technology_of(down))},
              {"to", to_string(spec_.tech)},
              {"subject", credential_subject(site_cred)},
              {"attrs", attr_names(credential_statements(site_cred))}});
        down = std::move(site_cred);
      } else if (technology_of(down) != spec_.tech &&
                 target->protocols.count(technology_of(down)) == 0) {
        return deny("no translation path");
      }

      std::vector<AttributeStatement> received = credential_statements(down);
      emit(4, spec_.target_sp, kActExtract,
           {{"attrs", attr_names(received)},
            {"from", credential_kind(down)}});

      auto sid = parse_scoped_id(credential_subject(down));
      if (!sid) return deny("subject not scoped");
      sp_view = composite_from_statements(t, *sid, std::move(received));
    } else if (target->protocols.count(spec_.tech) == 0) {
      return deny("no translation path");
    }

    // ----- step 5: authorize (and provision for non-web) -----
    const ScopedId sid = sp_view.persistent_unique_id;
    const bool needs_account =
        spec_.mode == FlowMode::kNonWeb && target->requires_local_account;
    if (needs_account) {
      const LocalAccount* account = state_.accounts.find_by_id(
          spec_.target_sp, sid);
      if (account != nullptr &&
          account->state == LocalAccount::State::kDeprovisioned)
        return deny("no local account");
    }

    Decision decision = authorize({spec_.target_sp, target->authz_rules},
                                  sp_view);
    if (!decision.granted) return deny(decision.reason);

    if (needs_account) {
      const LocalAccount* account =
          state_.accounts.find_by_id(spec_.target_sp, sid);
      if (account == nullptr) {
        LocalAccount created = provision_local(
            t, state_.accounts, spec_.target_sp, sid, sp_view.statements);
        std::string privileges;
        for (const auto& p : created.privileges) {
          if (!privileges.empty()) privileges += ",";
          privileges += p;
        }
        emit(5, spec_.target_sp, kActProvision,
             {{"account", created.account_name}, {"privileges", privileges}});
        PrincipalRecord* record = state_.providers.find_principal(spec_.user);
        if (record != nullptr)
          record->local_accounts.emplace_back(spec_.target_sp,
                                              created.account_name);
      }
    }

    emit(5, spec_.target_sp, kActAuthorize,
         {{"decision", "granted"}, {"subject", sid.render()}});

    PrincipalRecord* record = state_.providers.find_principal(spec_.user);
    if (record != nullptr && !record->persistent_unique_id)
      record->persistent_unique_id = sid;

    return {Decision::grant(), std::move(trace_)};
  }
};

}  // namespace

FlowResult run_flow(SimState& state, const FlowSpec& spec) {
  FlowRunner runner(state, spec);
  FlowResult result = runner.run();
  state.flow_index += 1;
  return result;
}

std::string trace_to_jsonl(const FlowTrace& trace) {
  std::ostringstream out;
  for (const auto& event : trace) {
    nlohmann::ordered_json line;
    line["seq"] = event.seq;
    line["step"] = event.step;
    line["actor"] = event.actor.value;
    line["action"] = event.action;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto& [key, value] : event.summary) summary[key] = value;
    line["summary"] = std::move(summary);
    out << line.dump() << "\n";
  }
  return out.str();
}

FlowTrace trace_from_jsonl(const std::string& text) {
  FlowTrace trace;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
    if (!parsed.is_object() || !parsed.contains("seq") ||
        !parsed.contains("step") || !parsed.contains("actor") ||
        !parsed.contains("action") || !parsed.contains("summary"))
      throw LoadError("unparseable",
                      "trace line " + std::to_string(lineno));
    FlowEvent event;
    event.seq = parsed["seq"].get<int>();
    event.step = parsed["step"].get<int>();
    event.actor = EntityId(parsed["actor"].get<std::string>());
    event.action = parsed["action"].get<std::string>();
    for (const auto& [key, value] : parsed["summary"].items())
      event.summary[key] = value.get<std::string>();
    trace.push_back(std::move(event));
  }
  return trace;
}

namespace {

bool skeleton_match(const FlowEvent& event, const SkeletonEvent& expected) {
  if (event.step != expected.step || event.action != expected.action)
    return false;
  auto kind = event.summary.find("actor-kind");
  return kind != event.summary.end() && kind->second == expected.actor_kind;
}

SkeletonEvent project(const FlowEvent& event) {
  SkeletonEvent out;
  out.step = event.step;
  out.action = event.action;
  auto kind = event.summary.find("actor-kind");
  if (kind != event.summary.end()) out.actor_kind = kind->second;
  return out;
}

}  // namespace

std::vector<TraceDiff> diff_trace(const FlowTrace& actual,
                                  const TraceSkeleton& skeleton) {
  std::vector<TraceDiff> diffs;

  if (skeleton.strict) {
    const std::size_t n = std::max(actual.size(), skeleton.events.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= actual.size()) {
        diffs.push_back({i, skeleton.events[i], "missing event"});
      } else if (i >= skeleton.events.size()) {
        diffs.push_back({i, project(actual[i]), "unexpected extra event"});
      } else if (!skeleton_match(actual[i], skeleton.events[i])) {
        SkeletonEvent got = project(actual[i]);
        diffs.push_back({i, skeleton.events[i],
                         "mismatch, got (" + std::to_string(got.step) + ", " +
                             got.actor_kind + ", " + got.action + ")"});
      }
    }
    return diffs;
  }

  // Subsequence matching: greedy forward scan; an unmatched expected
  // triple yields one diff and the scan position stays put.
  std::size_t pos = 0;
  for (std::size_t i = 0; i < skeleton.events.size(); ++i) {
    std::size_t j = pos;
    while (j < actual.size() && !skeleton_match(actual[j], skeleton.events[i]))
      ++j;
    if (j < actual.size()) {
      pos = j + 1;
    } else {
      diffs.push_back({i, skeleton.events[i], "missing event"});
    }
  }
  return diffs;
}

}  // namespace fedsim
