#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fedsim/proxy.hpp"
#include "fedsim/translation.hpp"
#include "reference_digest.hpp"
#include "test_support.hpp"

using namespace fedsim;

TEST_CASE("derive_unique_id: persistence, issuer separation, digest oracle") {
  IdRegistry registry;

  ScopedId first = registry.derive(EntityId("idp:a"), "alice", "x.example");
  ScopedId again = registry.derive(EntityId("idp:a"), "alice", "x.example");
  CHECK(first == again);
  CHECK(first.valid());
  CHECK(first.render() == first.local_part + "@x.example");

  ScopedId other = registry.derive(EntityId("idp:b"), "alice", "x.example");
  CHECK(other.local_part != first.local_part);

  // Independent digest oracle over the documented canonical string, for
  // 50 random (issuer, subject) pairs.
  std::mt19937_64 rng(43);
  for (int i = 0; i < 50; ++i) {
    std::string issuer = "idp:" + testsupport::random_token(rng, 8);
    std::string subject = testsupport::random_token(rng, 10);
    ScopedId derived =
        registry.derive(EntityId(issuer), subject, "oracle.example");
    std::string expected =
        refdigest::to_hex(refdigest::sha256(issuer + "|" + subject))
            .substr(0, 32);
    CHECK(derived.local_part == expected);
  }

  CHECK_THROWS_AS(registry.derive(EntityId(""), "x", "s"), Error);
  CHECK_THROWS_AS(registry.derive(EntityId("idp:a"), "", "s"), Error);
}

TEST_CASE("registry bindings are append-only and non-reassignable") {
  IdRegistry registry;
  std::mt19937_64 rng(47);
  std::map<std::pair<std::string, std::string>, std::string> seen;

  for (int i = 0; i < 2000; ++i) {
    std::string issuer = "idp:" + std::to_string(rng() % 50);
    std::string subject = "s" + std::to_string(rng() % 400);
    ScopedId id = registry.derive(EntityId(issuer), subject, "reg.example");
    auto key = std::make_pair(issuer, subject);
    auto it = seen.find(key);
    if (it != seen.end()) {
      CHECK(it->second == id.render());  // never rebinds
    } else {
      seen.emplace(key, id.render());
    }
  }

  // Reverse injectivity over everything seen.
  std::map<std::string, std::pair<std::string, std::string>> reverse;
  for (const auto& [key, rendered] : seen) {
    auto [it, inserted] = reverse.emplace(rendered, key);
    if (!inserted) CHECK(it->second == key);
  }
  CHECK(registry.check_consistency().empty());
}

TEST_CASE("registry snapshots round-trip and catch violations") {
  IdRegistry registry;
  registry.derive(EntityId("idp:a"), "alice", "snap.example");
  registry.derive(EntityId("idp:b"), "bob", "snap.example");
  registry.link_alias(EntityId("social:g"), "alice.g", EntityId("idp:a"),
                      "alice");

  std::string snapshot = registry.export_snapshot();
  IdRegistry imported = IdRegistry::import_snapshot(snapshot);
  CHECK(imported.export_snapshot() == snapshot);
  CHECK(imported.bindings() == registry.bindings());
  CHECK(imported.aliases() == registry.aliases());
  CHECK(imported.check_consistency().empty());

  // A doctored snapshot that rebinds one ScopedId to two identities.
  std::string corrupt = "fedsim-registry v1\n";
  std::string id = std::string(32, 'c') + "@snap.example";
  corrupt += "binding idp:a alice " + id + "\n";
  corrupt += "binding idp:b mallory " + id + "\n";
  IdRegistry bad = IdRegistry::import_snapshot(corrupt);
  auto findings = bad.check_consistency();
  REQUIRE_FALSE(findings.empty());
  CHECK(findings[0].find("non-reassignment") != std::string::npos);
}

TEST_CASE("aliases map linked identities to the first-seen binding") {
  IdRegistry registry;
  ScopedId primary = registry.derive(EntityId("idp:a"), "alice", "x.example");
  registry.link_alias(EntityId("social:g"), "alice.g", EntityId("idp:a"),
                      "alice");
  ScopedId via_alias =
      registry.derive(EntityId("social:g"), "alice.g", "x.example");
  CHECK(via_alias == primary);
}

TEST_CASE("harmonize: rename, raw-prefix, idempotence") {
  std::map<std::string, std::string> mapping = {
      {"eduPersonAffiliation", "affiliation"}};

  auto raw = std::vector<AttributeStatement>{
      testsupport::make_statement("eduPersonAffiliation", "member", "idp:a"),
      testsupport::make_statement("schacHomeOrganization", "uni-a", "idp:a"),
      testsupport::make_statement("mail", "a@b", "idp:a"),
  };
  auto out = harmonize(mapping, raw);
  REQUIRE(out.size() == 3);
  // Sorted by (name, issuer, value): affiliation, mail, raw:schac...
  CHECK(out[0].name == "affiliation");
  CHECK(out[0].value == "member");
  CHECK(out[1].name == "mail");
  CHECK(out[2].name == "raw:schacHomeOrganization");
  CHECK(out[2].value == "uni-a");

  SUBCASE("empty mapping raw-prefixes every non-canonical name") {
    auto prefixed = harmonize({}, raw);
    std::set<std::string> names;
    for (const auto& s : prefixed) names.insert(s.name);
    CHECK(names == std::set<std::string>{"raw:eduPersonAffiliation",
                                         "raw:schacHomeOrganization", "mail"});
  }

  SUBCASE("idempotent on its own output, 30 random inputs") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<AttributeStatement> input;
      for (int i = 0, n = int(rng() % 6); i < n; ++i) {
        std::string name;
        switch (rng() % 3) {
          case 0: name = "eduPersonAffiliation"; break;
          case 1: name = "group"; break;
          default: name = testsupport::random_token(rng, 6); break;
        }
        input.push_back(testsupport::make_statement(
            name, testsupport::random_token(rng, 4), "idp:a"));
      }
      auto once = harmonize(mapping, input);
      auto twice = harmonize(mapping, once);
      CHECK(once == twice);
    }
  }
}

TEST_CASE("handle_sp_request rewrites the requester to the proxy") {
  Topology t = testsupport::base_topology();

  AuthnRequest inner;
  inner.requester = EntityId("sp:internal");
  inner.audience = EntityId("proxy:infra");
  inner.wanted_attributes = {"only-this"};

  AuthnRequest upstream = handle_sp_request(t, EntityId("proxy:infra"), inner,
                                            EntityId("idp:uni-a"));
  CHECK(upstream.requester.value == "proxy:infra");
  CHECK(upstream.audience.value == "idp:uni-a");
  // The proxy's configured upstream set, independent of the SP's wants.
  CHECK(upstream.wanted_attributes ==
        std::vector<std::string>{"display-name", "mail", "affiliation"});

  AuthnRequest foreign;
  foreign.requester = EntityId("sp:direct");
  foreign.audience = EntityId("proxy:infra");
  CHECK_THROWS_WITH_AS(handle_sp_request(t, EntityId("proxy:infra"), foreign,
                                         EntityId("idp:uni-a")),
                       doctest::Contains("not my internal SP"), Error);

  // Field isolation over varied internal wants.
  std::mt19937_64 rng(59);
  for (int i = 0; i < 10; ++i) {
    AuthnRequest varied = inner;
    varied.wanted_attributes.clear();
    for (int j = 0, n = int(rng() % 5); j < n; ++j)
      varied.wanted_attributes.push_back(testsupport::random_token(rng, 5));
    AuthnRequest up = handle_sp_request(t, EntityId("proxy:infra"), varied,
                                        EntityId("idp:uni-a"));
    CHECK(up.wanted_attributes == upstream.wanted_attributes);
  }
}

namespace {

AggregationContext make_ctx(const Topology& t, AaState& aa,
                            IdRegistry& registry) {
  AggregationContext ctx;
  ctx.topology = &t;
  ctx.aa_state = &aa;
  ctx.registry = &registry;
  ctx.aggregator = EntityId("proxy:infra");
  ctx.upstream_issuer = EntityId("idp:uni-a");
  ctx.upstream_subject = "alice01";
  return ctx;
}

}  // namespace

TEST_CASE("aggregate: degenerate case has home statements plus unique-id") {
  Topology t = testsupport::base_topology();
  t.entities.at(EntityId("proxy:infra")).attribute_sources.clear();
  AaState aa;
  aa.seed(t);
  IdRegistry registry;

  auto home = std::vector<AttributeStatement>{
      testsupport::make_statement("eduPersonAffiliation", "member", "idp:uni-a",
                                  Loa::kSubstantial)};
  CompositeIdentity cid = aggregate(make_ctx(t, aa, registry), home);

  REQUIRE(cid.statements.size() == 2);
  CHECK(cid.statements[0].name == "affiliation");  // harmonized
  CHECK(cid.statements[1].name == "unique-id");
  CHECK(cid.statements[1].value == cid.persistent_unique_id.render());
  CHECK(cid.effective_loa == Loa::kSubstantial);
  REQUIRE(cid.source_log.size() == 1);
  CHECK(cid.source_log[0].second == 1);
}

TEST_CASE("aggregate composes home and community attributes") {
  Topology t = testsupport::base_topology();
  AaState aa;
  aa.seed(t);
  IdRegistry registry;

  auto home = std::vector<AttributeStatement>{
      testsupport::make_statement("eduPersonAffiliation", "member", "idp:uni-a",
                                  Loa::kSubstantial)};
  CompositeIdentity cid = aggregate(make_ctx(t, aa, registry), home);

  std::multiset<std::string> names;
  for (const auto& s : cid.statements) names.insert(s.name);
  CHECK(names == std::multiset<std::string>{"affiliation", "group", "role",
                                            "unique-id"});

  // Exactly one unique-id statement, bound to the ScopedId.
  int unique_ids = 0;
  for (const auto& s : cid.statements)
    if (s.name == "unique-id") ++unique_ids;
  CHECK(unique_ids == 1);

  // AA statements do not raise the effective LoA above home.
  CHECK(cid.effective_loa == Loa::kSubstantial);
}

TEST_CASE("aggregate: required source unavailable fails, optional skips") {
  Topology t = testsupport::base_topology();
  AaState aa;
  aa.seed(t);
  IdRegistry registry;
  auto home = std::vector<AttributeStatement>{};

  t.entities.at(EntityId("aa:community")).offline = true;
  CompositeIdentity cid = aggregate(make_ctx(t, aa, registry), home);
  REQUIRE(cid.source_log.size() == 2);
  CHECK(cid.source_log[1].second == -1);  // skipped

  t.entities.at(EntityId("proxy:infra")).attribute_sources[0].required = true;
  CHECK_THROWS_WITH_AS(aggregate(make_ctx(t, aa, registry), home),
                       doctest::Contains("required source unavailable"),
                       Error);
}

TEST_CASE("merge agrees with a brute-force oracle over small inputs") {
  // Brute force: recompute the documented precedence rules from scratch
  // over <=4 statements per source, two sources.
  const std::vector<std::string> names = {"group", "display-name", "custom-x"};
  std::mt19937_64 rng(61);

  auto random_statements = [&](const std::string& issuer, int max_count) {
    std::vector<AttributeStatement> out;
    for (int i = 0, n = int(rng() % (max_count + 1)); i < n; ++i) {
      out.push_back(testsupport::make_statement(
          names[rng() % names.size()], "v" + std::to_string(int(rng() % 3)),
          issuer));
    }
    return out;
  };

  for (int trial = 0; trial < 200; ++trial) {
    auto home = random_statements("idp:home", 4);
    std::vector<std::vector<AttributeStatement>> sources = {
        random_statements("aa:one", 4), random_statements("aa:two", 4)};

    auto merged = merge_statements(home, sources);

    // Oracle.
    std::vector<AttributeStatement> expected;
    auto add_unique = [&expected](const AttributeStatement& s) {
      if (std::find(expected.begin(), expected.end(), s) == expected.end())
        expected.push_back(s);
    };
    std::set<std::string> all_names;
    for (const auto& s : home) all_names.insert(s.name);
    for (const auto& list : sources)
      for (const auto& s : list) all_names.insert(s.name);

    for (const auto& name : all_names) {
      bool community = name == "group" || name == "role";
      bool home_owned =
          name == "display-name" || name == "mail" || name == "affiliation";
      if (community) {
        bool any = false;
        for (const auto& list : sources)
          for (const auto& s : list)
            if (s.name == name) {
              add_unique(s);
              any = true;
            }
        if (!any)
          for (const auto& s : home)
            if (s.name == name) add_unique(s);
      } else if (home_owned) {
        bool from_home = false;
        for (const auto& s : home)
          if (s.name == name) {
            add_unique(s);
            from_home = true;
          }
        if (!from_home) {
          for (auto it = sources.rbegin(); it != sources.rend(); ++it) {
            bool found = false;
            for (const auto& s : *it)
              if (s.name == name) {
                add_unique(s);
                found = true;
              }
            if (found) break;
          }
        }
      } else {
        for (const auto& s : home)
          if (s.name == name) add_unique(s);
        for (const auto& list : sources)
          for (const auto& s : list)
            if (s.name == name) add_unique(s);
      }
    }
    sort_statements(expected);

    CHECK(merged == expected);
  }
}

TEST_CASE("aggregation is order-stable for equal-precedence sources") {
  // Permuting the contents of one source list leaves the merge unchanged.
  std::mt19937_64 rng(67);
  auto a = std::vector<AttributeStatement>{
      testsupport::make_statement("group", "vo-a", "aa:one"),
      testsupport::make_statement("group", "vo-b", "aa:one"),
      testsupport::make_statement("custom", "1", "aa:one"),
  };
  auto home = std::vector<AttributeStatement>{
      testsupport::make_statement("affiliation", "member", "idp:home")};
  auto merged = merge_statements(home, {a});
  for (int i = 0; i < 10; ++i) {
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(merge_statements(home, {shuffled}) == merged);
  }
}

TEST_CASE("issue_downstream: assertion native, policy filtered, translated") {
  Topology t = testsupport::base_topology();
  AaState aa;
  aa.seed(t);
  IdRegistry registry;
  ProviderDirectory dir;
  dir.seed(t);

  auto home = std::vector<AttributeStatement>{
      testsupport::make_statement("eduPersonAffiliation", "member", "idp:uni-a",
                                  Loa::kSubstantial)};
  CompositeIdentity cid = aggregate(make_ctx(t, aa, registry), home);

  SUBCASE("saml-like target gets an assertion with the ScopedId subject") {
    DownstreamIssue issued =
        issue_downstream(t, &dir, EntityId("proxy:infra"),
                         EntityId("sp:internal"), cid,
                         Technology::kSamlLike, 5000);
    CHECK(issued.hops.empty());
    const Assertion& a = std::get<Assertion>(issued.credential);
    CHECK(a.subject == cid.persistent_unique_id.render());
    CHECK(a.issuer.value == "proxy:infra");
    CHECK(a.audience.value == "sp:internal");
  }

  SUBCASE("x509-like target invokes translation, subject preserved") {
    DownstreamIssue issued =
        issue_downstream(t, &dir, EntityId("proxy:infra"),
                         EntityId("sp:nonweb"), cid, Technology::kX509Like,
                         5000);
    REQUIRE(issued.hops.size() == 1);
    CHECK(issued.hops[0].translator.value == "proxy:infra");
    const CertChain& chain = std::get<CertChain>(issued.credential);
    CHECK(chain.certs.front().subject_name ==
          cid.persistent_unique_id.render());
  }

  SUBCASE("released set equals composite intersect policy, 20 policies") {
    std::mt19937_64 rng(71);
    const std::vector<std::string> universe = {
        "unique-id", "affiliation", "display-name", "group", "role", "mail"};
    for (int trial = 0; trial < 20; ++trial) {
      std::set<std::string> policy;
      for (const auto& name : universe)
        if (rng() % 2 == 0) policy.insert(name);
      Topology varied = t;
      varied.release_policies[{EntityId("proxy:infra"),
                               EntityId("sp:internal")}] = policy;
      DownstreamIssue issued =
          issue_downstream(varied, &dir, EntityId("proxy:infra"),
                           EntityId("sp:internal"), cid,
                           Technology::kSamlLike, 5000);
      std::set<std::string> composite_names;
      for (const auto& s : cid.statements) composite_names.insert(s.name);
      std::set<std::string> expected;
      for (const auto& name : composite_names)
        if (policy.count(name) > 0) expected.insert(name);
      std::set<std::string> released(issued.released_names.begin(),
                                     issued.released_names.end());
      CHECK(released == expected);
    }
  }
}

TEST_CASE("non-targeted: the ScopedId is identical for every internal SP") {
  Topology t = testsupport::base_topology();
  AaState aa;
  aa.seed(t);
  IdRegistry registry;
  ProviderDirectory dir;
  dir.seed(t);

  auto ctx = make_ctx(t, aa, registry);
  CompositeIdentity via_first = aggregate(ctx, {});
  CompositeIdentity via_second = aggregate(ctx, {});
  CHECK(via_first.persistent_unique_id == via_second.persistent_unique_id);

  DownstreamIssue one =
      issue_downstream(t, &dir, EntityId("proxy:infra"),
                       EntityId("sp:internal"), via_first,
                       Technology::kSamlLike, 5000);
  DownstreamIssue two =
      issue_downstream(t, &dir, EntityId("proxy:infra"),
                       EntityId("sp:nonweb"), via_second,
                       Technology::kX509Like, 5000);
  CHECK(credential_subject(one.credential) ==
        credential_subject(two.credential));
}
