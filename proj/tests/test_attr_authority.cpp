#include <random>
#include <set>

#include "doctest.h"
#include "fedsim/attr_authority.hpp"
#include "fedsim/claims.hpp"
#include "fedsim/providers.hpp"
#include "test_support.hpp"

using namespace fedsim;

namespace {

struct Env {
  Topology t = testsupport::base_topology();
  ProviderDirectory dir;
  AaState aa;
  Env() {
    dir.seed(t);
    aa.seed(t);
  }
};

CertChain voms_ready_chain(Env& env, Timestamp now) {
  CertChain ee = issue_certificate(env.t, env.dir, EntityId("ca:grid"),
                                   *env.dir.find_principal("alice"), 34128000,
                                   now);
  return create_proxy_cert(env.t.anchors, ee, "cn=alice/proxy", 43200, now);
}

}  // namespace

TEST_CASE("query_attributes returns group and role statements") {
  Env env;
  auto statements =
      query_attributes(env.t, env.aa, EntityId("aa:community"),
                       aa_key_home(EntityId("idp:uni-a"), "alice01"),
                       EntityId("proxy:infra"));
  REQUIRE(statements.size() == 2);
  CHECK(statements[0].name == "group");
  CHECK(statements[0].value == "vo-atlas");
  CHECK(statements[1].name == "role");
  CHECK(statements[1].value == "vo-atlas:production");
  for (const auto& s : statements) {
    CHECK(s.delivery == Delivery::kPull);
    CHECK(s.issuer.value == "aa:community");
    CHECK(s.loa <= Loa::kSubstantial);
  }
}

TEST_CASE("query_attributes: unknown subject is empty, untrusted requester errors") {
  Env env;
  CHECK(query_attributes(env.t, env.aa, EntityId("aa:community"),
                         aa_key_home(EntityId("idp:uni-a"), "ghost"),
                         EntityId("proxy:infra"))
            .empty());

  CHECK_THROWS_WITH_AS(
      query_attributes(env.t, env.aa, EntityId("aa:community"),
                       aa_key_home(EntityId("idp:uni-a"), "alice01"),
                       EntityId("sp:internal")),
      doctest::Contains("unknown relying party"), Error);
}

TEST_CASE("query release equals stored intersect policy over random policies") {
  Env env;
  const std::vector<std::string> universe = {"group", "role", "mail",
                                             "display-name"};
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::string> policy;
    for (const auto& name : universe)
      if (rng() % 2 == 0) policy.insert(name);
    Topology t = env.t;
    t.release_policies[{EntityId("aa:community"), EntityId("proxy:infra")}] =
        policy;

    auto released =
        query_attributes(t, env.aa, EntityId("aa:community"),
                         aa_key_home(EntityId("idp:uni-a"), "alice01"),
                         EntityId("proxy:infra"));
    std::set<std::string> released_names;
    for (const auto& s : released) released_names.insert(s.name);

    std::set<std::string> expected;
    for (const auto& name : {"group", "role"})
      if (policy.count(name) > 0) expected.insert(name);
    CHECK(released_names == expected);
  }
}

TEST_CASE("voms_extend grants held memberships into the leaf extension") {
  Env env;
  CertChain proxied = voms_ready_chain(env, 1000);

  CertChain extended = voms_extend(env.t, env.aa, EntityId("voms:vo"), proxied,
                                   "vo-atlas", {"production"}, 1000);
  const Cert& leaf = extended.certs.front();
  REQUIRE(leaf.attr_extension.size() == 2);
  CHECK(leaf.attr_extension[0].name == "group");
  CHECK(leaf.attr_extension[0].delivery == Delivery::kPush);
  CHECK(leaf.attr_extension[1].name == "role");
  CHECK(leaf.attr_extension[1].value == "vo-atlas:production");
  CHECK(verify_integrity(env.t.anchors, Credential(extended)).valid);
  CHECK(validate_chain(env.t.anchors, extended, 1000).valid);
}

TEST_CASE("voms_extend: role not held, non-member, non-proxy leaf") {
  Env env;
  CertChain proxied = voms_ready_chain(env, 1000);

  CHECK_THROWS_WITH_AS(voms_extend(env.t, env.aa, EntityId("voms:vo"), proxied,
                                   "vo-atlas", {"admin"}, 1000),
                       doctest::Contains("role not held"), Error);
  CHECK_THROWS_WITH_AS(voms_extend(env.t, env.aa, EntityId("voms:vo"), proxied,
                                   "vo-cms", {}, 1000),
                       doctest::Contains("non-member"), Error);

  CertChain plain = issue_certificate(env.t, env.dir, EntityId("ca:grid"),
                                      *env.dir.find_principal("alice"),
                                      34128000, 1000);
  CHECK_THROWS_WITH_AS(voms_extend(env.t, env.aa, EntityId("voms:vo"), plain,
                                   "vo-atlas", {}, 1000),
                       doctest::Contains("non-proxy leaf"), Error);
}

TEST_CASE("voms extension validity equals the documented min bound") {
  // Min-table oracle: leaf lifetimes {1 h, 24 h} crossed with now-offsets.
  const Timestamp leaf_lifetimes[] = {3600, 86400};
  const Timestamp offsets[] = {0, 1800, 40000};
  for (Timestamp leaf_lifetime : leaf_lifetimes) {
    for (Timestamp offset : offsets) {
      Env env;
      const Timestamp issue_at = 1000;
      CertChain ee = issue_certificate(env.t, env.dir, EntityId("ca:grid"),
                                       *env.dir.find_principal("alice"),
                                       34128000, issue_at);
      CertChain proxied = create_proxy_cert(env.t.anchors, ee, "cn=alice/proxy",
                                            leaf_lifetime, issue_at);
      const Timestamp now = issue_at + offset;
      if (now > proxied.certs.front().not_after) continue;  // already expired
      CertChain extended = voms_extend(env.t, env.aa, EntityId("voms:vo"),
                                       proxied, "vo-atlas", {}, now);

      const Timestamp leaf_end = issue_at + leaf_lifetime;
      const Timestamp expected = std::min(leaf_end, now + 43200);
      CHECK(extended.certs.front().not_after == expected);
    }
  }
}

TEST_CASE("userinfo resolves reference tokens and respects expiry") {
  Env env;
  auto issued = authenticate_oidc(env.t, env.dir, EntityId("op:uni-a"),
                                  *env.dir.find_principal("alice"),
                                  EntityId("proxy:infra"), OidcMode::kCode,
                                  1000);
  TokenSet token = redeem_code(env.t, env.dir, EntityId("op:uni-a"),
                               std::get<AuthCode>(issued),
                               EntityId("proxy:infra"), 1001);

  auto claims = userinfo(env.t, env.dir, EntityId("op:uni-a"), token.access,
                         1100);
  auto sub = claims.find("sub");
  REQUIRE(sub != claims.end());
  CHECK(sub->second == "alice-op");

  CHECK_THROWS_WITH_AS(userinfo(env.t, env.dir, EntityId("op:uni-a"),
                                token.access, token.not_after + 1),
                       doctest::Contains("expired"), Error);

  CHECK_THROWS_WITH_AS(
      userinfo(env.t, env.dir, EntityId("op:uni-a"),
               TokenAccess(ReferenceAccess{"ref-nope"}), 1100),
      doctest::Contains("unknown reference"), Error);
}

TEST_CASE("userinfo claims match issuance-time claims (cross-endpoint)") {
  Env env;
  auto pushed = authenticate_oidc(env.t, env.dir, EntityId("op:uni-a"),
                                  *env.dir.find_principal("alice"),
                                  EntityId("proxy:infra"),
                                  OidcMode::kSelfContained, 1000);
  const TokenSet& token = std::get<TokenSet>(pushed);

  auto claims = userinfo(env.t, env.dir, EntityId("op:uni-a"), token.access,
                         1100);

  auto statements_at_issue = statements_from_claims(
      token.id_claims, EntityId("op:uni-a"), Delivery::kPull);
  auto statements_at_userinfo =
      statements_from_claims(claims, EntityId("op:uni-a"), Delivery::kPull);
  CHECK(statements_at_issue == statements_at_userinfo);
}

TEST_CASE("manage_membership: write-read, cascade, authorization") {
  Env env;
  const EntityId aa("aa:community");
  const std::string key = aa_key_home(EntityId("idp:uni-a"), "bob77");

  CHECK_THROWS_WITH_AS(
      manage_membership(env.t, env.aa, aa, "mallory",
                        MembershipChange::kAddGroup, key, "vo-elixir"),
      doctest::Contains("unauthorized admin"), Error);

  manage_membership(env.t, env.aa, aa, "root", MembershipChange::kAddGroup,
                    key, "vo-elixir");
  auto statements = query_attributes(env.t, env.aa, aa, key,
                                     EntityId("proxy:infra"));
  bool found = false;
  for (const auto& s : statements)
    if (s.name == "group" && s.value == "vo-elixir") found = true;
  CHECK(found);

  manage_membership(env.t, env.aa, aa, "root", MembershipChange::kAddRole, key,
                    "vo-elixir", "curator");
  manage_membership(env.t, env.aa, aa, "root", MembershipChange::kRemoveGroup,
                    key, "vo-elixir");
  statements = query_attributes(env.t, env.aa, aa, key, EntityId("proxy:infra"));
  for (const auto& s : statements) {
    CHECK(s.value.rfind("vo-elixir", 0) != 0);  // roles cascaded away
  }

  CHECK_THROWS_WITH_AS(
      manage_membership(env.t, env.aa, aa, "root",
                        MembershipChange::kRemoveGroup, key, "vo-elixir"),
      doctest::Contains("removing nonexistent membership"), Error);
}

TEST_CASE("random membership sequences agree with a reference set model") {
  Env env;
  const EntityId aa("aa:community");
  const std::string key = aa_key_home(EntityId("idp:uni-a"), "model-subject");

  // Reference model: plain sets with the documented cascade rule.
  std::set<std::string> model_groups;
  std::set<std::pair<std::string, std::string>> model_roles;

  std::mt19937_64 rng(41);
  const std::string groups[] = {"g1", "g2", "g3"};
  const std::string roles[] = {"r1", "r2"};

  for (int step = 0; step < 300; ++step) {
    int op = int(rng() % 4);
    std::string group = groups[rng() % 3];
    std::string role = roles[rng() % 2];
    bool model_ok = true;

    switch (op) {
      case 0:
        model_groups.insert(group);
        break;
      case 1:
        if (model_groups.count(group) == 0) {
          model_ok = false;
        } else {
          model_groups.erase(group);
          std::erase_if(model_roles,
                        [&](const auto& r) { return r.first == group; });
        }
        break;
      case 2:
        if (model_groups.count(group) == 0) {
          model_ok = false;
        } else {
          model_roles.insert({group, role});
        }
        break;
      case 3:
        if (model_roles.count({group, role}) == 0) {
          model_ok = false;
        } else {
          model_roles.erase({group, role});
        }
        break;
    }

    bool impl_ok = true;
    try {
      manage_membership(env.t, env.aa, aa, "root",
                        static_cast<MembershipChange>(op), key, group, role);
    } catch (const Error&) {
      impl_ok = false;
    }
    CHECK(impl_ok == model_ok);
  }

  // Final state agrees with the model.
  std::set<std::string> impl_groups;
  std::set<std::pair<std::string, std::string>> impl_roles;
  for (const auto& s :
       query_attributes(env.t, env.aa, aa, key, EntityId("proxy:infra"))) {
    if (s.name == "group") impl_groups.insert(s.value);
    if (s.name == "role") {
      auto colon = s.value.rfind(':');
      impl_roles.insert(
          {s.value.substr(0, colon), s.value.substr(colon + 1)});
    }
  }
  CHECK(impl_groups == model_groups);
  CHECK(impl_roles == model_roles);

  // Cascade invariant: every role's group is present.
  for (const auto& [group, role] : impl_roles) {
    (void)role;
    CHECK(impl_groups.count(group) == 1);
  }
}
