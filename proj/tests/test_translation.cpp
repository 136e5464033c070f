#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fedsim/claims.hpp"
#include "fedsim/providers.hpp"
#include "fedsim/proxy.hpp"
#include "fedsim/translation.hpp"
#include "test_support.hpp"

using namespace fedsim;

namespace {

Assertion upstream_assertion(const Topology& t, Timestamp now,
                             Timestamp lifetime) {
  Assertion a;
  a.subject = std::string(32, 'a') + "@infra.example";
  a.issuer = EntityId("proxy:infra");
  a.audience = EntityId("sp:internal");
  a.auth_instant = now;
  a.not_before = now;
  a.not_after = now + lifetime;
  a.attributes = {
      testsupport::make_statement("affiliation", "member", "idp:uni-a",
                                  Loa::kSubstantial),
      testsupport::make_statement("group", "vo-atlas", "aa:community",
                                  Loa::kSubstantial, Delivery::kPull),
  };
  Credential c = a;
  seal_credential(t.anchors, a.issuer, c);
  return std::get<Assertion>(c);
}

// Independent chain validator for the delegation oracle: re-checks
// linkage, anchoring, windows, nesting and depth from the rules, written
// as a flat predicate rather than staged checks.
bool oracle_chain_valid(const TrustAnchorRegistry& anchors,
                        const CertChain& chain, Timestamp now) {
  if (chain.certs.empty()) return false;
  const EntityId& authority = chain.certs.back().integrity.issuer;
  const Bytes* key = anchors.find_key(authority);
  if (key == nullptr) return false;

  std::size_t first_non_proxy = chain.certs.size();
  for (std::size_t i = 0; i < chain.certs.size(); ++i) {
    const Cert& cert = chain.certs[i];
    if (cert.integrity.issuer != authority) return false;
    if (hmac_sha256(*key, canonical_serialize_cert(cert)) != cert.integrity.tag)
      return false;
    if (now < cert.not_before || now > cert.not_after) return false;
    if (i + 1 < chain.certs.size() &&
        cert.issuer_name != chain.certs[i + 1].subject_name)
      return false;
    if (!cert.is_proxy && first_non_proxy == chain.certs.size())
      first_non_proxy = i;
    if (cert.is_proxy && first_non_proxy != chain.certs.size()) return false;
  }
  if (first_non_proxy == chain.certs.size()) return false;

  for (std::size_t i = 0; i < first_non_proxy; ++i) {
    const Cert& proxy = chain.certs[i];
    const Cert& parent = chain.certs[i + 1];
    if (proxy.not_before < parent.not_before) return false;
    if (proxy.not_after > parent.not_after) return false;
    if (proxy.remaining_delegation_depth < 0) return false;
    if (proxy.remaining_delegation_depth >= parent.remaining_delegation_depth)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("translate: assertion to cert chain preserves subject, caps lifetime") {
  Topology t = testsupport::base_topology();
  Assertion input = upstream_assertion(t, 1000, 300);

  Credential out = translate(t, nullptr, EntityId("proxy:infra"),
                             Credential(input), Technology::kX509Like, 1000);
  const CertChain& chain = std::get<CertChain>(out);
  CHECK(chain.certs.front().subject_name == input.subject);
  // Route lifetime is 43200 s but only 300 s remain on the assertion.
  CHECK(chain.certs.front().not_after == input.not_after);
  CHECK(verify_integrity(t.anchors, out).valid);

  // Attribute statements carried over unchanged except delivery.
  auto in_names = credential_statements(Credential(input));
  auto out_names = credential_statements(out);
  REQUIRE(in_names.size() == out_names.size());
  for (std::size_t i = 0; i < in_names.size(); ++i) {
    CHECK(out_names[i].name == in_names[i].name);
    CHECK(out_names[i].value == in_names[i].value);
    CHECK(out_names[i].issuer == in_names[i].issuer);
    CHECK(out_names[i].loa == in_names[i].loa);
    CHECK(out_names[i].delivery == Delivery::kPush);
  }
}

TEST_CASE("translate: identity route reissues claims-equivalent credential") {
  Topology t = testsupport::base_topology();
  t.entities.at(EntityId("proxy:infra"))
      .routes.push_back({Technology::kSamlLike, Technology::kSamlLike, 600});

  Assertion input = upstream_assertion(t, 1000, 300);
  Credential out = translate(t, nullptr, EntityId("proxy:infra"),
                             Credential(input), Technology::kSamlLike, 1000);
  const Assertion& reissued = std::get<Assertion>(out);
  CHECK(reissued.subject == input.subject);
  CHECK(reissued.issuer.value == "proxy:infra");
  CHECK(credential_statements(out) == credential_statements(Credential(input)));
}

TEST_CASE("translate: distinct errors for no route, expired, unverifiable") {
  Topology t = testsupport::base_topology();
  Assertion input = upstream_assertion(t, 1000, 300);

  CHECK_THROWS_WITH_AS(
      translate(t, nullptr, EntityId("sp:direct"), Credential(input),
                Technology::kX509Like, 1000),
      doctest::Contains("no route"), Error);

  CHECK_THROWS_WITH_AS(
      translate(t, nullptr, EntityId("proxy:infra"), Credential(input),
                Technology::kX509Like, input.not_after + 1),
      doctest::Contains("expired input"), Error);

  Assertion tampered = input;
  tampered.attributes[0].value = "staff";
  CHECK_THROWS_WITH_AS(
      translate(t, nullptr, EntityId("proxy:infra"), Credential(tampered),
                Technology::kX509Like, 1000),
      doctest::Contains("unverifiable input"), Error);
}

TEST_CASE("assertion -> token -> assertion round trip is lossless") {
  Topology t = testsupport::base_topology();
  std::mt19937_64 rng(73);
  std::uniform_int_distribution<int> level(0, 2);

  for (int trial = 0; trial < 30; ++trial) {
    Assertion input = upstream_assertion(t, 1000, 3000);
    input.attributes.clear();
    for (int i = 0, n = 1 + int(rng() % 4); i < n; ++i) {
      AttributeStatement s = testsupport::make_statement(
          "attr" + std::to_string(int(rng() % 5)),
          testsupport::random_token(rng, 5),
          rng() % 2 ? "idp:uni-a" : "aa:community",
          static_cast<Loa>(level(rng)));
      if (rng() % 3 == 0) s.scope = "scoped.example";
      input.attributes.push_back(s);
    }
    Credential sealed = input;
    seal_credential(t.anchors, input.issuer, sealed);

    Credential token = translate(t, nullptr, EntityId("proxy:infra"), sealed,
                                 Technology::kOidcLike, 1000);
    Credential back = translate(t, nullptr, EntityId("proxy:infra"), token,
                                Technology::kSamlLike, 1000);

    CHECK(credential_subject(back) == credential_subject(sealed));
    // Statement multisets modulo the delivery flag, which translate
    // rewrites by contract.
    auto normalize = [](std::vector<AttributeStatement> v) {
      for (auto& s : v) s.delivery = Delivery::kPush;
      sort_statements(v);
      return v;
    };
    CHECK(normalize(credential_statements(back)) ==
          normalize(credential_statements(sealed)));
  }
}

TEST_CASE("create_proxy_cert decrements depth until exhaustion") {
  Topology t = testsupport::base_topology();
  ProviderDirectory dir;
  dir.seed(t);
  CertChain chain = issue_certificate(t, dir, EntityId("ca:grid"),
                                      *dir.find_principal("alice"), 34128000,
                                      1000);
  CHECK(chain.certs.front().remaining_delegation_depth == 3);

  for (int expected_depth : {2, 1, 0}) {
    chain = create_proxy_cert(t.anchors, chain,
                              "cn=alice/p" + std::to_string(expected_depth),
                              3600, 1000);
    CHECK(chain.certs.front().remaining_delegation_depth == expected_depth);
    CHECK(chain.certs.front().is_proxy);
    CHECK(validate_chain(t.anchors, chain, 1000).valid);
  }

  // Fourth consecutive delegation from default depth 3.
  CHECK_THROWS_WITH_AS(
      create_proxy_cert(t.anchors, chain, "cn=alice/p-1", 3600, 1000),
      doctest::Contains("depth exhausted"), Error);
}

TEST_CASE("create_proxy_cert clamps or rejects windows outside the parent") {
  Topology t = testsupport::base_topology();
  ProviderDirectory dir;
  dir.seed(t);
  CertChain chain = issue_certificate(t, dir, EntityId("ca:grid"),
                                      *dir.find_principal("alice"),
                                      kCertLifetimeMinS, 1000);
  const Timestamp parent_end = chain.certs.front().not_after;

  CertChain clamped = create_proxy_cert(t.anchors, chain, "cn=alice/long",
                                        kCertLifetimeMinS * 2, 1000);
  CHECK(clamped.certs.front().not_after == parent_end);

  CHECK_THROWS_WITH_AS(
      create_proxy_cert(t.anchors, chain, "cn=alice/long",
                        kCertLifetimeMinS * 2, 1000, /*clamp=*/false),
      doctest::Contains("window outside parent"), Error);
}

TEST_CASE("validate_chain agrees with the brute-force oracle on a corpus") {
  Topology t = testsupport::base_topology();
  std::mt19937_64 rng(79);
  std::uniform_int_distribution<Timestamp> jitter(-600, 600);
  std::uniform_int_distribution<int> depth_noise(-1, 1);
  const Timestamp now = 50000;

  int corpus = 0;
  int disagreements = 0;
  int valid_count = 0;
  for (int trial = 0; trial < 800; ++trial) {
    Cert root;
    root.subject_name = "root:ca:grid";
    root.issuer_name = root.subject_name;
    root.not_before = 0;
    root.not_after = int64_t{1} << 40;

    Cert ee;
    ee.subject_name = "cn=alice";
    ee.issuer_name = root.subject_name;
    ee.not_before = now - 3000 + jitter(rng);
    ee.not_after = now + 3000 + jitter(rng);
    ee.remaining_delegation_depth = 4;

    CertChain chain;
    chain.certs = {ee, root};
    for (auto& cert : chain.certs) seal_cert(t.anchors, EntityId("ca:grid"), cert);

    const int levels = int(rng() % 5);  // up to depth 4
    for (int d = 0; d < levels; ++d) {
      const Cert& parent = chain.certs.front();
      Cert proxy;
      proxy.subject_name = "cn=alice/p" + std::to_string(d);
      proxy.issuer_name = parent.subject_name;
      proxy.not_before = parent.not_before + jitter(rng);
      proxy.not_after = parent.not_after + jitter(rng);
      proxy.is_proxy = true;
      proxy.remaining_delegation_depth =
          parent.remaining_delegation_depth - 1 + depth_noise(rng);
      // Occasionally break linkage or drop the anchor.
      if (rng() % 17 == 0) proxy.issuer_name += "-broken";
      seal_cert(t.anchors, EntityId("ca:grid"), proxy);
      chain.certs.insert(chain.certs.begin(), proxy);
    }
    if (rng() % 13 == 0 && !chain.certs.empty()) {
      // Tamper after sealing.
      chain.certs[rng() % chain.certs.size()].not_after += 1;
    }

    ++corpus;
    const bool lib = validate_chain(t.anchors, chain, now).valid;
    const bool ref = oracle_chain_valid(t.anchors, chain, now);
    if (lib != ref) ++disagreements;
    if (lib) ++valid_count;
  }
  CHECK(corpus >= 500);
  CHECK(disagreements == 0);
  CHECK(valid_count > 50);  // the corpus exercises both verdicts
}

TEST_CASE("validate_chain returns the end-entity subject and leafward attrs") {
  Topology t = testsupport::base_topology();
  ProviderDirectory dir;
  dir.seed(t);
  CertChain chain = issue_certificate(t, dir, EntityId("ca:grid"),
                                      *dir.find_principal("alice"), 34128000,
                                      1000);

  ChainValidation fresh = validate_chain(t.anchors, chain, 1000);
  CHECK(fresh.valid);
  CHECK(fresh.subject == "cn=alice");
  CHECK(fresh.attrs.empty());

  CertChain delegated =
      create_proxy_cert(t.anchors, chain, "cn=alice/proxy", 3600, 1000);
  ChainValidation with_proxy = validate_chain(t.anchors, delegated, 1000);
  CHECK(with_proxy.valid);
  CHECK(with_proxy.subject == "cn=alice");  // proxies act on its behalf

  // Seeded violation: leaf window exceeding the parent.
  CertChain broken = delegated;
  broken.certs.front().not_after = broken.certs[1].not_after + 10;
  seal_cert(t.anchors, EntityId("ca:grid"), broken.certs.front());
  ChainValidation nested = validate_chain(t.anchors, broken, 1000);
  CHECK_FALSE(nested.valid);
  CHECK(nested.reason == "window not nested");
}

TEST_CASE("provision_local maps privileges and refuses name reuse") {
  Topology t = testsupport::base_topology();
  AccountStore accounts;
  const ScopedId id{std::string("ab") + std::string(30, '0'), "infra.example"};
  auto statements = std::vector<AttributeStatement>{
      testsupport::make_statement("group", "vo-atlas", "aa:community"),
      testsupport::make_statement("role", "vo-atlas:production",
                                  "aa:community"),
      testsupport::make_statement("group", "vo-unmapped", "aa:community"),
  };

  LocalAccount account = provision_local(t, accounts, EntityId("sp:nonweb"),
                                         id, statements);
  CHECK(account.account_name == "uab0000000000");
  CHECK(account.privileges ==
        std::set<std::string>{"atlas-users", "atlas-prod"});
  CHECK(account.state == LocalAccount::State::kActive);

  // Determinism and stability across re-provisioning.
  LocalAccount again = provision_local(t, accounts, EntityId("sp:nonweb"), id,
                                       statements);
  CHECK(again.account_name == account.account_name);

  // sp:internal has no local-account requirement.
  CHECK_THROWS_WITH_AS(
      provision_local(t, accounts, EntityId("sp:internal"), id, statements),
      doctest::Contains("local accounts not required"), Error);
}

TEST_CASE("account names are pairwise distinct over 100 synthetic ids") {
  Topology t = testsupport::base_topology();
  AccountStore accounts;
  std::mt19937_64 rng(83);
  std::set<std::string> names;
  for (int i = 0; i < 100; ++i) {
    IdRegistry registry;
    ScopedId id = registry.derive(EntityId("idp:x"),
                                  "subject" + std::to_string(i) +
                                      testsupport::random_token(rng, 4),
                                  "infra.example");
    LocalAccount account =
        provision_local(t, accounts, EntityId("sp:nonweb"), id, {});
    CHECK(names.insert(account.account_name).second);
  }
}

TEST_CASE("deprovision blocks reuse until explicit re-provisioning") {
  Topology t = testsupport::base_topology();
  AccountStore accounts;
  const ScopedId id{std::string(32, 'd'), "infra.example"};

  provision_local(t, accounts, EntityId("sp:nonweb"), id, {});
  deprovision_local(accounts, EntityId("sp:nonweb"), id);
  const LocalAccount* stored =
      accounts.find_by_id(EntityId("sp:nonweb"), id);
  REQUIRE(stored != nullptr);
  CHECK(stored->state == LocalAccount::State::kDeprovisioned);

  CHECK_THROWS_WITH_AS(deprovision_local(accounts, EntityId("sp:nonweb"), id),
                       doctest::Contains("no active account"), Error);

  // Re-provisioning the same ScopedId reactivates the account.
  LocalAccount back = provision_local(t, accounts, EntityId("sp:nonweb"), id,
                                      {});
  CHECK(back.state == LocalAccount::State::kActive);
  CHECK(back.account_name == account_name_for(id));
}

TEST_CASE("random provision/deprovision sequences match a state machine") {
  Topology t = testsupport::base_topology();
  AccountStore accounts;
  std::mt19937_64 rng(89);

  // Reference model: per-id state {absent, active, deprovisioned}.
  enum class ModelState { kAbsent, kActive, kDeprovisioned };
  std::map<std::string, ModelState> model;
  std::vector<ScopedId> ids;
  for (int i = 0; i < 5; ++i) {
    IdRegistry registry;
    ids.push_back(registry.derive(EntityId("idp:x"), "s" + std::to_string(i),
                                  "infra.example"));
    model[ids.back().render()] = ModelState::kAbsent;
  }

  for (int step = 0; step < 400; ++step) {
    const ScopedId& id = ids[rng() % ids.size()];
    ModelState& state = model[id.render()];
    if (rng() % 2 == 0) {
      // provision: allowed from any state (reactivation included).
      bool threw = false;
      try {
        provision_local(t, accounts, EntityId("sp:nonweb"), id, {});
      } catch (const Error&) {
        threw = true;
      }
      CHECK_FALSE(threw);
      state = ModelState::kActive;
    } else {
      bool threw = false;
      try {
        deprovision_local(accounts, EntityId("sp:nonweb"), id);
      } catch (const Error&) {
        threw = true;
      }
      CHECK(threw == (state != ModelState::kActive));
      if (!threw) state = ModelState::kDeprovisioned;
    }

    const LocalAccount* stored =
        accounts.find_by_id(EntityId("sp:nonweb"), id);
    switch (state) {
      case ModelState::kAbsent:
        CHECK(stored == nullptr);
        break;
      case ModelState::kActive:
        REQUIRE(stored != nullptr);
        CHECK(stored->state == LocalAccount::State::kActive);
        break;
      case ModelState::kDeprovisioned:
        REQUIRE(stored != nullptr);
        CHECK(stored->state == LocalAccount::State::kDeprovisioned);
        break;
    }
  }
}
