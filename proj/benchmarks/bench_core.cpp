#include <benchmark/benchmark.h>

#include <random>

#include "fedsim/integrity.hpp"
#include "fedsim/proxy.hpp"
#include "fedsim/serialize.hpp"
#include "fedsim/topology.hpp"
#include "fedsim/translation.hpp"

namespace {

using namespace fedsim;

const char* kBenchTopology = R"(fedsim-topology v1
[entity idp:a]
kind = idp
federations = fed-1
[entity sp:b]
kind = sp
federations = fed-1
[entity proxy:h]
kind = proxy
federations = fed-1
scope = bench.example
route = saml-like x509-like lifetime=43200
[federation fed-1]
model = full-mesh
members = idp:a sp:b proxy:h
interfederated = true
[policies]
release = idp:a proxy:h display-name
)";

Topology bench_topology() { return load_topology(kBenchTopology); }

Assertion bench_assertion(const Topology& t) {
  Assertion a;
  a.subject = "alice01";
  a.issuer = EntityId("idp:a");
  a.audience = EntityId("proxy:h");
  a.auth_instant = 1000;
  a.not_before = 1000;
  a.not_after = 1300;
  for (int i = 0; i < 8; ++i) {
    AttributeStatement s;
    s.name = "attr" + std::to_string(i);
    s.value = "value" + std::to_string(i);
    s.issuer = a.issuer;
    a.attributes.push_back(s);
  }
  Credential c = a;
  seal_credential(t.anchors, a.issuer, c);
  return std::get<Assertion>(c);
}

void BM_CanonicalSerialize(benchmark::State& state) {
  Topology t = bench_topology();
  Credential c = bench_assertion(t);
  for (auto _ : state) benchmark::DoNotOptimize(canonical_serialize(c));
}
BENCHMARK(BM_CanonicalSerialize);

void BM_SealAndVerify(benchmark::State& state) {
  Topology t = bench_topology();
  Credential c = bench_assertion(t);
  for (auto _ : state) {
    seal_credential(t.anchors, EntityId("idp:a"), c);
    benchmark::DoNotOptimize(verify_integrity(t.anchors, c));
  }
}
BENCHMARK(BM_SealAndVerify);

void BM_DeriveUniqueId(benchmark::State& state) {
  IdRegistry registry;
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(registry.derive(
        EntityId("idp:a"), "subject" + std::to_string(i++), "bench.example"));
  }
}
BENCHMARK(BM_DeriveUniqueId);

void BM_Trusts(benchmark::State& state) {
  Topology t = bench_topology();
  for (auto _ : state) {
    benchmark::DoNotOptimize(trusts(t, EntityId("sp:b"), EntityId("idp:a")));
  }
}
BENCHMARK(BM_Trusts);

void BM_ValidateChainDepth4(benchmark::State& state) {
  Topology t = bench_topology();
  Cert root;
  root.subject_name = "root:idp:a";
  root.issuer_name = root.subject_name;
  root.not_after = int64_t{1} << 40;
  Cert ee;
  ee.subject_name = "cn=bench";
  ee.issuer_name = root.subject_name;
  ee.not_before = 0;
  ee.not_after = 1 << 20;
  ee.remaining_delegation_depth = 4;
  CertChain chain;
  chain.certs = {ee, root};
  for (auto& cert : chain.certs) seal_cert(t.anchors, EntityId("idp:a"), cert);
  for (int d = 0; d < 4; ++d)
    chain = create_proxy_cert(t.anchors, chain, "cn=bench/p" + std::to_string(d),
                              3600, 100 + d);
  for (auto _ : state)
    benchmark::DoNotOptimize(validate_chain(t.anchors, chain, 200));
}
BENCHMARK(BM_ValidateChainDepth4);

}  // namespace

BENCHMARK_MAIN();
