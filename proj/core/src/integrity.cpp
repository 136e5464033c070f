#include "fedsim/integrity.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <cstring>

#include "fedsim/serialize.hpp"

namespace fedsim {

Bytes sha256(std::span<const std::uint8_t> data) {
  Bytes digest(32);
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
             nullptr);
  digest.resize(len);
  return digest;
}

Bytes sha256(const std::string& data) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Bytes hmac_sha256(std::span<const std::uint8_t> key,
                  std::span<const std::uint8_t> data) {
  Bytes mac(32);
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
       data.size(), mac.data(), &len);
  mac.resize(len);
  return mac;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

std::optional<Bytes> from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

Bytes derive_default_key(const EntityId& entity) {
  return sha256("fedsim/v1/key/" + entity.value);
}

std::string key_fingerprint(const Bytes& secret) {
  static const std::string context = "fedsim/v1/fingerprint";
  Bytes mac = hmac_sha256(
      secret, std::span<const std::uint8_t>(
                  reinterpret_cast<const std::uint8_t*>(context.data()),
                  context.size()));
  return to_hex(mac).substr(0, 16);
}

void TrustAnchorRegistry::register_key(const EntityId& issuer, Bytes secret) {
  keys_[issuer] = std::move(secret);
}

void TrustAnchorRegistry::unregister(const EntityId& issuer) {
  keys_.erase(issuer);
}

bool TrustAnchorRegistry::has_key(const EntityId& issuer) const {
  return keys_.count(issuer) > 0;
}

const Bytes* TrustAnchorRegistry::find_key(const EntityId& issuer) const {
  auto it = keys_.find(issuer);
  return it == keys_.end() ? nullptr : &it->second;
}

IntegrityTag mint_integrity_tag(const TrustAnchorRegistry& anchors,
                                const EntityId& issuer, const Bytes& payload) {
  const Bytes* key = anchors.find_key(issuer);
  if (key == nullptr) throw Error("unknown issuer key", issuer.value);
  return IntegrityTag{issuer, hmac_sha256(*key, payload)};
}

namespace {

VerifyResult check_tag(const TrustAnchorRegistry& anchors,
                       const IntegrityTag& tag, const Bytes& payload) {
  const Bytes* key = anchors.find_key(tag.issuer);
  if (key == nullptr) return VerifyResult::invalid("unknown issuer");
  if (hmac_sha256(*key, payload) != tag.tag)
    return VerifyResult::invalid("tag mismatch");
  return VerifyResult::ok();
}

}  // namespace

VerifyResult verify_integrity(const TrustAnchorRegistry& anchors,
                              const Credential& credential) {
  if (const auto* assertion = std::get_if<Assertion>(&credential)) {
    if (assertion->integrity.issuer != assertion->issuer)
      return VerifyResult::invalid("issuer mismatch");
    return check_tag(anchors, assertion->integrity,
                     canonical_serialize(credential));
  }
  if (const auto* token = std::get_if<TokenSet>(&credential)) {
    if (token->integrity.issuer != token->issuer)
      return VerifyResult::invalid("issuer mismatch");
    if (const auto* self = std::get_if<SelfContainedAccess>(&token->access)) {
      VerifyResult access = check_tag(anchors, self->integrity,
                                      canonical_serialize_claims(self->claims));
      if (!access.valid) return access;
    }
    return check_tag(anchors, token->integrity,
                     canonical_serialize(credential));
  }
  const auto& chain = std::get<CertChain>(credential);
  if (chain.certs.empty()) return VerifyResult::invalid("empty chain");
  // Every cert is tagged individually by the chain's issuing authority
  // over its own canonical block, so a mutation anywhere is caught.
  for (const auto& cert : chain.certs) {
    VerifyResult r =
        check_tag(anchors, cert.integrity, canonical_serialize_cert(cert));
    if (!r.valid) return r;
  }
  return VerifyResult::ok();
}

void seal_cert(const TrustAnchorRegistry& anchors, const EntityId& authority,
               Cert& cert) {
  cert.integrity =
      mint_integrity_tag(anchors, authority, canonical_serialize_cert(cert));
}

void seal_credential(const TrustAnchorRegistry& anchors,
                     const EntityId& authority, Credential& credential) {
  if (auto* assertion = std::get_if<Assertion>(&credential)) {
    assertion->integrity = IntegrityTag{};
    assertion->integrity =
        mint_integrity_tag(anchors, authority, canonical_serialize(credential));
  } else if (auto* token = std::get_if<TokenSet>(&credential)) {
    if (auto* self = std::get_if<SelfContainedAccess>(&token->access)) {
      self->integrity = mint_integrity_tag(
          anchors, authority, canonical_serialize_claims(self->claims));
    }
    token->integrity = IntegrityTag{};
    token->integrity =
        mint_integrity_tag(anchors, authority, canonical_serialize(credential));
  } else {
    auto& chain = std::get<CertChain>(credential);
    for (auto& cert : chain.certs) seal_cert(anchors, authority, cert);
  }
}

}  // namespace fedsim
