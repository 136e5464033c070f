#ifndef FEDSIM_INTEGRITY_HPP
#define FEDSIM_INTEGRITY_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

using Bytes = std::vector<std::uint8_t>;

/// SHA-256 of the input. This is the documented digest behind scoped-id
/// derivation and key fingerprints (see docs/formats.md).
Bytes sha256(std::span<const std::uint8_t> data);
Bytes sha256(const std::string& data);

/// HMAC-SHA-256. Keyed tag primitive behind every IntegrityTag.
Bytes hmac_sha256(std::span<const std::uint8_t> key,
                  std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<Bytes> from_hex(const std::string& hex);

/// Symmetric signing key held for an entity. The simulator controls both
/// ends, so "issued by X and unmodified" needs nothing stronger than a
/// keyed tag under X's registered key.
struct SigningKey {
  EntityId owner;
  Bytes secret;
};

/// Default key material for an entity with no explicit key configured.
/// Deterministic so that scenario runs are reproducible.
Bytes derive_default_key(const EntityId& entity);

/// Short identifier of a key for metadata documents: keyed digest of the
/// key under itself, first 16 hex chars.
std::string key_fingerprint(const Bytes& secret);

/// Issuer -> key map. Covers every entity that issues credentials.
class TrustAnchorRegistry {
 public:
  void register_key(const EntityId& issuer, Bytes secret);
  void unregister(const EntityId& issuer);
  bool has_key(const EntityId& issuer) const;
  const Bytes* find_key(const EntityId& issuer) const;

  const std::map<EntityId, Bytes>& entries() const { return keys_; }

 private:
  std::map<EntityId, Bytes> keys_;
};

/// Mints a tag over `payload` under `issuer`'s registered key.
/// Errors with "unknown issuer key" when the issuer is not registered.
IntegrityTag mint_integrity_tag(const TrustAnchorRegistry& anchors,
                                const EntityId& issuer, const Bytes& payload);

struct VerifyResult {
  bool valid = false;
  std::string reason;  // empty when valid

  static VerifyResult ok() { return {true, ""}; }
  static VerifyResult invalid(std::string why) {
    return {false, std::move(why)};
  }
};

/// Structural integrity check: the credential's tag(s) must equal freshly
/// minted tags under the registered key of the tag issuer, over the
/// canonical serialization. Expiry is not checked here.
VerifyResult verify_integrity(const TrustAnchorRegistry& anchors,
                              const Credential& credential);

/// Tags every part of a credential in place under `authority`'s key:
/// assertions and token sets get their credential tag (token sets also get
/// the self-contained access tag), cert chains get one tag per cert.
void seal_credential(const TrustAnchorRegistry& anchors,
                     const EntityId& authority, Credential& credential);

void seal_cert(const TrustAnchorRegistry& anchors, const EntityId& authority,
               Cert& cert);

}  // namespace fedsim

#endif  // FEDSIM_INTEGRITY_HPP
