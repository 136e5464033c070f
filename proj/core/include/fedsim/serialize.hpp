#ifndef FEDSIM_SERIALIZE_HPP
#define FEDSIM_SERIALIZE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

/// Append-only writer for the canonical byte layout: big-endian integers,
/// length-prefixed UTF-8 strings. The exact layout is documented in
/// docs/formats.md so independent implementations can reproduce it.
class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void i64(std::int64_t v);
  void str(const std::string& s);
  void raw(const std::vector<std::uint8_t>& bytes);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Deterministic byte string for a credential: fields in alphabetical
/// order, attribute statements sorted by (name, issuer, value), claims
/// sorted by (key, value), every integrity field excluded.
std::vector<std::uint8_t> canonical_serialize(const Credential& credential);

/// Canonical bytes of a single certificate (integrity excluded). Each cert
/// in a chain is tagged over this block.
std::vector<std::uint8_t> canonical_serialize_cert(const Cert& cert);

/// Canonical bytes of a claims map, the payload under a self-contained
/// access tag.
std::vector<std::uint8_t> canonical_serialize_claims(
    const std::multimap<std::string, std::string>& claims);

}  // namespace fedsim

#endif  // FEDSIM_SERIALIZE_HPP
