#include "fedsim/serialize.hpp"

#include <algorithm>

namespace fedsim {

void ByteWriter::u8(std::uint8_t v) { bytes_.push_back(v); }

void ByteWriter::u32(std::uint32_t v) {
  bytes_.push_back(static_cast<std::uint8_t>(v >> 24));
  bytes_.push_back(static_cast<std::uint8_t>(v >> 16));
  bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  bytes_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::i64(std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  for (int shift = 56; shift >= 0; shift -= 8) {
    bytes_.push_back(static_cast<std::uint8_t>(u >> shift));
  }
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::raw(const std::vector<std::uint8_t>& bytes) {
  bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
}

namespace {

void write_optional_str(ByteWriter& w, const std::optional<std::string>& s) {
  if (s.has_value()) {
    w.u8(1);
    w.str(*s);
  } else {
    w.u8(0);
  }
}

// Statement fields alphabetically: delivery, issuer, loa, name, scope, value.
void write_statement(ByteWriter& w, const AttributeStatement& s) {
  w.u8(static_cast<std::uint8_t>(s.delivery));
  w.str(s.issuer.value);
  w.u8(static_cast<std::uint8_t>(s.loa));
  w.str(s.name);
  write_optional_str(w, s.scope);
  w.str(s.value);
}

void write_statements(ByteWriter& w,
                      std::vector<AttributeStatement> statements) {
  sort_statements(statements);
  w.u32(static_cast<std::uint32_t>(statements.size()));
  for (const auto& s : statements) write_statement(w, s);
}

void write_claims(ByteWriter& w,
                  const std::multimap<std::string, std::string>& claims) {
  std::vector<std::pair<std::string, std::string>> sorted(claims.begin(),
                                                          claims.end());
  std::sort(sorted.begin(), sorted.end());
  w.u32(static_cast<std::uint32_t>(sorted.size()));
  for (const auto& [key, value] : sorted) {
    w.str(key);
    w.str(value);
  }
}

// Assertion fields alphabetically: attributes, audience, auth_instant,
// issuer, not_after, not_before, subject.
void write_assertion(ByteWriter& w, const Assertion& a) {
  write_statements(w, a.attributes);
  w.str(a.audience.value);
  w.i64(a.auth_instant);
  w.str(a.issuer.value);
  w.i64(a.not_after);
  w.i64(a.not_before);
  w.str(a.subject);
}

// Token fields alphabetically: access, audience, id_claims, issuer,
// not_after, subject. The nested access tag is payload data under the
// token-level tag; the token-level tag itself is excluded.
void write_token(ByteWriter& w, const TokenSet& t) {
  if (const auto* self = std::get_if<SelfContainedAccess>(&t.access)) {
    w.u8(1);
    write_claims(w, self->claims);
    w.str(self->integrity.issuer.value);
    w.u32(static_cast<std::uint32_t>(self->integrity.tag.size()));
    w.raw(self->integrity.tag);
  } else {
    w.u8(0);
    w.str(std::get<ReferenceAccess>(t.access).id);
  }
  w.str(t.audience.value);
  write_claims(w, t.id_claims);
  w.str(t.issuer.value);
  w.i64(t.not_after);
  w.str(t.subject);
}

// Cert fields alphabetically: attr_extension, is_proxy, issuer_name,
// not_after, not_before, remaining_delegation_depth, subject_name.
void write_cert(ByteWriter& w, const Cert& c) {
  write_statements(w, c.attr_extension);
  w.u8(c.is_proxy ? 1 : 0);
  w.str(c.issuer_name);
  w.i64(c.not_after);
  w.i64(c.not_before);
  w.i64(c.remaining_delegation_depth);
  w.str(c.subject_name);
}

}  // namespace

std::vector<std::uint8_t> canonical_serialize_cert(const Cert& cert) {
  ByteWriter w;
  write_cert(w, cert);
  return w.take();
}

std::vector<std::uint8_t> canonical_serialize_claims(
    const std::multimap<std::string, std::string>& claims) {
  ByteWriter w;
  write_claims(w, claims);
  return w.take();
}

std::vector<std::uint8_t> canonical_serialize(const Credential& credential) {
  ByteWriter w;
  if (const auto* assertion = std::get_if<Assertion>(&credential)) {
    w.u8(1);
    write_assertion(w, *assertion);
  } else if (const auto* token = std::get_if<TokenSet>(&credential)) {
    w.u8(2);
    write_token(w, *token);
  } else {
    const auto& chain = std::get<CertChain>(credential);
    w.u8(3);
    w.u32(static_cast<std::uint32_t>(chain.certs.size()));
    for (const auto& cert : chain.certs) write_cert(w, cert);
  }
  return w.take();
}

}  // namespace fedsim
