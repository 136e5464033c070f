#include "fedsim/model.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

namespace fedsim {

const char* to_string(Loa level) {
  switch (level) {
    case Loa::kLow:
      return "low";
    case Loa::kSubstantial:
      return "substantial";
    case Loa::kHigh:
      return "high";
  }
  return "low";
}

std::optional<Loa> parse_loa(const std::string& text) {
  if (text == "low") return Loa::kLow;
  if (text == "substantial") return Loa::kSubstantial;
  if (text == "high") return Loa::kHigh;
  return std::nullopt;
}

Loa loa_combine(std::span<const Loa> levels) {
  if (levels.empty()) throw Error("empty loa list");
  Loa lowest = levels.front();
  for (Loa level : levels) {
    if (level < lowest) lowest = level;
  }
  return lowest;
}

const char* to_string(Delivery delivery) {
  return delivery == Delivery::kPush ? "push" : "pull";
}

bool is_canonical_attribute_name(const std::string& name) {
  for (const char* canonical : kCanonicalAttributeNames) {
    if (name == canonical) return true;
  }
  return false;
}

bool statement_canonical_less(const AttributeStatement& a,
                              const AttributeStatement& b) {
  return std::tie(a.name, a.issuer.value, a.value) <
         std::tie(b.name, b.issuer.value, b.value);
}

void sort_statements(std::vector<AttributeStatement>& statements) {
  std::stable_sort(statements.begin(), statements.end(),
                   statement_canonical_less);
}

const char* to_string(Technology tech) {
  switch (tech) {
    case Technology::kSamlLike:
      return "saml-like";
    case Technology::kOidcLike:
      return "oidc-like";
    case Technology::kX509Like:
      return "x509-like";
  }
  return "saml-like";
}

std::optional<Technology> parse_technology(const std::string& text) {
  if (text == "saml-like") return Technology::kSamlLike;
  if (text == "oidc-like") return Technology::kOidcLike;
  if (text == "x509-like") return Technology::kX509Like;
  return std::nullopt;
}

Technology technology_of(const Credential& credential) {
  if (std::holds_alternative<Assertion>(credential))
    return Technology::kSamlLike;
  if (std::holds_alternative<TokenSet>(credential))
    return Technology::kOidcLike;
  return Technology::kX509Like;
}

bool ScopedId::valid() const {
  if (local_part.size() != 32 || scope.empty()) return false;
  return std::all_of(local_part.begin(), local_part.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

std::optional<ScopedId> parse_scoped_id(const std::string& rendered) {
  auto at = rendered.find('@');
  if (at == std::string::npos) return std::nullopt;
  ScopedId id{rendered.substr(0, at), rendered.substr(at + 1)};
  if (!id.valid()) return std::nullopt;
  return id;
}

const char* to_string(LinkedIdentityKind kind) {
  switch (kind) {
    case LinkedIdentityKind::kGuest:
      return "guest";
    case LinkedIdentityKind::kSocial:
      return "social";
    case LinkedIdentityKind::kEgov:
      return "egov";
  }
  return "guest";
}

std::optional<std::string> PrincipalRecord::subject_at(
    const EntityId& provider) const {
  for (const auto& home : home_identities) {
    if (home.idp == provider) return home.subject_id;
  }
  for (const auto& linked : linked_identities) {
    if (linked.provider == provider) return linked.subject_id;
  }
  return std::nullopt;
}

}  // namespace fedsim
