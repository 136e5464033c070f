#include "fedsim/claims.hpp"

#include <algorithm>

#include "json.hpp"

namespace fedsim {

bool is_reserved_claim(const std::string& name) {
  return name == kClaimSubject || name == kClaimAudience ||
         name == kClaimExpiry || name == kClaimAttributeSet;
}

std::multimap<std::string, std::string> claims_from_statements(
    const std::vector<AttributeStatement>& statements) {
  std::vector<AttributeStatement> sorted = statements;
  sort_statements(sorted);

  std::multimap<std::string, std::string> claims;
  nlohmann::json encoded = nlohmann::json::array();
  for (const auto& s : sorted) {
    claims.emplace(s.name, s.value);
    encoded.push_back({s.name, s.value, s.issuer.value, to_string(s.loa),
                       s.scope.value_or("")});
  }
  claims.emplace(kClaimAttributeSet, encoded.dump());
  return claims;
}

std::vector<AttributeStatement> statements_from_claims(
    const std::multimap<std::string, std::string>& claims,
    const EntityId& fallback_issuer, Delivery delivery) {
  std::vector<AttributeStatement> statements;

  auto range = claims.equal_range(kClaimAttributeSet);
  if (range.first != range.second) {
    nlohmann::json encoded =
        nlohmann::json::parse(range.first->second, nullptr, false);
    if (encoded.is_array()) {
      for (const auto& item : encoded) {
        if (!item.is_array() || item.size() != 5) continue;
        AttributeStatement s;
        s.name = item[0].get<std::string>();
        s.value = item[1].get<std::string>();
        s.issuer = EntityId(item[2].get<std::string>());
        s.loa = parse_loa(item[3].get<std::string>()).value_or(Loa::kLow);
        std::string scope = item[4].get<std::string>();
        if (!scope.empty()) s.scope = scope;
        s.delivery = delivery;
        statements.push_back(std::move(s));
      }
      sort_statements(statements);
      return statements;
    }
  }

  for (const auto& [name, value] : claims) {
    if (is_reserved_claim(name)) continue;
    AttributeStatement s;
    s.name = name;
    s.value = value;
    s.issuer = fallback_issuer;
    s.loa = Loa::kLow;
    s.delivery = delivery;
    statements.push_back(std::move(s));
  }
  sort_statements(statements);
  return statements;
}

}  // namespace fedsim
