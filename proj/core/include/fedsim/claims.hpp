#ifndef FEDSIM_CLAIMS_HPP
#define FEDSIM_CLAIMS_HPP

#include <map>
#include <string>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

// Reserved claim names used by token sets.
inline constexpr char kClaimSubject[] = "sub";
inline constexpr char kClaimAudience[] = "aud";
inline constexpr char kClaimExpiry[] = "exp";
/// Carries the full attribute statements (name, value, issuer, loa, scope)
/// through token form, so translation is lossless.
inline constexpr char kClaimAttributeSet[] = "x-attributes";

/// Encodes statements as claims: one plain (name, value) claim per
/// statement plus the x-attributes claim with the full statement set.
std::multimap<std::string, std::string> claims_from_statements(
    const std::vector<AttributeStatement>& statements);

/// Decodes statements from claims. Prefers the x-attributes claim; falls
/// back to plain claims attributed to `fallback_issuer` at LoA low.
/// Every decoded statement gets `delivery`.
std::vector<AttributeStatement> statements_from_claims(
    const std::multimap<std::string, std::string>& claims,
    const EntityId& fallback_issuer, Delivery delivery);

bool is_reserved_claim(const std::string& name);

}  // namespace fedsim

#endif  // FEDSIM_CLAIMS_HPP
