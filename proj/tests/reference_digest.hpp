#ifndef FEDSIM_TESTS_REFERENCE_DIGEST_HPP
#define FEDSIM_TESTS_REFERENCE_DIGEST_HPP

#include <cstdint>
#include <string>
#include <vector>

// Independent SHA-256 / HMAC-SHA-256 used as the test-side oracle for
// every keyed digest the library produces. Deliberately implemented from
// the FIPS 180-4 / RFC 2104 definitions, with no code shared with the
// library's OpenSSL-backed path.
namespace refdigest {

std::vector<std::uint8_t> sha256(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> sha256(const std::string& data);

std::vector<std::uint8_t> hmac_sha256(const std::vector<std::uint8_t>& key,
                                      const std::vector<std::uint8_t>& data);

std::string to_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace refdigest

#endif  // FEDSIM_TESTS_REFERENCE_DIGEST_HPP
