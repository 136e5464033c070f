#ifndef FEDSIM_DOCPARSE_HPP
#define FEDSIM_DOCPARSE_HPP

#include <map>
#include <string>
#include <vector>

namespace fedsim {

/// One "key = value" line. Values keep everything after the '=' with
/// surrounding whitespace trimmed; repeated keys are allowed and ordered.
struct DocEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// A "[kind arg]" section and its entries, in document order.
struct DocSection {
  std::string kind;
  std::string arg;
  std::vector<DocEntry> entries;
  int line = 0;
};

/// Parsed sectioned key-value document. The first non-blank line is the
/// versioned header ("fedsim-topology v1", "fedsim-scenario v1", ...).
struct Document {
  std::string header;
  std::vector<DocEntry> top;
  std::vector<DocSection> sections;

  const DocEntry* find_top(const std::string& key) const;
};

/// Parses the shared document syntax: header line, '#' comments,
/// "[section arg]" headers, "key = value" entries.
/// Throws LoadError("unparseable") on malformed input.
Document parse_document(const std::string& text);

/// Splits a value into whitespace-separated tokens; double quotes group
/// tokens with spaces ("Alice Smith").
std::vector<std::string> split_tokens(const std::string& value);

/// Splits "name=value" style tokens into a map, collecting bare tokens
/// (no '=') into `positional`.
std::map<std::string, std::string> parse_kv_tokens(
    const std::vector<std::string>& tokens,
    std::vector<std::string>* positional = nullptr);

std::string read_text_file(const std::string& path);

}  // namespace fedsim

#endif  // FEDSIM_DOCPARSE_HPP
