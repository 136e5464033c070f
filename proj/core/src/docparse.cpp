#include "fedsim/docparse.hpp"

#include <fstream>
#include <sstream>

#include "fedsim/error.hpp"

namespace fedsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

const DocEntry* Document::find_top(const std::string& key) const {
  for (const auto& entry : top) {
    if (entry.key == key) return &entry;
  }
  return nullptr;
}

Document parse_document(const std::string& text) {
  Document doc;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  bool header_seen = false;
  DocSection* current = nullptr;

  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;

    if (!header_seen) {
      doc.header = line;
      header_seen = true;
      continue;
    }

    if (line.front() == '[') {
      if (line.back() != ']')
        throw LoadError("unparseable",
                        "line " + std::to_string(lineno) + ": bad section");
      std::string inner = trim(line.substr(1, line.size() - 2));
      if (inner.empty())
        throw LoadError("unparseable",
                        "line " + std::to_string(lineno) + ": empty section");
      DocSection section;
      section.line = lineno;
      auto space = inner.find_first_of(" \t");
      if (space == std::string::npos) {
        section.kind = inner;
      } else {
        section.kind = inner.substr(0, space);
        section.arg = trim(inner.substr(space + 1));
      }
      doc.sections.push_back(std::move(section));
      current = &doc.sections.back();
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw LoadError("unparseable", "line " + std::to_string(lineno) +
                                         ": expected key = value");
    DocEntry entry;
    entry.key = trim(line.substr(0, eq));
    entry.value = trim(line.substr(eq + 1));
    entry.line = lineno;
    if (entry.key.empty())
      throw LoadError("unparseable",
                      "line " + std::to_string(lineno) + ": empty key");
    if (current != nullptr) {
      current->entries.push_back(std::move(entry));
    } else {
      doc.top.push_back(std::move(entry));
    }
  }

  if (!header_seen) throw LoadError("unparseable", "empty document");
  return doc;
}

std::vector<std::string> split_tokens(const std::string& value) {
  std::vector<std::string> tokens;
  std::string cur;
  bool in_quotes = false;
  bool have_token = false;
  for (char c : value) {
    if (c == '"') {
      in_quotes = !in_quotes;
      have_token = true;
      continue;
    }
    if (!in_quotes && (c == ' ' || c == '\t')) {
      if (have_token) {
        tokens.push_back(cur);
        cur.clear();
        have_token = false;
      }
      continue;
    }
    cur.push_back(c);
    have_token = true;
  }
  if (in_quotes) throw LoadError("unparseable", "unterminated quote");
  if (have_token) tokens.push_back(cur);
  return tokens;
}

std::map<std::string, std::string> parse_kv_tokens(
    const std::vector<std::string>& tokens,
    std::vector<std::string>* positional) {
  std::map<std::string, std::string> kv;
  for (const auto& token : tokens) {
    auto eq = token.find('=');
    if (eq == std::string::npos) {
      if (positional != nullptr) positional->push_back(token);
      continue;
    }
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("unreadable", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fedsim
