#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pul {

std::string read_file(const std::string& path);

// write to a sibling temp file, then rename over the destination
void atomic_write(const std::string& path, const std::string& content);

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t v);

// shortest text that round-trips a double exactly
std::string fmt_g17(double v);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

struct ConfigSection {
  std::string name;  // "" for keys before the first [section]
  std::vector<std::pair<std::string, std::string>> kv;
  const std::string* find(const std::string& key) const;
  const std::string& require(const std::string& key) const;
};

// flat key = value lines grouped by [section]; '#' starts a comment and
// sections may repeat
std::vector<ConfigSection> parse_config(const std::string& text);

double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);
bool parse_bool(const std::string& s, const std::string& what);

}  // namespace pul
