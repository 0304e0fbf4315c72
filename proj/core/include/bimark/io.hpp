#pragma once

// Plain-text file formats shared by the CLI and the serve endpoint.
//
//   token file : newline-separated decimal token ids
//   key file   : 64 hex characters, newline-terminated
//   flat file  : `name=value` lines, '#' starts a comment, blank lines ignored

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bimark/distribution.hpp"
#include "bimark/prf.hpp"

namespace bimark::io {

std::vector<TokenId> read_tokens(std::istream& in);
std::vector<TokenId> load_tokens(const std::filesystem::path& path);
void write_tokens(std::ostream& out, std::span<const TokenId> tokens);
void save_tokens(const std::filesystem::path& path, std::span<const TokenId> tokens);

/// Whitespace-separated ids on one line ("3 17 42").
std::vector<TokenId> parse_token_list(const std::string& text);

WatermarkKey load_key(const std::filesystem::path& path);
void save_key(const std::filesystem::path& path, const WatermarkKey& key);

/// Parsed flat file; remembers the line each entry came from.
class FlatFile {
 public:
  static FlatFile parse(std::istream& in);
  static FlatFile load(const std::filesystem::path& path);

  bool has(const std::string& name) const { return values_.contains(name); }
  const std::string& get(const std::string& name) const;
  std::string get_or(const std::string& name, const std::string& fallback) const;
  std::size_t get_size(const std::string& name, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& name, std::uint64_t fallback) const;
  double get_double(const std::string& name, double fallback) const;
  bool get_bool(const std::string& name, bool fallback) const;
  std::vector<double> get_doubles(const std::string& name) const;
  std::vector<std::size_t> get_sizes(const std::string& name) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  void set(const std::string& name, std::string value) { values_[name] = std::move(value); }

 private:
  std::size_t line_of(const std::string& name) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

}  // namespace bimark::io
