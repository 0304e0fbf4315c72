#include "bimark/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "bimark/error.hpp"

namespace bimark::io {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

TokenId parse_token(const std::string& text, std::size_t line) {
  std::uint64_t v = 0;
  if (!parse_number(text, v) || v > 0xffffffffULL) {
    throw ParseError("expected a token id, got '" + text + "'", line);
  }
  return static_cast<TokenId>(v);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

}  // namespace

std::vector<TokenId> read_tokens(std::istream& in) {
  std::vector<TokenId> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    tokens.push_back(parse_token(t, line_no));
  }
  return tokens;
}

std::vector<TokenId> load_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open token file " + path.string());
  return read_tokens(in);
}

void write_tokens(std::ostream& out, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) out << t << '\n';
}

void save_tokens(const std::filesystem::path& path, std::span<const TokenId> tokens) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write token file " + path.string());
  write_tokens(out, tokens);
}

std::vector<TokenId> parse_token_list(const std::string& text) {
  std::vector<TokenId> tokens;
  std::istringstream in(text);
  std::string field;
  while (in >> field) tokens.push_back(parse_token(field, 0));
  return tokens;
}

WatermarkKey load_key(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open key file " + path.string());
  std::string line;
  std::getline(in, line);
  return WatermarkKey::from_hex(trim(line));
}

void save_key(const std::filesystem::path& path, const WatermarkKey& key) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write key file " + path.string());
  out << key.to_hex() << '\n';
}

FlatFile FlatFile::parse(std::istream& in) {
  FlatFile f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("expected name=value", line_no);
    }
    const auto name = trim(t.substr(0, eq));
    f.values_[name] = trim(t.substr(eq + 1));
    f.lines_[name] = line_no;
  }
  return f;
}

FlatFile FlatFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse(in);
}

std::size_t FlatFile::line_of(const std::string& name) const {
  const auto it = lines_.find(name);
  return it == lines_.end() ? 0 : it->second;
}

const std::string& FlatFile::get(const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw ParseError("missing required entry '" + name + "'");
  return it->second;
}

std::string FlatFile::get_or(const std::string& name, const std::string& fallback) const {
  const auto it = values_.find(name);
  return it == values_.end() ? fallback : it->second;
}

std::size_t FlatFile::get_size(const std::string& name, std::size_t fallback) const {
  if (!has(name)) return fallback;
  std::size_t v = 0;
  if (!parse_number(get(name), v)) {
    throw ParseError("'" + name + "' must be a nonnegative integer", line_of(name));
  }
  return v;
}

std::uint64_t FlatFile::get_u64(const std::string& name, std::uint64_t fallback) const {
  if (!has(name)) return fallback;
  std::uint64_t v = 0;
  if (!parse_number(get(name), v)) {
    throw ParseError("'" + name + "' must be a nonnegative integer", line_of(name));
  }
  return v;
}

double FlatFile::get_double(const std::string& name, double fallback) const {
  if (!has(name)) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(get(name), &used);
    if (used != get(name).size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw ParseError("'" + name + "' must be a real number", line_of(name));
  }
}

bool FlatFile::get_bool(const std::string& name, bool fallback) const {
  if (!has(name)) return fallback;
  const auto& v = get(name);
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ParseError("'" + name + "' must be a boolean", line_of(name));
}

std::vector<double> FlatFile::get_doubles(const std::string& name) const {
  std::vector<double> out;
  if (!has(name)) return out;
  for (const auto& item : split_commas(get(name))) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("'" + name + "': bad number '" + item + "'", line_of(name));
    }
  }
  return out;
}

std::vector<std::size_t> FlatFile::get_sizes(const std::string& name) const {
  std::vector<std::size_t> out;
  if (!has(name)) return out;
  for (const auto& item : split_commas(get(name))) {
    std::size_t v = 0;
    if (!parse_number(item, v)) {
      throw ParseError("'" + name + "': bad integer '" + item + "'", line_of(name));
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace bimark::io
