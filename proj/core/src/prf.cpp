#include "bimark/prf.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "bimark/error.hpp"
#include "bimark/siphash.hpp"

namespace bimark {
namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

__extension__ using uint128 = unsigned __int128;

std::array<std::uint8_t, WatermarkKey::kBytes> bytes_from_words(
    const std::array<std::uint64_t, 4>& words) {
  std::array<std::uint8_t, WatermarkKey::kBytes> out{};
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (std::size_t b = 0; b < 8; ++b) {
      out[w * 8 + b] = static_cast<std::uint8_t>(words[w] >> (8 * b));
    }
  }
  return out;
}

}  // namespace

WatermarkKey WatermarkKey::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kBytes) {
    throw ParseError("key: expected " + std::to_string(2 * kBytes) +
                     " hex characters, got " + std::to_string(hex.size()));
  }
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = 0; i < kBytes; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ParseError("key: non-hex character");
    bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return WatermarkKey(bytes);
}

WatermarkKey WatermarkKey::generate() {
  std::random_device rd;
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = 0; i < kBytes; i += 4) {
    const std::uint32_t v = rd();
    for (std::size_t b = 0; b < 4; ++b) bytes[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  return WatermarkKey(bytes);
}

WatermarkKey WatermarkKey::from_seed(std::uint64_t seed) {
  CounterRng rng(seed);
  return WatermarkKey(bytes_from_words({rng.next(), rng.next(), rng.next(), rng.next()}));
}

std::string WatermarkKey::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * kBytes);
  for (auto b : bytes_) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::uint64_t derive_seed(const WatermarkKey& key, SeedDomain domain,
                          std::span<const std::uint8_t> payload) noexcept {
  // Small payloads (windows, layer indices) stay on the stack.
  std::array<std::uint8_t, 128> stack_buf;
  std::vector<std::uint8_t> heap_buf;
  std::uint8_t* buf = stack_buf.data();
  if (payload.size() + 1 > stack_buf.size()) {
    heap_buf.resize(payload.size() + 1);
    buf = heap_buf.data();
  }
  buf[0] = static_cast<std::uint8_t>(domain);
  std::copy(payload.begin(), payload.end(), buf + 1);
  return siphash24(key.hash_key(), std::span<const std::uint8_t>(buf, payload.size() + 1));
}

std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next() noexcept {
  ++counter_;
  return splitmix64_finalize(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift; rejects the biased low products.
  uint128 m = static_cast<uint128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<uint128>(next()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

void keyed_shuffle(std::span<TokenId> ids, CounterRng& rng) noexcept {
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(ids[i - 1], ids[j]);
  }
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void append_be64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

ContextWindow ContextWindow::preceding(std::span<const TokenId> history, std::size_t h,
                                       TokenId sentinel) {
  std::vector<TokenId> tokens(h, sentinel);
  const std::size_t take = std::min(h, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            tokens.end() - static_cast<std::ptrdiff_t>(take));
  return ContextWindow(std::move(tokens));
}

std::vector<std::uint8_t> ContextWindow::payload() const {
  std::vector<std::uint8_t> out;
  out.reserve(4 * tokens_.size());
  for (TokenId t : tokens_) append_be32(out, t);
  return out;
}

std::size_t ContextWindowHash::operator()(const ContextWindow& w) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ w.size();
  for (TokenId t : w.tokens()) h = splitmix64_finalize(h ^ t);
  return static_cast<std::size_t>(h);
}

bool SeenContextLog::check_and_record(const ContextWindow& window) {
  return !seen_.insert(window).second;
}

PartitionStack derive_partitions(const WatermarkKey& key, std::size_t vocab_size,
                                 std::size_t d) {
  if (vocab_size < 2) throw DomainError("derive_partitions: vocab_size must be >= 2");
  if (d < 1) throw DomainError("derive_partitions: d must be >= 1");
  const std::size_t padded = VocabularyBipartition::padded_size(vocab_size);

  std::vector<VocabularyBipartition> layers;
  layers.reserve(d);
  std::vector<TokenId> ids(padded);
  std::vector<std::uint8_t> payload;
  for (std::size_t i = 0; i < d; ++i) {
    std::iota(ids.begin(), ids.end(), TokenId{0});
    payload.clear();
    append_be32(payload, static_cast<std::uint32_t>(i));
    CounterRng rng(derive_seed(key, SeedDomain::partition, payload));
    keyed_shuffle(ids, rng);

    std::vector<std::uint8_t> membership(padded, 0);
    for (std::size_t r = padded / 2; r < padded; ++r) membership[ids[r]] = 1;
    layers.emplace_back(vocab_size, std::move(membership));
  }
  return PartitionStack(std::move(layers));
}

std::size_t prf_position(const WatermarkKey& key, const ContextWindow& window,
                         std::size_t ell) {
  if (ell < 1) throw DomainError("prf_position: ell must be >= 1");
  CounterRng rng(derive_seed(key, SeedDomain::position, window.payload()));
  return static_cast<std::size_t>(rng.below(ell));
}

std::vector<std::uint8_t> prf_mask(const WatermarkKey& key, const ContextWindow& window,
                                   std::size_t d) {
  if (d < 1) throw DomainError("prf_mask: d must be >= 1");
  CounterRng rng(derive_seed(key, SeedDomain::mask, window.payload()));
  std::vector<std::uint8_t> mask(d);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (i % 64 == 0) word = rng.next();
    mask[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
  }
  return mask;
}

}  // namespace bimark
