#pragma once

// Keyed pseudorandomness. Every pseudorandom choice in embedding and
// detection (vocabulary partitions, message positions, one-time-pad masks,
// synthetic models, baseline green lists) is derived here, so detection can
// be reproduced from the key and the token ids alone. The byte layout is
// normative; see docs/seed-scheme.md.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "bimark/distribution.hpp"
#include "bimark/reweight.hpp"

namespace bimark {

class WatermarkKey {
 public:
  static constexpr std::size_t kBytes = 32;

  WatermarkKey() = default;
  explicit WatermarkKey(const std::array<std::uint8_t, kBytes>& bytes) : bytes_(bytes) {}

  /// Parses exactly 64 hex digits (either case). Throws ParseError.
  static WatermarkKey from_hex(std::string_view hex);
  /// 256 bits from the operating system's entropy source.
  static WatermarkKey generate();
  /// Reproducible key for experiments; not for real deployments.
  static WatermarkKey from_seed(std::uint64_t seed);

  std::string to_hex() const;
  const std::array<std::uint8_t, kBytes>& bytes() const noexcept { return bytes_; }
  /// First 128 bits: the SipHash key.
  std::span<const std::uint8_t, 16> hash_key() const noexcept {
    return std::span<const std::uint8_t, 16>(bytes_.data(), 16);
  }

  friend bool operator==(const WatermarkKey&, const WatermarkKey&) = default;

 private:
  std::array<std::uint8_t, kBytes> bytes_{};
};

enum class SeedDomain : std::uint8_t {
  partition = 0x01,
  position = 0x02,
  mask = 0x03,
  synthetic_lm = 0x10,
  window_partition = 0x11,  // per-window baseline lists (Soft Red List, MPAC)
};

/// SipHash-2-4 keyed by the first 128 bits of `key`, over the message
/// `domain tag byte || payload`.
std::uint64_t derive_seed(const WatermarkKey& key, SeedDomain domain,
                          std::span<const std::uint8_t> payload) noexcept;

/// Counter-based generator: output i (0-based) is the SplitMix64 finalizer
/// applied to seed + (i + 1) * 0x9e3779b97f4a7c15.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t next() noexcept;
  /// Uniform integer in [0, bound) by multiply-shift with rejection. bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept;

/// In-place Fisher-Yates: for i = n-1 down to 1, swap(ids[i], ids[below(i+1)]).
void keyed_shuffle(std::span<TokenId> ids, CounterRng& rng) noexcept;

/// Big-endian 32-bit encoding of each token id.
void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_be64(std::vector<std::uint8_t>& out, std::uint64_t v);

/// The h tokens preceding the current position, left-padded with the
/// sentinel id (== vocab_size) at the start of a sequence.
class ContextWindow {
 public:
  ContextWindow() = default;
  explicit ContextWindow(std::vector<TokenId> tokens) : tokens_(std::move(tokens)) {}

  /// Window for the position right after `history`.
  static ContextWindow preceding(std::span<const TokenId> history, std::size_t h,
                                 TokenId sentinel);

  std::span<const TokenId> tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::vector<std::uint8_t> payload() const;

  friend bool operator==(const ContextWindow&, const ContextWindow&) = default;

 private:
  std::vector<TokenId> tokens_;
};

struct ContextWindowHash {
  std::size_t operator()(const ContextWindow& w) const noexcept;
};

/// Windows already used to seed a watermarked step in this session.
class SeenContextLog {
 public:
  /// True if `window` was already recorded; records it otherwise.
  bool check_and_record(const ContextWindow& window);
  bool contains(const ContextWindow& window) const { return seen_.contains(window); }
  std::size_t size() const noexcept { return seen_.size(); }
  void clear() noexcept { seen_.clear(); }

 private:
  std::unordered_set<ContextWindow, ContextWindowHash> seen_;
};

inline bool check_and_record(SeenContextLog& log, const ContextWindow& window) {
  return log.check_and_record(window);
}

/// d independent balanced bipartitions; layer i is a Fisher-Yates shuffle of
/// the (padded) id range seeded by derive_seed(key, partition, be32(i)).
/// The first half of the shuffled ids form V0, the second half V1.
PartitionStack derive_partitions(const WatermarkKey& key, std::size_t vocab_size,
                                 std::size_t d);

/// Message index selected for the next token, 0-based in [0, ell).
std::size_t prf_position(const WatermarkKey& key, const ContextWindow& window,
                         std::size_t ell);

/// d one-time-pad bits for the next token.
std::vector<std::uint8_t> prf_mask(const WatermarkKey& key, const ContextWindow& window,
                                   std::size_t d);

}  // namespace bimark
