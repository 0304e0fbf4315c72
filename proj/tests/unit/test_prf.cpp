#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <random>
#include <set>

#ifdef BIMARK_HAVE_SODIUM
#include <sodium.h>
#endif

#include "bimark/error.hpp"
#include "bimark/prf.hpp"
#include "bimark/siphash.hpp"
#include "oracles.hpp"

using namespace bimark;

namespace {

WatermarkKey counting_key() {
  std::array<std::uint8_t, WatermarkKey::kBytes> bytes{};
  std::iota(bytes.begin(), bytes.end(), std::uint8_t{0});
  return WatermarkKey(bytes);
}

}  // namespace

// Reference vectors from the SipHash authors' test suite.
TEST(SipHash, ReferenceVectors) {
  std::array<std::uint8_t, 16> key{};
  std::iota(key.begin(), key.end(), std::uint8_t{0});
  std::array<std::uint8_t, 15> msg{};
  std::iota(msg.begin(), msg.end(), std::uint8_t{0});
  EXPECT_EQ(siphash24(key, msg), 0xa129ca6149be45e5ULL);
  EXPECT_EQ(siphash24(key, {}), 0x726fdb47dd0e0e31ULL);
}

#ifdef BIMARK_HAVE_SODIUM
TEST(SipHash, AgreesWithLibsodium) {
  ASSERT_GE(sodium_init(), 0);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::array<std::uint8_t, 16> key{};
    for (auto& b : key) b = static_cast<std::uint8_t>(rng());
    std::vector<std::uint8_t> msg(rng() % 70);
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
    std::array<unsigned char, crypto_shorthash_siphash24_BYTES> out{};
    crypto_shorthash_siphash24(out.data(), msg.data(), msg.size(), key.data());
    std::uint64_t want = 0;
    for (int i = 7; i >= 0; --i) want = (want << 8) | out[i];
    ASSERT_EQ(siphash24(key, msg), want) << "length " << msg.size();
  }
}
#endif

TEST(CounterRng, FrozenOutputs) {
  CounterRng rng(12345);
  EXPECT_EQ(rng.next(), 0x22118258a9d111a0ULL);
  EXPECT_EQ(rng.next(), 0x346edce5f713f8edULL);
  EXPECT_EQ(rng.counter(), 2u);
}

TEST(CounterRng, BelowIsUniform) {
  CounterRng rng(42);
  std::vector<double> counts(7, 0.0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    counts[v] += 1.0;
  }
  const std::vector<double> expected(7, n / 7.0);
  EXPECT_GT(oracle::chi_square_gof_p(counts, expected), 1e-4);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(DeriveSeed, FrozenVectorsAndDomainSeparation) {
  const auto key = counting_key();
  std::vector<std::uint8_t> payload;
  append_be32(payload, 0);
  EXPECT_EQ(derive_seed(key, SeedDomain::partition, payload), 0xfcd419ce37f94fd0ULL);
  EXPECT_NE(derive_seed(key, SeedDomain::partition, payload),
            derive_seed(key, SeedDomain::mask, payload));

  const ContextWindow w({5, 7});
  EXPECT_EQ(derive_seed(key, SeedDomain::position, w.payload()), 0x00fdb38b1fd8dfe7ULL);
}

TEST(DeriveSeed, OnlyFirstHalfOfKeyMatters) {
  auto bytes = counting_key().bytes();
  const WatermarkKey a(bytes);
  bytes[20] ^= 0xff;
  const WatermarkKey b(bytes);
  bytes[3] ^= 0x01;
  const WatermarkKey c(bytes);
  const std::vector<std::uint8_t> payload{1, 2, 3};
  EXPECT_EQ(derive_seed(a, SeedDomain::mask, payload), derive_seed(b, SeedDomain::mask, payload));
  EXPECT_NE(derive_seed(a, SeedDomain::mask, payload), derive_seed(c, SeedDomain::mask, payload));
}

TEST(Payload, BigEndianEncoding) {
  std::vector<std::uint8_t> out;
  append_be32(out, 0x01020304u);
  append_be64(out, 0x0a0b0c0d0e0f1011ULL);
  const std::vector<std::uint8_t> want{1, 2, 3, 4, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0x0f, 0x10, 0x11};
  EXPECT_EQ(out, want);
  EXPECT_EQ(ContextWindow({1, 256}).payload(),
            (std::vector<std::uint8_t>{0, 0, 0, 1, 0, 0, 1, 0}));
}

TEST(ContextWindow, LeftPadsWithSentinel) {
  const std::vector<TokenId> history{3, 4, 5};
  EXPECT_EQ(ContextWindow::preceding({}, 2, 100), ContextWindow({100, 100}));
  EXPECT_EQ(ContextWindow::preceding(std::span(history).first(1), 2, 100), ContextWindow({100, 3}));
  EXPECT_EQ(ContextWindow::preceding(history, 2, 100), ContextWindow({4, 5}));
  EXPECT_EQ(ContextWindow::preceding(history, 1, 100), ContextWindow({5}));
}

TEST(SeenContextLog, RecordsOnce) {
  SeenContextLog log;
  EXPECT_FALSE(log.check_and_record(ContextWindow({1, 2})));
  EXPECT_TRUE(log.check_and_record(ContextWindow({1, 2})));
  EXPECT_FALSE(log.check_and_record(ContextWindow({2, 1})));
  EXPECT_EQ(log.size(), 2u);
  log.clear();
  EXPECT_FALSE(log.contains(ContextWindow({1, 2})));
}

TEST(Partitions, FrozenLayerZero) {
  const auto stack = derive_partitions(counting_key(), 10, 3);
  ASSERT_EQ(stack.depth(), 3u);
  std::set<TokenId> v1;
  for (TokenId t = 0; t < 10; ++t)
    if (stack[0].bit(t)) v1.insert(t);
  EXPECT_EQ(v1, (std::set<TokenId>{1, 4, 7, 8, 9}));
}

TEST(Partitions, BalancedDeterministicAndKeyDependent) {
  const auto key = WatermarkKey::from_seed(1);
  for (std::size_t v : {2u, 7u, 64u, 1001u}) {
    const auto stack = derive_partitions(key, v, 5);
    EXPECT_EQ(stack, derive_partitions(key, v, 5));
    for (const auto& layer : stack) {
      const auto bits = layer.bits();
      EXPECT_EQ(2 * std::count(bits.begin(), bits.end(), std::uint8_t{1}),
                static_cast<std::ptrdiff_t>(bits.size()));
    }
  }
  EXPECT_NE(derive_partitions(key, 64, 1), derive_partitions(WatermarkKey::from_seed(2), 64, 1));
  // A deeper stack extends a shallower one.
  const auto deep = derive_partitions(key, 64, 4);
  EXPECT_EQ(deep[1], derive_partitions(key, 64, 2)[1]);
}

TEST(Partitions, MembershipIsUniformAcrossKeys) {
  // Each token lands in V1 for about half of the keys.
  std::vector<double> ones(16, 0.0);
  const int keys = 4000;
  for (int k = 0; k < keys; ++k) {
    const auto stack = derive_partitions(WatermarkKey::from_seed(k), 16, 1);
    for (TokenId t = 0; t < 16; ++t) ones[t] += stack[0].bit(t);
  }
  for (double c : ones) EXPECT_NEAR(c / keys, 0.5, 4.0 * std::sqrt(0.25 / keys) * 1.1);
}

TEST(PositionAndMask, FrozenValues) {
  const auto key = counting_key();
  const ContextWindow w({5, 7});
  EXPECT_EQ(prf_position(key, w, 8), 5u);
  const auto mask = prf_mask(key, w, 10);
  const std::vector<std::uint8_t> want{1, 1, 0, 1, 0, 0, 0, 0, 1, 1};
  EXPECT_EQ(mask, want);
  // Prefix property of the mask.
  EXPECT_EQ(prf_mask(key, w, 4), std::vector<std::uint8_t>(want.begin(), want.begin() + 4));
}

TEST(PositionAndMask, RangeAndDistribution) {
  const auto key = WatermarkKey::from_seed(8);
  std::vector<double> pos(5, 0.0);
  double mask_ones = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const ContextWindow w({static_cast<TokenId>(i), static_cast<TokenId>(i / 7)});
    const auto p = prf_position(key, w, 5);
    ASSERT_LT(p, 5u);
    pos[p] += 1.0;
    const auto m = prf_mask(key, w, 70);
    mask_ones += std::accumulate(m.begin(), m.end(), 0.0);
  }
  EXPECT_GT(oracle::chi_square_gof_p(pos, std::vector<double>(5, n / 5.0)), 1e-4);
  EXPECT_NEAR(mask_ones / (70.0 * n), 0.5, 0.005);
  EXPECT_THROW(prf_position(key, ContextWindow({1}), 0), DomainError);
  EXPECT_THROW(prf_mask(key, ContextWindow({1}), 0), DomainError);
}

TEST(WatermarkKey, HexRoundTrip) {
  const auto key = WatermarkKey::generate();
  EXPECT_EQ(WatermarkKey::from_hex(key.to_hex()), key);
  EXPECT_EQ(counting_key().to_hex().substr(0, 8), "00010203");
  EXPECT_EQ(WatermarkKey::from_hex("000102030405060708090A0B0C0D0E0F101112131415161718191a1b1c1d1e1f"),
            counting_key());
  EXPECT_THROW(WatermarkKey::from_hex("abc"), ParseError);
  EXPECT_THROW(WatermarkKey::from_hex(std::string(64, 'g')), ParseError);
  EXPECT_EQ(WatermarkKey::from_seed(3), WatermarkKey::from_seed(3));
  EXPECT_NE(WatermarkKey::from_seed(3), WatermarkKey::from_seed(4));
}
