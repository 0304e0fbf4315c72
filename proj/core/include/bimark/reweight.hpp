#pragma once

// Bit-flip unbiased reweighting over balanced vocabulary bipartitions.
//
// A single layer moves probability mass between the two halves V0 and V1 of
// a bipartition. A fair coin decides the direction; the amounts moved in
// either direction are equal, so averaging the two outcomes reproduces the
// input distribution exactly. Stacking independent layers keeps that
// property.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bimark/distribution.hpp"

namespace bimark {

enum class CoinFlip : std::uint8_t { tails = 0, heads = 1 };

constexpr std::uint8_t to_bit(CoinFlip e) noexcept { return static_cast<std::uint8_t>(e); }
constexpr CoinFlip to_flip(std::uint8_t bit) noexcept {
  return bit ? CoinFlip::heads : CoinFlip::tails;
}

/// Balanced two-way split of the vocabulary. Membership bit 0 means V0,
/// 1 means V1.
///
/// Odd vocabularies carry one extra dummy token (id == vocab_size) so that
/// |V0| == |V1|. The dummy never has probability mass.
class VocabularyBipartition {
 public:
  /// `membership` must have length padded_size(vocab_size) and contain
  /// exactly half ones.
  VocabularyBipartition(std::size_t vocab_size, std::vector<std::uint8_t> membership);

  static constexpr std::size_t padded_size(std::size_t vocab_size) noexcept {
    return vocab_size + (vocab_size & 1u);
  }

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t padded_size() const noexcept { return bits_.size(); }

  /// Membership bit of `token`; no range check.
  std::uint8_t bit(TokenId token) const noexcept { return bits_[token]; }
  /// Range-checked membership bit. Throws DomainError.
  std::uint8_t membership(TokenId token) const;

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const VocabularyBipartition&,
                         const VocabularyBipartition&) = default;

 private:
  std::size_t vocab_size_;
  std::vector<std::uint8_t> bits_;
};

/// One bipartition per reweighting layer; all layers share vocab_size.
class PartitionStack {
 public:
  PartitionStack() = default;
  explicit PartitionStack(std::vector<VocabularyBipartition> layers);

  std::size_t depth() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }
  std::size_t vocab_size() const noexcept {
    return layers_.empty() ? 0 : layers_.front().vocab_size();
  }
  const VocabularyBipartition& operator[](std::size_t i) const { return layers_[i]; }
  const VocabularyBipartition& layer(std::size_t i) const { return layers_.at(i); }

  auto begin() const noexcept { return layers_.begin(); }
  auto end() const noexcept { return layers_.end(); }

  friend bool operator==(const PartitionStack&, const PartitionStack&) = default;

 private:
  std::vector<VocabularyBipartition> layers_;
};

struct ScalingFactors {
  double tau = 0.0;         // mass of V1 before reweighting
  double delta0 = 0.0;      // scale applied to V0
  double delta1 = 0.0;      // scale applied to V1
  double delta_base = 0.0;  // user cap the factors were derived from
};

/// Total probability of V1 under `dist`.
double partition_mass(const ProbabilityDistribution& dist,
                      const VocabularyBipartition& part);

/// Derives (delta0, delta1) from the V1 mass and the base scaling factor.
///
/// delta1 is the base factor unless boosting V1 by it would exceed all of the
/// mass, in which case V1 is saturated to probability one. delta0 is tied to
/// delta1 so that delta0 * (1 - tau) == delta1 * tau. tau == 0 and tau == 1
/// both yield (0, 0): there is nothing on the other side to move.
///
/// Throws DomainError unless tau and delta_base lie in [0, 1].
ScalingFactors scaling_factors(double tau, double delta_base);

ProbabilityDistribution bit_flip_reweight(const ProbabilityDistribution& dist,
                                          const VocabularyBipartition& part,
                                          CoinFlip e, double delta_base);

/// Applies layer 0, then layer 1, ..., then layer d-1.
ProbabilityDistribution multilayer_reweight(const ProbabilityDistribution& dist,
                                            const PartitionStack& stack,
                                            std::span<const CoinFlip> flips,
                                            double delta_base);

/// True iff the token sits in the half that layer flip `e` boosts.
bool green_indicator(TokenId token, const VocabularyBipartition& part, CoinFlip e);

namespace detail {
// In-place single layer used by the multilayer path. Returns the factors used.
ScalingFactors reweight_in_place(std::vector<double>& probs,
                                 const VocabularyBipartition& part, CoinFlip e,
                                 double delta_base);
}  // namespace detail

}  // namespace bimark
