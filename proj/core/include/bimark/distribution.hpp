#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bimark {

using TokenId = std::uint32_t;

/// A normalized next-token probability vector indexed by token id.
///
/// Construction validates that every entry lies in [0, 1] and that the
/// entries sum to one within `kSumTolerance`; instances are immutable.
class ProbabilityDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbabilityDistribution(std::vector<double> probs);

  static ProbabilityDistribution uniform(std::size_t vocab_size);
  static ProbabilityDistribution point_mass(std::size_t vocab_size, TokenId token);
  /// Normalizes nonnegative weights. Throws DomainError if all are zero.
  static ProbabilityDistribution from_weights(std::vector<double> weights);

  std::size_t vocab_size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t token) const noexcept { return probs_[token]; }

  friend bool operator==(const ProbabilityDistribution&,
                         const ProbabilityDistribution&) = default;

 private:
  std::vector<double> probs_;
};

}  // namespace bimark
