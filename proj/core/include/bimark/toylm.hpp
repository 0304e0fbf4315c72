#pragma once

// Synthetic next-token models for desk-scale experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "bimark/distribution.hpp"
#include "bimark/embed.hpp"

namespace bimark {

/// Order-k Markov model whose conditional distributions are symmetric
/// Dirichlet(alpha) draws keyed by (seed, last k tokens). Small alpha gives
/// peaked, low-entropy conditionals; large alpha approaches uniform.
///
/// The Dirichlet draws come from the keyed PRF machinery (synthetic_lm seed
/// domain, all-zero key) with a self-contained gamma sampler, so a model is
/// reproducible from its four parameters on any platform.
class SyntheticLM final : public LanguageModel {
 public:
  SyntheticLM(std::size_t vocab_size, std::size_t order, double alpha, std::uint64_t seed,
              std::size_t cache_entries = 4096);

  std::size_t vocab_size() const override { return vocab_size_; }
  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  std::uint64_t seed() const noexcept { return seed_; }

  ProbabilityDistribution next_distribution(std::span<const TokenId> prefix) const override;

 private:
  ProbabilityDistribution draw(std::span<const TokenId> context) const;

  std::size_t vocab_size_;
  std::size_t order_;
  double alpha_;
  std::uint64_t seed_;
  std::size_t cache_entries_;

  // Memo of drawn conditionals; purely an optimization, contents are a
  // function of the context.
  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& c) const noexcept;
  };
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::vector<TokenId>, std::shared_ptr<const ProbabilityDistribution>,
                             ContextHash>
      cache_;
};

/// Shannon entropy in bits, with 0 log 0 = 0.
double entropy_bits(const ProbabilityDistribution& dist);

/// Ordered distributions captured from an external model.
///
/// File format: a header line `vocab_size=N` (optionally followed by
/// ` normalize=on`), then one distribution per line as whitespace-separated
/// decimal reals. Without normalize=on every row must sum to one within
/// 1e-6.
class DistributionTrace {
 public:
  static constexpr double kRowTolerance = 1e-6;

  DistributionTrace() = default;
  explicit DistributionTrace(std::vector<ProbabilityDistribution> steps);

  static DistributionTrace parse(std::istream& in);
  static DistributionTrace load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return steps_.size(); }
  std::size_t vocab_size() const noexcept { return steps_.empty() ? 0 : steps_[0].vocab_size(); }
  /// Throws DomainError when step is past the end.
  const ProbabilityDistribution& replay(std::size_t step) const;

 private:
  std::vector<ProbabilityDistribution> steps_;
};

/// Replays a trace as a language model: the distribution for a prefix of
/// length prompt_length + i is step i.
class TraceLM final : public LanguageModel {
 public:
  TraceLM(DistributionTrace trace, std::size_t prompt_length)
      : trace_(std::move(trace)), prompt_length_(prompt_length) {}

  std::size_t vocab_size() const override { return trace_.vocab_size(); }
  ProbabilityDistribution next_distribution(std::span<const TokenId> prefix) const override;

 private:
  DistributionTrace trace_;
  std::size_t prompt_length_;
};

}  // namespace bimark
