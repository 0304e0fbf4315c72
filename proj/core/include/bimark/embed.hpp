#pragma once

// Watermarked generation. For every token whose context window has not been
// used before, a message position and a one-time-pad mask are drawn from the
// window; XORing the selected message bit with each mask bit gives one fair
// coin flip per layer, and the multilayer reweighting of the model's
// distribution is sampled. Repeated windows sample the model unmodified.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bimark/distribution.hpp"
#include "bimark/prf.hpp"
#include "bimark/reweight.hpp"

namespace bimark {

class Message {
 public:
  Message() = default;
  explicit Message(std::vector<std::uint8_t> bits);

  /// Parses a string of '0'/'1'. Throws ParseError.
  static Message from_string(std::string_view bits);
  /// ell = 1, bit fixed to 1.
  static Message zero_bit() { return Message({1}); }

  std::size_t size() const noexcept { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return bits_[i]; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::string to_string() const;

  friend bool operator==(const Message&, const Message&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct EmbedParams {
  std::size_t d = 10;
  double delta_base = 1.0;
  std::size_t h = 2;
  std::size_t ell = 1;
  std::size_t vocab_size = 0;
  std::size_t max_new_tokens = 200;

  /// Throws DomainError on d < 1, ell < 1, h < 1, vocab_size < 2 or
  /// delta_base outside [0, 1].
  void validate() const;
  TokenId sentinel() const noexcept { return static_cast<TokenId>(vocab_size); }
};

/// Next-token distribution provider. Implementations must be deterministic
/// in the prefix; any sampling noise lives in the caller.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual ProbabilityDistribution next_distribution(std::span<const TokenId> prefix) const = 0;
};

struct TraceRecord {
  ContextWindow window;
  bool seeded = false;           // false: window repeated, sampled unmodified
  std::size_t position = 0;      // 0-based message index (seeded only)
  std::vector<std::uint8_t> mask;
  std::vector<CoinFlip> flips;
  TokenId token = 0;
};

using GenerationTrace = std::vector<TraceRecord>;

/// flips[i] = bit XOR mask[i].
std::vector<CoinFlip> coin_flips(std::uint8_t message_bit, std::span<const std::uint8_t> mask);

struct WatermarkStep {
  ProbabilityDistribution dist;
  TraceRecord record;  // token left unset
};

WatermarkStep watermark_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                             const ContextWindow& window, const Message& message,
                             const EmbedParams& params, const PartitionStack& stack,
                             SeenContextLog& log);

/// Inverse-CDF sampling with its own mt19937_64 stream, independent of the
/// watermark pseudorandomness.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : engine_(seed) {}
  TokenId sample(const ProbabilityDistribution& dist);

 private:
  std::mt19937_64 engine_;
};

struct Generation {
  std::vector<TokenId> tokens;  // generated tokens only, prompt excluded
  GenerationTrace trace;
};

/// Called once per emitted token with the model's distribution and the
/// distribution the token was actually sampled from.
using SampleObserver = std::function<void(const TraceRecord& record,
                                          const ProbabilityDistribution& original,
                                          const ProbabilityDistribution& sampled)>;

/// Per-step transform used by the plain generation loop: (model
/// distribution, full history) -> distribution to sample.
using StepTransform = std::function<ProbabilityDistribution(
    const ProbabilityDistribution&, std::span<const TokenId>)>;

/// Checks a distribution returned by a model; throws ContractViolation.
void check_model_output(const LanguageModel& lm, const ProbabilityDistribution& dist);

/// Autoregressive loop without trace; `transform` may be empty (unwatermarked).
std::vector<TokenId> generate_with(const LanguageModel& lm, std::span<const TokenId> prompt,
                                   std::size_t max_new_tokens, std::uint64_t sampler_seed,
                                   const StepTransform& transform);

Generation generate(const LanguageModel& lm, std::span<const TokenId> prompt,
                    const Message& message, const WatermarkKey& key,
                    const EmbedParams& params, const PartitionStack& stack,
                    std::uint64_t sampler_seed, const SampleObserver& observer = {});

/// Convenience overload deriving the partition stack from the key.
Generation generate(const LanguageModel& lm, std::span<const TokenId> prompt,
                    const Message& message, const WatermarkKey& key,
                    const EmbedParams& params, std::uint64_t sampler_seed);

}  // namespace bimark
