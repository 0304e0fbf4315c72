#include "bimark/embed.hpp"

#include <string>

#include "bimark/error.hpp"

namespace bimark {

Message::Message(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw DomainError("message: ell must be >= 1");
  for (auto b : bits_) {
    if (b > 1) throw DomainError("message: bits must be 0 or 1");
  }
}

Message Message::from_string(std::string_view bits) {
  std::vector<std::uint8_t> out;
  out.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') throw ParseError("message: expected only '0' and '1'");
    out.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  if (out.empty()) throw ParseError("message: empty bit string");
  return Message(std::move(out));
}

std::string Message::to_string() const {
  std::string out;
  out.reserve(bits_.size());
  for (auto b : bits_) out.push_back(static_cast<char>('0' + b));
  return out;
}

void EmbedParams::validate() const {
  if (d < 1) throw DomainError("params: d must be >= 1");
  if (ell < 1) throw DomainError("params: ell must be >= 1");
  if (h < 1) throw DomainError("params: h must be >= 1");
  if (vocab_size < 2) throw DomainError("params: vocab_size must be >= 2");
  if (!(delta_base >= 0.0 && delta_base <= 1.0)) {
    throw DomainError("params: delta_base outside [0, 1]");
  }
}

std::vector<CoinFlip> coin_flips(std::uint8_t message_bit, std::span<const std::uint8_t> mask) {
  std::vector<CoinFlip> flips;
  flips.reserve(mask.size());
  for (auto b : mask) flips.push_back(to_flip((message_bit ^ b) & 1u));
  return flips;
}

WatermarkStep watermark_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                             const ContextWindow& window, const Message& message,
                             const EmbedParams& params, const PartitionStack& stack,
                             SeenContextLog& log) {
  if (message.size() != params.ell) {
    throw DimensionError("watermark_step: message length " + std::to_string(message.size()) +
                         " != ell " + std::to_string(params.ell));
  }
  if (stack.depth() != params.d) {
    throw DimensionError("watermark_step: partition stack depth != d");
  }
  if (dist.vocab_size() != params.vocab_size) {
    throw DimensionError("watermark_step: distribution size != vocab_size");
  }

  TraceRecord record;
  record.window = window;
  if (log.check_and_record(window)) return {dist, std::move(record)};

  record.seeded = true;
  record.position = prf_position(key, window, params.ell);
  record.mask = prf_mask(key, window, params.d);
  record.flips = coin_flips(message[record.position], record.mask);
  auto reweighted = multilayer_reweight(dist, stack, record.flips, params.delta_base);
  return {std::move(reweighted), std::move(record)};
}

TokenId Sampler::sample(const ProbabilityDistribution& dist) {
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  const auto probs = dist.probs();
  double cumulative = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    if (probs[x] <= 0.0) continue;
    cumulative += probs[x];
    last_nonzero = x;
    if (u < cumulative) return static_cast<TokenId>(x);
  }
  // u landed in the rounding gap above the final cumulative sum.
  return static_cast<TokenId>(last_nonzero);
}

void check_model_output(const LanguageModel& lm, const ProbabilityDistribution& dist) {
  if (dist.vocab_size() != lm.vocab_size()) {
    throw ContractViolation("language model returned " + std::to_string(dist.vocab_size()) +
                            " probabilities for a vocabulary of " +
                            std::to_string(lm.vocab_size()));
  }
}

namespace {

ProbabilityDistribution query(const LanguageModel& lm, std::span<const TokenId> history) {
  try {
    auto dist = lm.next_distribution(history);
    check_model_output(lm, dist);
    return dist;
  } catch (const DomainError& e) {
    throw ContractViolation(std::string("language model returned an invalid distribution: ") +
                            e.what());
  }
}

}  // namespace

std::vector<TokenId> generate_with(const LanguageModel& lm, std::span<const TokenId> prompt,
                                   std::size_t max_new_tokens, std::uint64_t sampler_seed,
                                   const StepTransform& transform) {
  std::vector<TokenId> history(prompt.begin(), prompt.end());
  history.reserve(prompt.size() + max_new_tokens);
  Sampler sampler(sampler_seed);
  for (std::size_t t = 0; t < max_new_tokens; ++t) {
    const auto original = query(lm, history);
    const TokenId token = transform ? sampler.sample(transform(original, history))
                                    : sampler.sample(original);
    history.push_back(token);
  }
  return {history.begin() + static_cast<std::ptrdiff_t>(prompt.size()), history.end()};
}

Generation generate(const LanguageModel& lm, std::span<const TokenId> prompt,
                    const Message& message, const WatermarkKey& key,
                    const EmbedParams& params, const PartitionStack& stack,
                    std::uint64_t sampler_seed, const SampleObserver& observer) {
  params.validate();
  if (message.size() != params.ell) {
    throw DimensionError("generate: message length " + std::to_string(message.size()) +
                         " != ell " + std::to_string(params.ell));
  }
  if (lm.vocab_size() != params.vocab_size) {
    throw DimensionError("generate: model vocabulary != params.vocab_size");
  }

  std::vector<TokenId> history(prompt.begin(), prompt.end());
  history.reserve(prompt.size() + params.max_new_tokens);
  Generation out;
  out.trace.reserve(params.max_new_tokens);
  SeenContextLog log;
  Sampler sampler(sampler_seed);

  for (std::size_t t = 0; t < params.max_new_tokens; ++t) {
    const auto original = query(lm, history);
    const auto window = ContextWindow::preceding(history, params.h, params.sentinel());
    auto step = watermark_step(original, key, window, message, params, stack, log);
    step.record.token = sampler.sample(step.dist);
    if (observer) observer(step.record, original, step.dist);
    history.push_back(step.record.token);
    out.tokens.push_back(step.record.token);
    out.trace.push_back(std::move(step.record));
  }
  return out;
}

Generation generate(const LanguageModel& lm, std::span<const TokenId> prompt,
                    const Message& message, const WatermarkKey& key,
                    const EmbedParams& params, std::uint64_t sampler_seed) {
  params.validate();
  return generate(lm, prompt, message, key, params,
                  derive_partitions(key, params.vocab_size, params.d), sampler_seed);
}

}  // namespace bimark
