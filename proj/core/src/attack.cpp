#include <algorithm>
#include <numeric>
#include <string>

#include "bimark/error.hpp"
#include "bimark/experiment.hpp"
#include "bimark/prf.hpp"

namespace bimark {

std::vector<TokenId> substitution_attack(std::span<const TokenId> tokens, double ratio,
                                         std::size_t vocab_size, std::uint64_t attack_seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("attack: ratio outside [0, 1]");
  if (vocab_size < 2) throw DomainError("attack: vocab_size must be >= 2");

  std::vector<TokenId> out(tokens.begin(), tokens.end());
  // The epsilon absorbs representation error, e.g. 0.29 * 100 = 28.999...
  const auto count = std::min(
      out.size(), static_cast<std::size_t>(ratio * static_cast<double>(out.size()) + 1e-9));
  CounterRng rng(attack_seed);

  // Partial Fisher-Yates over positions picks `count` distinct indices.
  std::vector<std::size_t> positions(out.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(positions.size() - i);
    std::swap(positions[i], positions[j]);
    const std::size_t at = positions[i];
    // Draw from the vocabulary minus the original token.
    auto replacement = static_cast<TokenId>(rng.below(vocab_size - 1));
    if (replacement >= out[at]) ++replacement;
    out[at] = replacement;
  }
  return out;
}

}  // namespace bimark
