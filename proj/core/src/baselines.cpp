#include "bimark/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bimark/error.hpp"

namespace bimark {
namespace {

std::vector<TokenId> window_shuffle(const WatermarkKey& key, const ContextWindow& window,
                                    std::size_t n) {
  std::vector<TokenId> ids(n);
  std::iota(ids.begin(), ids.end(), TokenId{0});
  CounterRng rng(derive_seed(key, SeedDomain::window_partition, window.payload()));
  keyed_shuffle(ids, rng);
  return ids;
}

void check_tokens(std::span<const TokenId> tokens, std::size_t vocab_size) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= vocab_size) {
      throw DomainError("token " + std::to_string(tokens[t]) + " at index " + std::to_string(t) +
                        " outside vocabulary");
    }
  }
}

}  // namespace

ProbabilityDistribution srl_reweight(const ProbabilityDistribution& dist,
                                     std::span<const TokenId> greenlist, double delta_logit) {
  const auto probs = dist.probs();
  std::vector<double> logits(probs.size());
  for (std::size_t x = 0; x < probs.size(); ++x) logits[x] = std::log(std::max(probs[x], kLogFloor));
  for (TokenId g : greenlist) {
    if (g >= logits.size()) throw DomainError("srl_reweight: green token outside vocabulary");
    logits[g] += delta_logit;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logits) l /= sum;
  return ProbabilityDistribution(std::move(logits));
}

std::vector<TokenId> srl_greenlist(const WatermarkKey& key, const ContextWindow& window,
                                   double gamma, std::size_t vocab_size) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("srl_greenlist: gamma outside (0, 1)");
  auto ids = window_shuffle(key, window, vocab_size);
  ids.resize(static_cast<std::size_t>(std::floor(gamma * static_cast<double>(vocab_size))));
  return ids;
}

ProbabilityDistribution srl_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                                 const ContextWindow& window, const SoftRedListParams& params) {
  const auto green = srl_greenlist(key, window, params.gamma, dist.vocab_size());
  return srl_reweight(dist, green, params.delta_logit);
}

BaselineDetection srl_detect(std::span<const TokenId> tokens, const WatermarkKey& key,
                             const SoftRedListParams& params) {
  check_tokens(tokens, params.vocab_size);
  BaselineDetection out{VotingMatrix(1), Message::zero_bit(), 0.0, 1.0};
  const auto sentinel = static_cast<TokenId>(params.vocab_size);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto window = ContextWindow::preceding(tokens.first(t), params.h, sentinel);
    const auto green = srl_greenlist(key, window, params.gamma, params.vocab_size);
    const bool hit = std::find(green.begin(), green.end(), tokens[t]) != green.end();
    out.matrix.add(0, hit ? 1 : 0);
  }
  if (out.matrix.total() > 0) {
    out.z = z_score(out.matrix(0, 1), out.matrix.total(), params.gamma);
    out.p_value = p_value(out.z);
  }
  return out;
}

VocabularyBipartition mpac_partition(const WatermarkKey& key, const ContextWindow& window,
                                     std::size_t vocab_size) {
  const std::size_t padded = VocabularyBipartition::padded_size(vocab_size);
  const auto ids = window_shuffle(key, window, padded);
  std::vector<std::uint8_t> membership(padded, 0);
  for (std::size_t r = padded / 2; r < padded; ++r) membership[ids[r]] = 1;
  return VocabularyBipartition(vocab_size, std::move(membership));
}

ProbabilityDistribution mpac_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                                  const ContextWindow& window, const Message& message,
                                  const MPACParams& params) {
  if (message.size() != params.ell) throw DimensionError("mpac_step: message length != ell");
  const std::size_t p = prf_position(key, window, params.ell);
  const auto part = mpac_partition(key, window, dist.vocab_size());
  std::vector<TokenId> green;
  green.reserve(dist.vocab_size() / 2 + 1);
  for (TokenId x = 0; x < dist.vocab_size(); ++x) {
    if (part.bit(x) == message[p]) green.push_back(x);
  }
  return srl_reweight(dist, green, params.delta_logit);
}

BaselineDetection mpac_extract(std::span<const TokenId> tokens, const WatermarkKey& key,
                               const MPACParams& params) {
  if (params.ell < 1) throw DomainError("mpac_extract: ell must be >= 1");
  check_tokens(tokens, params.vocab_size);
  BaselineDetection out{VotingMatrix(params.ell), Message(), 0.0, 1.0};
  const auto sentinel = static_cast<TokenId>(params.vocab_size);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto window = ContextWindow::preceding(tokens.first(t), params.h, sentinel);
    const std::size_t p = prf_position(key, window, params.ell);
    const auto part = mpac_partition(key, window, params.vocab_size);
    out.matrix.add(p, part.bit(tokens[t]));
  }
  out.extracted = extract_message(out.matrix).message;
  if (out.matrix.total() > 0) {
    const GreenCount g = params.ell == 1 ? green_count(out.matrix, Message::zero_bit())
                                         : green_count(out.matrix);
    out.z = z_score(g.green, g.total);
    out.p_value = p_value(out.z);
  }
  return out;
}

}  // namespace bimark
