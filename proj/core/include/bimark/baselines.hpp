#pragma once

// Reference baselines: Soft Red List (per-window green list, logit bias) and
// MPAC (per-window bipartition, the half named by the selected message bit is
// boosted). Both reuse the voting matrix and z machinery from detect.hpp.
// Neither uses context tracking.

#include <cstddef>
#include <span>
#include <vector>

#include "bimark/detect.hpp"
#include "bimark/distribution.hpp"
#include "bimark/embed.hpp"
#include "bimark/prf.hpp"
#include "bimark/reweight.hpp"

namespace bimark {

struct SoftRedListParams {
  double gamma = 0.5;
  double delta_logit = 2.0;
  std::size_t h = 2;
  std::size_t vocab_size = 0;
};

struct MPACParams {
  double delta_logit = 2.0;
  std::size_t ell = 1;
  std::size_t h = 2;
  std::size_t vocab_size = 0;
};

/// Zero probabilities are clamped to this before taking logs.
inline constexpr double kLogFloor = 1e-300;

/// Adds delta_logit to the log-probabilities of `greenlist` and applies
/// softmax.
ProbabilityDistribution srl_reweight(const ProbabilityDistribution& dist,
                                     std::span<const TokenId> greenlist, double delta_logit);

/// First floor(gamma * vocab_size) ids of a per-window keyed shuffle.
std::vector<TokenId> srl_greenlist(const WatermarkKey& key, const ContextWindow& window,
                                   double gamma, std::size_t vocab_size);

ProbabilityDistribution srl_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                                 const ContextWindow& window, const SoftRedListParams& params);

struct BaselineDetection {
  VotingMatrix matrix;
  Message extracted;
  double z = 0.0;
  double p_value = 1.0;
};

/// One-proportion z-test on green-list hits with proportion gamma. The
/// matrix is 1 x 2 (column 1 = green hits).
BaselineDetection srl_detect(std::span<const TokenId> tokens, const WatermarkKey& key,
                             const SoftRedListParams& params);

/// Per-window balanced bipartition: the first half of the shuffle is V0.
VocabularyBipartition mpac_partition(const WatermarkKey& key, const ContextWindow& window,
                                     std::size_t vocab_size);

ProbabilityDistribution mpac_step(const ProbabilityDistribution& dist, const WatermarkKey& key,
                                  const ContextWindow& window, const Message& message,
                                  const MPACParams& params);

/// One vote per token (d = 1 semantics) then the shared majority and z-test.
/// z is 0 and p_value 1 on an empty input.
BaselineDetection mpac_extract(std::span<const TokenId> tokens, const WatermarkKey& key,
                               const MPACParams& params);

}  // namespace bimark
