#include "bimark/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bimark/error.hpp"

namespace bimark {
namespace {

constexpr double kRenormalizeThreshold = 1e-12;
constexpr double kDriftLimit = 1e-6;
constexpr double kSaturationSlack = 1e-12;

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

// delta for the boosted side given its mass, capped so the boosted side never
// exceeds probability one.
double capped_delta(double mass, double delta_base) {
  if (mass == 0.0) return 0.0;
  if ((1.0 + delta_base) * mass > 1.0) return (1.0 - mass) / mass;
  return delta_base;
}

void check_sizes(const ProbabilityDistribution& dist, const VocabularyBipartition& part) {
  if (dist.vocab_size() != part.vocab_size()) {
    throw DimensionError("reweight: distribution has " +
                         std::to_string(dist.vocab_size()) +
                         " entries, partition covers " +
                         std::to_string(part.vocab_size()));
  }
}

}  // namespace

VocabularyBipartition::VocabularyBipartition(std::size_t vocab_size,
                                             std::vector<std::uint8_t> membership)
    : vocab_size_(vocab_size), bits_(std::move(membership)) {
  if (vocab_size_ == 0) throw DomainError("bipartition: empty vocabulary");
  if (bits_.size() != padded_size(vocab_size_)) {
    throw DimensionError("bipartition: membership length " +
                         std::to_string(bits_.size()) + " != padded vocab size " +
                         std::to_string(padded_size(vocab_size_)));
  }
  std::size_t ones = 0;
  for (auto b : bits_) {
    if (b > 1) throw DomainError("bipartition: membership entries must be 0 or 1");
    ones += b;
  }
  if (2 * ones != bits_.size()) throw DomainError("bipartition: |V0| != |V1|");
}

std::uint8_t VocabularyBipartition::membership(TokenId token) const {
  if (token >= vocab_size_) {
    throw DomainError("bipartition: token " + std::to_string(token) +
                      " outside vocabulary of " + std::to_string(vocab_size_));
  }
  return bits_[token];
}

PartitionStack::PartitionStack(std::vector<VocabularyBipartition> layers)
    : layers_(std::move(layers)) {
  for (const auto& layer : layers_) {
    if (layer.vocab_size() != layers_.front().vocab_size()) {
      throw DimensionError("partition stack: layers disagree on vocab_size");
    }
  }
}

double partition_mass(const ProbabilityDistribution& dist,
                      const VocabularyBipartition& part) {
  check_sizes(dist, part);
  const auto probs = dist.probs();
  double tau = 0.0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    if (part.bit(static_cast<TokenId>(x))) tau += probs[x];
  }
  return std::clamp(tau, 0.0, 1.0);
}

ScalingFactors scaling_factors(double tau, double delta_base) {
  if (!in_unit_interval(tau)) throw DomainError("scaling_factors: tau outside [0, 1]");
  if (!in_unit_interval(delta_base)) {
    throw DomainError("scaling_factors: delta_base outside [0, 1]");
  }
  ScalingFactors f{tau, 0.0, 0.0, delta_base};
  if (tau == 0.0 || tau == 1.0) return f;

  if ((1.0 + delta_base) * tau > 1.0) {
    // V1 saturates to probability one and V0 drains to exactly zero.
    f.delta1 = (1.0 - tau) / tau;
    f.delta0 = 1.0;
    return f;
  }
  f.delta1 = delta_base;
  f.delta0 = std::min(delta_base * tau / (1.0 - tau), 1.0);

  // Mirror image on V0: tie delta1 back to a capped delta0. Only reachable
  // through rounding when delta_base <= 1.
  if ((1.0 + f.delta0) * (1.0 - tau) > 1.0 + kSaturationSlack) {
    f.delta0 = capped_delta(1.0 - tau, delta_base);
    f.delta1 = f.delta0 * (1.0 - tau) / tau;
  }
  return f;
}

namespace detail {

ScalingFactors reweight_in_place(std::vector<double>& probs,
                                 const VocabularyBipartition& part, CoinFlip e,
                                 double delta_base) {
  double tau = 0.0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    if (part.bit(static_cast<TokenId>(x))) tau += probs[x];
  }
  const ScalingFactors f = scaling_factors(std::clamp(tau, 0.0, 1.0), delta_base);
  if (f.delta0 == 0.0 && f.delta1 == 0.0) return f;

  // scale[membership bit]
  double scale[2];
  if (e == CoinFlip::heads) {
    scale[0] = 1.0 - f.delta0;
    scale[1] = 1.0 + f.delta1;
  } else {
    scale[0] = 1.0 + f.delta0;
    scale[1] = 1.0 - f.delta1;
  }

  double sum = 0.0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    probs[x] = std::min(probs[x] * scale[part.bit(static_cast<TokenId>(x))], 1.0);
    sum += probs[x];
  }
  const double drift = std::abs(sum - 1.0);
  if (drift > kDriftLimit) {
    throw ContractViolation("reweight: output mass drifted to " + std::to_string(sum));
  }
  if (drift > kRenormalizeThreshold) {
    for (double& p : probs) p /= sum;
  }
  return f;
}

}  // namespace detail

ProbabilityDistribution bit_flip_reweight(const ProbabilityDistribution& dist,
                                          const VocabularyBipartition& part,
                                          CoinFlip e, double delta_base) {
  check_sizes(dist, part);
  std::vector<double> probs(dist.probs().begin(), dist.probs().end());
  detail::reweight_in_place(probs, part, e, delta_base);
  return ProbabilityDistribution(std::move(probs));
}

ProbabilityDistribution multilayer_reweight(const ProbabilityDistribution& dist,
                                            const PartitionStack& stack,
                                            std::span<const CoinFlip> flips,
                                            double delta_base) {
  if (flips.size() != stack.depth()) {
    throw DimensionError("multilayer_reweight: " + std::to_string(flips.size()) +
                         " flips for " + std::to_string(stack.depth()) + " layers");
  }
  if (!stack.empty()) check_sizes(dist, stack[0]);
  std::vector<double> probs(dist.probs().begin(), dist.probs().end());
  for (std::size_t i = 0; i < stack.depth(); ++i) {
    detail::reweight_in_place(probs, stack[i], flips[i], delta_base);
  }
  return ProbabilityDistribution(std::move(probs));
}

bool green_indicator(TokenId token, const VocabularyBipartition& part, CoinFlip e) {
  return part.membership(token) == to_bit(e);
}

}  // namespace bimark
