#include "bimark/distribution.hpp"

#include <cmath>
#include <string>

#include "bimark/error.hpp"

namespace bimark {

ProbabilityDistribution::ProbabilityDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw DomainError("distribution: vocab_size must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DomainError("distribution: entry " + std::to_string(i) +
                        " outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw DomainError("distribution: entries sum to " + std::to_string(sum));
  }
}

ProbabilityDistribution ProbabilityDistribution::uniform(std::size_t vocab_size) {
  if (vocab_size == 0) throw DomainError("distribution: vocab_size must be positive");
  return ProbabilityDistribution(
      std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size)));
}

ProbabilityDistribution ProbabilityDistribution::point_mass(std::size_t vocab_size,
                                                            TokenId token) {
  if (token >= vocab_size) throw DomainError("distribution: token out of range");
  std::vector<double> probs(vocab_size, 0.0);
  probs[token] = 1.0;
  return ProbabilityDistribution(std::move(probs));
}

ProbabilityDistribution ProbabilityDistribution::from_weights(
    std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || std::isinf(w)) throw DomainError("distribution: invalid weight");
    sum += w;
  }
  if (!(sum > 0.0)) throw DomainError("distribution: weights sum to zero");
  for (double& w : weights) w /= sum;
  return ProbabilityDistribution(std::move(weights));
}

}  // namespace bimark
