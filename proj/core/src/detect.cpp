#include "bimark/detect.hpp"

#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "bimark/error.hpp"
#include "bimark/stats.hpp"

namespace bimark {

namespace stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p outside (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace stats

std::uint64_t VotingMatrix::total() const noexcept {
  std::uint64_t n = 0;
  for (const auto& r : counts_) n += r[0] + r[1];
  return n;
}

VotingMatrix& VotingMatrix::operator+=(const VotingMatrix& other) {
  if (other.ell() != ell()) throw DimensionError("voting matrix: ell mismatch");
  for (std::size_t p = 0; p < counts_.size(); ++p) {
    counts_[p][0] += other.counts_[p][0];
    counts_[p][1] += other.counts_[p][1];
  }
  return *this;
}

VoteTally gather_votes(std::span<const TokenId> tokens, const WatermarkKey& key,
                       const EmbedParams& params, const PartitionStack& stack) {
  if (params.ell < 1) throw DomainError("gather_votes: ell must be >= 1");
  if (stack.depth() != params.d) {
    throw DimensionError("gather_votes: partition stack depth != d");
  }
  if (stack.vocab_size() != params.vocab_size) {
    throw DimensionError("gather_votes: partition vocab_size != params.vocab_size");
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= params.vocab_size) {
      throw DomainError("gather_votes: token " + std::to_string(tokens[t]) + " at index " +
                        std::to_string(t) + " outside vocabulary of " +
                        std::to_string(params.vocab_size));
    }
  }

  VoteTally tally{VotingMatrix(params.ell),
                  std::vector<VotingMatrix>(params.d, VotingMatrix(params.ell)), 0, 0};
  SeenContextLog log;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto window = ContextWindow::preceding(tokens.first(t), params.h, params.sentinel());
    if (log.check_and_record(window)) {
      ++tally.skipped;
      continue;
    }
    ++tally.fresh;
    const std::size_t p = prf_position(key, window, params.ell);
    const auto mask = prf_mask(key, window, params.d);
    for (std::size_t i = 0; i < params.d; ++i) {
      // The observed membership is the estimate of the layer's coin flip;
      // XOR with the mask undoes the one-time pad.
      const std::uint8_t vote = stack[i].bit(tokens[t]) ^ mask[i];
      tally.matrix.add(p, vote);
      tally.per_layer[i].add(p, vote);
    }
  }
  return tally;
}

Extraction extract_message(const VotingMatrix& matrix) {
  std::vector<std::uint8_t> bits(matrix.ell(), 0);
  std::vector<std::size_t> ambiguous;
  for (std::size_t p = 0; p < matrix.ell(); ++p) {
    const auto& r = matrix.row(p);
    if (r[0] == r[1]) {
      ambiguous.push_back(p);
    } else {
      bits[p] = r[1] > r[0] ? 1 : 0;
    }
  }
  if (bits.empty()) return {Message(), std::move(ambiguous)};
  return {Message(std::move(bits)), std::move(ambiguous)};
}

GreenCount green_count(const VotingMatrix& matrix) {
  GreenCount g;
  for (std::size_t p = 0; p < matrix.ell(); ++p) {
    const auto& r = matrix.row(p);
    g.green += std::max(r[0], r[1]);
    g.total += r[0] + r[1];
  }
  return g;
}

GreenCount green_count(const VotingMatrix& matrix, const Message& known) {
  if (known.size() != matrix.ell()) {
    throw DimensionError("green_count: message length != ell");
  }
  GreenCount g;
  for (std::size_t p = 0; p < matrix.ell(); ++p) {
    const auto& r = matrix.row(p);
    g.green += r[known[p]];
    g.total += r[0] + r[1];
  }
  return g;
}

double z_score(std::uint64_t green, std::uint64_t total, double gamma) {
  if (total == 0) throw UndefinedStatistic("z_score: no votes (N = 0)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("z_score: gamma outside (0, 1)");
  const double n = static_cast<double>(total);
  return (static_cast<double>(green) / n - gamma) / std::sqrt(gamma * (1.0 - gamma) / n);
}

double p_value(double z) { return stats::normal_upper_tail(z); }

nlohmann::json DetectionReport::to_json() const {
  return nlohmann::json{{"z", z},
                        {"p_value", p_value},
                        {"message", extracted.to_string()},
                        {"G", green},
                        {"N", total},
                        {"ambiguous", ambiguous},
                        {"skipped", skipped},
                        {"decision", decision},
                        {"threshold", threshold}};
}

DetectionReport report_from_tally(const VoteTally& tally, double threshold) {
  DetectionReport report;
  auto extraction = extract_message(tally.matrix);
  const GreenCount g = tally.matrix.ell() == 1
                           ? green_count(tally.matrix, Message::zero_bit())
                           : green_count(tally.matrix);
  report.z = z_score(g.green, g.total);
  report.p_value = p_value(report.z);
  report.extracted = std::move(extraction.message);
  report.ambiguous = std::move(extraction.ambiguous);
  report.green = g.green;
  report.total = g.total;
  report.skipped = tally.skipped;
  report.threshold = threshold;
  report.decision = report.z > threshold;
  return report;
}

DetectionReport detect(std::span<const TokenId> tokens, const WatermarkKey& key,
                       const EmbedParams& params, const PartitionStack& stack,
                       double threshold) {
  return report_from_tally(gather_votes(tokens, key, params, stack), threshold);
}

double extraction_rate(const Message& extracted, const Message& reference) {
  if (extracted.size() != reference.size()) {
    throw DimensionError("extraction_rate: message lengths differ");
  }
  if (reference.size() == 0) throw DimensionError("extraction_rate: empty messages");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) matches += extracted[i] == reference[i];
  return static_cast<double>(matches) / static_cast<double>(reference.size());
}

GreenStats expected_green_stats(double tau, double delta_base) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("expected_green_stats: tau outside [0, 1]");
  if (!(delta_base >= 0.0 && delta_base <= 1.0)) {
    throw DomainError("expected_green_stats: delta_base outside [0, 1]");
  }
  GreenStats s{tau, delta_base, 0.0, 0.0};
  // Saturation starts where (1 + delta_base) tau exceeds one.
  if ((1.0 + delta_base) * tau > 1.0) {
    s.expectation = 1.5 - tau;
    s.variance = -0.75 + 2.0 * tau - tau * tau;
  } else {
    s.expectation = 0.5 + delta_base * tau;
    s.variance = 0.25 - delta_base * delta_base * tau * tau;
  }
  s.variance = std::max(s.variance, 0.0);
  return s;
}

double type2_error(double tau, double delta_base, std::size_t T, double alpha) {
  if (T < 1) throw DomainError("type2_error: T must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("type2_error: alpha outside (0, 1)");
  const GreenStats s = expected_green_stats(tau, delta_base);
  if (s.variance <= 0.0) {
    if (s.expectation > 0.5) return 0.0;
    throw UndefinedStatistic("type2_error: zero variance without watermark signal");
  }
  const double critical = stats::normal_quantile(1.0 - alpha);
  const double shift = 2.0 * (s.expectation - 0.5) * std::sqrt(static_cast<double>(T));
  return stats::normal_cdf((critical - shift) / (2.0 * std::sqrt(s.variance)));
}

}  // namespace bimark
