#pragma once

// Model-agnostic detection: rebuild positions and masks from the key, read
// each layer's coin flip off the token's partition membership, XOR it with the
// mask bit and vote for the resulting message bit. Row-wise majority recovers
// the message; the green count feeds a one-proportion z-test with gamma 0.5.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "bimark/embed.hpp"
#include "bimark/prf.hpp"
#include "bimark/reweight.hpp"

namespace bimark {

/// ell x 2 evidence counter: counts(p, b) = votes that message bit p is b.
class VotingMatrix {
 public:
  VotingMatrix() = default;
  explicit VotingMatrix(std::size_t ell) : counts_(ell, {0, 0}) {}
  explicit VotingMatrix(std::vector<std::array<std::uint64_t, 2>> rows)
      : counts_(std::move(rows)) {}

  std::size_t ell() const noexcept { return counts_.size(); }
  std::uint64_t operator()(std::size_t p, std::size_t b) const { return counts_[p][b]; }
  const std::array<std::uint64_t, 2>& row(std::size_t p) const { return counts_[p]; }
  void add(std::size_t p, std::uint8_t b, std::uint64_t n = 1) { counts_[p][b] += n; }
  std::uint64_t total() const noexcept;

  /// Elementwise sum; ell must match.
  VotingMatrix& operator+=(const VotingMatrix& other);

  friend bool operator==(const VotingMatrix&, const VotingMatrix&) = default;

 private:
  std::vector<std::array<std::uint64_t, 2>> counts_;
};

struct VoteTally {
  VotingMatrix matrix;
  std::vector<VotingMatrix> per_layer;  // layer i's votes alone
  std::size_t fresh = 0;                // tokens that voted
  std::size_t skipped = 0;              // tokens under a repeated window
};

/// Throws DomainError if a token id is outside the vocabulary.
VoteTally gather_votes(std::span<const TokenId> tokens, const WatermarkKey& key,
                       const EmbedParams& params, const PartitionStack& stack);

struct Extraction {
  Message message;
  std::vector<std::size_t> ambiguous;  // ties and empty rows, decoded as 0
};

Extraction extract_message(const VotingMatrix& matrix);

struct GreenCount {
  std::uint64_t green = 0;  // G
  std::uint64_t total = 0;  // N
};

/// G = sum over rows of the row maximum, N = all votes.
GreenCount green_count(const VotingMatrix& matrix);
/// G = votes agreeing with a known message. Used for zero-bit detection,
/// where the embedded bit is fixed and known.
GreenCount green_count(const VotingMatrix& matrix, const Message& known);

/// (G/N - gamma) / sqrt(gamma (1 - gamma) / N). Throws UndefinedStatistic on N = 0.
double z_score(std::uint64_t green, std::uint64_t total, double gamma = 0.5);
/// One-sided upper tail probability of z.
double p_value(double z);

struct DetectionReport {
  double z = 0.0;
  double p_value = 1.0;
  Message extracted;
  std::uint64_t green = 0;
  std::uint64_t total = 0;
  std::vector<std::size_t> ambiguous;
  std::size_t skipped = 0;
  bool decision = false;
  double threshold = 0.0;

  nlohmann::json to_json() const;
};

/// gather_votes -> extract_message -> green_count -> z -> p-value.
/// With ell == 1 (zero-bit mode) the green count is taken against the fixed
/// bit 1, which keeps z standard normal on unwatermarked text; for ell > 1
/// it is the sum of row maxima.
DetectionReport detect(std::span<const TokenId> tokens, const WatermarkKey& key,
                       const EmbedParams& params, const PartitionStack& stack,
                       double threshold);

DetectionReport report_from_tally(const VoteTally& tally, double threshold);

/// Fraction of matching bits. Throws DimensionError on length mismatch.
double extraction_rate(const Message& extracted, const Message& reference);

struct GreenStats {
  double tau = 0.0;
  double delta_base = 0.0;
  double expectation = 0.5;
  double variance = 0.25;
};

/// Mean and variance of the single-layer green indicator for V1 mass tau.
GreenStats expected_green_stats(double tau, double delta_base);

/// Predicted probability that a single-layer watermark of length T stays
/// below the z critical value at significance alpha.
double type2_error(double tau, double delta_base, std::size_t T, double alpha);

}  // namespace bimark
