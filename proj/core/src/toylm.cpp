#include "bimark/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "bimark/error.hpp"
#include "bimark/prf.hpp"

namespace bimark {
namespace {

double open_unit(CounterRng& rng) {
  // (0, 1]: safe for log().
  return 1.0 - rng.uniform01();
}

double standard_normal(CounterRng& rng) {
  const double u1 = open_unit(rng);
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// log of a Gamma(shape, 1) variate. Marsaglia-Tsang for shape >= 1; for
// shape < 1 the boost G(a) = G(a + 1) U^(1/a) is applied in log space so
// tiny shapes do not underflow.
double log_gamma_variate(double shape, CounterRng& rng) {
  double log_boost = 0.0;
  if (shape < 1.0) {
    log_boost = std::log(open_unit(rng)) / shape;
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = standard_normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = open_unit(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d * v) + log_boost;
    }
  }
}

}  // namespace

SyntheticLM::SyntheticLM(std::size_t vocab_size, std::size_t order, double alpha,
                         std::uint64_t seed, std::size_t cache_entries)
    : vocab_size_(vocab_size),
      order_(order),
      alpha_(alpha),
      seed_(seed),
      cache_entries_(cache_entries) {
  if (vocab_size_ < 2) throw DomainError("synthetic lm: vocab_size must be >= 2");
  if (!(alpha_ > 0.0) || std::isinf(alpha_)) throw DomainError("synthetic lm: alpha must be > 0");
}

std::size_t SyntheticLM::ContextHash::operator()(const std::vector<TokenId>& c) const noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL ^ c.size();
  for (TokenId t : c) h = splitmix64_finalize(h ^ t);
  return static_cast<std::size_t>(h);
}

ProbabilityDistribution SyntheticLM::next_distribution(std::span<const TokenId> prefix) const {
  const auto context =
      ContextWindow::preceding(prefix, order_, static_cast<TokenId>(vocab_size_));
  std::vector<TokenId> ctx(context.tokens().begin(), context.tokens().end());
  if (cache_entries_ > 0) {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(ctx); it != cache_.end()) return *it->second;
  }
  auto dist = std::make_shared<const ProbabilityDistribution>(draw(ctx));
  if (cache_entries_ > 0) {
    std::lock_guard lock(cache_mutex_);
    if (cache_.size() < cache_entries_) cache_.emplace(std::move(ctx), dist);
  }
  return *dist;
}

ProbabilityDistribution SyntheticLM::draw(std::span<const TokenId> context) const {
  std::vector<std::uint8_t> payload;
  append_be64(payload, seed_);
  append_be32(payload, static_cast<std::uint32_t>(order_));
  for (TokenId t : context) append_be32(payload, t);
  CounterRng rng(derive_seed(WatermarkKey{}, SeedDomain::synthetic_lm, payload));

  std::vector<double> logs(vocab_size_);
  for (auto& l : logs) l = log_gamma_variate(alpha_, rng);
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (auto& l : logs) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logs) l /= sum;
  return ProbabilityDistribution(std::move(logs));
}

double entropy_bits(const ProbabilityDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

DistributionTrace::DistributionTrace(std::vector<ProbabilityDistribution> steps)
    : steps_(std::move(steps)) {
  for (const auto& s : steps_) {
    if (s.vocab_size() != steps_.front().vocab_size()) {
      throw DimensionError("distribution trace: rows disagree on vocab_size");
    }
  }
}

DistributionTrace DistributionTrace::parse(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t vocab = 0;
  bool normalize = false;
  bool have_header = false;
  std::vector<ProbabilityDistribution> steps;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    if (!have_header) {
      std::string field;
      while (fields >> field) {
        const auto eq = field.find('=');
        const auto name = field.substr(0, eq);
        const auto value = eq == std::string::npos ? std::string() : field.substr(eq + 1);
        if (name == "vocab_size") {
          try {
            vocab = std::stoul(value);
          } catch (const std::exception&) {
            throw ParseError("trace header: bad vocab_size", line_no);
          }
        } else if (name == "normalize") {
          normalize = value == "on" || value == "1" || value == "true";
        } else {
          throw ParseError("trace header: unknown field '" + name + "'", line_no);
        }
      }
      if (vocab < 1) throw ParseError("trace header: missing vocab_size", line_no);
      have_header = true;
      continue;
    }

    std::vector<double> row;
    row.reserve(vocab);
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("trace row " + std::to_string(steps.size()) + ": bad number '" + tok +
                             "'",
                         line_no);
      }
    }
    const std::string where = "trace row " + std::to_string(steps.size());
    if (row.size() != vocab) {
      throw ParseError(where + ": " + std::to_string(row.size()) + " entries, expected " +
                           std::to_string(vocab),
                       line_no);
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || std::isinf(p)) throw ParseError(where + ": negative entry", line_no);
      sum += p;
    }
    if (!(sum > 0.0)) throw ParseError(where + ": zero mass", line_no);
    if (!normalize && std::abs(sum - 1.0) > kRowTolerance) {
      throw ParseError(where + ": sums to " + std::to_string(sum), line_no);
    }
    // Rows already normalized to the distribution tolerance are kept verbatim
    // so that write/parse round trips are exact.
    if (std::abs(sum - 1.0) > ProbabilityDistribution::kSumTolerance) {
      for (double& p : row) p /= sum;
    }
    steps.emplace_back(std::move(row));
  }
  if (!have_header) throw ParseError("trace: missing header line");
  return DistributionTrace(std::move(steps));
}

DistributionTrace DistributionTrace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("trace: cannot open " + path.string());
  return parse(in);
}

void DistributionTrace::write(std::ostream& out) const {
  out << "vocab_size=" << vocab_size() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& step : steps_) {
    const auto probs = step.probs();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (i) out << ' ';
      out << probs[i];
    }
    out << '\n';
  }
}

void DistributionTrace::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trace: cannot write " + path.string());
  write(out);
}

const ProbabilityDistribution& DistributionTrace::replay(std::size_t step) const {
  if (step >= steps_.size()) {
    throw DomainError("trace: step " + std::to_string(step) + " past end (" +
                      std::to_string(steps_.size()) + " rows)");
  }
  return steps_[step];
}

ProbabilityDistribution TraceLM::next_distribution(std::span<const TokenId> prefix) const {
  if (prefix.size() < prompt_length_) throw DomainError("trace lm: prefix shorter than prompt");
  return trace_.replay(prefix.size() - prompt_length_);
}

}  // namespace bimark
