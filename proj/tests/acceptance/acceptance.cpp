// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "bimark/baselines.hpp"
#include "bimark/config.hpp"
#include "bimark/detect.hpp"
#include "bimark/embed.hpp"
#include "bimark/experiment.hpp"
#include "bimark/reweight.hpp"
#include "bimark/toylm.hpp"
#include "oracles.hpp"
#include "worked_example.hpp"

using namespace bimark;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  const char* name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

VocabularyBipartition random_partition(std::size_t n, std::mt19937_64& rng) {
  return VocabularyBipartition(n, oracle::random_balanced_membership(n, rng));
}

// Sampling from a distribution that never changes.
class FixedLM final : public LanguageModel {
 public:
  explicit FixedLM(ProbabilityDistribution dist) : dist_(std::move(dist)) {}
  std::size_t vocab_size() const override { return dist_.vocab_size(); }
  ProbabilityDistribution next_distribution(std::span<const TokenId>) const override {
    return dist_;
  }

 private:
  ProbabilityDistribution dist_;
};

ExperimentConfig base_config() {
  ExperimentConfig c;
  c.key = WatermarkKey::from_seed(20250101);
  c.params.vocab_size = 1024;
  c.params.d = 10;
  c.params.delta_base = 1.0;
  c.params.h = 2;
  c.lm.kind = "synthetic";
  c.lm.order = 1;
  c.lm.alpha = 1.0;
  c.lm.seed = 7;
  c.null_runs = false;
  c.master_seed = 99;
  c.substitution = {0.0};
  c.delta_bases = {1.0};
  c.depths = {10};
  return c;
}

// Single-layer unbiasedness over random distributions and partitions.
Outcome criterion1() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ProbabilityDistribution p(oracle::random_distribution(64, rng, trial % 5 == 0 ? 0.5 : 0.0));
    const auto part = random_partition(64, rng);
    for (double db : {0.3, 1.0}) {
      const auto a = bit_flip_reweight(p, part, CoinFlip::tails, db);
      const auto b = bit_flip_reweight(p, part, CoinFlip::heads, db);
      for (std::size_t x = 0; x < 64; ++x) worst = std::max(worst, std::abs(0.5 * (a[x] + b[x]) - p[x]));
    }
  }
  return {worst <= 1e-12, fmt("max |avg - P| = %.3e (tol 1e-12)", worst)};
}

// Multilayer unbiasedness by enumerating every flip vector.
Outcome criterion2() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ProbabilityDistribution p(oracle::random_distribution(8, rng));
    const PartitionStack stack(
        {random_partition(8, rng), random_partition(8, rng), random_partition(8, rng)});
    std::vector<double> avg(8, 0.0);
    for (unsigned m = 0; m < 8; ++m) {
      const std::vector<CoinFlip> flips{to_flip(m & 1), to_flip((m >> 1) & 1), to_flip((m >> 2) & 1)};
      const auto out = multilayer_reweight(p, stack, flips, 1.0);
      for (std::size_t x = 0; x < 8; ++x) avg[x] += out[x] / 8.0;
    }
    for (std::size_t x = 0; x < 8; ++x) worst = std::max(worst, std::abs(avg[x] - p[x]));
  }
  return {worst <= 1e-10, fmt("max |avg - P| = %.3e (tol 1e-10)", worst)};
}

// Monte Carlo green frequency and variance against the closed form.
Outcome criterion3() {
  constexpr std::size_t V = 16;
  constexpr int draws = 100000;
  std::vector<std::uint8_t> bits(V, 0);
  std::fill(bits.begin() + V / 2, bits.end(), 1);
  const VocabularyBipartition part(V, bits);
  CounterRng coin(3);
  Sampler sampler(3);
  int failures = 0;
  double worst_mean = 0.0, worst_var = 0.0;  // in standard errors
  for (int i = 1; i <= 9; ++i) {
    const double tau = i / 10.0;
    std::vector<double> p(V);
    for (std::size_t x = 0; x < V; ++x) p[x] = (bits[x] ? tau : 1.0 - tau) / (V / 2);
    const ProbabilityDistribution dist = ProbabilityDistribution::from_weights(p);
    for (double db : {0.5, 1.0}) {
      const std::array reweighted{bit_flip_reweight(dist, part, CoinFlip::tails, db),
                                  bit_flip_reweight(dist, part, CoinFlip::heads, db)};
      long green = 0;
      for (int k = 0; k < draws; ++k) {
        const auto e = to_flip(static_cast<std::uint8_t>(coin.next() & 1));
        const TokenId t = sampler.sample(reweighted[to_bit(e)]);
        green += green_indicator(t, part, e);
      }
      const auto s = expected_green_stats(tau, db);
      const double n = draws;
      const double freq = green / n;
      const double var = freq * (1.0 - freq) * n / (n - 1.0);
      const double se_mean = std::sqrt(s.variance / n);
      // Sample variance of a Bernoulli(p): asymptotic SE sqrt(pq(1 - 4pq) / n).
      const double se_var = std::sqrt(s.variance * (1.0 - 4.0 * s.variance) / n);
      const double dm = std::abs(freq - s.expectation);
      const double dv = std::abs(var - s.variance);
      const bool ok_mean = se_mean > 0 ? dm <= 3.0 * se_mean : dm <= 1e-12;
      const bool ok_var = se_var > 0 ? dv <= 3.0 * se_var : dv <= 1e-12;
      if (!ok_mean || !ok_var) {
        ++failures;
        std::printf("  criterion 3 cell tau=%.1f delta=%.1f: freq %.5f vs %.5f, var %.5f vs %.5f\n",
                    tau, db, freq, s.expectation, var, s.variance);
      }
      if (se_mean > 0) worst_mean = std::max(worst_mean, dm / se_mean);
      if (se_var > 0) worst_var = std::max(worst_var, dv / se_var);
    }
  }
  return {failures == 0, fmt("%d/18 cells outside 3 SE; worst mean %.2f SE, worst variance %.2f SE",
                             failures, worst_mean, worst_var)};
}

// Recomputation of the reference voting matrix.
Outcome criterion4() {
  const VotingMatrix m(worked_example::matrix());
  const auto g = green_count(m);
  const double z = z_score(g.green, g.total);
  const double p1 = p_value(worked_example::kReferenceZ);
  const double p2 = p_value(worked_example::kSecondZ);
  const double r1 = std::abs(p1 / worked_example::kReferenceP - 1.0);
  const double r2 = std::abs(p2 / worked_example::kSecondP - 1.0);
  const bool message_ok = extract_message(m).message.to_string() == worked_example::kMessage;
  const bool ok = g.green == 2325 && g.total == 3597 &&
                  std::abs(z - worked_example::kReferenceZ) <= 0.05 && r1 <= 0.10 && r2 <= 0.10 &&
                  message_ok;
  return {ok, fmt("G=%llu N=%llu z=%.4f p(17.5733)=%.3e (rel %.3f) p(20.47)=%.3e (rel %.3f) message %s",
                  static_cast<unsigned long long>(g.green), static_cast<unsigned long long>(g.total),
                  z, p1, r1, p2, r2, message_ok ? "ok" : "mismatch")};
}

// Embed -> extract round trip on a synthetic model.
Outcome criterion5() {
  auto c = base_config();
  c.params.ell = 8;
  c.bits = {8};
  c.lengths = {200};
  c.runs = 200;
  const auto cells = run_cells(c);
  const auto& row = cells.at(0).row;
  const bool ok = row.status == "ok" && row.extraction_mean >= 0.95 && row.mean_z > 8.0;
  return {ok, fmt("mean extraction %.4f (>= 0.95), mean z %.2f (> 8), %zu runs, status %s",
                  row.extraction_mean, row.mean_z, row.runs, row.status.c_str())};
}

// Trend directions over length, message bits and substitution ratio.
Outcome criterion6() {
  auto c = base_config();
  c.params.ell = 8;
  c.bits = {8, 16, 32};
  c.lengths = {50, 100, 200, 300};
  c.substitution = {0.0, 0.1, 0.2, 0.3};
  c.runs = 100;
  const auto cells = run_cells(c);

  std::vector<double> length, bits, sub, rate;
  // Cell means keyed by (bits, length, substitution).
  std::map<std::tuple<std::size_t, std::size_t, double>, std::pair<double, double>> means;
  for (const auto& cell : cells) {
    if (cell.row.status != "ok") return {false, "cell failed: " + cell.row.status};
    for (const auto& t : cell.trials) {
      length.push_back(static_cast<double>(cell.row.cell.length));
      bits.push_back(static_cast<double>(cell.row.cell.bits));
      sub.push_back(cell.row.cell.substitution);
      rate.push_back(t.extraction_rate);
    }
    means[{cell.row.cell.bits, cell.row.cell.length, cell.row.cell.substitution}] = {
        cell.row.extraction_mean, cell.row.extraction_std / std::sqrt(static_cast<double>(cell.row.runs))};
  }
  const auto [rho_t, p_t] = oracle::spearman(length, rate);
  std::vector<double> neg_bits(bits.size()), neg_sub(sub.size());
  std::transform(bits.begin(), bits.end(), neg_bits.begin(), [](double v) { return -v; });
  std::transform(sub.begin(), sub.end(), neg_sub.begin(), [](double v) { return -v; });
  const auto [rho_b, p_b] = oracle::spearman(neg_bits, rate);
  const auto [rho_s, p_s] = oracle::spearman(neg_sub, rate);

  // Adjacent cell means along each axis may not move against the trend by
  // more than two standard errors of their difference.
  int violations = 0;
  auto check = [&](const auto& lo, const auto& hi) {
    const auto& a = means.at(lo);
    const auto& b = means.at(hi);
    if (b.first < a.first - 2.0 * std::hypot(a.second, b.second)) ++violations;
  };
  const std::vector<std::size_t> Ls{50, 100, 200, 300}, Bs{8, 16, 32};
  const std::vector<double> Ss{0.0, 0.1, 0.2, 0.3};
  for (auto b : Bs)
    for (auto s : Ss)
      for (std::size_t i = 0; i + 1 < Ls.size(); ++i) check(std::tuple{b, Ls[i], s}, std::tuple{b, Ls[i + 1], s});
  for (auto l : Ls)
    for (auto s : Ss)
      for (std::size_t i = 0; i + 1 < Bs.size(); ++i) check(std::tuple{Bs[i + 1], l, s}, std::tuple{Bs[i], l, s});
  for (auto b : Bs)
    for (auto l : Ls)
      for (std::size_t i = 0; i + 1 < Ss.size(); ++i) check(std::tuple{b, l, Ss[i + 1]}, std::tuple{b, l, Ss[i]});

  const bool ok = rho_t > 0 && p_t < 0.01 && rho_b > 0 && p_b < 0.01 && rho_s > 0 && p_s < 0.01 &&
                  violations == 0;
  return {ok, fmt("spearman vs extraction rate: length rho=%+.3f p=%.1e, bits rho=%+.3f p=%.1e, "
                  "substitution rho=%+.3f p=%.1e (one-sided, expected signs + - -); "
                  "%d adjacent-cell reversals beyond 2 SE",
                  rho_t, p_t, -rho_b, p_b, -rho_s, p_s, violations)};
}

// Null calibration of zero-bit detection on uniform random tokens.
Outcome criterion7() {
  EmbedParams params;
  params.vocab_size = 1024;
  params.ell = 1;
  params.d = 10;
  const auto key = WatermarkKey::from_seed(77);
  const auto stack = derive_partitions(key, 1024, params.d);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<TokenId> tok(0, 1023);
  std::vector<double> zs;
  int positives = 0;
  for (int r = 0; r < 1000; ++r) {
    std::vector<TokenId> tokens(200);
    for (auto& t : tokens) t = tok(rng);
    const auto report = detect(tokens, key, params, stack, 2.326);
    zs.push_back(report.z);
    positives += report.decision;
  }
  const double fpr = positives / 1000.0;
  const auto [d, p] = oracle::ks_standard_normal(zs);
  return {fpr <= 0.02 && p > 0.001,
          fmt("FPR at z > 2.326 = %.3f (<= 0.02); KS D=%.4f p=%.3f (> 0.001)", fpr, d, p)};
}

// TPR as a function of depth on a low-entropy model.
Outcome criterion8() {
  auto c = base_config();
  c.lm.alpha = 0.1;
  c.params.ell = 1;
  c.bits = {1};
  c.lengths = {5};
  c.depths = {1, 5, 10, 20};
  c.runs = 1000;
  const auto cells = run_cells(c);
  std::map<std::size_t, double> tpr;
  for (const auto& cell : cells) {
    if (cell.row.status != "ok") return {false, "cell failed: " + cell.row.status};
    tpr[cell.row.cell.d] = cell.row.tpr;
  }
  const double best_mid = std::max(tpr[5], tpr[10]);
  const bool ok = best_mid > tpr[1] && best_mid > tpr[20];
  return {ok, fmt("T=5, |V|=1024, alpha=0.1: TPR d=1 %.3f, d=5 %.3f, d=10 %.3f, d=20 %.3f", tpr[1],
                  tpr[5], tpr[10], tpr[20])};
}

// Bias of logit-shift reweighting versus the bit-flip layer.
Outcome criterion9() {
  constexpr std::size_t V = 16;
  std::vector<double> p(V, 0.2 / (V - 1));
  p[0] = 0.8;
  const ProbabilityDistribution dist(p);
  const auto key = WatermarkKey::from_seed(9);
  std::vector<double> srl_avg(V, 0.0), bm_avg(V, 0.0);
  constexpr int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto green = srl_greenlist(key, ContextWindow({static_cast<TokenId>(i)}), 0.5, V);
    const auto out = srl_reweight(dist, green, 1.0);
    for (std::size_t x = 0; x < V; ++x) srl_avg[x] += out[x] / draws;

    const auto part = derive_partitions(WatermarkKey::from_seed(i), V, 1)[0];
    const auto a = bit_flip_reweight(dist, part, CoinFlip::tails, 1.0);
    const auto b = bit_flip_reweight(dist, part, CoinFlip::heads, 1.0);
    for (std::size_t x = 0; x < V; ++x) bm_avg[x] += 0.5 * (a[x] + b[x]) / draws;
  }
  const double kl_srl = oracle::kl_divergence(p, srl_avg);
  const double kl_bm = std::abs(oracle::kl_divergence(p, bm_avg));
  return {kl_srl > 1e-3 && kl_bm <= 1e-12,
          fmt("KL(P||avg) soft red list %.3e (> 1e-3), bit-flip layer %.3e (<= 1e-12)", kl_srl, kl_bm)};
}

// First-token distribution over many keys, plus the repeated-window rule.
Outcome criterion10() {
  constexpr std::size_t V = 16;
  const ProbabilityDistribution p = SyntheticLM(V, 0, 0.5, 10).next_distribution({});
  const FixedLM lm(p);
  EmbedParams params;
  params.vocab_size = V;
  params.ell = 4;
  params.max_new_tokens = 1;
  std::vector<double> counts(V, 0.0), expected(V);
  constexpr int keys = 10000;
  CounterRng msg_rng(10);
  for (int k = 0; k < keys; ++k) {
    std::vector<std::uint8_t> bits(4);
    for (auto& b : bits) b = static_cast<std::uint8_t>(msg_rng.next() & 1);
    const auto g = generate(lm, {}, Message(bits), WatermarkKey::from_seed(1000000 + k), params,
                            static_cast<std::uint64_t>(k));
    counts[g.tokens[0]] += 1.0;
  }
  for (std::size_t x = 0; x < V; ++x) expected[x] = p[x] * keys;
  const double chi_p = oracle::chi_square_gof_p(counts, expected);

  // Repeated windows: every unseeded step must sample the model untouched.
  params.max_new_tokens = 200;
  std::size_t repeated = 0, repeated_ok = 0, seeded_ok = 0, seeded = 0;
  const SyntheticLM markov(V, 1, 0.5, 11);
  for (int run = 0; run < 100; ++run) {
    const auto key = WatermarkKey::from_seed(static_cast<std::uint64_t>(run));
    std::unordered_set<ContextWindow, ContextWindowHash> seen;
    generate(markov, {}, Message::from_string("1011"), key, params,
             derive_partitions(key, V, params.d), static_cast<std::uint64_t>(run),
             [&](const TraceRecord& r, const ProbabilityDistribution& original,
                 const ProbabilityDistribution& sampled) {
               const bool fresh = seen.insert(r.window).second;
               if (fresh) {
                 ++seeded;
                 seeded_ok += r.seeded;
               } else {
                 ++repeated;
                 repeated_ok += !r.seeded && sampled == original;
               }
             });
  }
  const bool ok = chi_p > 0.001 && repeated > 0 && repeated_ok == repeated && seeded_ok == seeded;
  return {ok, fmt("first-token chi-square p=%.3f (> 0.001) over %d keys; repeated-window tokens "
                  "unmodified %zu/%zu, first-occurrence windows seeded %zu/%zu",
                  chi_p, keys, repeated_ok, repeated, seeded_ok, seeded)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "single-layer unbiasedness", 5, criterion1},
      {2, "exhaustive multilayer unbiasedness", 1, criterion2},
      {3, "green-indicator moments", 30, criterion3},
      {4, "worked example recomputation", 1, criterion4},
      {5, "round-trip extraction", 120, criterion5},
      {6, "trend directions", 600, criterion6},
      {7, "null calibration", 30, criterion7},
      {8, "depth ablation shape", 300, criterion8},
      {9, "bias discriminator", 10, criterion9},
      {10, "first-token indistinguishability", 60, criterion10},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.time_limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %2d %s  %s: %s [%.2f s, limit %.0f s%s]\n", c.number, pass ? "PASS" : "FAIL",
                c.name, o.detail.c_str(), secs, c.time_limit_s, in_time ? "" : ", too slow");
    std::fflush(stdout);
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
