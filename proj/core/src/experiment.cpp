#include "bimark/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "bimark/baselines.hpp"
#include "bimark/detect.hpp"
#include "bimark/error.hpp"
#include "bimark/toylm.hpp"

namespace bimark {
namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

Message random_message(std::size_t ell, CounterRng& rng) {
  if (ell == 1) return Message::zero_bit();
  std::vector<std::uint8_t> bits(ell);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next() & 1u);
  return Message(std::move(bits));
}

std::vector<CellCoordinates> grid_cells(const ExperimentConfig& c) {
  std::vector<CellCoordinates> cells;
  for (auto bits : c.bits)
    for (auto length : c.lengths)
      for (auto sub : c.substitution)
        for (auto d : c.depths)
          for (auto db : c.delta_bases) cells.push_back({bits, length, sub, d, db});
  return cells;
}

// Detection z with N = 0 (nothing to vote on) is reported as 0.
double safe_z(const std::function<double()>& compute) {
  try {
    return compute();
  } catch (const UndefinedStatistic&) {
    return 0.0;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t cell, std::size_t trial) {
  const std::uint64_t mixed =
      splitmix64_finalize((static_cast<std::uint64_t>(cell) << 32) ^ static_cast<std::uint64_t>(trial));
  return splitmix64_finalize(master_seed ^ mixed);
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

TrialResult run_trial(const ExperimentConfig& config, const CellCoordinates& cell,
                      const LanguageModel& lm, std::uint64_t seed) {
  CounterRng rng(seed);
  const std::size_t vocab = config.params.vocab_size;
  const Message message = random_message(cell.bits, rng);
  std::vector<TokenId> prompt(config.prompt_length);
  for (auto& t : prompt) t = static_cast<TokenId>(rng.below(vocab));
  const std::uint64_t sampler_seed = rng.next();
  const std::uint64_t attack_seed = rng.next();
  const std::uint64_t null_seed = rng.next();

  EmbedParams params = config.params;
  params.d = cell.d;
  params.delta_base = cell.delta_base;
  params.ell = cell.bits;
  params.max_new_tokens = cell.length;

  TrialResult r;
  double entropy_sum = 0.0;
  std::vector<TokenId> tokens;

  switch (config.scheme) {
    case Scheme::bimark: {
      const auto stack = derive_partitions(config.key, vocab, params.d);
      auto gen = generate(lm, prompt, message, config.key, params, stack, sampler_seed,
                          [&](const TraceRecord&, const ProbabilityDistribution& original,
                              const ProbabilityDistribution&) {
                            entropy_sum += entropy_bits(original);
                          });
      tokens = substitution_attack(gen.tokens, cell.substitution, vocab, attack_seed);
      const auto tally = gather_votes(tokens, config.key, params, stack);
      const auto report = report_from_tally(tally, config.z_threshold);
      r.z = report.z;
      r.extraction_rate = extraction_rate(report.extracted, message);
      for (const auto& layer : tally.per_layer) {
        const auto g = green_count(layer, message);
        r.layer_excess.push_back(
            g.total ? static_cast<double>(g.green) / static_cast<double>(g.total) - 0.5 : 0.0);
      }
      if (config.null_runs) {
        const auto plain = generate_with(lm, prompt, cell.length, null_seed, {});
        r.null_z = safe_z([&] { return detect(plain, config.key, params, stack, 0.0).z; });
      }
      break;
    }
    case Scheme::srl: {
      SoftRedListParams srl{config.gamma, config.delta_logit, params.h, vocab};
      const auto sentinel = static_cast<TokenId>(vocab);
      auto gen = generate_with(lm, prompt, cell.length, sampler_seed,
                               [&](const ProbabilityDistribution& dist,
                                   std::span<const TokenId> history) {
                                 entropy_sum += entropy_bits(dist);
                                 return srl_step(dist, config.key,
                                                 ContextWindow::preceding(history, srl.h, sentinel),
                                                 srl);
                               });
      tokens = substitution_attack(gen, cell.substitution, vocab, attack_seed);
      r.z = safe_z([&] { return srl_detect(tokens, config.key, srl).z; });
      r.extraction_rate = r.z > config.z_threshold ? 1.0 : 0.0;
      if (config.null_runs) {
        const auto plain = generate_with(lm, prompt, cell.length, null_seed, {});
        r.null_z = safe_z([&] { return srl_detect(plain, config.key, srl).z; });
      }
      break;
    }
    case Scheme::mpac: {
      MPACParams mp{config.delta_logit, cell.bits, params.h, vocab};
      const auto sentinel = static_cast<TokenId>(vocab);
      auto gen = generate_with(lm, prompt, cell.length, sampler_seed,
                               [&](const ProbabilityDistribution& dist,
                                   std::span<const TokenId> history) {
                                 entropy_sum += entropy_bits(dist);
                                 return mpac_step(dist, config.key,
                                                  ContextWindow::preceding(history, mp.h, sentinel),
                                                  message, mp);
                               });
      tokens = substitution_attack(gen, cell.substitution, vocab, attack_seed);
      const auto extracted = mpac_extract(tokens, config.key, mp);
      r.z = extracted.z;
      r.extraction_rate = extraction_rate(extracted.extracted, message);
      if (config.null_runs) {
        const auto plain = generate_with(lm, prompt, cell.length, null_seed, {});
        r.null_z = mpac_extract(plain, config.key, mp).z;
      }
      break;
    }
  }
  r.detected = r.z > config.z_threshold;
  r.null_detected = config.null_runs && r.null_z > config.z_threshold;
  r.mean_entropy = cell.length ? entropy_sum / static_cast<double>(cell.length) : 0.0;
  return r;
}

std::vector<CellResult> run_cells(const ExperimentConfig& config) {
  config.validate();
  const auto cells = grid_cells(config);
  std::vector<CellResult> results(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ResultRow& row = results[c].row;
    row.scheme = config.scheme;
    row.cell = cells[c];
    try {
      const auto lm = config.lm.build(config.params.vocab_size, config.prompt_length);
      auto& trials = results[c].trials;
      trials.resize(config.runs);
      parallel_for(config.runs, config.threads, [&](std::size_t t) {
        trials[t] = run_trial(config, cells[c], *lm, trial_seed(config.master_seed, c, t));
      });

      std::vector<double> rates, zs, null_zs, entropies;
      std::size_t detected = 0, null_detected = 0;
      for (const auto& t : trials) {
        rates.push_back(t.extraction_rate);
        zs.push_back(t.z);
        null_zs.push_back(t.null_z);
        entropies.push_back(t.mean_entropy);
        detected += t.detected;
        null_detected += t.null_detected;
        if (row.layer_excess.size() < t.layer_excess.size()) {
          row.layer_excess.resize(t.layer_excess.size(), 0.0);
        }
        for (std::size_t i = 0; i < t.layer_excess.size(); ++i) {
          row.layer_excess[i] += t.layer_excess[i] / static_cast<double>(config.runs);
        }
      }
      const double n = static_cast<double>(config.runs);
      row.runs = config.runs;
      std::tie(row.extraction_mean, row.extraction_std) = mean_std(rates);
      row.tpr = static_cast<double>(detected) / n;
      row.fpr = config.null_runs ? static_cast<double>(null_detected) / n : 0.0;
      row.mean_z = mean_std(zs).first;
      row.mean_null_z = config.null_runs ? mean_std(null_zs).first : 0.0;
      row.mean_entropy = mean_std(entropies).first;
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
      results[c].trials.clear();
    }
  }
  return results;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  std::vector<ResultRow> rows;
  for (auto& cell : run_cells(config)) rows.push_back(std::move(cell.row));
  return rows;
}

void write_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << "scheme,bits,length,substitution,d,delta_base,runs,extraction_mean,extraction_std,"
         "tpr,fpr,mean_z,mean_null_z,mean_entropy,layer_excess,status\n";
  for (const auto& r : rows) {
    std::string layers;
    for (std::size_t i = 0; i < r.layer_excess.size(); ++i) {
      if (i) layers += ';';
      layers += format_double(r.layer_excess[i]);
    }
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << scheme_name(r.scheme) << ',' << r.cell.bits << ',' << r.cell.length << ','
        << format_double(r.cell.substitution) << ',' << r.cell.d << ','
        << format_double(r.cell.delta_base) << ',' << r.runs << ','
        << format_double(r.extraction_mean) << ',' << format_double(r.extraction_std) << ','
        << format_double(r.tpr) << ',' << format_double(r.fpr) << ','
        << format_double(r.mean_z) << ',' << format_double(r.mean_null_z) << ','
        << format_double(r.mean_entropy) << ',' << layers << ',' << status << '\n';
  }
}

nlohmann::json summary_json(const ExperimentConfig& config, std::span<const ResultRow> rows) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : rows) {
    cells.push_back({{"bits", r.cell.bits},
                     {"length", r.cell.length},
                     {"substitution", r.cell.substitution},
                     {"d", r.cell.d},
                     {"delta_base", r.cell.delta_base},
                     {"runs", r.runs},
                     {"extraction_mean", r.extraction_mean},
                     {"extraction_std", r.extraction_std},
                     {"tpr", r.tpr},
                     {"fpr", r.fpr},
                     {"mean_z", r.mean_z},
                     {"mean_null_z", r.mean_null_z},
                     {"mean_entropy", r.mean_entropy},
                     {"layer_excess", r.layer_excess},
                     {"status", r.status}});
  }
  return {{"config", config.to_json()}, {"cells", cells}};
}

}  // namespace bimark
