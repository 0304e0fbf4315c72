#pragma once

// Experiment harness: grids of embed -> (attack) -> detect trials over a
// synthetic or replayed language model, summarized per grid cell.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bimark/config.hpp"
#include "bimark/distribution.hpp"
#include "bimark/embed.hpp"

namespace bimark {

/// Replaces floor(ratio * T) distinct, uniformly chosen positions with a
/// uniformly drawn token different from the original. Throws DomainError
/// unless ratio is in [0, 1] and vocab_size >= 2.
std::vector<TokenId> substitution_attack(std::span<const TokenId> tokens, double ratio,
                                         std::size_t vocab_size, std::uint64_t attack_seed);

struct CellCoordinates {
  std::size_t bits = 1;
  std::size_t length = 200;
  double substitution = 0.0;
  std::size_t d = 10;
  double delta_base = 1.0;
};

struct TrialResult {
  double extraction_rate = 0.0;
  double z = 0.0;
  bool detected = false;
  double null_z = 0.0;
  bool null_detected = false;
  double mean_entropy = 0.0;
  std::vector<double> layer_excess;  // bimark only: layer green fraction - 0.5
};

struct ResultRow {
  Scheme scheme = Scheme::bimark;
  CellCoordinates cell;
  std::size_t runs = 0;
  double extraction_mean = 0.0;
  double extraction_std = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double mean_z = 0.0;
  double mean_null_z = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> layer_excess;
  std::string status = "ok";
};

struct CellResult {
  ResultRow row;
  std::vector<TrialResult> trials;
};

/// Seed of trial `trial` in cell `cell`; independent of thread scheduling.
std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t cell, std::size_t trial);

/// One embed -> attack -> detect trial (plus an unwatermarked control when
/// config.null_runs is set).
TrialResult run_trial(const ExperimentConfig& config, const CellCoordinates& cell,
                      const LanguageModel& lm, std::uint64_t seed);

/// Every grid cell with its per-trial results. Cell failures are recorded in
/// row.status and do not stop the run.
std::vector<CellResult> run_cells(const ExperimentConfig& config);

std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

void write_csv(std::ostream& out, std::span<const ResultRow> rows);
nlohmann::json summary_json(const ExperimentConfig& config, std::span<const ResultRow> rows);

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace bimark
