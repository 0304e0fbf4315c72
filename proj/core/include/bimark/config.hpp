#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bimark/baselines.hpp"
#include "bimark/embed.hpp"
#include "bimark/io.hpp"
#include "bimark/prf.hpp"

namespace bimark {

enum class Scheme { bimark, srl, mpac };

Scheme parse_scheme(std::string_view name);
std::string_view scheme_name(Scheme scheme);

/// Everything needed to detect: the key plus the shape parameters. The base
/// scaling factor is deliberately absent; detection never uses it.
struct DetectionProfile {
  Scheme scheme = Scheme::bimark;
  WatermarkKey key;
  std::size_t d = 10;
  std::size_t ell = 1;
  std::size_t h = 2;
  std::size_t vocab_size = 0;
  double gamma = 0.5;        // srl only
  double delta_logit = 2.0;  // srl and mpac generation

  EmbedParams embed_params(double delta_base = 1.0, std::size_t max_new_tokens = 0) const;
  SoftRedListParams srl_params() const;
  MPACParams mpac_params() const;

  static DetectionProfile from_flat(const io::FlatFile& flat);
  static DetectionProfile load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
};

/// Detection as a JSON document, dispatched on the profile's scheme. The CLI
/// and the serve endpoint both produce their reports through this call.
nlohmann::json detection_document(const DetectionProfile& profile,
                                  std::span<const TokenId> tokens, double threshold);

struct LmSpec {
  std::string kind = "synthetic";  // synthetic | trace
  std::size_t order = 1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::filesystem::path trace_path;

  std::unique_ptr<LanguageModel> build(std::size_t vocab_size,
                                       std::size_t prompt_length = 0) const;
};

struct ExperimentConfig {
  Scheme scheme = Scheme::bimark;
  WatermarkKey key;
  EmbedParams params;
  double gamma = 0.5;
  double delta_logit = 2.0;
  LmSpec lm;
  std::size_t prompt_length = 4;

  std::vector<std::size_t> bits;           // message lengths
  std::vector<std::size_t> lengths;        // generated tokens T
  std::vector<double> substitution;        // attack ratios
  std::vector<std::size_t> depths;         // d values
  std::vector<double> delta_bases;

  std::size_t runs = 10;
  std::uint64_t master_seed = 0;
  double z_threshold = 2.326;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool null_runs = true;    // also detect on unwatermarked text for FPR

  std::filesystem::path output_csv;
  std::filesystem::path output_json;

  /// Reads a flat file; relative paths resolve against `base_dir`.
  /// Throws ParseError / DomainError.
  static ExperimentConfig from_flat(const io::FlatFile& flat,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;

  DetectionProfile profile() const;
  nlohmann::json to_json() const;
};

/// Environment variable that overrides the config path given on the command line.
inline constexpr const char* kConfigEnvVar = "BIMARK_CONFIG";

}  // namespace bimark
