// bimark: command-line front end for embedding, detection, attacks,
// experiment grids, closed-form analysis and the serve endpoint.
//
// Exit codes: 0 ok, 1 usage error, 2 data error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bimark/baselines.hpp"
#include "bimark/config.hpp"
#include "bimark/detect.hpp"
#include "bimark/embed.hpp"
#include "bimark/error.hpp"
#include "bimark/experiment.hpp"
#include "bimark/io.hpp"
#include "bimark/serve.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string config_path(const std::string& flag_value) {
  if (const char* env = std::getenv(bimark::kConfigEnvVar); env && *env) return env;
  return flag_value;
}

std::string bits_string(std::span<const std::uint8_t> bits) {
  std::string s;
  for (auto b : bits) s.push_back(static_cast<char>('0' + b));
  return s;
}

std::string flips_string(std::span<const bimark::CoinFlip> flips) {
  std::string s;
  for (auto e : flips) s.push_back(static_cast<char>('0' + bimark::to_bit(e)));
  return s;
}

void write_trace(const std::string& path, const bimark::GenerationTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace " + path);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& r = trace[t];
    nlohmann::json j{{"t", t}, {"window", r.window.tokens()}, {"seeded", r.seeded}, {"token", r.token}};
    if (r.seeded) {
      j["position"] = r.position;
      j["mask"] = bits_string(r.mask);
      j["flips"] = flips_string(r.flips);
    }
    out << j.dump() << '\n';
  }
}

bimark::DetectionProfile load_profile(const std::string& profile_path,
                                      const std::string& config_flag) {
  if (!profile_path.empty()) return bimark::DetectionProfile::load(profile_path);
  const auto cfg = config_path(config_flag);
  if (cfg.empty()) throw UsageError("either --profile or --config is required");
  return bimark::ExperimentConfig::load(cfg).profile();
}

struct EmbedArgs {
  std::string config;
  std::string prompt;
  std::string prompt_file;
  std::string message;
  std::string out;
  std::string trace;
  std::string profile_out;
  std::optional<std::uint64_t> sampler_seed;
  std::optional<std::size_t> max_new_tokens;
};

int cmd_embed(const EmbedArgs& a) {
  const auto cfg_path = config_path(a.config);
  if (cfg_path.empty()) throw UsageError("--config is required (or set BIMARK_CONFIG)");
  auto cfg = bimark::ExperimentConfig::load(cfg_path);
  if (a.max_new_tokens) cfg.params.max_new_tokens = *a.max_new_tokens;

  std::vector<bimark::TokenId> prompt;
  if (!a.prompt_file.empty()) {
    prompt = bimark::io::load_tokens(a.prompt_file);
  } else {
    prompt = bimark::io::parse_token_list(a.prompt);
  }
  for (auto t : prompt) {
    if (t >= cfg.params.vocab_size) throw bimark::DomainError("prompt token outside vocabulary");
  }

  bimark::Message message = bimark::Message::zero_bit();
  if (!a.message.empty()) message = bimark::Message::from_string(a.message);
  if (message.size() != cfg.params.ell) {
    throw bimark::DimensionError("message has " + std::to_string(message.size()) +
                                 " bits, config ell is " + std::to_string(cfg.params.ell));
  }
  if (cfg.params.ell == 1 && message[0] != 1) {
    throw bimark::DomainError("zero-bit mode (ell = 1) embeds the fixed bit 1");
  }

  const auto lm = cfg.lm.build(cfg.params.vocab_size, prompt.size());
  const std::uint64_t seed = a.sampler_seed.value_or(cfg.master_seed);
  std::vector<bimark::TokenId> tokens;
  const auto sentinel = static_cast<bimark::TokenId>(cfg.params.vocab_size);

  switch (cfg.scheme) {
    case bimark::Scheme::bimark: {
      auto gen = bimark::generate(*lm, prompt, message, cfg.key, cfg.params, seed);
      tokens = gen.tokens;
      if (!a.trace.empty()) write_trace(a.trace, gen.trace);
      break;
    }
    case bimark::Scheme::srl: {
      const auto p = cfg.profile().srl_params();
      tokens = bimark::generate_with(
          *lm, prompt, cfg.params.max_new_tokens, seed,
          [&](const bimark::ProbabilityDistribution& dist, std::span<const bimark::TokenId> h) {
            return bimark::srl_step(dist, cfg.key, bimark::ContextWindow::preceding(h, p.h, sentinel), p);
          });
      break;
    }
    case bimark::Scheme::mpac: {
      const auto p = cfg.profile().mpac_params();
      tokens = bimark::generate_with(
          *lm, prompt, cfg.params.max_new_tokens, seed,
          [&](const bimark::ProbabilityDistribution& dist, std::span<const bimark::TokenId> h) {
            return bimark::mpac_step(dist, cfg.key, bimark::ContextWindow::preceding(h, p.h, sentinel),
                                     message, p);
          });
      break;
    }
  }

  if (a.out.empty() || a.out == "-") {
    bimark::io::write_tokens(std::cout, tokens);
  } else {
    bimark::io::save_tokens(a.out, tokens);
  }
  if (!a.profile_out.empty()) cfg.profile().save(a.profile_out);
  return kExitOk;
}

int cmd_detect(const std::string& profile, const std::string& config, const std::string& tokens_path,
               double threshold, const std::string& out) {
  const auto prof = load_profile(profile, config);
  std::vector<bimark::TokenId> tokens;
  if (tokens_path.empty() || tokens_path == "-") {
    tokens = bimark::io::read_tokens(std::cin);
  } else {
    tokens = bimark::io::load_tokens(tokens_path);
  }
  const auto doc = bimark::detection_document(prof, tokens, threshold);
  if (out.empty() || out == "-") {
    std::cout << doc.dump(2) << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << doc.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_run(const std::string& config, const std::string& csv, const std::string& json) {
  const auto cfg_path = config_path(config);
  if (cfg_path.empty()) throw UsageError("--config is required (or set BIMARK_CONFIG)");
  auto cfg = bimark::ExperimentConfig::load(cfg_path);
  if (!csv.empty()) cfg.output_csv = csv;
  if (!json.empty()) cfg.output_json = json;

  const auto rows = bimark::run_experiment(cfg);
  if (cfg.output_csv.empty()) {
    bimark::write_csv(std::cout, rows);
  } else {
    std::ofstream f(cfg.output_csv);
    if (!f) throw std::runtime_error("cannot write " + cfg.output_csv.string());
    bimark::write_csv(f, rows);
  }
  if (!cfg.output_json.empty()) {
    std::ofstream f(cfg.output_json);
    if (!f) throw std::runtime_error("cannot write " + cfg.output_json.string());
    f << bimark::summary_json(cfg, rows).dump(2) << '\n';
  }
  for (const auto& r : rows) {
    if (r.status != "ok") std::cerr << "cell failed: " << r.status << '\n';
  }
  return kExitOk;
}

int cmd_analyze(const std::vector<double>& delta_bases, const std::vector<std::size_t>& lengths,
                double alpha, std::size_t steps) {
  std::printf("tau,delta_base,T,expectation,variance,type2_error\n");
  for (double db : delta_bases) {
    for (std::size_t T : lengths) {
      for (std::size_t i = 0; i <= steps; ++i) {
        const double tau = static_cast<double>(i) / static_cast<double>(steps);
        const auto s = bimark::expected_green_stats(tau, db);
        std::string beta;
        try {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6e", bimark::type2_error(tau, db, T, alpha));
          beta = buf;
        } catch (const bimark::UndefinedStatistic&) {
          beta = "nan";
        }
        std::printf("%.4f,%.4f,%zu,%.6f,%.6f,%s\n", tau, db, T, s.expectation, s.variance,
                    beta.c_str());
      }
    }
  }
  return kExitOk;
}

int cmd_serve(const std::string& profile, const std::string& config, double delta_base,
              double threshold, const std::string& socket) {
  const auto prof = load_profile(profile, config);
  const bimark::ServeOptions options{delta_base, threshold};
  if (socket.empty()) {
    bimark::serve_stream(std::cin, std::cout, prof, options);
  } else {
    bimark::serve_unix_socket(socket, prof, options);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-bit unbiased watermarking for token streams"};
  app.require_subcommand(1);

  std::string keygen_out;
  auto* keygen = app.add_subcommand("keygen", "Write a fresh 256-bit key as 64 hex characters");
  keygen->add_option("--out,-o", keygen_out, "Key file to write")->required();

  EmbedArgs embed_args;
  std::uint64_t sampler_seed = 0;
  std::size_t max_new_tokens = 0;
  auto* embed = app.add_subcommand("embed", "Generate watermarked tokens carrying a message");
  embed->add_option("--config,-c", embed_args.config, "Config file (BIMARK_CONFIG overrides)");
  embed->add_option("--prompt", embed_args.prompt, "Prompt token ids, space separated");
  embed->add_option("--prompt-file", embed_args.prompt_file, "Prompt token file");
  embed->add_option("--message,-m", embed_args.message, "Message bits, e.g. 01101001");
  embed->add_option("--out,-o", embed_args.out, "Token file to write (default stdout)");
  embed->add_option("--trace", embed_args.trace, "Per-token trace (JSON lines)");
  embed->add_option("--profile-out", embed_args.profile_out, "Detection profile to write");
  auto* seed_opt = embed->add_option("--sampler-seed", sampler_seed, "Sampler seed (default master_seed)");
  auto* len_opt = embed->add_option("--max-new-tokens", max_new_tokens, "Override max_new_tokens");

  std::string detect_profile, detect_config, detect_tokens, detect_out;
  double detect_threshold = 4.0;
  auto* detect = app.add_subcommand("detect", "Extract the message and test for a watermark");
  detect->add_option("--profile,-p", detect_profile, "Detection profile");
  detect->add_option("--config,-c", detect_config, "Config file (alternative to --profile)");
  detect->add_option("--tokens,-t", detect_tokens, "Token file (default stdin)");
  detect->add_option("--threshold", detect_threshold, "z threshold for the decision")
      ->capture_default_str();
  detect->add_option("--out,-o", detect_out, "Report file (default stdout)");

  std::string attack_in, attack_out;
  double attack_ratio = 0.0;
  std::uint64_t attack_seed = 0;
  std::size_t attack_vocab = 0;
  auto* attack = app.add_subcommand("attack", "Randomly substitute a fraction of tokens");
  attack->add_option("--in,-i", attack_in, "Token file to attack")->required();
  attack->add_option("--out,-o", attack_out, "Token file to write")->required();
  attack->add_option("--ratio,-r", attack_ratio, "Fraction of positions to replace")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  attack->add_option("--seed", attack_seed, "Attack seed")->capture_default_str();
  attack->add_option("--vocab-size", attack_vocab, "Vocabulary size")->required();

  std::string run_config, run_csv, run_json;
  auto* run = app.add_subcommand("run", "Run an experiment grid, writing CSV and JSON summaries");
  run->add_option("--config,-c", run_config, "Config file (BIMARK_CONFIG overrides)");
  run->add_option("--csv", run_csv, "CSV output (overrides output_csv)");
  run->add_option("--json", run_json, "JSON summary output (overrides output_json)");

  std::vector<double> analyze_deltas{0.5, 1.0};
  std::vector<std::size_t> analyze_lengths{50, 100, 200};
  double analyze_alpha = 0.01;
  std::size_t analyze_steps = 10;
  auto* analyze = app.add_subcommand(
      "analyze", "Tabulate single-layer green statistics and predicted Type-II error");
  analyze->add_option("--delta-base", analyze_deltas, "Base scaling factors")->capture_default_str();
  analyze->add_option("--T", analyze_lengths, "Token counts")->capture_default_str();
  analyze->add_option("--alpha", analyze_alpha, "Significance level")->capture_default_str();
  analyze->add_option("--steps", analyze_steps, "Grid steps over tau in [0, 1]")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string serve_profile, serve_config, serve_socket;
  double serve_delta = 1.0, serve_threshold = 4.0;
  auto* serve = app.add_subcommand("serve", "Serve reweight/detect requests as JSON lines");
  serve->add_option("--profile,-p", serve_profile, "Detection profile");
  serve->add_option("--config,-c", serve_config, "Config file (alternative to --profile)");
  serve->add_option("--delta-base", serve_delta, "Base scaling factor for reweight")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  serve->add_option("--threshold", serve_threshold, "Default detection threshold")
      ->capture_default_str();
  serve->add_option("--socket", serve_socket, "Unix socket path (default: stdin/stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*keygen) {
      bimark::io::save_key(keygen_out, bimark::WatermarkKey::generate());
      return kExitOk;
    }
    if (*embed) {
      if (*seed_opt) embed_args.sampler_seed = sampler_seed;
      if (*len_opt) embed_args.max_new_tokens = max_new_tokens;
      return cmd_embed(embed_args);
    }
    if (*detect) {
      return cmd_detect(detect_profile, detect_config, detect_tokens, detect_threshold, detect_out);
    }
    if (*attack) {
      const auto tokens = bimark::io::load_tokens(attack_in);
      bimark::io::save_tokens(attack_out, bimark::substitution_attack(tokens, attack_ratio,
                                                                      attack_vocab, attack_seed));
      return kExitOk;
    }
    if (*run) return cmd_run(run_config, run_csv, run_json);
    if (*analyze) return cmd_analyze(analyze_deltas, analyze_lengths, analyze_alpha, analyze_steps);
    if (*serve) {
      return cmd_serve(serve_profile, serve_config, serve_delta, serve_threshold, serve_socket);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
