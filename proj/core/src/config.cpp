#include "bimark/config.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "bimark/detect.hpp"
#include "bimark/error.hpp"
#include "bimark/toylm.hpp"

namespace bimark {
namespace {

WatermarkKey key_from_flat(const io::FlatFile& flat, const std::filesystem::path& base_dir) {
  if (flat.has("key")) return WatermarkKey::from_hex(flat.get("key"));
  if (flat.has("key_file")) {
    std::filesystem::path p = flat.get("key_file");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return io::load_key(p);
  }
  if (flat.has("key_seed")) return WatermarkKey::from_seed(flat.get_u64("key_seed", 0));
  throw ParseError("one of key, key_file or key_seed is required");
}

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& p) {
  std::filesystem::path path = p;
  if (path.empty() || path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

}  // namespace

Scheme parse_scheme(std::string_view name) {
  if (name == "bimark") return Scheme::bimark;
  if (name == "srl") return Scheme::srl;
  if (name == "mpac") return Scheme::mpac;
  throw ParseError("unknown scheme '" + std::string(name) + "' (bimark | srl | mpac)");
}

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::bimark: return "bimark";
    case Scheme::srl: return "srl";
    case Scheme::mpac: return "mpac";
  }
  return "bimark";
}

EmbedParams DetectionProfile::embed_params(double delta_base, std::size_t max_new_tokens) const {
  return EmbedParams{d, delta_base, h, ell, vocab_size, max_new_tokens};
}

SoftRedListParams DetectionProfile::srl_params() const {
  return SoftRedListParams{gamma, delta_logit, h, vocab_size};
}

MPACParams DetectionProfile::mpac_params() const {
  return MPACParams{delta_logit, ell, h, vocab_size};
}

DetectionProfile DetectionProfile::from_flat(const io::FlatFile& flat) {
  DetectionProfile p;
  p.scheme = parse_scheme(flat.get_or("scheme", "bimark"));
  p.key = key_from_flat(flat, {});
  p.d = flat.get_size("d", p.d);
  p.ell = flat.get_size("ell", p.ell);
  p.h = flat.get_size("h", p.h);
  p.vocab_size = flat.get_size("vocab_size", 0);
  p.gamma = flat.get_double("gamma", p.gamma);
  p.delta_logit = flat.get_double("delta_logit", p.delta_logit);
  if (p.vocab_size < 2) throw ParseError("profile: vocab_size must be >= 2");
  if (p.d < 1 || p.ell < 1 || p.h < 1) throw ParseError("profile: d, ell and h must be >= 1");
  return p;
}

DetectionProfile DetectionProfile::load(const std::filesystem::path& path) {
  return from_flat(io::FlatFile::load(path));
}

void DetectionProfile::write(std::ostream& out) const {
  out << "scheme=" << scheme_name(scheme) << '\n'
      << "key=" << key.to_hex() << '\n'
      << "d=" << d << '\n'
      << "ell=" << ell << '\n'
      << "h=" << h << '\n'
      << "vocab_size=" << vocab_size << '\n';
  if (scheme != Scheme::bimark) {
    out << "gamma=" << gamma << '\n' << "delta_logit=" << delta_logit << '\n';
  }
}

void DetectionProfile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write profile " + path.string());
  write(out);
}

nlohmann::json DetectionProfile::to_json() const {
  nlohmann::json j{{"scheme", scheme_name(scheme)},
                   {"d", d},
                   {"ell", ell},
                   {"h", h},
                   {"vocab_size", vocab_size}};
  if (scheme != Scheme::bimark) {
    j["gamma"] = gamma;
    j["delta_logit"] = delta_logit;
  }
  return j;
}

nlohmann::json detection_document(const DetectionProfile& profile,
                                  std::span<const TokenId> tokens, double threshold) {
  switch (profile.scheme) {
    case Scheme::bimark: {
      const auto params = profile.embed_params();
      const auto stack = derive_partitions(profile.key, profile.vocab_size, profile.d);
      return detect(tokens, profile.key, params, stack, threshold).to_json();
    }
    case Scheme::srl: {
      if (tokens.empty()) throw UndefinedStatistic("z_score: no votes (N = 0)");
      const auto r = srl_detect(tokens, profile.key, profile.srl_params());
      return {{"z", r.z},
              {"p_value", r.p_value},
              {"message", r.extracted.to_string()},
              {"G", r.matrix(0, 1)},
              {"N", r.matrix.total()},
              {"ambiguous", nlohmann::json::array()},
              {"skipped", 0},
              {"decision", r.z > threshold},
              {"threshold", threshold}};
    }
    case Scheme::mpac: {
      if (tokens.empty()) throw UndefinedStatistic("z_score: no votes (N = 0)");
      const auto r = mpac_extract(tokens, profile.key, profile.mpac_params());
      const auto g = profile.ell == 1 ? green_count(r.matrix, Message::zero_bit())
                                      : green_count(r.matrix);
      return {{"z", r.z},
              {"p_value", r.p_value},
              {"message", r.extracted.to_string()},
              {"G", g.green},
              {"N", g.total},
              {"ambiguous", extract_message(r.matrix).ambiguous},
              {"skipped", 0},
              {"decision", r.z > threshold},
              {"threshold", threshold}};
    }
  }
  throw ContractViolation("unhandled scheme");
}

std::unique_ptr<LanguageModel> LmSpec::build(std::size_t vocab_size,
                                             std::size_t prompt_length) const {
  if (kind == "synthetic") {
    return std::make_unique<SyntheticLM>(vocab_size, order, alpha, seed);
  }
  if (kind == "trace") {
    auto trace = DistributionTrace::load(trace_path);
    if (trace.vocab_size() != vocab_size) {
      throw DimensionError("trace vocab_size " + std::to_string(trace.vocab_size()) +
                           " != configured vocab_size " + std::to_string(vocab_size));
    }
    return std::make_unique<TraceLM>(std::move(trace), prompt_length);
  }
  throw ParseError("unknown lm kind '" + kind + "' (synthetic | trace)");
}

ExperimentConfig ExperimentConfig::from_flat(const io::FlatFile& flat,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.scheme = parse_scheme(flat.get_or("scheme", "bimark"));
  c.key = key_from_flat(flat, base_dir);

  c.params.d = flat.get_size("d", c.params.d);
  c.params.delta_base = flat.get_double("delta_base", c.params.delta_base);
  c.params.h = flat.get_size("h", c.params.h);
  c.params.ell = flat.get_size("ell", c.params.ell);
  c.params.vocab_size = flat.get_size("vocab_size", 0);
  c.params.max_new_tokens = flat.get_size("max_new_tokens", c.params.max_new_tokens);
  c.gamma = flat.get_double("gamma", c.gamma);
  c.delta_logit = flat.get_double("delta_logit", c.delta_logit);

  c.lm.kind = flat.get_or("lm", c.lm.kind);
  c.lm.order = flat.get_size("lm_order", c.lm.order);
  c.lm.alpha = flat.get_double("lm_alpha", c.lm.alpha);
  c.lm.seed = flat.get_u64("lm_seed", c.lm.seed);
  c.lm.trace_path = resolve(base_dir, flat.get_or("lm_trace", ""));
  c.prompt_length = flat.get_size("prompt_length", c.prompt_length);

  c.bits = flat.get_sizes("grid_bits");
  c.lengths = flat.get_sizes("grid_lengths");
  c.substitution = flat.get_doubles("grid_substitution");
  c.depths = flat.get_sizes("grid_d");
  c.delta_bases = flat.get_doubles("grid_delta_base");
  if (c.bits.empty()) c.bits = {c.params.ell};
  if (c.lengths.empty()) c.lengths = {c.params.max_new_tokens};
  if (c.substitution.empty()) c.substitution = {0.0};
  if (c.depths.empty()) c.depths = {c.params.d};
  if (c.delta_bases.empty()) c.delta_bases = {c.params.delta_base};

  c.runs = flat.get_size("runs", c.runs);
  c.master_seed = flat.get_u64("master_seed", c.master_seed);
  c.z_threshold = flat.get_double("z_threshold", c.z_threshold);
  c.threads = flat.get_size("threads", c.threads);
  c.null_runs = flat.get_bool("null_runs", c.null_runs);
  c.output_csv = resolve(base_dir, flat.get_or("output_csv", ""));
  c.output_json = resolve(base_dir, flat.get_or("output_json", ""));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_flat(io::FlatFile::load(path), path.parent_path());
}

void ExperimentConfig::validate() const {
  params.validate();
  if (lm.kind == "trace" && !std::filesystem::exists(lm.trace_path)) {
    throw ParseError("lm_trace file not found: " + lm.trace_path.string());
  }
  if (lm.kind != "trace" && lm.kind != "synthetic") {
    throw ParseError("unknown lm kind '" + lm.kind + "' (synthetic | trace)");
  }
  if (runs < 1) throw DomainError("config: runs must be >= 1");
  for (auto b : bits) {
    if (b < 1) throw DomainError("config: grid_bits entries must be >= 1");
  }
  for (auto d : depths) {
    if (d < 1) throw DomainError("config: grid_d entries must be >= 1");
  }
  for (double r : substitution) {
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("config: substitution ratios must be in [0, 1]");
  }
  for (double db : delta_bases) {
    if (!(db >= 0.0 && db <= 1.0)) throw DomainError("config: delta_base must be in [0, 1]");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("config: gamma must be in (0, 1)");
}

DetectionProfile ExperimentConfig::profile() const {
  DetectionProfile p;
  p.scheme = scheme;
  p.key = key;
  p.d = params.d;
  p.ell = params.ell;
  p.h = params.h;
  p.vocab_size = params.vocab_size;
  p.gamma = gamma;
  p.delta_logit = delta_logit;
  return p;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"scheme", scheme_name(scheme)},
          {"vocab_size", params.vocab_size},
          {"h", params.h},
          {"gamma", gamma},
          {"delta_logit", delta_logit},
          {"lm",
           {{"kind", lm.kind},
            {"order", lm.order},
            {"alpha", lm.alpha},
            {"seed", lm.seed},
            {"trace", lm.trace_path.string()}}},
          {"prompt_length", prompt_length},
          {"grid",
           {{"bits", bits},
            {"lengths", lengths},
            {"substitution", substitution},
            {"d", depths},
            {"delta_base", delta_bases}}},
          {"runs", runs},
          {"master_seed", master_seed},
          {"z_threshold", z_threshold}};
}

}  // namespace bimark
