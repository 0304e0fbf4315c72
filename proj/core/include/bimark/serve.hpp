#pragma once

// Newline-delimited JSON request loop exposing reweighting and detection to
// out-of-process clients (e.g. an inference loop in another language).
//
// Requests (one JSON object per line, optional "id" echoed back):
//   {"op":"profile"}
//   {"op":"reweight","probs":[...],"window":[...],"message":"0101"[,"delta_base":x]}
//   {"op":"detect","tokens":[...][,"threshold":z]}
//   {"op":"reset"}            -- forget the session's seen context windows
// Errors come back as {"error":{"code":...,"message":...}} and the loop
// continues.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "bimark/config.hpp"
#include "bimark/prf.hpp"
#include "bimark/reweight.hpp"

namespace bimark {

struct ServeOptions {
  double delta_base = 1.0;
  double threshold = 4.0;
};

/// One client session: owns the context log used by reweight requests.
class ServeSession {
 public:
  ServeSession(DetectionProfile profile, ServeOptions options);

  nlohmann::json handle(const nlohmann::json& request);
  /// Parses one line and handles it; malformed JSON yields an error object.
  std::string handle_line(const std::string& line);

  const DetectionProfile& profile() const noexcept { return profile_; }

 private:
  nlohmann::json reweight(const nlohmann::json& request);
  nlohmann::json detect(const nlohmann::json& request);

  DetectionProfile profile_;
  ServeOptions options_;
  PartitionStack stack_;
  SeenContextLog log_;
};

/// Reads requests from `in` until EOF, writing one response line each.
void serve_stream(std::istream& in, std::ostream& out, const DetectionProfile& profile,
                  const ServeOptions& options);

/// Listens on a Unix domain socket; each connection gets its own session.
/// Connections are served one at a time. Returns after `max_connections`
/// connections when nonzero, otherwise runs until an accept error.
void serve_unix_socket(const std::filesystem::path& socket_path, const DetectionProfile& profile,
                       const ServeOptions& options, std::size_t max_connections = 0);

}  // namespace bimark
