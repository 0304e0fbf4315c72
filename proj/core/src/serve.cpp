#include "bimark/serve.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "bimark/detect.hpp"
#include "bimark/embed.hpp"
#include "bimark/error.hpp"

namespace bimark {
namespace {

nlohmann::json error_object(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

class RequestError : public std::runtime_error {
 public:
  RequestError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

const nlohmann::json& field(const nlohmann::json& request, const char* name) {
  if (!request.contains(name)) {
    throw RequestError("bad_request", std::string("missing field '") + name + "'");
  }
  return request.at(name);
}

std::vector<TokenId> token_array(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw RequestError("bad_request", std::string(name) + " must be an array");
  std::vector<TokenId> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw RequestError("bad_request", std::string(name) + " must hold nonnegative integers");
    }
    const auto id = v.get<std::uint64_t>();
    if (id > 0xffffffffULL) throw RequestError("data_error", "token id out of range");
    out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

}  // namespace

ServeSession::ServeSession(DetectionProfile profile, ServeOptions options)
    : profile_(std::move(profile)), options_(options) {
  if (profile_.scheme == Scheme::bimark) {
    stack_ = derive_partitions(profile_.key, profile_.vocab_size, profile_.d);
  }
}

nlohmann::json ServeSession::handle(const nlohmann::json& request) {
  nlohmann::json response;
  try {
    if (!request.is_object()) throw RequestError("bad_request", "request must be an object");
    const auto& op_field = field(request, "op");
    if (!op_field.is_string()) throw RequestError("bad_request", "op must be a string");
    const auto op = op_field.get<std::string>();
    if (op == "profile") {
      response = profile_.to_json();
      response["delta_base"] = options_.delta_base;
      response["threshold"] = options_.threshold;
    } else if (op == "reweight") {
      response = reweight(request);
    } else if (op == "detect") {
      response = detect(request);
    } else if (op == "reset") {
      log_.clear();
      response = {{"reset", true}};
    } else {
      throw RequestError("unknown_op", "unknown op '" + op + "'");
    }
  } catch (const RequestError& e) {
    response = error_object(e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    response = error_object("bad_request", e.what());
  } catch (const UndefinedStatistic& e) {
    response = error_object("undefined_statistic", e.what());
  } catch (const std::exception& e) {
    response = error_object("data_error", e.what());
  }
  if (request.is_object() && request.contains("id")) response["id"] = request["id"];
  return response;
}

std::string ServeSession::handle_line(const std::string& line) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    return error_object("parse_error", e.what()).dump();
  }
  return handle(request).dump();
}

nlohmann::json ServeSession::reweight(const nlohmann::json& request) {
  if (profile_.scheme != Scheme::bimark) {
    throw RequestError("unsupported", "reweight is only served for the bimark scheme");
  }
  const auto& probs_json = field(request, "probs");
  if (!probs_json.is_array()) throw RequestError("bad_request", "probs must be an array");
  std::vector<double> probs;
  probs.reserve(probs_json.size());
  for (const auto& v : probs_json) {
    if (!v.is_number()) throw RequestError("bad_request", "probs must hold numbers");
    probs.push_back(v.get<double>());
  }
  if (probs.size() != profile_.vocab_size) {
    throw RequestError("validation_error", "probs has " + std::to_string(probs.size()) +
                                               " entries, profile vocab_size is " +
                                               std::to_string(profile_.vocab_size));
  }
  const auto window_tokens = token_array(field(request, "window"), "window");
  if (window_tokens.size() != profile_.h) {
    throw RequestError("validation_error", "window must hold exactly h = " +
                                               std::to_string(profile_.h) + " ids");
  }
  for (TokenId t : window_tokens) {
    if (t > profile_.vocab_size) {
      throw RequestError("validation_error", "window id beyond the sentinel");
    }
  }
  const auto& message_json = field(request, "message");
  if (!message_json.is_string()) throw RequestError("bad_request", "message must be a bit string");
  const Message message = Message::from_string(message_json.get<std::string>());
  if (message.size() != profile_.ell) {
    throw RequestError("validation_error", "message length != ell");
  }
  double delta_base = options_.delta_base;
  if (request.contains("delta_base")) delta_base = request["delta_base"].get<double>();

  ProbabilityDistribution dist{std::vector<double>(probs)};
  const auto params = profile_.embed_params(delta_base);
  params.validate();
  const auto step = watermark_step(dist, profile_.key, ContextWindow(window_tokens), message,
                                   params, stack_, log_);
  nlohmann::json out{{"probs", step.dist.probs()}, {"seeded", step.record.seeded}};
  if (step.record.seeded) out["position"] = step.record.position;
  return out;
}

nlohmann::json ServeSession::detect(const nlohmann::json& request) {
  const auto tokens = token_array(field(request, "tokens"), "tokens");
  double threshold = options_.threshold;
  if (request.contains("threshold")) threshold = request["threshold"].get<double>();
  return detection_document(profile_, tokens, threshold);
}

void serve_stream(std::istream& in, std::ostream& out, const DetectionProfile& profile,
                  const ServeOptions& options) {
  ServeSession session(profile, options);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << session.handle_line(line) << '\n';
    out.flush();
  }
}

namespace {

bool write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::write(fd, data.data() + sent, data.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

void serve_connection(int fd, const DetectionProfile& profile, const ServeOptions& options) {
  ServeSession session(profile, options);
  std::string buffer;
  char chunk[65536];
  for (;;) {
    const ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (auto nl = buffer.find('\n', start); nl != std::string::npos;
         nl = buffer.find('\n', start)) {
      const std::string line = buffer.substr(start, nl - start);
      start = nl + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (!write_all(fd, session.handle_line(line) + "\n")) return;
    }
    buffer.erase(0, start);
  }
}

}  // namespace

void serve_unix_socket(const std::filesystem::path& socket_path, const DetectionProfile& profile,
                       const ServeOptions& options, std::size_t max_connections) {
  const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listener < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));

  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string path = socket_path.string();
  if (path.size() >= sizeof(addr.sun_path)) {
    ::close(listener);
    throw std::runtime_error("socket path too long: " + path);
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  ::unlink(path.c_str());
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listener, 8) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listener);
    throw std::runtime_error("bind/listen on " + path + ": " + err);
  }

  std::size_t served = 0;
  while (max_connections == 0 || served < max_connections) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    serve_connection(fd, profile, options);
    ::close(fd);
    ++served;
  }
  ::close(listener);
  ::unlink(path.c_str());
}

}  // namespace bimark
