#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "comicvox/geometry.hpp"

namespace comicvox {

// Line-delimited JSON request/response protocol spoken by external model
// adapters (perception and TTS). One response line per request line; the
// response carries the request's items in the same order.
//
//   request:  {"op","title","page","image","items":[{"id","bbox":[x0,y0,x1,y1],...}]}
//   response: {"items":[{"id", op-specific fields...}]}  or  {"error": "..."}
//
// Op-specific response fields: identify -> "label","confidence";
// intensity -> "logit"; ocr -> "text"; synthesize -> "audio_path" or "error".

inline constexpr std::string_view kProtocolVersion = "1";

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one request line (without newline) and returns the reply line.
  virtual std::string exchange(const std::string& request_line) = 0;
  /// Single-flight transports accept one request at a time.
  [[nodiscard]] virtual bool single_flight() const { return true; }

  /// exchange(), serialized when the transport is single-flight.
  std::string call(const std::string& request_line) {
    if (!single_flight()) return exchange(request_line);
    std::lock_guard lock(flight_);
    return exchange(request_line);
  }

 private:
  std::mutex flight_;
};

/// Child process speaking the protocol on stdin/stdout. The first line the
/// child prints is its handshake manifest.
class ProcessTransport final : public Transport {
 public:
  ProcessTransport(std::vector<std::string> argv, std::chrono::milliseconds timeout);
  ~ProcessTransport() override;
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  std::string exchange(const std::string& request_line) override;
  [[nodiscard]] const nlohmann::json& handshake() const { return handshake_; }

 private:
  std::string read_line();

  int fd_ = -1;
  int pid_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
  nlohmann::json handshake_;
  std::mutex mutex_;
};

/// POSTs each request line to an HTTP endpoint; the body of the reply is
/// the response line.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string url, std::chrono::milliseconds timeout, bool concurrent = false);
  std::string exchange(const std::string& request_line) override;
  [[nodiscard]] bool single_flight() const override { return !concurrent_; }

 private:
  std::string base_;
  std::string path_;
  std::chrono::milliseconds timeout_;
  bool concurrent_;
};

/// In-process transport, mainly for tests and embedding.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<std::string(const std::string&)>;
  explicit FunctionTransport(Handler handler, bool single_flight = false)
      : handler_(std::move(handler)), single_flight_(single_flight) {}
  std::string exchange(const std::string& request_line) override { return handler_(request_line); }
  [[nodiscard]] bool single_flight() const override { return single_flight_; }

 private:
  Handler handler_;
  bool single_flight_;
};

struct AdapterConfig {
  std::string kind = "process";  // "process" | "http"
  std::vector<std::string> command;
  std::string url;
  int timeout_ms = 30000;
  bool concurrent = false;
  std::string image_root;
};

std::unique_ptr<Transport> make_transport(const AdapterConfig& config);

struct AdapterItem {
  std::string id;
  std::optional<BBox> bbox;
  nlohmann::json extra = nlohmann::json::object();
};

struct AdapterRequest {
  std::string op;
  std::string title;
  int page = 0;
  std::string image;
  std::vector<AdapterItem> items;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Sends `request` and checks the reply: a JSON object whose "items" echo
/// the request ids in order. Throws ProtocolError on any violation and
/// TransportError when the transport fails.
std::vector<nlohmann::json> adapter_call(Transport& transport, const AdapterRequest& request);

/// Image path convention for adapters: <root>/<title>/<page:03>.jpg.
std::string page_image_path(const std::string& image_root, const std::string& title, int page);

struct ConformanceReport {
  int requests = 0;
  int violations = 0;
  std::vector<std::string> messages;
};

/// Sends `n_requests` randomized requests across all ops and counts
/// arity, ordering, and field-type violations.
ConformanceReport run_conformance(Transport& transport, int n_requests, std::uint64_t seed);

}  // namespace comicvox
