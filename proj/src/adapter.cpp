#include "comicvox/adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <httplib.h>

#include "comicvox/error.hpp"
#include "comicvox/util.hpp"

namespace comicvox {

using json = nlohmann::json;

ProcessTransport::ProcessTransport(std::vector<std::string> argv,
                                   std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  if (argv.empty()) throw ConfigError("adapter command is empty");
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw TransportError(std::string("socketpair: ") + std::strerror(errno));
  }
  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw TransportError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execvp(args[0], args.data());
    std::fprintf(stderr, "exec %s: %s\n", args[0], std::strerror(errno));
    ::_exit(127);
  }
  ::close(fds[1]);
  fd_ = fds[0];
  pid_ = pid;
  const auto line = read_line();
  try {
    handshake_ = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("adapter handshake is not JSON: ") + e.what());
  }
  if (auto v = handshake_.find("protocol_version");
      v != handshake_.end() && v->is_string() && *v != kProtocolVersion) {
    throw ProtocolError("adapter speaks protocol version " + v->get<std::string>());
  }
}

ProcessTransport::~ProcessTransport() {
  if (fd_ >= 0) ::close(fd_);
  if (pid_ > 0) {
    int status = 0;
    // closing the socket ends a well-behaved adapter's read loop
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

std::string ProcessTransport::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      auto line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TransportError("adapter timed out");
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw TransportError(std::string("poll: ") + std::strerror(errno));
    if (rc == 0) throw TransportError("adapter timed out");
    char chunk[4096];
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError("adapter closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string ProcessTransport::exchange(const std::string& request_line) {
  std::lock_guard lock(mutex_);
  std::string out = request_line;
  out.push_back('\n');
  std::size_t sent = 0;
  while (sent < out.size()) {
    const auto n = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError(std::string("adapter write: ") + std::strerror(errno));
    sent += static_cast<std::size_t>(n);
  }
  return read_line();
}

namespace {

// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("URL lacks a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpTransport::HttpTransport(std::string url, std::chrono::milliseconds timeout, bool concurrent)
    : timeout_(timeout), concurrent_(concurrent) {
  std::tie(base_, path_) = split_url(url);
}

std::string HttpTransport::exchange(const std::string& request_line) {
  httplib::Client client(base_);
  const auto secs = timeout_.count() / 1000;
  const auto usecs = (timeout_.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(path_, request_line, "application/json");
  if (!res) throw TransportError("adapter HTTP error: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("adapter HTTP status " + std::to_string(res->status));
  }
  auto body = res->body;
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  return body;
}

std::unique_ptr<Transport> make_transport(const AdapterConfig& config) {
  const std::chrono::milliseconds timeout{config.timeout_ms};
  if (config.kind == "process") {
    return std::make_unique<ProcessTransport>(config.command, timeout);
  }
  if (config.kind == "http") {
    return std::make_unique<HttpTransport>(config.url, timeout, config.concurrent);
  }
  throw ConfigError("unknown adapter kind '" + config.kind + "'");
}

json AdapterRequest::to_json() const {
  json items_json = json::array();
  for (const auto& item : items) {
    json obj = item.extra.is_object() ? item.extra : json::object();
    obj["id"] = item.id;
    if (item.bbox) {
      obj["bbox"] = {item.bbox->xmin, item.bbox->ymin, item.bbox->xmax, item.bbox->ymax};
    }
    items_json.push_back(std::move(obj));
  }
  return {{"op", op}, {"title", title}, {"page", page}, {"image", image}, {"items", items_json}};
}

std::vector<json> adapter_call(Transport& transport, const AdapterRequest& request) {
  const auto reply = transport.call(request.to_json().dump());
  json parsed;
  try {
    parsed = json::parse(reply);
  } catch (const json::parse_error&) {
    throw ProtocolError("adapter reply is not JSON");
  }
  if (!parsed.is_object()) throw ProtocolError("adapter reply is not an object");
  if (auto err = parsed.find("error"); err != parsed.end() && !parsed.contains("items")) {
    throw ProtocolError("adapter error: " + err->dump());
  }
  auto items = parsed.find("items");
  if (items == parsed.end() || !items->is_array()) {
    throw ProtocolError("adapter reply has no items array");
  }
  if (items->size() != request.items.size()) {
    throw ProtocolError("adapter returned " + std::to_string(items->size()) +
                        " items for " + std::to_string(request.items.size()));
  }
  std::vector<json> out;
  out.reserve(items->size());
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& item = (*items)[i];
    if (!item.is_object() || !item.contains("id") || item["id"] != request.items[i].id) {
      throw ProtocolError("adapter reordered or renamed item " + std::to_string(i));
    }
    out.push_back(item);
  }
  return out;
}

std::string page_image_path(const std::string& image_root, const std::string& title, int page) {
  char name[32];
  std::snprintf(name, sizeof name, "%03d.jpg", page);
  std::string out = image_root;
  if (!out.empty() && out.back() != '/') out.push_back('/');
  return out + title + "/" + name;
}

namespace {

bool field_ok(const std::string& op, const json& item) {
  if (op == "identify") {
    return item.contains("label") && item["label"].is_string() && item.contains("confidence") &&
           item["confidence"].is_number() && item["confidence"] >= 0.0 &&
           item["confidence"] <= 1.0;
  }
  if (op == "intensity") return item.contains("logit") && item["logit"].is_number();
  if (op == "ocr") return item.contains("text") && item["text"].is_string();
  if (op == "synthesize") {
    return (item.contains("audio_path") && item["audio_path"].is_string()) ||
           (item.contains("error") && item["error"].is_string());
  }
  return false;
}

}  // namespace

ConformanceReport run_conformance(Transport& transport, int n_requests, std::uint64_t seed) {
  static const std::vector<std::string> kOps = {"identify", "intensity", "ocr", "synthesize"};
  ConformanceReport report;
  Rng rng(seed);
  for (int r = 0; r < n_requests; ++r) {
    AdapterRequest req;
    req.op = kOps[rng.below(kOps.size())];
    req.title = "conformance";
    req.page = static_cast<int>(rng.below(1000));
    req.image = page_image_path("/nonexistent", req.title, req.page);
    const auto n_items = rng.below(12);
    for (std::uint64_t i = 0; i < n_items; ++i) {
      AdapterItem item;
      item.id = "r" + std::to_string(r) + "_i" + std::to_string(rng.below(1u << 20));
      if (req.op == "synthesize") {
        item.extra = {{"text", "line " + std::to_string(i)},
                      {"voice", "v" + std::to_string(rng.below(5))},
                      {"style", "neutral"}};
      } else {
        const int x = static_cast<int>(rng.below(1500));
        const int y = static_cast<int>(rng.below(1000));
        item.bbox = BBox{x, y, x + 1 + static_cast<int>(rng.below(300)),
                         y + 1 + static_cast<int>(rng.below(300))};
      }
      req.items.push_back(std::move(item));
    }
    ++report.requests;
    try {
      const auto items = adapter_call(transport, req);
      for (const auto& item : items) {
        if (!field_ok(req.op, item)) {
          ++report.violations;
          report.messages.push_back("request " + std::to_string(r) + " (" + req.op +
                                    "): bad fields in " + item.dump());
          break;
        }
      }
    } catch (const Error& e) {
      ++report.violations;
      report.messages.push_back("request " + std::to_string(r) + " (" + req.op + "): " + e.what());
    }
  }
  return report;
}

}  // namespace comicvox
