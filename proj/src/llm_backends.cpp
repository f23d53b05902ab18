#include <cstdlib>
#include <fstream>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "comicvox/llm.hpp"
#include "comicvox/util.hpp"

namespace comicvox {

using json = nlohmann::json;

std::string Cassette::key_for(std::string_view prompt) { return sha256_hex(prompt); }

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cassette", path.string());
  Cassette cassette;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("key") || !obj.contains("title") ||
        !obj.contains("page") || !obj.contains("response")) {
      throw ParseError("malformed cassette entry", path.string(), line_no);
    }
    cassette.put({obj["key"].get<std::string>(), obj["title"].get<std::string>(),
                  obj["page"].get<int>(), obj["response"].get<std::string>()});
  }
  return cassette;
}

void Cassette::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write cassette " + path.string());
  for (const auto& e : entries()) {
    json obj = {{"key", e.key}, {"title", e.title}, {"page", e.page}, {"response", e.response}};
    out << obj.dump() << '\n';
  }
}

std::optional<std::string> Cassette::find(const std::string& title, int page,
                                          const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({title, page, key});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void Cassette::put(CassetteEntry entry) {
  std::lock_guard lock(mutex_);
  entries_[{std::move(entry.title), entry.page, std::move(entry.key)}] = std::move(entry.response);
}

std::vector<CassetteEntry> Cassette::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<CassetteEntry> out;
  for (const auto& [k, response] : entries_) {
    out.push_back({std::get<2>(k), std::get<0>(k), std::get<1>(k), response});
  }
  return out;
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string CassetteBackend::complete(const LlmRequest& request) {
  const auto key = Cassette::key_for(request.prompt);
  if (auto hit = cassette_->find(request.title, request.page, key)) return *hit;
  if (strict_ || !fallback_) {
    throw CassetteMiss("no cassette entry for " + request.title + " page " +
                       std::to_string(request.page) + " (key " + key.substr(0, 12) + ")");
  }
  return fallback_->complete(request);
}

std::string RecordingBackend::complete(const LlmRequest& request) {
  auto response = inner_.complete(request);
  sink_->put({Cassette::key_for(request.prompt), request.title, request.page, response});
  return response;
}

std::string ScriptedBackend::complete(const LlmRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  return script_(request);
}

ScriptedBackend::Script nearest_character_script() {
  return [](const LlmRequest& request) -> std::string {
    if (!request.inputs) throw BackendError("scripted backend needs page inputs");
    const auto& in = *request.inputs;
    const auto preds = frame_distance(in.scene, in.seq, to_identity_map(in.char_preds),
                                      in.fallback_metric);
    std::map<std::string, double> logits;
    if (in.intensities) {
      for (const auto& s : *in.intensities) logits[s.char_instance_id] = s.logit;
    }
    json dialogues = json::object();
    std::string page_text;
    for (const auto& p : preds) {
      const auto* text = in.scene.find_text(p.text_id);
      std::string emotion = "neutral";
      if (p.instance_id && logits.contains(*p.instance_id) && logits[*p.instance_id] > 0.0) {
        const auto& content = text->content;
        if (content.find('?') != std::string::npos) {
          emotion = "surprise";
        } else if (content.find('!') != std::string::npos) {
          emotion = "anger";
        } else {
          emotion = "happiness";
        }
      }
      const bool unknown = p.character_id == kOthers || p.character_id == kUnknownSpeaker;
      dialogues[p.text_id] = {{"speaker", unknown ? "unknown" : p.character_id},
                              {"emotion", emotion}};
      page_text += (page_text.empty() ? "" : " ") + text->content;
    }
    const std::string local = "Page " + std::to_string(request.page) + ": " +
                              (page_text.empty() ? "no dialogue." : page_text);
    const std::string global =
        (request.memory && !request.memory->global_summary.empty()
             ? request.memory->global_summary + " "
             : std::string{}) +
        local;
    json reply = {{"dialogues", dialogues}, {"global_summary", global}, {"local_summary", local}};
    return "```json\n" + reply.dump() + "\n```";
  };
}

HttpChatBackend::HttpChatBackend(HttpChatConfig config)
    : config_(std::move(config)), slots_(std::max(1, std::min(config_.max_concurrent, 1024))) {
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("LLM endpoint lacks a scheme");
  const auto slash = config_.endpoint.find('/', scheme + 3);
  base_ = slash == std::string::npos ? config_.endpoint : config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
}

std::string HttpChatBackend::complete(const LlmRequest& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  if (config_.min_interval_ms > 0) {
    std::unique_lock lock(pace_mutex_);
    const auto next = last_request_ + std::chrono::milliseconds(config_.min_interval_ms);
    const auto now = std::chrono::steady_clock::now();
    if (now < next) std::this_thread::sleep_for(next - now);
    last_request_ = std::chrono::steady_clock::now();
  }

  httplib::Client client(base_);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const json body = {{"model", config_.model},
                     {"temperature", config_.temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw BackendError("LLM request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw BackendError("LLM endpoint returned status " + std::to_string(res->status));
  }
  const auto reply = json::parse(res->body, nullptr, false);
  try {
    if (!reply.is_discarded()) {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
  } catch (const json::exception&) {
  }
  throw BackendError("LLM endpoint reply has no choices[0].message.content");
}

}  // namespace comicvox
