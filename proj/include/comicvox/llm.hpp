#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <tuple>
#include <string>
#include <vector>

#include "comicvox/baselines.hpp"
#include "comicvox/error.hpp"
#include "comicvox/perception.hpp"

namespace comicvox {

inline constexpr std::size_t kDefaultGlobalBudget = 2000;
inline constexpr std::size_t kDefaultLocalBudget = 800;

/// Rolling plot memory carried from page to page: an accumulated global
/// summary and the previous page's local summary. Budgets are in Unicode
/// code points.
struct MemoryState {
  std::string global_summary;
  std::string local_summary;
  std::size_t budget_global = kDefaultGlobalBudget;
  std::size_t budget_local = kDefaultLocalBudget;
  int page_cursor = -1;  // last summarized page index

  /// Throws ContractError when a summary exceeds its budget.
  void check() const;
  friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

/// Everything the attribution step knows about one page.
struct PageInputs {
  SceneGraph scene;
  FrameSequence seq;
  std::vector<CharPrediction> char_preds;
  /// Absent when the intensity channel is disabled (setting A).
  std::optional<std::vector<EmotionIntensity>> intensities;
  std::vector<Character> roster;
  std::vector<std::string> main_characters;
  ReadingDirection direction = ReadingDirection::RightToLeft;
  DistanceMetric fallback_metric = DistanceMetric::Center;
};

struct FrameBlock {
  std::string frame_id;
  std::vector<std::string> lines;
  friend bool operator==(const FrameBlock&, const FrameBlock&) = default;
};

struct PagePrompt {
  std::string system_preamble;
  std::string memory_block;
  std::vector<FrameBlock> frame_blocks;
  std::vector<std::string> unassigned_block;
  std::string output_schema_instructions;

  [[nodiscard]] std::string render() const;
  friend bool operator==(const PagePrompt&, const PagePrompt&) = default;
};

/// Renders a page for the model: memory, then each frame's texts and
/// characters in reading order, then elements outside every frame, then
/// the answer format. Pure and byte-stable. Throws ContractError when the
/// memory violates its budgets.
PagePrompt build_prompt(const PageInputs& inputs, const MemoryState& memory);

struct TextAttribution {
  std::string speaker{kUnknownSpeaker};
  Emotion emotion = Emotion::Neutral;
  std::vector<std::string> flags;
  friend bool operator==(const TextAttribution&, const TextAttribution&) = default;
};

struct AttributionResult {
  std::map<std::string, TextAttribution> entries;  // keyed by text id
  /// Absent when the reply omitted the summary.
  std::optional<std::string> new_global_summary;
  std::optional<std::string> new_local_summary;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t flag_count() const;
  friend bool operator==(const AttributionResult&, const AttributionResult&) = default;
};

/// The model's reply contained no well-formed JSON object.
class ParseFailure : public Error {
 public:
  using Error::Error;
};

/// Extracts the first well-formed JSON object in `raw` and maps it onto the
/// expected text ids. Speaker names resolve against the roster's names and
/// ids (case-insensitive, then whitespace-normalized); anything else is
/// UNKNOWN. Emotions normalize onto the 7-label vocabulary, defaulting to
/// neutral with a warning. Missing ids are filled with (UNKNOWN, neutral)
/// and flagged "missing".
AttributionResult parse_response(std::string_view raw,
                                 const std::vector<std::string>& expected_text_ids,
                                 const std::vector<Character>& roster);

struct LlmRequest {
  std::string title;
  int page = 0;
  std::string prompt;
  int attempt = 0;
  const PageInputs* inputs = nullptr;
  const MemoryState* memory = nullptr;
};

/// Transport or endpoint failure; attribution falls back on it.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Strict cassette lookup failed. Not recoverable by fallback.
class CassetteMiss : public Error {
 public:
  using Error::Error;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const LlmRequest& request) = 0;
};

struct CassetteEntry {
  std::string key;
  std::string title;
  int page = 0;
  std::string response;
  friend bool operator==(const CassetteEntry&, const CassetteEntry&) = default;
};

/// Recorded responses keyed by (title, page, SHA-256 of the prompt).
/// Stored as JSON-lines {"key","title","page","response"}.
class Cassette {
 public:
  Cassette() = default;
  Cassette(Cassette&& other) noexcept : entries_(std::move(other.entries_)) {}

  static std::string key_for(std::string_view prompt);

  static Cassette load(const std::filesystem::path& path);
  /// Entries are written sorted by (title, page, key).
  void save(const std::filesystem::path& path) const;

  [[nodiscard]] std::optional<std::string> find(const std::string& title, int page,
                                                const std::string& key) const;
  void put(CassetteEntry entry);
  [[nodiscard]] std::vector<CassetteEntry> entries() const;
  [[nodiscard]] std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::tuple<std::string, int, std::string>, std::string> entries_;
};

class CassetteBackend final : public LlmBackend {
 public:
  /// In lenient mode a miss is answered by `fallback` (or raises
  /// CassetteMiss when none is given).
  CassetteBackend(std::shared_ptr<const Cassette> cassette, bool strict,
                  LlmBackend* fallback = nullptr)
      : cassette_(std::move(cassette)), strict_(strict), fallback_(fallback) {}
  std::string complete(const LlmRequest& request) override;

 private:
  std::shared_ptr<const Cassette> cassette_;
  bool strict_;
  LlmBackend* fallback_;
};

/// Forwards to `inner` and records every successful reply.
class RecordingBackend final : public LlmBackend {
 public:
  RecordingBackend(LlmBackend& inner, std::shared_ptr<Cassette> sink)
      : inner_(inner), sink_(std::move(sink)) {}
  std::string complete(const LlmRequest& request) override;

 private:
  LlmBackend& inner_;
  std::shared_ptr<Cassette> sink_;
};

class ScriptedBackend final : public LlmBackend {
 public:
  using Script = std::function<std::string(const LlmRequest&)>;
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}
  std::string complete(const LlmRequest& request) override;
  [[nodiscard]] int calls() const { return calls_; }

 private:
  Script script_;
  std::mutex mutex_;
  int calls_ = 0;
};

/// Deterministic stand-in model: speakers follow the frame_distance rule
/// over the predicted identities; emotions come from intensity and
/// punctuation; summaries append the page's dialogue.
ScriptedBackend::Script nearest_character_script();

struct HttpChatConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_s = 120;
  int max_concurrent = 4;
  int min_interval_ms = 0;
  double temperature = 0.0;
};

/// OpenAI-compatible chat completions endpoint.
class HttpChatBackend final : public LlmBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);
  std::string complete(const LlmRequest& request) override;

 private:
  HttpChatConfig config_;
  std::string base_;
  std::string path_;
  std::counting_semaphore<1024> slots_;
  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

struct RetryPolicy {
  int max_retries = 2;
};

enum class AttributionStatus { Ok, ParseFailureFallback, BackendErrorFallback };

std::string_view to_string(AttributionStatus status);

struct PageAttribution {
  AttributionResult result;
  MemoryState memory;
  AttributionStatus status = AttributionStatus::Ok;
  int calls = 0;
  std::string prompt;
};

/// One step of the page recurrence: prompt the model with the page and
/// the memory of the pages before it, parse the reply, and advance memory.
///
/// The memory cursor must equal page_index - 1. After max_retries failed
/// retries (unparseable replies or backend errors) the page falls back to
/// frame_distance speakers with neutral emotions; memory then advances its
/// cursor but keeps both summaries. CassetteMiss propagates.
PageAttribution attribute_page(const PageInputs& inputs, const MemoryState& memory,
                               LlmBackend& backend, const RetryPolicy& policy = {});

}  // namespace comicvox
