#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "comicvox/adapter.hpp"
#include "comicvox/evaluation.hpp"
#include "comicvox/layout.hpp"

namespace comicvox {

struct VoiceProfile {
  std::string character_id;
  std::string reference_voice_id;
  std::map<Emotion, std::string> styles;
  std::string default_style = "neutral";

  [[nodiscard]] const std::string& style_for(Emotion e) const;
  friend bool operator==(const VoiceProfile&, const VoiceProfile&) = default;
};

/// Profiles keyed by character id. Loaded from a JSON object
/// {"<character id>": {"voice": "...", "default_style": "...",
/// "styles": {"<emotion>": "<style>"}}}.
using VoiceProfiles = std::map<std::string, VoiceProfile>;

VoiceProfiles load_voice_profiles(const std::filesystem::path& path);
VoiceProfiles voice_profiles_from_json(const nlohmann::json& j);

struct TTSJob {
  std::string job_id;
  std::string title;
  int page = 0;
  std::string text_id;
  std::string text;
  std::string speaker;
  Emotion emotion = Emotion::Neutral;
  std::string voice;
  std::string style;
  int sequence_index = 0;
  std::optional<std::string> audio_path;
  std::optional<std::string> error;
  friend bool operator==(const TTSJob&, const TTSJob&) = default;
};

nlohmann::json to_json(const TTSJob& job);

/// The pages of one title, in reading order, with their predictions.
struct AttributedPage {
  SceneGraph scene;
  FrameSequence seq;
  std::vector<Prediction> predictions;
};

/// One job per text segment. Jobs are numbered in page order, then reading
/// order within the page. Speakers without a profile (including UNKNOWN and
/// OTHERS) use the narrator profile in its neutral style. Throws
/// ConfigError when the narrator is needed but missing.
std::vector<TTSJob> plan_jobs(const std::vector<AttributedPage>& pages, const VoiceProfiles& profiles,
                              const std::string& narrator_id = "narrator",
                              ReadingDirection direction = ReadingDirection::RightToLeft);

struct DispatchSummary {
  int written = 0;
  int synthesized = 0;
  int failed = 0;
};

/// Writes the manifest JSON-lines. With a transport, each job is first sent
/// as a "synthesize" request (up to `max_concurrent` at once) and the
/// returned audio path or error recorded on the job.
DispatchSummary dispatch(std::vector<TTSJob>& jobs, const std::filesystem::path& manifest,
                         Transport* transport = nullptr, int max_concurrent = 1);

}  // namespace comicvox
