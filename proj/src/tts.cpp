#include "comicvox/tts.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "comicvox/baselines.hpp"
#include "comicvox/error.hpp"

namespace comicvox {

using json = nlohmann::json;

const std::string& VoiceProfile::style_for(Emotion e) const {
  auto it = styles.find(e);
  return it == styles.end() ? default_style : it->second;
}

VoiceProfiles voice_profiles_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("voice profiles must be a JSON object");
  VoiceProfiles out;
  for (const auto& [id, value] : j.items()) {
    VoiceProfile p;
    p.character_id = id;
    p.reference_voice_id = value.at("voice").get<std::string>();
    p.default_style = value.value("default_style", "neutral");
    if (auto styles = value.find("styles"); styles != value.end()) {
      for (const auto& [label, style] : styles->items()) {
        const auto e = emotion_from_string(label);
        if (!e) throw ConfigError("voice profile " + id + ": unknown emotion '" + label + "'");
        p.styles[*e] = style.get<std::string>();
      }
    }
    out[id] = std::move(p);
  }
  return out;
}

VoiceProfiles load_voice_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open voice profiles " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("voice profiles are not valid JSON: " + path.string());
  return voice_profiles_from_json(j);
}

json to_json(const TTSJob& job) {
  json j = {{"schema", "tts_job_v1"},
            {"job_id", job.job_id},
            {"title", job.title},
            {"page", job.page},
            {"text_id", job.text_id},
            {"text", job.text},
            {"speaker", job.speaker},
            {"emotion", std::string(to_string(job.emotion))},
            {"voice", job.voice},
            {"style", job.style},
            {"seq", job.sequence_index}};
  if (job.audio_path) j["audio_path"] = *job.audio_path;
  if (job.error) j["error"] = *job.error;
  return j;
}

std::vector<TTSJob> plan_jobs(const std::vector<AttributedPage>& pages, const VoiceProfiles& profiles,
                              const std::string& narrator_id, ReadingDirection direction) {
  std::vector<TTSJob> jobs;
  int seq = 0;
  for (const auto& page : pages) {
    std::map<std::string, const Prediction*> by_text;
    for (const auto& p : page.predictions) by_text[p.text_id] = &p;
    for (const auto& text_id : texts_in_reading_order(page.scene, page.seq, direction)) {
      const auto* text = page.scene.find_text(text_id);
      auto it = by_text.find(text_id);
      TTSJob job;
      job.title = page.scene.page.title_id;
      job.page = page.scene.page.page_index;
      job.text_id = text_id;
      job.text = text->content;
      job.speaker = it == by_text.end() ? std::string(kUnknownSpeaker) : it->second->pred_speaker;
      job.emotion = it != by_text.end() && it->second->pred_emotion ? *it->second->pred_emotion
                                                                    : Emotion::Neutral;
      const VoiceProfile* profile = nullptr;
      if (job.speaker != kUnknownSpeaker && job.speaker != kOthers) {
        if (auto p = profiles.find(job.speaker); p != profiles.end()) profile = &p->second;
      }
      if (!profile) {
        auto n = profiles.find(narrator_id);
        if (n == profiles.end()) {
          throw ConfigError("speaker " + job.speaker + " needs the narrator profile '" +
                            narrator_id + "', which is not configured");
        }
        profile = &n->second;
        job.emotion = Emotion::Neutral;
      }
      job.voice = profile->reference_voice_id;
      job.style = profile->style_for(job.emotion);
      job.sequence_index = seq++;
      std::ostringstream id;
      id << job.title << "-" << job.sequence_index;
      job.job_id = id.str();
      jobs.push_back(std::move(job));
    }
  }
  return jobs;
}

namespace {

void synthesize(TTSJob& job, Transport& transport) {
  AdapterRequest req{"synthesize", job.title, job.page, "", {}};
  req.items.push_back({job.job_id,
                       std::nullopt,
                       {{"text", job.text},
                        {"speaker", job.speaker},
                        {"emotion", std::string(to_string(job.emotion))},
                        {"voice", job.voice},
                        {"style", job.style}}});
  try {
    const auto items = adapter_call(transport, req);
    const auto& item = items.front();
    if (auto p = item.find("audio_path"); p != item.end() && p->is_string()) {
      job.audio_path = p->get<std::string>();
    } else if (auto e = item.find("error"); e != item.end() && e->is_string()) {
      job.error = e->get<std::string>();
    } else {
      job.error = "adapter reply has neither audio_path nor error";
    }
  } catch (const Error& e) {
    job.error = e.what();
  }
}

}  // namespace

DispatchSummary dispatch(std::vector<TTSJob>& jobs, const std::filesystem::path& manifest,
                         Transport* transport, int max_concurrent) {
  DispatchSummary summary;
  if (transport) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) synthesize(jobs[i], *transport);
    };
    const int n = std::max(1, max_concurrent);
    std::vector<std::jthread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    pool.clear();
  }
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + manifest.string());
  for (const auto& job : jobs) {
    out << to_json(job).dump() << '\n';
    ++summary.written;
    if (job.audio_path) ++summary.synthesized;
    if (job.error) ++summary.failed;
  }
  return summary;
}

}  // namespace comicvox
