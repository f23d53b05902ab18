#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "comicvox/baselines.hpp"
#include "comicvox/dump.hpp"
#include "comicvox/error.hpp"
#include "comicvox/tts.hpp"

using namespace comicvox;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

VoiceProfiles profiles() {
  return voice_profiles_from_json(json::parse(R"({
    "narrator": {"voice": "voice:narrator"},
    "c1": {"voice": "voice:aiko", "default_style": "calm", "styles": {"anger": "intense", "happiness": "bright"}}
  })"));
}

AttributedPage page(int index, std::vector<std::pair<std::string, std::pair<std::string, Emotion>>> texts) {
  AttributedPage p;
  p.scene.page = {"Demo", index, 0, 1};
  p.scene.frames = {{"f", {0, 0, 1000, 1000}}};
  int y = 0;
  for (const auto& [id, who] : texts) {
    p.scene.texts.push_back({id, {100, y, 150, y + 50}, "line " + id});
    p.predictions.push_back({"Demo", index, id, who.first, who.second, "m", {}});
    y += 100;
  }
  p.seq = assign_elements(p.scene, order_frames(p.scene));
  return p;
}

std::vector<AttributedPage> three_lines() {
  return {page(1, {{"a", {"c1", Emotion::Anger}}, {"b", {"c1", Emotion::Sadness}}}),
          page(2, {{"c", {std::string(kUnknownSpeaker), Emotion::Happiness}}})};
}

std::filesystem::path temp_manifest(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("comicvox_" + name + ".jsonl");
}

}  // namespace

TEST(PlanJobs, SequenceFollowsPagesThenReadingOrder) {
  const auto jobs = plan_jobs(three_lines(), profiles());
  ASSERT_EQ(jobs.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(jobs[static_cast<std::size_t>(i)].sequence_index, i);
  EXPECT_EQ(jobs[0].text_id, "a");
  EXPECT_EQ(jobs[2].page, 2);
  EXPECT_EQ(jobs[0].job_id, "Demo-0");
}

TEST(PlanJobs, StyleLookupWithDefault) {
  const auto jobs = plan_jobs(three_lines(), profiles());
  EXPECT_EQ(jobs[0].voice, "voice:aiko");
  EXPECT_EQ(jobs[0].style, "intense");
  EXPECT_EQ(jobs[1].style, "calm");  // sadness has no entry
}

TEST(PlanJobs, UnknownSpeakerUsesNeutralNarrator) {
  const auto jobs = plan_jobs(three_lines(), profiles());
  EXPECT_EQ(jobs[2].voice, "voice:narrator");
  EXPECT_EQ(jobs[2].emotion, Emotion::Neutral);
  EXPECT_EQ(jobs[2].style, "neutral");
}

TEST(PlanJobs, MissingNarratorIsConfigError) {
  auto p = profiles();
  p.erase("narrator");
  EXPECT_THROW(plan_jobs(three_lines(), p), ConfigError);
  // not needed when every speaker has a profile
  EXPECT_NO_THROW(plan_jobs({page(0, {{"x", {"c1", Emotion::Neutral}}})}, p));
}

TEST(PlanJobs, MissingPredictionFallsToNarrator) {
  auto pages = three_lines();
  pages[0].predictions.pop_back();
  const auto jobs = plan_jobs(pages, profiles());
  EXPECT_EQ(jobs.size(), 3u);
  EXPECT_EQ(jobs[1].speaker, kUnknownSpeaker);
  EXPECT_EQ(jobs[1].voice, "voice:narrator");
}

TEST(VoiceProfiles, RejectsUnknownEmotionKeys) {
  EXPECT_THROW(voice_profiles_from_json(json::parse(R"({"n": {"voice": "v", "styles": {"grumpy": "x"}}})")),
               ConfigError);
}

TEST(Dispatch, ManifestOnlyWritesOneLinePerJob) {
  auto jobs = plan_jobs(three_lines(), profiles());
  const auto path = temp_manifest("manifest_only");
  const auto summary = dispatch(jobs, path);
  EXPECT_EQ(summary.written, 3);
  EXPECT_EQ(summary.synthesized, 0);
  const auto lines = read_jsonl(path.string());
  ASSERT_EQ(lines.size(), 3u);
  for (const auto* key : {"job_id", "title", "page", "text_id", "text", "speaker", "emotion", "voice", "style", "seq"})
    EXPECT_TRUE(lines[0].contains(key)) << key;
  EXPECT_FALSE(lines[0].contains("audio_path"));
  EXPECT_EQ(lines[2]["seq"], 2);

  // stable bytes
  std::ifstream a(path, std::ios::binary);
  const std::string first((std::istreambuf_iterator<char>(a)), {});
  auto again = plan_jobs(three_lines(), profiles());
  dispatch(again, path);
  std::ifstream b(path, std::ios::binary);
  EXPECT_EQ(std::string((std::istreambuf_iterator<char>(b)), {}), first);
  std::filesystem::remove(path);
}

TEST(Dispatch, EchoAdapterGivesEveryJobAPath) {
  auto jobs = plan_jobs(three_lines(), profiles());
  ProcessTransport t({COMICVOX_ECHO_ADAPTER}, 5000ms);
  const auto path = temp_manifest("echo");
  const auto summary = dispatch(jobs, path, &t, 2);
  EXPECT_EQ(summary.synthesized, 3);
  EXPECT_EQ(summary.failed, 0);
  EXPECT_EQ(jobs[1].audio_path, "echo/Demo/Demo-1.wav");
  std::filesystem::remove(path);
}

TEST(Dispatch, FailingJobIsRecordedAndRunContinues) {
  auto jobs = plan_jobs(three_lines(), profiles());
  ProcessTransport t({COMICVOX_ECHO_ADAPTER, "--fail-id", "Demo-1"}, 5000ms);
  const auto path = temp_manifest("fail");
  const auto summary = dispatch(jobs, path, &t);
  EXPECT_EQ(summary.synthesized, 2);
  EXPECT_EQ(summary.failed, 1);
  const auto lines = read_jsonl(path.string());
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_TRUE(lines[0].contains("audio_path"));
  EXPECT_EQ(lines[1]["error"], "injected failure");
  EXPECT_FALSE(lines[1].contains("audio_path"));
  EXPECT_TRUE(lines[2].contains("audio_path"));
  std::filesystem::remove(path);
}

TEST(Dispatch, TransportErrorsMarkJobsFailed) {
  auto jobs = plan_jobs(three_lines(), profiles());
  FunctionTransport down([](const std::string&) -> std::string { throw TransportError("gone"); });
  const auto path = temp_manifest("down");
  const auto summary = dispatch(jobs, path, &down);
  EXPECT_EQ(summary.failed, 3);
  EXPECT_EQ(summary.written, 3);
  std::filesystem::remove(path);
}
