#include <gtest/gtest.h>

#include <filesystem>

#include "comicvox/llm.hpp"
#include "support/golden.hpp"
#include "support/local_server.hpp"
#include "support/synth.hpp"

using namespace comicvox;
using json = nlohmann::json;

namespace {

const std::filesystem::path kFixtures = COMICVOX_FIXTURE_DIR;

const std::vector<Character> kRoster = {{"c1", "Aiko Mori"}, {"c2", "Kenta"}};

// Two frames read as [f1, f2] although listed the other way round.
PageInputs two_frame_page(int page = 0) {
  PageInputs in;
  auto& s = in.scene;
  s.page = {"Demo", page, 0, 1};
  s.width = 1000;
  s.height = 500;
  s.frames = {{"f2", {0, 0, 480, 500}}, {"f1", {520, 0, 1000, 500}}};
  s.texts = {{"t_left", {100, 20, 160, 120}, "I'm home."}, {"t_right", {700, 20, 760, 120}, "Welcome \"back\"!"},
             {"t_out", {490, 10, 510, 30}, "BANG"}};
  s.chars = {{"k1", {600, 150, 800, 480}, "c1", "fa", Emotion::Happiness},
             {"k2", {50, 150, 250, 480}, "c2", std::nullopt, std::nullopt}};
  in.seq = assign_elements(s, order_frames(s));
  in.char_preds = {{"k1", "c1", 1.0, {}}, {"k2", std::string(kOthers), 1.0, {}}};
  in.intensities = std::vector<EmotionIntensity>{{"k1", 2.0, {}}, {"k2", -2.0, {}}};
  in.roster = kRoster;
  in.main_characters = {"c1"};
  return in;
}

MemoryState memory_at(int cursor) {
  MemoryState m;
  m.page_cursor = cursor;
  return m;
}

std::string reply_for(const std::vector<std::string>& ids, const std::string& speaker = "Aiko Mori") {
  json d = json::object();
  for (const auto& id : ids) d[id] = {{"speaker", speaker}, {"emotion", "happiness"}};
  return json{{"dialogues", d}, {"global_summary", "G"}, {"local_summary", "L"}}.dump();
}

}  // namespace

TEST(BuildPrompt, FrameBlocksFollowReadingOrder) {
  const auto in = two_frame_page();
  const auto p = build_prompt(in, memory_at(-1));
  ASSERT_EQ(p.frame_blocks.size(), 2u);
  EXPECT_EQ(p.frame_blocks[0].frame_id, "f1");
  EXPECT_EQ(p.frame_blocks[1].frame_id, "f2");
  const auto text = p.render();
  EXPECT_LT(text.find("text t_right"), text.find("text t_left"));
  EXPECT_LT(text.find("text t_left"), text.find("Outside any frame"));
}

TEST(BuildPrompt, EveryElementAppearsExactlyOnce) {
  const auto in = two_frame_page();
  const auto text = build_prompt(in, memory_at(-1)).render();
  for (const auto* needle : {"text t_left:", "text t_right:", "text t_out:", "character k1:", "character k2:"}) {
    const auto first = text.find(needle);
    ASSERT_NE(first, std::string::npos) << needle;
    EXPECT_EQ(text.find(needle, first + 1), std::string::npos) << needle;
  }
}

TEST(BuildPrompt, IntensityTagsAndUnknownPerson) {
  const auto text = build_prompt(two_frame_page(), memory_at(-1)).render();
  EXPECT_NE(text.find("character k1: Aiko Mori | expression STRONG (+2.0)"), std::string::npos);
  EXPECT_NE(text.find("character k2: unknown person | expression NEUTRAL (-2.0)"), std::string::npos);
  auto no_intensity = two_frame_page();
  no_intensity.intensities.reset();
  EXPECT_EQ(build_prompt(no_intensity, memory_at(-1)).render().find("expression"), std::string::npos);
}

TEST(BuildPrompt, EmptyPageStillRenders) {
  PageInputs in;
  in.scene.page = {"Demo", 0, 0, 1};
  const auto p = build_prompt(in, memory_at(-1));
  EXPECT_TRUE(p.frame_blocks.empty());
  EXPECT_NE(p.output_schema_instructions.find("empty dialogues object"), std::string::npos);
}

TEST(BuildPrompt, IsPureAndMatchesGolden) {
  MemoryState m = memory_at(-1);
  m.global_summary = "Aiko came back from school.";
  m.local_summary = "Kenta waited at the door.";
  const auto a = build_prompt(two_frame_page(), m).render();
  EXPECT_EQ(a, build_prompt(two_frame_page(), m).render());
  synth::expect_golden("prompt_two_frames.txt", a);
}

TEST(BuildPrompt, RejectsOverBudgetMemory) {
  MemoryState m = memory_at(-1);
  m.budget_local = 3;
  m.local_summary = "four";
  EXPECT_THROW(build_prompt(two_frame_page(), m), ContractError);
  m.local_summary = "えっ!";  // 3 code points, 7 bytes
  EXPECT_NO_THROW(build_prompt(two_frame_page(), m));
}

TEST(ParseResponse, WellFormedCoversAllIds) {
  const auto r = parse_response("Sure! " + reply_for({"a", "b"}) + " hope this helps {", {"a", "b"}, kRoster);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries.at("a").speaker, "c1");
  EXPECT_EQ(r.entries.at("b").emotion, Emotion::Happiness);
  EXPECT_EQ(r.flag_count(), 0u);
  EXPECT_EQ(r.new_global_summary, "G");
}

TEST(ParseResponse, MissingIdIsFilledAndFlagged) {
  const auto r = parse_response(reply_for({"a"}), {"a", "b"}, kRoster);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries.at("b").speaker, kUnknownSpeaker);
  EXPECT_EQ(r.entries.at("b").emotion, Emotion::Neutral);
  EXPECT_EQ(r.flag_count(), 1u);
  EXPECT_EQ(r.entries.at("b").flags, (std::vector<std::string>{"missing"}));
}

TEST(ParseResponse, NormalizesEmotionAndMatchesSpeakers) {
  const std::string raw = R"({"dialogues": {
      "a": {"speaker": "  aiko   MORI ", "emotion": "Angry"},
      "b": {"speaker": "c2", "emotion": "bewildered"},
      "c": {"speaker": "Stranger", "emotion": "sad"},
      "d": {"speaker": "unknown", "emotion": "neutral"}},
    "global_summary": "g", "local_summary": "l"})";
  const auto r = parse_response(raw, {"a", "b", "c", "d"}, kRoster);
  EXPECT_EQ(r.entries.at("a").speaker, "c1");
  EXPECT_EQ(r.entries.at("a").emotion, Emotion::Anger);
  EXPECT_EQ(r.entries.at("b").speaker, "c2");
  EXPECT_EQ(r.entries.at("b").emotion, Emotion::Neutral);
  EXPECT_EQ(r.entries.at("c").speaker, kUnknownSpeaker);
  EXPECT_EQ(r.entries.at("c").flags, (std::vector<std::string>{"unmatched_speaker"}));
  EXPECT_EQ(r.entries.at("d").speaker, kUnknownSpeaker);
  EXPECT_TRUE(r.entries.at("d").flags.empty());
  EXPECT_FALSE(r.warnings.empty());  // the unmapped emotion
}

TEST(ParseResponse, NoObjectIsParseFailure) {
  EXPECT_THROW(parse_response("I cannot help with that.", {"a"}, kRoster), ParseFailure);
  EXPECT_THROW(parse_response("{\"dialogues\": {", {"a"}, kRoster), ParseFailure);
}

TEST(AttributePage, SuccessAdvancesMemoryWithTruncation) {
  auto in = two_frame_page(3);
  MemoryState m = memory_at(2);
  m.budget_global = 4;
  ScriptedBackend backend([](const LlmRequest&) {
    return json{{"dialogues", json::object()}, {"global_summary", "えっと、そう"}, {"local_summary", "page 3"}}.dump();
  });
  const auto out = attribute_page(in, m, backend);
  EXPECT_EQ(out.status, AttributionStatus::Ok);
  EXPECT_EQ(out.memory.page_cursor, 3);
  EXPECT_EQ(out.memory.global_summary, "えっと、");
  EXPECT_EQ(out.memory.local_summary, "page 3");
  EXPECT_EQ(out.result.entries.size(), in.scene.n_text());
  EXPECT_EQ(out.result.flag_count(), 3u);  // all three ids missing
}

TEST(AttributePage, CursorMustMatchPage) {
  ScriptedBackend backend([](const LlmRequest&) { return std::string("{}"); });
  EXPECT_THROW(attribute_page(two_frame_page(3), memory_at(1), backend), ContractError);
  EXPECT_THROW(attribute_page(two_frame_page(3), memory_at(3), backend), ContractError);
}

TEST(AttributePage, GarbageRetriesThenFallsBackToFrameDistance) {
  const auto in = two_frame_page(0);
  MemoryState m = memory_at(-1);
  m.global_summary = "kept";
  m.local_summary = "also kept";
  ScriptedBackend backend([](const LlmRequest&) { return std::string("no json here"); });
  const auto out = attribute_page(in, m, backend, RetryPolicy{2});
  EXPECT_EQ(backend.calls(), 3);
  EXPECT_EQ(out.calls, 3);
  EXPECT_EQ(out.status, AttributionStatus::ParseFailureFallback);
  EXPECT_EQ(out.memory.page_cursor, 0);
  EXPECT_EQ(out.memory.global_summary, "kept");
  EXPECT_EQ(out.memory.local_summary, "also kept");
  const auto baseline = frame_distance(in.scene, in.seq, to_identity_map(in.char_preds));
  ASSERT_EQ(out.result.entries.size(), baseline.size());
  for (const auto& p : baseline) {
    const auto& e = out.result.entries.at(p.text_id);
    EXPECT_EQ(e.speaker, p.character_id == kOthers ? std::string(kUnknownSpeaker) : p.character_id);
    EXPECT_EQ(e.emotion, Emotion::Neutral);
    EXPECT_EQ(e.flags, (std::vector<std::string>{"fallback_parse_failure"}));
  }
}

TEST(AttributePage, BackendErrorsFallBackWithTag) {
  ScriptedBackend backend([](const LlmRequest&) -> std::string { throw BackendError("503"); });
  const auto out = attribute_page(two_frame_page(0), memory_at(-1), backend, RetryPolicy{1});
  EXPECT_EQ(out.calls, 2);
  EXPECT_EQ(out.status, AttributionStatus::BackendErrorFallback);
  EXPECT_EQ(to_string(out.status), "backend_error");
  EXPECT_EQ(out.result.entries.begin()->second.flags, (std::vector<std::string>{"fallback_backend_error"}));
}

TEST(AttributePage, RetrySucceedsOnSecondAttempt) {
  ScriptedBackend backend([](const LlmRequest& r) {
    return r.attempt == 0 ? std::string("oops") : reply_for({"t_left", "t_right", "t_out"});
  });
  const auto out = attribute_page(two_frame_page(0), memory_at(-1), backend);
  EXPECT_EQ(out.calls, 2);
  EXPECT_EQ(out.status, AttributionStatus::Ok);
}

TEST(Cassette, HitMissStrictAndLenient) {
  auto cassette = std::make_shared<Cassette>();
  cassette->put({Cassette::key_for("prompt A"), "T", 1, "recorded bytes"});
  CassetteBackend strict(cassette, true);
  EXPECT_EQ(strict.complete({"T", 1, "prompt A"}), "recorded bytes");
  EXPECT_THROW(strict.complete({"T", 1, "prompt B"}), CassetteMiss);
  EXPECT_THROW(strict.complete({"T", 2, "prompt A"}), CassetteMiss);
  ScriptedBackend fallback([](const LlmRequest&) { return std::string("scripted"); });
  CassetteBackend lenient(cassette, false, &fallback);
  EXPECT_EQ(lenient.complete({"T", 1, "prompt B"}), "scripted");
  EXPECT_EQ(lenient.complete({"T", 1, "prompt A"}), "recorded bytes");
}

TEST(Cassette, SaveLoadRoundTripIsSorted) {
  Cassette c;
  c.put({"k2", "B", 0, "x"});
  c.put({"k1", "A", 3, "y\nwith newline"});
  c.put({"k0", "A", 1, "z"});
  const auto path = std::filesystem::temp_directory_path() / "comicvox_cassette_test.jsonl";
  c.save(path);
  const auto loaded = Cassette::load(path);
  EXPECT_EQ(loaded.entries(), c.entries());
  EXPECT_EQ(loaded.entries().front().page, 1);
  EXPECT_EQ(loaded.find("A", 3, "k1"), "y\nwith newline");
  std::filesystem::remove(path);
}

TEST(Cassette, RecordThenReplayGivesIdenticalResults) {
  synth::TitleOptions o;
  o.pages = 4;
  o.seed = 31;
  const auto title = synth::make_title(o);
  auto run = [&](LlmBackend& backend) {
    std::vector<AttributionResult> results;
    MemoryState m;
    for (const auto& page : title.pages) {
      const auto layout = analyze_page(page);
      PageInputs in{layout.scene, layout.seq, {}, std::nullopt, title.roster, {}, ReadingDirection::RightToLeft,
                    DistanceMetric::Center};
      for (const auto& c : layout.scene.chars) in.char_preds.push_back({c.id, c.gt_character, 1.0, {}});
      auto out = attribute_page(in, m, backend);
      m = out.memory;
      results.push_back(out.result);
    }
    return results;
  };
  ScriptedBackend live(nearest_character_script());
  auto tape = std::make_shared<Cassette>();
  RecordingBackend recorder(live, tape);
  const auto recorded = run(recorder);
  EXPECT_EQ(tape->size(), title.pages.size());
  CassetteBackend replay(tape, true);
  EXPECT_EQ(run(replay), recorded);
}

TEST(ScriptedBackend, SpeakersEqualFrameDistanceOnFixtureTitle) {
  const auto title = parse_title(kFixtures / "annotations" / "KitchenRhapsody.xml", kFixtures / "speaker_links.jsonl",
                                 kFixtures / "emotion_labels.jsonl");
  ASSERT_EQ(title.pages.size(), 10u);
  ScriptedBackend backend(nearest_character_script());
  MemoryState m;
  CharacterRegistry registry{title.title_id, {title.roster[0].id, title.roster[1].id}};
  std::size_t compared = 0;
  for (const auto& page : title.pages) {
    const auto layout = analyze_page(page);
    PageInputs in{layout.scene, layout.seq, identify_characters(layout.scene, NoisyIdentity(registry, 0.3, 5)),
                  estimate_intensity(layout.scene, MiscalibratedIntensity(5)), title.roster,
                  registry.main_characters, ReadingDirection::RightToLeft, DistanceMetric::Center};
    const auto out = attribute_page(in, m, backend);
    ASSERT_EQ(out.status, AttributionStatus::Ok);
    m = out.memory;
    for (const auto& p : frame_distance(in.scene, in.seq, to_identity_map(in.char_preds))) {
      const auto expected = p.character_id == kOthers ? std::string(kUnknownSpeaker) : p.character_id;
      EXPECT_EQ(out.result.entries.at(p.text_id).speaker, expected) << page.page_index << " " << p.text_id;
      ++compared;
    }
  }
  EXPECT_GT(compared, 50u);
}

TEST(HttpChatBackend, SpeaksChatCompletionsSchema) {
  json seen;
  std::string auth;
  synth::LocalServer server("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "{\"ok\":1}"}}}}}}}.dump(),
                    "application/json");
  });
  ::setenv("COMICVOX_TEST_KEY", "sk-test", 1);
  HttpChatConfig cfg;
  cfg.endpoint = server.url("/v1/chat/completions");
  cfg.model = "test-model";
  cfg.api_key_env = "COMICVOX_TEST_KEY";
  cfg.timeout_s = 5;
  HttpChatBackend backend(cfg);
  EXPECT_EQ(backend.complete({"T", 0, "hello"}), "{\"ok\":1}");
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["messages"][0]["content"], "hello");
  EXPECT_EQ(auth, "Bearer sk-test");
}

TEST(HttpChatBackend, FailuresAreBackendErrors) {
  synth::LocalServer server("/chat", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  HttpChatConfig cfg;
  cfg.endpoint = server.url("/chat");
  cfg.timeout_s = 5;
  HttpChatBackend empty(cfg);
  EXPECT_THROW(empty.complete({"T", 0, "x"}), BackendError);
  cfg.endpoint = "http://127.0.0.1:1/chat";
  HttpChatBackend down(cfg);
  EXPECT_THROW(down.complete({"T", 0, "x"}), BackendError);
}
