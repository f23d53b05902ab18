#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <nlohmann/json.hpp>

#include "comicvox/pipeline.hpp"
#include "synth.hpp"

namespace synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<TitleOptions> fixture_titles() {
  TitleOptions kitchen;
  kitchen.title_id = "KitchenRhapsody";
  kitchen.pages = 10;
  kitchen.characters = 5;
  kitchen.seed = 11;
  kitchen.out_of_frame = 0.25;

  TitleOptions patrol;
  patrol.title_id = "NightPatrol";
  patrol.pages = 12;
  patrol.characters = 4;
  patrol.seed = 12;
  patrol.out_of_frame = 0.3;

  TitleOptions seaside;
  seaside.title_id = "SeasideDiary";
  seaside.pages = 6;
  seaside.characters = 3;
  seaside.seed = 13;
  seaside.out_of_frame = 0.15;
  seaside.four_koma = true;
  seaside.max_chars_per_frame = 1;
  return {kitchen, patrol, seaside};
}

namespace {

void write(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

void write_corpus(const std::string& dir_name, const std::vector<comicvox::TitleCorpus>& titles) {
  const fs::path dir(dir_name);
  fs::create_directories(dir / "annotations");
  std::string links, emotions;
  for (const auto& corpus : titles) {
    write(dir / "annotations" / (corpus.title_id + ".xml"), comicvox::write_title_xml(corpus));
    links += comicvox::write_speaker_links(corpus);
    emotions += comicvox::write_emotion_labels(corpus);
  }
  write(dir / "speaker_links.jsonl", links);
  write(dir / "emotion_labels.jsonl", emotions);
}

std::string scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("comicvox_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

void write_fixture_set(const std::string& dir_name) {
  const fs::path dir(dir_name);
  std::vector<comicvox::TitleCorpus> titles;
  json voices = json::object();
  voices["narrator"] = {{"voice", "narrator_ref"}, {"default_style", "calm"}};
  for (const auto& options : fixture_titles()) {
    const auto& corpus = titles.emplace_back(make_title(options));
    for (std::size_t i = 0; i < corpus.roster.size() && i < 2; ++i) {
      voices[corpus.roster[i].id] = {{"voice", options.title_id + "_ref" + std::to_string(i)},
                                     {"default_style", "plain"},
                                     {"styles", {{"anger", "intense"}, {"happiness", "bright"}, {"sadness", "soft"}}}};
    }
  }
  write_corpus(dir_name, titles);
  write(dir / "voices.json", voices.dump(2) + "\n");

  const json config = {
      {"corpus",
       {{"annotation_dir", "annotations"},
        {"speaker_links", "speaker_links.jsonl"},
        {"emotion_labels", "emotion_labels.jsonl"},
        {"test_titles", 0},
        {"pages_per_title", 10}}},
      {"setting", "C"},
      {"layout", {{"reading_direction", "rtl"}, {"split_mode", "two_page"},
                  {"split_mode_overrides", {{"SeasideDiary", "four_koma"}}}}},
      {"perception",
       {{"identity", {{"backend", "noisy"}, {"epsilon", 0.371}}},
        {"intensity", {{"backend", "miscalibrated"}}},
        {"registry", {{"min_appearances", 10}, {"n_ref", 8}}}}},
      {"llm", {{"backend", "cassette"}, {"cassette", "cassette.jsonl"}, {"strict", true}}},
      {"tts", {{"backend", "manifest_only"}, {"profiles", "voices.json"}, {"narrator", "narrator"}}},
      {"seed", 7},
      {"workers", 1},
      {"output_dir", "out"}};
  write(dir / "run_config.json", config.dump(2) + "\n");

  // Record the cassette by running the same config against the scripted model.
  auto recording = comicvox::config_from_json(config, fs::absolute(dir));
  recording.llm_backend = "record";
  recording.record_from = "scripted";
  const auto scratch = fs::temp_directory_path() / ("fixture_record_" + std::to_string(::getpid()));
  recording.output_dir = scratch.string();
  fs::remove(dir / "cassette.jsonl");
  comicvox::run_stage(recording, comicvox::Stage::Attribute);
  fs::remove_all(scratch);
}

}  // namespace synth
