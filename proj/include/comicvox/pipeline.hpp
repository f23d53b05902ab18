#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "comicvox/adapter.hpp"
#include "comicvox/evaluation.hpp"
#include "comicvox/layout.hpp"
#include "comicvox/llm.hpp"
#include "comicvox/perception.hpp"
#include "comicvox/tts.hpp"

namespace comicvox {

/// A: gold identities only. B: gold identities plus predicted intensity.
/// C: predicted identities plus predicted intensity.
enum class Setting { A, B, C };

Setting setting_from_string(std::string_view s);
std::string_view to_string(Setting s);

struct RunConfig {
  // corpus
  std::string annotation_dir;
  std::string speaker_links;
  std::string emotion_labels;
  std::vector<std::string> titles;  // empty: every *.xml in annotation_dir
  int test_titles = 20;             // 0: keep every loaded title
  int pages_per_title = 10;         // 0: every page
  std::string image_root;

  Setting setting = Setting::C;

  LayoutOptions layout;
  std::map<std::string, SplitMode> split_overrides;
  DistanceMetric distance = DistanceMetric::Center;
  EvalScope eval_scope = EvalScope::EmotionTagged;

  RegistryOptions registry;
  std::string identity_backend = "noisy";  // noisy | adapter (setting C)
  double identity_noise = 0.371;
  std::string intensity_backend = "miscalibrated";  // oracle | miscalibrated | adapter
  double logit_magnitude = kOracleLogit;
  std::string ocr_backend = "oracle";  // oracle | adapter
  AdapterConfig perception_adapter;

  std::string llm_backend = "cassette";  // cassette | scripted | live | record
  std::string cassette;
  bool cassette_strict = true;
  std::string record_from = "scripted";  // inner backend when recording
  HttpChatConfig live;
  RetryPolicy retry;
  std::size_t budget_global = kDefaultGlobalBudget;
  std::size_t budget_local = kDefaultLocalBudget;

  std::string tts_backend = "manifest_only";  // manifest_only | adapter
  std::string voice_profiles;
  std::string narrator = "narrator";
  int tts_max_concurrent = 1;
  AdapterConfig tts_adapter;

  std::uint64_t seed = 0;
  int workers = 1;
  std::string output_dir = "out";

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  [[nodiscard]] SplitMode split_mode_for(const std::string& title) const;
};

/// Relative paths in the file are resolved against the file's directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json to_json(const RunConfig& config);

struct LoadedCorpus {
  std::vector<TitleCorpus> all;       // every parsed title
  std::vector<std::string> selected;  // evaluated titles, in run order
  std::vector<std::string> warnings;

  [[nodiscard]] const TitleCorpus& title(const std::string& id) const;
};

LoadedCorpus load_corpus(const RunConfig& config);

/// Everything produced for one title.
struct TitleRun {
  std::string title;
  std::map<int, PageLayout> layouts;
  std::vector<LinkedSample> gold;
  DifficultyMap difficulties;
  std::map<std::string, std::vector<Prediction>> predictions;  // by method
  std::vector<nlohmann::json> perception_log;
  std::vector<nlohmann::json> memory_log;
  std::vector<nlohmann::json> prompt_log;
  std::vector<TTSJob> jobs;
  std::vector<std::string> warnings;
  std::optional<std::string> error;  // set when the title aborted
};

enum class Stage { Ingest, Layout, Baselines, Attribute, Evaluate, TtsPlan, Run };

struct RunResult {
  int exit_code = 0;
  std::vector<TitleRun> titles;
  std::map<std::string, EvalReport> reports;  // by method
  std::vector<std::string> aborted;
};

/// Runs the pipeline up to `stage` and persists every stage output under
/// config.output_dir, together with a config snapshot. Titles run in
/// parallel (config.workers); pages within a title run in order. The exit
/// code is nonzero iff some title aborted.
RunResult run_stage(const RunConfig& config, Stage stage);

inline RunResult run_pipeline(const RunConfig& config) { return run_stage(config, Stage::Run); }
inline RunResult run_baselines(const RunConfig& config) {
  return run_stage(config, Stage::Baselines);
}

/// Scores an existing predictions file against the configured corpus.
EvalReport evaluate_file(const RunConfig& config, const std::filesystem::path& predictions);

/// Plans TTS jobs for an existing predictions file and dispatches them.
DispatchSummary plan_file(const RunConfig& config, const std::filesystem::path& predictions);

}  // namespace comicvox
