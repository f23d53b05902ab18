#include "comicvox/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "comicvox/annotation.hpp"
#include "comicvox/baselines.hpp"
#include "comicvox/dump.hpp"
#include "comicvox/error.hpp"
#include "comicvox/util.hpp"

namespace comicvox {

namespace fs = std::filesystem;
using json = nlohmann::json;

Setting setting_from_string(std::string_view s) {
  if (s == "A" || s == "a") return Setting::A;
  if (s == "B" || s == "b") return Setting::B;
  if (s == "C" || s == "c") return Setting::C;
  throw ConfigError("unknown setting '" + std::string(s) + "' (expected A, B or C)");
}

std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::A: return "A";
    case Setting::B: return "B";
    case Setting::C: return "C";
  }
  return "?";
}

namespace {

std::string_view to_string(DistanceMetric m) { return m == DistanceMetric::Center ? "center" : "edge"; }

DistanceMetric distance_from_string(std::string_view s) {
  if (s == "center") return DistanceMetric::Center;
  if (s == "edge") return DistanceMetric::Edge;
  throw ConfigError("unknown distance metric '" + std::string(s) + "'");
}

std::string_view to_string(EvalScope s) {
  return s == EvalScope::EmotionTagged ? "emotion_tagged" : "all_linked";
}

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key '" + std::string(where) + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

AdapterConfig adapter_from_json(const json& j, const fs::path& base, std::string_view where) {
  check_keys(j, where, {"kind", "command", "url", "timeout_ms", "concurrent"});
  AdapterConfig a;
  read(j, "kind", a.kind);
  read(j, "command", a.command);
  read(j, "url", a.url);
  read(j, "timeout_ms", a.timeout_ms);
  read(j, "concurrent", a.concurrent);
  // A relative executable path is taken relative to the config file.
  if (!a.command.empty() && a.command[0].find('/') != std::string::npos) {
    a.command[0] = resolve(a.command[0], base);
  }
  return a;
}

json to_json(const AdapterConfig& a) {
  return {{"kind", a.kind}, {"command", a.command}, {"url", a.url},
          {"timeout_ms", a.timeout_ms}, {"concurrent", a.concurrent}};
}

}  // namespace

SplitMode RunConfig::split_mode_for(const std::string& title) const {
  auto it = split_overrides.find(title);
  return it == split_overrides.end() ? layout.split_mode : it->second;
}

void RunConfig::validate() const {
  if (annotation_dir.empty()) throw ConfigError("corpus.annotation_dir is required");
  if (test_titles < 0) throw ConfigError("corpus.test_titles must be >= 0");
  if (pages_per_title < 0) throw ConfigError("corpus.pages_per_title must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (layout.merge_iou <= 0.0 || layout.merge_iou > 1.0) throw ConfigError("layout.merge_iou must lie in (0, 1]");

  static const std::set<std::string> identity{"oracle", "noisy", "adapter"};
  static const std::set<std::string> intensity{"oracle", "miscalibrated", "adapter"};
  static const std::set<std::string> ocr{"oracle", "adapter"};
  static const std::set<std::string> llm{"cassette", "scripted", "live", "record"};
  static const std::set<std::string> tts{"manifest_only", "adapter"};
  if (!identity.count(identity_backend)) throw ConfigError("unknown identity backend '" + identity_backend + "'");
  if (!intensity.count(intensity_backend)) throw ConfigError("unknown intensity backend '" + intensity_backend + "'");
  if (!ocr.count(ocr_backend)) throw ConfigError("unknown ocr backend '" + ocr_backend + "'");
  if (!llm.count(llm_backend)) throw ConfigError("unknown llm backend '" + llm_backend + "'");
  if (!tts.count(tts_backend)) throw ConfigError("unknown tts backend '" + tts_backend + "'");
  if (identity_noise < 0.0 || identity_noise > 1.0) throw ConfigError("identity epsilon must lie in [0, 1]");

  if (setting == Setting::C) {
    if (identity_backend == "oracle") {
      throw ConfigError("setting C needs predicted identities; use the noisy or adapter backend");
    }
    if (identity_backend == "noisy" && identity_noise <= 0.0) {
      throw ConfigError("setting C with the noisy identity backend needs epsilon > 0");
    }
  }
  if ((llm_backend == "cassette" || llm_backend == "record") && cassette.empty()) {
    throw ConfigError("llm.cassette is required for the " + llm_backend + " backend");
  }
  if (llm_backend == "record" && record_from != "scripted" && record_from != "live") {
    throw ConfigError("llm.record_from must be scripted or live");
  }
  if (retry.max_retries < 0) throw ConfigError("llm.max_retries must be >= 0");
  if (budget_global == 0 || budget_local == 0) throw ConfigError("memory budgets must be positive");
  const bool uses_adapter = (setting == Setting::C && identity_backend == "adapter") ||
                            (setting != Setting::A && intensity_backend == "adapter") ||
                            ocr_backend == "adapter";
  if (uses_adapter && perception_adapter.command.empty() && perception_adapter.url.empty()) {
    throw ConfigError("perception.adapter needs a command or url");
  }
  if (tts_backend == "adapter" && tts_adapter.command.empty() && tts_adapter.url.empty()) {
    throw ConfigError("tts.adapter needs a command or url");
  }
  if (tts_max_concurrent < 1) throw ConfigError("tts.max_concurrent must be >= 1");
}

RunConfig config_from_json(const json& j, const fs::path& base) {
  check_keys(j, "config", {"corpus", "setting", "layout", "baseline", "perception", "llm", "tts",
                           "seed", "workers", "output_dir", "eval_scope"});
  RunConfig c;
  if (auto it = j.find("corpus"); it != j.end()) {
    const auto& k = *it;
    check_keys(k, "corpus", {"annotation_dir", "speaker_links", "emotion_labels", "titles",
                             "test_titles", "pages_per_title", "image_root"});
    read(k, "annotation_dir", c.annotation_dir);
    read(k, "speaker_links", c.speaker_links);
    read(k, "emotion_labels", c.emotion_labels);
    read(k, "titles", c.titles);
    read(k, "test_titles", c.test_titles);
    read(k, "pages_per_title", c.pages_per_title);
    read(k, "image_root", c.image_root);
  }
  if (auto it = j.find("setting"); it != j.end()) {
    c.setting = setting_from_string(it->get<std::string>());
  }
  if (auto it = j.find("layout"); it != j.end()) {
    const auto& k = *it;
    check_keys(k, "layout", {"reading_direction", "split_mode", "split_mode_overrides", "merge_iou"});
    if (k.contains("reading_direction")) {
      c.layout.direction = reading_direction_from_string(k["reading_direction"].get<std::string>());
    }
    if (k.contains("split_mode")) c.layout.split_mode = split_mode_from_string(k["split_mode"].get<std::string>());
    read(k, "merge_iou", c.layout.merge_iou);
    if (auto o = k.find("split_mode_overrides"); o != k.end()) {
      for (const auto& [title, mode] : o->items()) {
        c.split_overrides[title] = split_mode_from_string(mode.get<std::string>());
      }
    }
  }
  if (auto it = j.find("baseline"); it != j.end()) {
    check_keys(*it, "baseline", {"distance"});
    if (it->contains("distance")) c.distance = distance_from_string((*it)["distance"].get<std::string>());
  }
  if (auto it = j.find("perception"); it != j.end()) {
    const auto& k = *it;
    check_keys(k, "perception", {"identity", "intensity", "ocr", "registry", "adapter"});
    if (auto i = k.find("identity"); i != k.end()) {
      check_keys(*i, "perception.identity", {"backend", "epsilon"});
      read(*i, "backend", c.identity_backend);
      read(*i, "epsilon", c.identity_noise);
    }
    if (auto i = k.find("intensity"); i != k.end()) {
      check_keys(*i, "perception.intensity", {"backend", "magnitude"});
      read(*i, "backend", c.intensity_backend);
      read(*i, "magnitude", c.logit_magnitude);
    }
    if (auto i = k.find("ocr"); i != k.end()) {
      check_keys(*i, "perception.ocr", {"backend"});
      read(*i, "backend", c.ocr_backend);
    }
    if (auto i = k.find("registry"); i != k.end()) {
      check_keys(*i, "perception.registry", {"min_appearances", "n_ref"});
      read(*i, "min_appearances", c.registry.min_appearances);
      read(*i, "n_ref", c.registry.n_ref);
    }
    if (auto i = k.find("adapter"); i != k.end()) {
      c.perception_adapter = adapter_from_json(*i, base, "perception.adapter");
    }
  }
  if (auto it = j.find("llm"); it != j.end()) {
    const auto& k = *it;
    check_keys(k, "llm", {"backend", "cassette", "strict", "record_from", "max_retries",
                          "budget_global", "budget_local", "live"});
    read(k, "backend", c.llm_backend);
    read(k, "cassette", c.cassette);
    read(k, "strict", c.cassette_strict);
    read(k, "record_from", c.record_from);
    read(k, "max_retries", c.retry.max_retries);
    read(k, "budget_global", c.budget_global);
    read(k, "budget_local", c.budget_local);
    if (auto l = k.find("live"); l != k.end()) {
      check_keys(*l, "llm.live", {"endpoint", "model", "api_key_env", "timeout_s", "max_concurrent",
                                  "min_interval_ms", "temperature"});
      read(*l, "endpoint", c.live.endpoint);
      read(*l, "model", c.live.model);
      read(*l, "api_key_env", c.live.api_key_env);
      read(*l, "timeout_s", c.live.timeout_s);
      read(*l, "max_concurrent", c.live.max_concurrent);
      read(*l, "min_interval_ms", c.live.min_interval_ms);
      read(*l, "temperature", c.live.temperature);
    }
  }
  if (auto it = j.find("tts"); it != j.end()) {
    const auto& k = *it;
    check_keys(k, "tts", {"backend", "profiles", "narrator", "max_concurrent", "adapter"});
    read(k, "backend", c.tts_backend);
    read(k, "profiles", c.voice_profiles);
    read(k, "narrator", c.narrator);
    read(k, "max_concurrent", c.tts_max_concurrent);
    if (auto a = k.find("adapter"); a != k.end()) c.tts_adapter = adapter_from_json(*a, base, "tts.adapter");
  }
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);
  read(j, "output_dir", c.output_dir);
  if (auto it = j.find("eval_scope"); it != j.end()) {
    c.eval_scope = eval_scope_from_string(it->get<std::string>());
  }

  c.annotation_dir = resolve(c.annotation_dir, base);
  c.speaker_links = resolve(c.speaker_links, base);
  c.emotion_labels = resolve(c.emotion_labels, base);
  c.image_root = resolve(c.image_root, base);
  c.cassette = resolve(c.cassette, base);
  c.voice_profiles = resolve(c.voice_profiles, base);
  c.output_dir = resolve(c.output_dir, base);
  c.perception_adapter.image_root = c.image_root;
  c.tts_adapter.image_root = c.image_root;
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json overrides = json::object();
  for (const auto& [title, mode] : c.split_overrides) overrides[title] = std::string(to_string(mode));
  return {
      {"corpus",
       {{"annotation_dir", c.annotation_dir},
        {"speaker_links", c.speaker_links},
        {"emotion_labels", c.emotion_labels},
        {"titles", c.titles},
        {"test_titles", c.test_titles},
        {"pages_per_title", c.pages_per_title},
        {"image_root", c.image_root}}},
      {"setting", std::string(to_string(c.setting))},
      {"layout",
       {{"reading_direction", std::string(to_string(c.layout.direction))},
        {"split_mode", std::string(to_string(c.layout.split_mode))},
        {"split_mode_overrides", overrides},
        {"merge_iou", c.layout.merge_iou}}},
      {"baseline", {{"distance", std::string(to_string(c.distance))}}},
      {"perception",
       {{"identity", {{"backend", c.identity_backend}, {"epsilon", c.identity_noise}}},
        {"intensity", {{"backend", c.intensity_backend}, {"magnitude", c.logit_magnitude}}},
        {"ocr", {{"backend", c.ocr_backend}}},
        {"registry", {{"min_appearances", c.registry.min_appearances}, {"n_ref", c.registry.n_ref}}},
        {"adapter", to_json(c.perception_adapter)}}},
      {"llm",
       {{"backend", c.llm_backend},
        {"cassette", c.cassette},
        {"strict", c.cassette_strict},
        {"record_from", c.record_from},
        {"max_retries", c.retry.max_retries},
        {"budget_global", c.budget_global},
        {"budget_local", c.budget_local},
        {"live",
         {{"endpoint", c.live.endpoint},
          {"model", c.live.model},
          {"api_key_env", c.live.api_key_env},
          {"timeout_s", c.live.timeout_s},
          {"max_concurrent", c.live.max_concurrent},
          {"min_interval_ms", c.live.min_interval_ms},
          {"temperature", c.live.temperature}}}}},
      {"tts",
       {{"backend", c.tts_backend},
        {"profiles", c.voice_profiles},
        {"narrator", c.narrator},
        {"max_concurrent", c.tts_max_concurrent},
        {"adapter", to_json(c.tts_adapter)}}},
      {"seed", c.seed},
      {"workers", c.workers},
      {"output_dir", c.output_dir},
      {"eval_scope", std::string(to_string(c.eval_scope))},
  };
}

const TitleCorpus& LoadedCorpus::title(const std::string& id) const {
  for (const auto& t : all) {
    if (t.title_id == id) return t;
  }
  throw ArgumentError("title not loaded: " + id);
}

LoadedCorpus load_corpus(const RunConfig& config) {
  const fs::path dir(config.annotation_dir);
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + config.annotation_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no annotation files in " + config.annotation_dir);

  std::optional<fs::path> speakers, emotions;
  if (!config.speaker_links.empty()) speakers = config.speaker_links;
  if (!config.emotion_labels.empty()) emotions = config.emotion_labels;

  LoadedCorpus out;
  for (const auto& f : files) {
    auto corpus = parse_title(f, speakers, emotions);
    for (const auto& w : corpus.warnings) out.warnings.push_back(corpus.title_id + ": " + w);
    out.all.push_back(std::move(corpus));
  }
  std::sort(out.all.begin(), out.all.end(),
            [](const TitleCorpus& a, const TitleCorpus& b) { return a.title_id < b.title_id; });

  std::vector<TitleCorpus> candidates;
  if (config.titles.empty()) {
    candidates = out.all;
  } else {
    for (const auto& id : config.titles) candidates.push_back(out.title(id));
  }
  std::size_t n = candidates.size();
  if (config.test_titles > 0) {
    if (static_cast<std::size_t>(config.test_titles) > n) {
      out.warnings.push_back("only " + std::to_string(n) + " titles available, wanted " +
                             std::to_string(config.test_titles));
    } else {
      n = static_cast<std::size_t>(config.test_titles);
    }
  }
  out.selected = select_test_titles(candidates, n);
  return out;
}

namespace {

struct Backends {
  LlmBackend* llm = nullptr;
  Transport* perception = nullptr;
};

std::string method_name(Setting s) { return "llm_setting_" + std::string(to_string(s)); }

std::vector<const PageAnnotation*> evaluated_pages(const TitleCorpus& corpus, int limit) {
  std::vector<const PageAnnotation*> pages;
  for (const auto& p : corpus.pages) pages.push_back(&p);
  std::sort(pages.begin(), pages.end(),
            [](const PageAnnotation* a, const PageAnnotation* b) { return a->page_index < b->page_index; });
  if (limit > 0 && pages.size() > static_cast<std::size_t>(limit)) pages.resize(static_cast<std::size_t>(limit));
  return pages;
}

std::vector<CropRef> negative_pool(const LoadedCorpus& loaded, const std::string& title) {
  std::vector<CropRef> pool;
  for (const auto& t : loaded.all) {
    if (t.title_id == title) continue;
    auto crops = crop_pool(t);
    pool.insert(pool.end(), crops.begin(), crops.end());
  }
  return pool;
}

Prediction speaker_prediction(const SceneGraph& scene, const SpeakerPrediction& p) {
  Prediction out;
  out.title = scene.page.title_id;
  out.page = scene.page.page_index;
  out.text_id = p.text_id;
  out.pred_speaker = p.abstained() ? std::string(kUnknownSpeaker) : p.character_id;
  out.method = p.method;
  return out;
}

json perception_line(const SceneGraph& scene, const std::vector<CharPrediction>& ids,
                     const std::optional<std::vector<EmotionIntensity>>& intensities,
                     const std::vector<std::string>& warnings) {
  json identities = json::array();
  for (const auto& p : ids) {
    json e = {{"id", p.char_instance_id}, {"predicted", p.predicted}, {"confidence", p.confidence}};
    if (p.error) e["error"] = *p.error;
    identities.push_back(std::move(e));
  }
  json scores = nullptr;
  if (intensities) {
    scores = json::array();
    for (const auto& s : *intensities) {
      json e = {{"id", s.char_instance_id}, {"logit", s.logit}, {"binary", s.binary()}};
      if (s.error) e["error"] = *s.error;
      scores.push_back(std::move(e));
    }
  }
  return {{"schema", "perception_v1"},  {"title", scene.page.title_id}, {"page", scene.page.page_index},
          {"identities", identities},   {"intensities", scores},       {"warnings", warnings}};
}

json memory_line(const std::string& title, int page, const PageAttribution& a) {
  return {{"schema", "memory_v1"},
          {"title", title},
          {"page", page},
          {"status", std::string(to_string(a.status))},
          {"calls", a.calls},
          {"page_cursor", a.memory.page_cursor},
          {"global_summary", a.memory.global_summary},
          {"local_summary", a.memory.local_summary},
          {"warnings", a.result.warnings}};
}

void attribute_title(const RunConfig& config, const LoadedCorpus& loaded, const TitleCorpus& corpus,
                     const std::vector<const PageAnnotation*>& pages, const Backends& backends,
                     bool plan_tts, const VoiceProfiles* profiles, TitleRun& run) {
  RegistryOptions ropts = config.registry;
  ropts.seed = derive_seed(config.seed, {"registry"});
  const auto pool = negative_pool(loaded, corpus.title_id);
  auto registry = build_registry(corpus, pool, ropts);
  for (const auto& w : registry.warnings) run.warnings.push_back(w);
  if (registry.status == RegistryStatus::NoMainCharacters) {
    run.warnings.push_back("no main characters; every instance is OTHERS");
  }

  std::unique_ptr<IdentityBackend> identity;
  if (config.setting != Setting::C || config.identity_backend == "oracle") {
    identity = std::make_unique<OracleIdentity>(registry.registry);
  } else if (config.identity_backend == "noisy") {
    identity = std::make_unique<NoisyIdentity>(registry.registry, config.identity_noise,
                                               derive_seed(config.seed, {"identity"}));
  } else {
    identity = std::make_unique<AdapterIdentity>(*backends.perception, registry.registry, config.image_root);
  }
  std::unique_ptr<IntensityBackend> intensity;
  if (config.setting != Setting::A) {
    if (config.intensity_backend == "oracle") {
      intensity = std::make_unique<OracleIntensity>(config.logit_magnitude);
    } else if (config.intensity_backend == "miscalibrated") {
      intensity = std::make_unique<MiscalibratedIntensity>(derive_seed(config.seed, {"intensity"}),
                                                           config.logit_magnitude);
    } else {
      intensity = std::make_unique<AdapterIntensity>(*backends.perception, config.image_root);
    }
  }
  std::unique_ptr<OcrBackend> ocr;
  if (config.ocr_backend == "adapter") {
    ocr = std::make_unique<AdapterOcr>(*backends.perception, config.image_root);
  } else {
    ocr = std::make_unique<OracleOcr>();
  }

  const std::string method = method_name(config.setting);
  auto& preds = run.predictions[method];
  std::vector<AttributedPage> attributed;
  MemoryState memory;
  memory.budget_global = config.budget_global;
  memory.budget_local = config.budget_local;
  if (!pages.empty()) memory.page_cursor = pages.front()->page_index - 1;

  for (const auto* page : pages) {
    const auto& layout = run.layouts.at(page->page_index);
    if (memory.page_cursor != page->page_index - 1) {
      run.warnings.push_back("page index gap before page " + std::to_string(page->page_index));
      memory.page_cursor = page->page_index - 1;
    }
    auto read = ocr_text(layout.scene, *ocr);
    PageInputs inputs;
    inputs.scene = std::move(read.scene);
    inputs.seq = layout.seq;
    inputs.char_preds = identify_characters(inputs.scene, *identity);
    if (intensity) inputs.intensities = estimate_intensity(inputs.scene, *intensity);
    inputs.roster = corpus.roster;
    inputs.main_characters = registry.registry.main_characters;
    inputs.direction = config.layout.direction;
    inputs.fallback_metric = config.distance;
    run.perception_log.push_back(perception_line(inputs.scene, inputs.char_preds, inputs.intensities, read.warnings));

    auto step = attribute_page(inputs, memory, *backends.llm, config.retry);
    memory = step.memory;
    run.memory_log.push_back(memory_line(corpus.title_id, page->page_index, step));
    run.prompt_log.push_back({{"schema", "prompt_v1"},
                              {"title", corpus.title_id},
                              {"page", page->page_index},
                              {"prompt", step.prompt}});
    for (const auto& w : step.result.warnings) run.warnings.push_back(w);

    AttributedPage out{inputs.scene, inputs.seq, {}};
    for (const auto& t : inputs.scene.texts) {
      const auto& entry = step.result.entries.at(t.id);
      Prediction p;
      p.title = corpus.title_id;
      p.page = page->page_index;
      p.text_id = t.id;
      p.pred_speaker = entry.speaker;
      p.pred_emotion = entry.emotion;
      p.method = method;
      p.flags = entry.flags;
      preds.push_back(p);
      out.predictions.push_back(std::move(p));
    }
    attributed.push_back(std::move(out));
  }
  if (plan_tts) run.jobs = plan_jobs(attributed, *profiles, config.narrator, config.layout.direction);
}

TitleRun process_title(const RunConfig& config, const LoadedCorpus& loaded, const std::string& title,
                       Stage stage, const Backends& backends, const VoiceProfiles* profiles) {
  TitleRun run;
  run.title = title;
  const auto& corpus = loaded.title(title);
  const auto pages = evaluated_pages(corpus, config.pages_per_title);
  std::set<int> page_set;
  for (const auto* p : pages) page_set.insert(p->page_index);

  for (const auto& s : build_linked_set(corpus)) {
    if (page_set.count(s.page_index)) run.gold.push_back(s);
  }
  if (stage == Stage::Ingest) return run;

  LayoutOptions options = config.layout;
  options.split_mode = config.split_mode_for(title);
  for (const auto* p : pages) run.layouts.emplace(p->page_index, analyze_page(*p, options));

  for (const auto& s : run.gold) {
    const auto& layout = run.layouts.at(s.page_index);
    try {
      run.difficulties[{title, s.text_element_id}] =
          classify_case(s.text_element_id, s.gt_speaker, layout.scene, layout.seq);
    } catch (const ArgumentError& e) {
      run.warnings.push_back(std::string("difficulty: ") + e.what());
    }
  }
  if (stage == Stage::Layout || stage == Stage::Evaluate || stage == Stage::TtsPlan) return run;

  if (stage == Stage::Baselines || stage == Stage::Run) {
    auto& short_preds = run.predictions[std::string(kMethodRuleShort)];
    auto& frame_preds = run.predictions[std::string(kMethodRuleFrame)];
    for (const auto* p : pages) {
      const auto& layout = run.layouts.at(p->page_index);
      const auto ids = gold_identities(layout.scene);
      for (const auto& sp : short_distance(layout.scene, ids, config.distance)) {
        short_preds.push_back(speaker_prediction(layout.scene, sp));
      }
      for (const auto& sp : frame_distance(layout.scene, layout.seq, ids, config.distance)) {
        frame_preds.push_back(speaker_prediction(layout.scene, sp));
      }
    }
  }
  if (stage == Stage::Attribute || stage == Stage::Run) {
    attribute_title(config, loaded, corpus, pages, backends, stage == Stage::Run, profiles, run);
  }
  return run;
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::string text;
  for (const auto& l : lines) text += l.dump() + "\n";
  write_file(path, text);
}

void write_reports(const fs::path& dir, const std::string& method, const EvalReport& report) {
  const auto stem = "report_" + method;
  write_file(dir / (stem + ".json"), render_report(report, ReportFormat::Json));
  write_file(dir / (stem + ".txt"), render_report(report, ReportFormat::TextTable));
  if (report.emotion.available) {
    write_file(dir / (stem + ".csv"), render_report(report, ReportFormat::Csv));
    write_file(dir / (stem + ".png"), render_report(report, ReportFormat::ConfusionPng));
  }
}

VoiceProfiles default_profiles(const LoadedCorpus& loaded, const RunConfig& config) {
  VoiceProfiles profiles;
  auto add = [&](const std::string& id) {
    VoiceProfile p;
    p.character_id = id;
    p.reference_voice_id = "voice:" + id;
    for (auto e : kAllEmotions) p.styles[e] = std::string(to_string(e));
    profiles[id] = std::move(p);
  };
  add(config.narrator);
  for (const auto& id : loaded.selected) {
    for (const auto& c : loaded.title(id).roster) add(c.id);
  }
  return profiles;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::vector<Prediction> preds;
  for (const auto& j : read_jsonl(path.string())) preds.push_back(prediction_from_json(j));
  return preds;
}

std::vector<TitleRun> run_titles(const RunConfig& config, const LoadedCorpus& loaded, Stage stage,
                                 const Backends& backends, const VoiceProfiles* profiles) {
  std::vector<TitleRun> runs(loaded.selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      const auto& title = loaded.selected[i];
      try {
        runs[i] = process_title(config, loaded, title, stage, backends, profiles);
      } catch (const std::exception& e) {
        runs[i] = TitleRun{};
        runs[i].title = title;
        runs[i].error = e.what();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(runs.size(), 1));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  return runs;
}

}  // namespace

RunResult run_stage(const RunConfig& config, Stage stage) {
  if (stage == Stage::Evaluate || stage == Stage::TtsPlan) {
    throw ArgumentError("evaluate and tts-plan read a predictions file; use evaluate_file / plan_file");
  }
  config.validate();
  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir);
  write_file(out_dir / "config.snapshot.json", to_json(config).dump(2) + "\n");

  const auto loaded = load_corpus(config);
  const bool attributing = stage == Stage::Attribute || stage == Stage::Run;

  std::unique_ptr<Transport> perception;
  std::unique_ptr<LlmBackend> inner, llm;
  std::shared_ptr<Cassette> recording;
  Backends backends;
  if (attributing) {
    const bool needs_adapter = (config.setting == Setting::C && config.identity_backend == "adapter") ||
                               (config.setting != Setting::A && config.intensity_backend == "adapter") ||
                               config.ocr_backend == "adapter";
    if (needs_adapter) {
      AdapterConfig a = config.perception_adapter;
      a.image_root = config.image_root;
      perception = make_transport(a);
      backends.perception = perception.get();
    }
    if (config.llm_backend == "scripted") {
      llm = std::make_unique<ScriptedBackend>(nearest_character_script());
    } else if (config.llm_backend == "live") {
      llm = std::make_unique<HttpChatBackend>(config.live);
    } else if (config.llm_backend == "cassette") {
      auto cassette = std::make_shared<const Cassette>(Cassette::load(config.cassette));
      if (!config.cassette_strict) inner = std::make_unique<ScriptedBackend>(nearest_character_script());
      llm = std::make_unique<CassetteBackend>(cassette, config.cassette_strict, inner.get());
    } else {
      recording = std::make_shared<Cassette>();
      if (fs::exists(config.cassette)) {
        for (auto e : Cassette::load(config.cassette).entries()) recording->put(std::move(e));
      }
      if (config.record_from == "live") {
        inner = std::make_unique<HttpChatBackend>(config.live);
      } else {
        inner = std::make_unique<ScriptedBackend>(nearest_character_script());
      }
      llm = std::make_unique<RecordingBackend>(*inner, recording);
    }
    backends.llm = llm.get();
  }

  VoiceProfiles profiles;
  if (stage == Stage::Run) {
    profiles = config.voice_profiles.empty() ? default_profiles(loaded, config)
                                             : load_voice_profiles(config.voice_profiles);
  }

  RunResult result;
  result.titles = run_titles(config, loaded, stage, backends, &profiles);
  if (recording) recording->save(config.cassette);

  std::vector<json> warnings;
  for (const auto& w : loaded.warnings) warnings.push_back({{"schema", "warning_v1"}, {"title", nullptr}, {"message", w}});
  std::vector<std::string> corpus_lines;
  std::vector<json> linked, perception_log, memory_log, prompt_log;
  std::map<std::string, std::vector<Prediction>> preds;
  std::vector<LinkedSample> gold;
  DifficultyMap difficulties;
  std::vector<TTSJob> jobs;
  for (const auto& run : result.titles) {
    if (run.error) {
      result.aborted.push_back(run.title);
      warnings.push_back({{"schema", "warning_v1"}, {"title", run.title}, {"message", "aborted: " + *run.error}});
      continue;
    }
    for (const auto& w : run.warnings) warnings.push_back({{"schema", "warning_v1"}, {"title", run.title}, {"message", w}});
    corpus_lines.push_back(dump_corpus(loaded.title(run.title), run.layouts.empty() ? nullptr : &run.layouts));
    for (const auto& s : run.gold) {
      auto j = to_json(s);
      j["schema"] = "linked_v1";
      if (auto d = run.difficulties.find({run.title, s.text_element_id}); d != run.difficulties.end()) {
        j["difficulty"] = std::string(to_string(d->second));
      }
      linked.push_back(std::move(j));
    }
    perception_log.insert(perception_log.end(), run.perception_log.begin(), run.perception_log.end());
    memory_log.insert(memory_log.end(), run.memory_log.begin(), run.memory_log.end());
    prompt_log.insert(prompt_log.end(), run.prompt_log.begin(), run.prompt_log.end());
    for (const auto& [method, list] : run.predictions) {
      auto& dst = preds[method];
      dst.insert(dst.end(), list.begin(), list.end());
    }
    gold.insert(gold.end(), run.gold.begin(), run.gold.end());
    difficulties.insert(run.difficulties.begin(), run.difficulties.end());
    jobs.insert(jobs.end(), run.jobs.begin(), run.jobs.end());
  }

  std::string corpus_text;
  for (const auto& c : corpus_lines) corpus_text += c;
  write_file(out_dir / "corpus.jsonl", corpus_text);
  write_jsonl(out_dir / "linked.jsonl", linked);
  write_jsonl(out_dir / "warnings.jsonl", warnings);
  if (attributing) {
    write_jsonl(out_dir / "perception.jsonl", perception_log);
    write_jsonl(out_dir / "memory.jsonl", memory_log);
    write_jsonl(out_dir / "prompts.jsonl", prompt_log);
  }
  for (const auto& [method, list] : preds) {
    std::vector<json> lines;
    for (const auto& p : list) lines.push_back(to_json(p));
    write_jsonl(out_dir / ("predictions_" + method + ".jsonl"), lines);
  }
  if (stage == Stage::Baselines || stage == Stage::Run) {
    for (const auto& [method, list] : preds) {
      auto report = evaluate(list, gold, difficulties, method, config.eval_scope);
      write_reports(out_dir, method, report);
      result.reports.emplace(method, std::move(report));
    }
  }
  if (stage == Stage::Run) {
    std::unique_ptr<Transport> tts;
    if (config.tts_backend == "adapter") {
      AdapterConfig a = config.tts_adapter;
      a.image_root = config.image_root;
      tts = make_transport(a);
    }
    dispatch(jobs, out_dir / "manifest.jsonl", tts.get(), config.tts_max_concurrent);
  }
  result.exit_code = result.aborted.empty() ? 0 : 1;
  return result;
}

EvalReport evaluate_file(const RunConfig& config, const fs::path& predictions) {
  config.validate();
  const auto preds = read_predictions(predictions);
  const auto loaded = load_corpus(config);
  const auto runs = run_titles(config, loaded, Stage::Evaluate, {}, nullptr);
  std::vector<LinkedSample> gold;
  DifficultyMap difficulties;
  for (const auto& run : runs) {
    if (run.error) throw Error("title " + run.title + " failed: " + *run.error);
    gold.insert(gold.end(), run.gold.begin(), run.gold.end());
    difficulties.insert(run.difficulties.begin(), run.difficulties.end());
  }
  const std::string method = preds.empty() ? "unknown" : preds.front().method;
  auto report = evaluate(preds, gold, difficulties, method, config.eval_scope);
  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir);
  write_reports(out_dir, method, report);
  return report;
}

DispatchSummary plan_file(const RunConfig& config, const fs::path& predictions) {
  config.validate();
  const auto preds = read_predictions(predictions);
  const auto loaded = load_corpus(config);
  const auto runs = run_titles(config, loaded, Stage::TtsPlan, {}, nullptr);
  const auto profiles = config.voice_profiles.empty() ? default_profiles(loaded, config)
                                                      : load_voice_profiles(config.voice_profiles);
  std::map<std::pair<std::string, int>, std::vector<Prediction>> by_page;
  for (const auto& p : preds) by_page[{p.title, p.page}].push_back(p);

  std::vector<TTSJob> jobs;
  for (const auto& run : runs) {
    if (run.error) throw Error("title " + run.title + " failed: " + *run.error);
    std::vector<AttributedPage> pages;
    for (const auto& [index, layout] : run.layouts) {
      auto it = by_page.find({run.title, index});
      pages.push_back({layout.scene, layout.seq, it == by_page.end() ? std::vector<Prediction>{} : it->second});
    }
    auto planned = plan_jobs(pages, profiles, config.narrator, config.layout.direction);
    jobs.insert(jobs.end(), planned.begin(), planned.end());
  }
  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir);
  std::unique_ptr<Transport> tts;
  if (config.tts_backend == "adapter") {
    AdapterConfig a = config.tts_adapter;
    a.image_root = config.image_root;
    tts = make_transport(a);
  }
  return dispatch(jobs, out_dir / "manifest.jsonl", tts.get(), config.tts_max_concurrent);
}

}  // namespace comicvox
