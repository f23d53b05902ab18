#include "comicvox/perception.hpp"

#include <algorithm>

#include "comicvox/error.hpp"
#include "comicvox/util.hpp"

namespace comicvox {

using json = nlohmann::json;

bool CharacterRegistry::contains(std::string_view character_id) const {
  return std::find(main_characters.begin(), main_characters.end(), character_id) !=
         main_characters.end();
}

std::vector<std::string> CharacterRegistry::labels() const {
  auto out = main_characters;
  out.emplace_back(kOthers);
  return out;
}

std::string CharacterRegistry::map(std::string_view character_id) const {
  return contains(character_id) ? std::string(character_id) : std::string(kOthers);
}

std::vector<CropRef> crop_pool(const TitleCorpus& corpus) {
  std::vector<CropRef> out;
  for (const auto& page : corpus.pages) {
    for (const auto& b : page.bodies) out.push_back({corpus.title_id, b.id, b.character_id});
  }
  return out;
}

RegistryBuild build_registry(const TitleCorpus& corpus, std::span<const CropRef> negative_pool,
                             const RegistryOptions& options) {
  RegistryBuild out;
  out.registry.title_id = corpus.title_id;

  std::map<std::string, std::vector<CropRef>> crops;
  for (auto& crop : crop_pool(corpus)) crops[crop.character_id].push_back(std::move(crop));

  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [id, list] : crops) {
    if (list.size() > options.min_appearances) ranked.emplace_back(list.size(), id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (const auto& [count, id] : ranked) out.registry.main_characters.push_back(id);

  if (out.registry.main_characters.empty()) {
    out.status = RegistryStatus::NoMainCharacters;
    out.warnings.push_back("title " + corpus.title_id + ": no character appears more than " +
                           std::to_string(options.min_appearances) + " times");
  }

  for (const auto& id : out.registry.main_characters) {
    auto& list = crops[id];
    if (list.size() < options.n_ref) {
      out.warnings.push_back("character " + id + " has " + std::to_string(list.size()) +
                             " crops, fewer than " + std::to_string(options.n_ref));
    }
    Rng rng(derive_seed(options.seed, {corpus.title_id, id}));
    out.references.per_character[id] = sample_without_replacement(list, options.n_ref, rng);
  }

  std::vector<CropRef> pool;
  for (const auto& c : negative_pool) {
    if (c.title_id != corpus.title_id) pool.push_back(c);
  }
  if (pool.size() < options.n_ref) {
    out.warnings.push_back("negative pool has " + std::to_string(pool.size()) +
                           " crops, fewer than " + std::to_string(options.n_ref));
  }
  Rng rng(derive_seed(options.seed, {corpus.title_id, "negatives"}));
  out.references.negatives = sample_without_replacement(std::move(pool), options.n_ref, rng);
  return out;
}

std::vector<CharPrediction> OracleIdentity::identify(const SceneGraph& scene) const {
  std::vector<CharPrediction> out;
  for (const auto& c : scene.chars) out.push_back({c.id, registry_.map(c.gt_character), 1.0, {}});
  return out;
}

NoisyIdentity::NoisyIdentity(CharacterRegistry registry, double epsilon, std::uint64_t seed)
    : registry_(std::move(registry)), epsilon_(epsilon), seed_(seed) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("identity noise must lie in [0, 1]");
}

std::vector<CharPrediction> NoisyIdentity::identify(const SceneGraph& scene) const {
  const auto labels = registry_.labels();
  std::vector<CharPrediction> out;
  for (const auto& c : scene.chars) {
    const auto truth = registry_.map(c.gt_character);
    Rng rng(derive_seed(seed_, {scene.page.title_id, std::to_string(scene.page.page_index), c.id}));
    CharPrediction pred{c.id, truth, 1.0 - epsilon_, {}};
    if (labels.size() > 1 && rng.bernoulli(epsilon_)) {
      std::vector<std::string> wrong;
      for (const auto& l : labels) {
        if (l != truth) wrong.push_back(l);
      }
      pred.predicted = wrong[rng.below(wrong.size())];
      pred.confidence = epsilon_ / static_cast<double>(wrong.size());
    }
    out.push_back(std::move(pred));
  }
  return out;
}

namespace {

AdapterRequest char_request(const char* op, const SceneGraph& scene,
                            const std::string& image_root) {
  AdapterRequest req{op, scene.page.title_id, scene.page.page_index,
                     page_image_path(image_root, scene.page.title_id, scene.page.page_index),
                     {}};
  for (const auto& c : scene.chars) req.items.push_back({c.id, c.box, json::object()});
  return req;
}

}  // namespace

std::vector<CharPrediction> AdapterIdentity::identify(const SceneGraph& scene) const {
  const auto items = adapter_call(transport_, char_request("identify", scene, image_root_));
  std::vector<CharPrediction> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    CharPrediction pred{scene.chars[i].id, std::string(kOthers), 0.0, {}};
    if (!item.contains("label") || !item["label"].is_string() || !item.contains("confidence") ||
        !item["confidence"].is_number()) {
      pred.error = "malformed identify item";
    } else {
      const auto label = item["label"].get<std::string>();
      pred.predicted = registry_.map(label);
      pred.confidence = std::clamp(item["confidence"].get<double>(), 0.0, 1.0);
    }
    out.push_back(std::move(pred));
  }
  return out;
}

std::vector<EmotionIntensity> OracleIntensity::estimate(const SceneGraph& scene) const {
  std::vector<EmotionIntensity> out;
  for (const auto& c : scene.chars) {
    const bool strong = c.gt_emotion && *c.gt_emotion != Emotion::Neutral;
    out.push_back({c.id, strong ? magnitude_ : -magnitude_, {}});
  }
  return out;
}

std::vector<EmotionIntensity> MiscalibratedIntensity::estimate(const SceneGraph& scene) const {
  std::vector<EmotionIntensity> out;
  for (const auto& c : scene.chars) {
    bool strong = c.gt_emotion && *c.gt_emotion != Emotion::Neutral;
    Rng rng(derive_seed(seed_, {scene.page.title_id, std::to_string(scene.page.page_index), c.id}));
    if (rng.bernoulli(strong ? strong_flip_ : neutral_flip_)) strong = !strong;
    out.push_back({c.id, strong ? magnitude_ : -magnitude_, {}});
  }
  return out;
}

std::vector<EmotionIntensity> AdapterIntensity::estimate(const SceneGraph& scene) const {
  const auto items = adapter_call(transport_, char_request("intensity", scene, image_root_));
  std::vector<EmotionIntensity> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    EmotionIntensity e{scene.chars[i].id, -kOracleLogit, {}};
    if (items[i].contains("logit") && items[i]["logit"].is_number()) {
      e.logit = items[i]["logit"].get<double>();
    } else {
      e.error = "malformed intensity item";
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> OracleOcr::recognize(const SceneGraph& scene) const {
  std::vector<std::string> out;
  for (const auto& t : scene.texts) out.push_back(t.content);
  return out;
}

std::vector<std::string> AdapterOcr::recognize(const SceneGraph& scene) const {
  AdapterRequest req{"ocr", scene.page.title_id, scene.page.page_index,
                     page_image_path(image_root_, scene.page.title_id, scene.page.page_index),
                     {}};
  for (const auto& t : scene.texts) req.items.push_back({t.id, t.box, json::object()});
  const auto items = adapter_call(transport_, req);
  std::vector<std::string> out;
  for (const auto& item : items) {
    if (!item.contains("text") || !item["text"].is_string()) {
      throw ProtocolError("ocr item without text");
    }
    out.push_back(item["text"].get<std::string>());
  }
  return out;
}

std::vector<CharPrediction> identify_characters(const SceneGraph& scene,
                                                const IdentityBackend& backend) {
  std::vector<CharPrediction> raw;
  std::string failure;
  try {
    raw = backend.identify(scene);
  } catch (const Error& e) {
    failure = e.what();
  }
  if (failure.empty() && raw.size() != scene.chars.size()) {
    failure = "identity backend returned " + std::to_string(raw.size()) + " predictions for " +
              std::to_string(scene.chars.size()) + " instances";
  }
  if (failure.empty()) {
    for (std::size_t i = 0; i < raw.size() && failure.empty(); ++i) {
      if (raw[i].char_instance_id != scene.chars[i].id) failure = "identity backend reordered";
    }
  }
  if (failure.empty()) return raw;
  std::vector<CharPrediction> out;
  for (const auto& c : scene.chars) out.push_back({c.id, std::string(kOthers), 0.0, failure});
  return out;
}

std::vector<EmotionIntensity> estimate_intensity(const SceneGraph& scene,
                                                 const IntensityBackend& backend) {
  std::vector<EmotionIntensity> raw;
  std::string failure;
  try {
    raw = backend.estimate(scene);
  } catch (const Error& e) {
    failure = e.what();
  }
  if (failure.empty() && raw.size() != scene.chars.size()) {
    failure = "intensity backend returned " + std::to_string(raw.size()) + " scores for " +
              std::to_string(scene.chars.size()) + " instances";
  }
  if (failure.empty()) {
    for (std::size_t i = 0; i < raw.size() && failure.empty(); ++i) {
      if (raw[i].char_instance_id != scene.chars[i].id) failure = "intensity backend reordered";
    }
  }
  if (failure.empty()) return raw;
  std::vector<EmotionIntensity> out;
  for (const auto& c : scene.chars) out.push_back({c.id, -kOracleLogit, failure});
  return out;
}

OcrOutcome ocr_text(const SceneGraph& scene, const OcrBackend& backend) {
  OcrOutcome out{scene, {}};
  try {
    auto strings = backend.recognize(scene);
    if (strings.size() != scene.texts.size()) {
      throw ProtocolError("ocr backend returned " + std::to_string(strings.size()) +
                          " strings for " + std::to_string(scene.texts.size()) + " boxes");
    }
    for (std::size_t i = 0; i < strings.size(); ++i) out.scene.texts[i].content = std::move(strings[i]);
  } catch (const Error& e) {
    for (auto& t : out.scene.texts) t.content.clear();
    out.warnings.push_back(std::string("ocr failed on ") + scene.page.title_id + " page " +
                           std::to_string(scene.page.page_index) + ": " + e.what());
  }
  return out;
}

IdentityMap to_identity_map(const std::vector<CharPrediction>& predictions) {
  IdentityMap out;
  for (const auto& p : predictions) out[p.char_instance_id] = p.predicted;
  return out;
}

}  // namespace comicvox
