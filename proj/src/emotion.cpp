#include "comicvox/emotion.hpp"

#include <cctype>
#include <unordered_map>

#include "comicvox/util.hpp"

namespace comicvox {

std::optional<Emotion> emotion_from_string(std::string_view label) {
  for (auto e : kAllEmotions) {
    if (to_string(e) == label) return e;
  }
  return std::nullopt;
}

std::optional<Emotion> normalize_emotion(std::string_view raw) {
  static const std::unordered_map<std::string, Emotion> kTable = {
      {"neutral", Emotion::Neutral},     {"calm", Emotion::Neutral},
      {"normal", Emotion::Neutral},      {"none", Emotion::Neutral},
      {"plain", Emotion::Neutral},       {"surprise", Emotion::Surprise},
      {"surprised", Emotion::Surprise},  {"surprising", Emotion::Surprise},
      {"shock", Emotion::Surprise},      {"shocked", Emotion::Surprise},
      {"astonished", Emotion::Surprise}, {"amazed", Emotion::Surprise},
      {"anger", Emotion::Anger},         {"angry", Emotion::Anger},
      {"angrily", Emotion::Anger},       {"mad", Emotion::Anger},
      {"furious", Emotion::Anger},       {"annoyed", Emotion::Anger},
      {"irritated", Emotion::Anger},     {"rage", Emotion::Anger},
      {"happiness", Emotion::Happiness}, {"happy", Emotion::Happiness},
      {"happily", Emotion::Happiness},   {"joy", Emotion::Happiness},
      {"joyful", Emotion::Happiness},    {"glad", Emotion::Happiness},
      {"cheerful", Emotion::Happiness},  {"delighted", Emotion::Happiness},
      {"sadness", Emotion::Sadness},     {"sad", Emotion::Sadness},
      {"sadly", Emotion::Sadness},       {"sorrow", Emotion::Sadness},
      {"sorrowful", Emotion::Sadness},   {"unhappy", Emotion::Sadness},
      {"upset", Emotion::Sadness},       {"crying", Emotion::Sadness},
      {"disgust", Emotion::Disgust},     {"disgusted", Emotion::Disgust},
      {"disgusting", Emotion::Disgust},  {"fear", Emotion::Fear},
      {"afraid", Emotion::Fear},         {"scared", Emotion::Fear},
      {"fearful", Emotion::Fear},        {"frightened", Emotion::Fear},
      {"terrified", Emotion::Fear},
  };
  std::size_t b = 0;
  std::size_t e = raw.size();
  auto junk = [](char c) {
    return !std::isalpha(static_cast<unsigned char>(c));
  };
  while (b < e && junk(raw[b])) ++b;
  while (e > b && junk(raw[e - 1])) --e;
  const auto key = ascii_lower(raw.substr(b, e - b));
  if (auto it = kTable.find(key); it != kTable.end()) return it->second;
  return std::nullopt;
}

}  // namespace comicvox
