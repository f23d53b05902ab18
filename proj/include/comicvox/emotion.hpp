#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace comicvox {

// The first five labels are the evaluated classes; disgust and fear are
// predictable but too rare to score.
enum class Emotion { Neutral, Surprise, Anger, Happiness, Sadness, Disgust, Fear };

inline constexpr std::size_t kEmotionCount = 7;
inline constexpr std::size_t kEvaluatedEmotionCount = 5;

inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions = {
    Emotion::Neutral, Emotion::Surprise, Emotion::Anger, Emotion::Happiness,
    Emotion::Sadness, Emotion::Disgust,  Emotion::Fear};

inline constexpr std::array<Emotion, kEvaluatedEmotionCount> kEvaluatedEmotions = {
    Emotion::Neutral, Emotion::Surprise, Emotion::Anger, Emotion::Happiness,
    Emotion::Sadness};

constexpr std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::Neutral: return "neutral";
    case Emotion::Surprise: return "surprise";
    case Emotion::Anger: return "anger";
    case Emotion::Happiness: return "happiness";
    case Emotion::Sadness: return "sadness";
    case Emotion::Disgust: return "disgust";
    case Emotion::Fear: return "fear";
  }
  return "neutral";
}

constexpr std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }

constexpr bool is_evaluated(Emotion e) {
  return index_of(e) < kEvaluatedEmotionCount;
}

/// Exact canonical label lookup ("anger", not "Angry").
std::optional<Emotion> emotion_from_string(std::string_view label);

/// Lenient lookup used on model output: case-insensitive, trims
/// punctuation, and maps common inflections and synonyms ("Angry",
/// "surprised", "joy") onto the vocabulary.
std::optional<Emotion> normalize_emotion(std::string_view raw);

}  // namespace comicvox
