#pragma once

#include <array>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "comicvox/annotation.hpp"
#include "comicvox/layout.hpp"

namespace comicvox {

inline constexpr std::string_view kReportSchema = "report_v1";
inline constexpr std::string_view kPredictionSchema = "predictions_v1";

/// One predicted dialogue line, as written to predictions JSON-lines.
struct Prediction {
  std::string title;
  int page = 0;
  std::string text_id;
  std::string pred_speaker;
  std::optional<Emotion> pred_emotion;  // absent for speaker-only methods
  std::string method;
  std::vector<std::string> flags;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

struct TextKey {
  std::string title;
  std::string text_id;
  auto operator<=>(const TextKey&) const = default;
};

using DifficultyMap = std::map<TextKey, CaseDifficulty>;

struct SpeakerScores {
  double easy_acc = 0.0;
  double hard_acc = 0.0;
  double total_acc = 0.0;
  int easy_correct = 0;
  int hard_correct = 0;
  int total_correct = 0;
  int easy_support = 0;
  int hard_support = 0;
  int total_support = 0;
  friend bool operator==(const SpeakerScores&, const SpeakerScores&) = default;
};

struct ClassMetrics {
  Emotion label = Emotion::Neutral;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
  int true_positives = 0;
  int predicted = 0;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
  friend bool operator==(const AverageMetrics&, const AverageMetrics&) = default;
};

using ConfusionMatrix = std::array<std::array<int, kEmotionCount>, kEmotionCount>;

struct EmotionScores {
  bool available = false;  // false when no prediction carried an emotion
  std::vector<ClassMetrics> per_class;  // the five evaluated classes
  AverageMetrics micro;
  AverageMetrics macro;
  AverageMetrics weighted;
  /// Gold samples whose label is outside the evaluated classes.
  int excluded_gold = 0;
  /// Predictions of disgust/fear on evaluated samples: they lower recall
  /// but enter no class's precision.
  int out_of_set_predictions = 0;
  /// Ground truth (rows) by prediction (columns) over all seven labels.
  ConfusionMatrix confusion{};
  std::vector<std::string> zero_division;
  friend bool operator==(const EmotionScores&, const EmotionScores&) = default;
};

struct EvalReport {
  std::string schema{kReportSchema};
  std::string method;
  SpeakerScores speaker;
  EmotionScores emotion;
  double joint_acc = 0.0;
  int joint_correct = 0;
  int joint_support = 0;
  std::vector<std::string> warnings;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Accuracy per difficulty bucket. Missing predictions, UNKNOWN and
/// abstentions count as wrong; predictions for unknown texts are ignored
/// with a warning.
SpeakerScores score_speakers(const std::vector<Prediction>& preds,
                             const std::vector<LinkedSample>& gold,
                             const DifficultyMap& difficulties,
                             std::vector<std::string>* warnings = nullptr);

/// Five-way emotion report over gold samples carrying an evaluated label.
EmotionScores score_emotions(const std::vector<Prediction>& preds,
                             const std::vector<LinkedSample>& gold);

/// Share of emotion-evaluated samples with both speaker and emotion right.
double score_joint(const std::vector<Prediction>& preds, const std::vector<LinkedSample>& gold,
                   int* correct = nullptr, int* support = nullptr);

enum class EvalScope {
  EmotionTagged,  // samples with an evaluated gold emotion
  AllLinked,
};

EvalScope eval_scope_from_string(std::string_view s);

/// Full report. Under EmotionTagged every block shares one denominator.
EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<LinkedSample>& gold,
                    const DifficultyMap& difficulties, std::string method,
                    EvalScope scope = EvalScope::EmotionTagged);

enum class ReportFormat { TextTable, Json, Csv, ConfusionPng };

ReportFormat report_format_from_string(std::string_view s);

/// Text table mirrors the published tables; JSON is the canonical form;
/// CSV has the fixed columns label,precision,recall,f1,support;
/// ConfusionPng is a row-normalized grayscale heatmap.
std::string render_report(const EvalReport& report, ReportFormat format);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace comicvox
