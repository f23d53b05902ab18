#include "comicvox/evaluation.hpp"

#include <png.h>

#include <cstdio>
#include <set>
#include <sstream>

#include "comicvox/baselines.hpp"
#include "comicvox/error.hpp"
#include "comicvox/util.hpp"

namespace comicvox {

using json = nlohmann::json;

json to_json(const Prediction& p) {
  return {{"title", p.title},
          {"page", p.page},
          {"text_id", p.text_id},
          {"pred_speaker", p.pred_speaker},
          {"pred_emotion", p.pred_emotion ? json(std::string(to_string(*p.pred_emotion))) : json()},
          {"method", p.method},
          {"flags", p.flags},
          {"schema", kPredictionSchema}};
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.title = j.at("title").get<std::string>();
  p.page = j.at("page").get<int>();
  p.text_id = j.at("text_id").get<std::string>();
  p.pred_speaker = j.at("pred_speaker").get<std::string>();
  if (auto it = j.find("pred_emotion"); it != j.end() && it->is_string()) {
    p.pred_emotion = emotion_from_string(it->get<std::string>());
    if (!p.pred_emotion) throw ParseError("unknown emotion label " + it->get<std::string>());
  }
  p.method = j.value("method", "");
  p.flags = j.value("flags", std::vector<std::string>{});
  return p;
}

EvalScope eval_scope_from_string(std::string_view s) {
  if (s == "emotion_tagged") return EvalScope::EmotionTagged;
  if (s == "all_linked") return EvalScope::AllLinked;
  throw ConfigError("unknown evaluation scope '" + std::string(s) + "'");
}

namespace {

std::map<TextKey, const Prediction*> index_predictions(const std::vector<Prediction>& preds) {
  std::map<TextKey, const Prediction*> out;
  for (const auto& p : preds) out[{p.title, p.text_id}] = &p;
  return out;
}

bool speaker_correct(const Prediction* p, const LinkedSample& g) {
  return p && p->pred_speaker != kUnknownSpeaker && p->pred_speaker != kOthers &&
         p->pred_speaker == g.gt_speaker;
}

bool evaluated_sample(const LinkedSample& g) { return g.gt_emotion && is_evaluated(*g.gt_emotion); }

}  // namespace

SpeakerScores score_speakers(const std::vector<Prediction>& preds,
                             const std::vector<LinkedSample>& gold,
                             const DifficultyMap& difficulties,
                             std::vector<std::string>* warnings) {
  const auto index = index_predictions(preds);
  SpeakerScores s;
  std::set<TextKey> gold_keys;
  for (const auto& g : gold) {
    const TextKey key{g.title_id, g.text_element_id};
    gold_keys.insert(key);
    auto it = index.find(key);
    const bool ok = speaker_correct(it == index.end() ? nullptr : it->second, g);
    auto d = difficulties.find(key);
    if (d == difficulties.end() && warnings) {
      warnings->push_back("no difficulty for " + g.title_id + "/" + g.text_element_id +
                          ", counted as hard");
    }
    const bool easy = d != difficulties.end() && d->second == CaseDifficulty::Easy;
    ++s.total_support;
    s.total_correct += ok;
    if (easy) {
      ++s.easy_support;
      s.easy_correct += ok;
    } else {
      ++s.hard_support;
      s.hard_correct += ok;
    }
  }
  if (warnings) {
    for (const auto& p : preds) {
      if (!gold_keys.contains({p.title, p.text_id})) {
        warnings->push_back("prediction for unknown text " + p.title + "/" + p.text_id +
                            " ignored");
      }
    }
  }
  s.easy_acc = percent(s.easy_correct, s.easy_support);
  s.hard_acc = percent(s.hard_correct, s.hard_support);
  s.total_acc = percent(s.total_correct, s.total_support);
  return s;
}

EmotionScores score_emotions(const std::vector<Prediction>& preds,
                             const std::vector<LinkedSample>& gold) {
  const auto index = index_predictions(preds);
  EmotionScores s;
  std::array<int, kEmotionCount> tp{};
  std::array<int, kEmotionCount> predicted{};
  std::array<int, kEmotionCount> support{};
  for (const auto& g : gold) {
    if (!g.gt_emotion) continue;
    auto it = index.find({g.title_id, g.text_element_id});
    const Prediction* p = it == index.end() ? nullptr : it->second;
    const bool has_pred = p && p->pred_emotion;
    if (has_pred) s.available = true;
    if (has_pred) ++s.confusion[index_of(*g.gt_emotion)][index_of(*p->pred_emotion)];
    if (!is_evaluated(*g.gt_emotion)) {
      ++s.excluded_gold;
      continue;
    }
    ++support[index_of(*g.gt_emotion)];
    if (!has_pred) continue;
    ++predicted[index_of(*p->pred_emotion)];
    if (!is_evaluated(*p->pred_emotion)) ++s.out_of_set_predictions;
    if (*p->pred_emotion == *g.gt_emotion) ++tp[index_of(*g.gt_emotion)];
  }

  int sum_tp = 0;
  int sum_pred = 0;
  int sum_support = 0;
  double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
  double weighted_p = 0.0, weighted_r = 0.0, weighted_f = 0.0;
  auto ratio = [](int num, int den) { return den > 0 ? 100.0 * num / den : 0.0; };
  for (auto label : kEvaluatedEmotions) {
    const auto i = index_of(label);
    ClassMetrics m{label, percent(tp[i], predicted[i]), percent(tp[i], support[i]),
                   percent(2 * tp[i], predicted[i] + support[i]), support[i], tp[i], predicted[i]};
    if (predicted[i] == 0) s.zero_division.push_back(std::string(to_string(label)) + ".precision");
    if (support[i] == 0) s.zero_division.push_back(std::string(to_string(label)) + ".recall");
    // averages use unrounded per-class values
    const double p = ratio(tp[i], predicted[i]);
    const double r = ratio(tp[i], support[i]);
    const double f = ratio(2 * tp[i], predicted[i] + support[i]);
    macro_p += p;
    macro_r += r;
    macro_f += f;
    weighted_p += p * support[i];
    weighted_r += r * support[i];
    weighted_f += f * support[i];
    sum_tp += tp[i];
    sum_pred += predicted[i];
    sum_support += support[i];
    s.per_class.push_back(m);
  }
  const double n = static_cast<double>(kEvaluatedEmotionCount);
  s.micro = {percent(sum_tp, sum_pred), percent(sum_tp, sum_support),
             percent(2 * sum_tp, sum_pred + sum_support), sum_support};
  s.macro = {round1(macro_p / n), round1(macro_r / n), round1(macro_f / n), sum_support};
  if (sum_support > 0) {
    s.weighted = {round1(weighted_p / sum_support), round1(weighted_r / sum_support),
                  round1(weighted_f / sum_support), sum_support};
  }
  return s;
}

double score_joint(const std::vector<Prediction>& preds, const std::vector<LinkedSample>& gold,
                   int* correct, int* support) {
  const auto index = index_predictions(preds);
  int ok = 0;
  int total = 0;
  for (const auto& g : gold) {
    if (!evaluated_sample(g)) continue;
    ++total;
    auto it = index.find({g.title_id, g.text_element_id});
    const Prediction* p = it == index.end() ? nullptr : it->second;
    if (speaker_correct(p, g) && p->pred_emotion && *p->pred_emotion == *g.gt_emotion) ++ok;
  }
  if (correct) *correct = ok;
  if (support) *support = total;
  return percent(ok, total);
}

EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<LinkedSample>& gold,
                    const DifficultyMap& difficulties, std::string method, EvalScope scope) {
  std::vector<LinkedSample> scoped;
  for (const auto& g : gold) {
    if (scope == EvalScope::AllLinked || evaluated_sample(g)) scoped.push_back(g);
  }
  EvalReport report;
  report.method = std::move(method);
  std::set<TextKey> scoped_keys;
  for (const auto& g : scoped) scoped_keys.insert({g.title_id, g.text_element_id});
  std::set<TextKey> gold_keys;
  for (const auto& g : gold) gold_keys.insert({g.title_id, g.text_element_id});
  std::vector<Prediction> in_scope;
  for (const auto& p : preds) {
    if (scoped_keys.contains({p.title, p.text_id})) {
      in_scope.push_back(p);
    } else if (!gold_keys.contains({p.title, p.text_id})) {
      report.warnings.push_back("prediction for unknown text " + p.title + "/" + p.text_id +
                                " ignored");
    }
  }
  report.speaker = score_speakers(in_scope, scoped, difficulties, &report.warnings);
  report.emotion = score_emotions(in_scope, scoped);
  report.joint_acc = score_joint(in_scope, scoped, &report.joint_correct, &report.joint_support);
  return report;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "text_table" || s == "text") return ReportFormat::TextTable;
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "confusion_png_data" || s == "png") return ReportFormat::ConfusionPng;
  throw ArgumentError("unknown report format '" + std::string(s) + "'");
}

namespace {

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::string capitalized(Emotion e) {
  std::string s(to_string(e));
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string text_table(const EvalReport& r) {
  std::ostringstream out;
  out << "Method: " << r.method << "\n\n";
  out << "Speaker accuracy (%)\n";
  out << pad("", 10) << pad("Easy", 8) << pad("Hard", 8) << pad("Total", 8) << "\n";
  out << pad("accuracy", 10, true) << pad(fixed1(r.speaker.easy_acc), 8)
      << pad(fixed1(r.speaker.hard_acc), 8) << pad(fixed1(r.speaker.total_acc), 8) << "\n";
  out << pad("support", 10, true) << pad(std::to_string(r.speaker.easy_support), 8)
      << pad(std::to_string(r.speaker.hard_support), 8)
      << pad(std::to_string(r.speaker.total_support), 8) << "\n\n";

  out << "Emotion recognition (%)\n";
  out << pad("Label", 14, true) << pad("Precision", 11) << pad("Recall", 8) << pad("F1", 8)
      << pad("#Support", 10) << "\n";
  auto row = [&](const std::string& label, double p, double rc, double f, int support) {
    if (r.emotion.available) {
      out << pad(label, 14, true) << pad(fixed1(p), 11) << pad(fixed1(rc), 8) << pad(fixed1(f), 8)
          << pad(std::to_string(support), 10) << "\n";
    } else {
      out << pad(label, 14, true) << pad("---", 11) << pad("---", 8) << pad("---", 8)
          << pad(std::to_string(support), 10) << "\n";
    }
  };
  for (const auto& m : r.emotion.per_class) row(capitalized(m.label), m.precision, m.recall, m.f1, m.support);
  row("Micro avg", r.emotion.micro.precision, r.emotion.micro.recall, r.emotion.micro.f1,
      r.emotion.micro.support);
  row("Macro avg", r.emotion.macro.precision, r.emotion.macro.recall, r.emotion.macro.f1,
      r.emotion.macro.support);
  row("Weighted avg", r.emotion.weighted.precision, r.emotion.weighted.recall,
      r.emotion.weighted.f1, r.emotion.weighted.support);
  out << "excluded gold labels: " << r.emotion.excluded_gold
      << ", out-of-set predictions: " << r.emotion.out_of_set_predictions << "\n\n";

  if (r.emotion.available) {
    out << "Confusion matrix (rows: ground truth, columns: predicted)\n";
    out << pad("", 11);
    for (auto e : kAllEmotions) out << pad(std::string(to_string(e)).substr(0, 4), 6);
    out << "\n";
    for (auto g : kAllEmotions) {
      out << pad(std::string(to_string(g)), 11, true);
      for (auto p : kAllEmotions) {
        out << pad(std::to_string(r.emotion.confusion[index_of(g)][index_of(p)]), 6);
      }
      out << "\n";
    }
    out << "\n";
  }
  out << "Joint accuracy (%): "
      << (r.emotion.available ? fixed1(r.joint_acc) : std::string("---")) << " ("
      << r.joint_correct << "/" << r.joint_support << ")\n";
  return out.str();
}

std::string csv(const EvalReport& r) {
  std::ostringstream out;
  out << "label,precision,recall,f1,support\n";
  for (const auto& m : r.emotion.per_class) {
    out << to_string(m.label) << "," << fixed1(m.precision) << "," << fixed1(m.recall) << ","
        << fixed1(m.f1) << "," << m.support << "\n";
  }
  auto avg = [&](const char* label, const AverageMetrics& a) {
    out << label << "," << fixed1(a.precision) << "," << fixed1(a.recall) << "," << fixed1(a.f1)
        << "," << a.support << "\n";
  };
  avg("micro avg", r.emotion.micro);
  avg("macro avg", r.emotion.macro);
  avg("weighted avg", r.emotion.weighted);
  return out.str();
}

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

std::string confusion_png(const EvalReport& r) {
  constexpr int kCell = 24;
  constexpr int kSide = kCell * static_cast<int>(kEmotionCount);
  std::vector<png_byte> pixels(static_cast<std::size_t>(kSide * kSide));
  for (int y = 0; y < kSide; ++y) {
    const auto& row = r.emotion.confusion[static_cast<std::size_t>(y / kCell)];
    int total = 0;
    for (int v : row) total += v;
    for (int x = 0; x < kSide; ++x) {
      const int v = row[static_cast<std::size_t>(x / kCell)];
      const int shade = total > 0 ? 255 - (255 * v + total / 2) / total : 255;
      pixels[static_cast<std::size_t>(y * kSide + x)] = static_cast<png_byte>(shade);
    }
  }
  std::vector<png_bytep> rows;
  for (int y = 0; y < kSide; ++y) rows.push_back(pixels.data() + y * kSide);

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  volatile bool ok = info != nullptr;
  // libpng reports errors by longjmp; nothing with a destructor is created below.
  if (ok && setjmp(png_jmpbuf(png)) == 0) {
    png_set_write_fn(png, &out, png_append, nullptr);
    png_set_IHDR(png, info, kSide, kSide, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  } else {
    ok = false;
  }
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error("png encoding failed");
  return out;
}

json avg_json(const AverageMetrics& a) {
  return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"support", a.support}};
}

AverageMetrics avg_from(const json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
          j.at("support").get<int>()};
}

}  // namespace

json to_json(const EvalReport& r) {
  json classes = json::array();
  for (const auto& m : r.emotion.per_class) {
    classes.push_back({{"label", std::string(to_string(m.label))},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"true_positives", m.true_positives},
                       {"predicted", m.predicted}});
  }
  json confusion = json::array();
  for (const auto& row : r.emotion.confusion) confusion.push_back(row);
  std::vector<std::string> labels;
  for (auto e : kAllEmotions) labels.emplace_back(to_string(e));
  return {
      {"schema", r.schema},
      {"method", r.method},
      {"speaker",
       {{"easy_acc", r.speaker.easy_acc},
        {"hard_acc", r.speaker.hard_acc},
        {"total_acc", r.speaker.total_acc},
        {"easy_correct", r.speaker.easy_correct},
        {"hard_correct", r.speaker.hard_correct},
        {"total_correct", r.speaker.total_correct},
        {"easy_support", r.speaker.easy_support},
        {"hard_support", r.speaker.hard_support},
        {"total_support", r.speaker.total_support}}},
      {"emotion",
       {{"available", r.emotion.available},
        {"per_class", classes},
        {"micro", avg_json(r.emotion.micro)},
        {"macro", avg_json(r.emotion.macro)},
        {"weighted", avg_json(r.emotion.weighted)},
        {"excluded_gold", r.emotion.excluded_gold},
        {"out_of_set_predictions", r.emotion.out_of_set_predictions},
        {"confusion_labels", labels},
        {"confusion", confusion},
        {"zero_division", r.emotion.zero_division}}},
      {"joint", {{"acc", r.joint_acc}, {"correct", r.joint_correct}, {"support", r.joint_support}}},
      {"warnings", r.warnings},
  };
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.schema = j.at("schema").get<std::string>();
  if (r.schema != kReportSchema) throw ParseError("unsupported report schema " + r.schema);
  r.method = j.at("method").get<std::string>();
  const auto& s = j.at("speaker");
  r.speaker = {s.at("easy_acc").get<double>(),     s.at("hard_acc").get<double>(),
               s.at("total_acc").get<double>(),    s.at("easy_correct").get<int>(),
               s.at("hard_correct").get<int>(),    s.at("total_correct").get<int>(),
               s.at("easy_support").get<int>(),    s.at("hard_support").get<int>(),
               s.at("total_support").get<int>()};
  const auto& e = j.at("emotion");
  r.emotion.available = e.at("available").get<bool>();
  for (const auto& c : e.at("per_class")) {
    const auto label = emotion_from_string(c.at("label").get<std::string>());
    if (!label) throw ParseError("unknown label in report");
    r.emotion.per_class.push_back({*label, c.at("precision").get<double>(),
                                   c.at("recall").get<double>(), c.at("f1").get<double>(),
                                   c.at("support").get<int>(), c.at("true_positives").get<int>(),
                                   c.at("predicted").get<int>()});
  }
  r.emotion.micro = avg_from(e.at("micro"));
  r.emotion.macro = avg_from(e.at("macro"));
  r.emotion.weighted = avg_from(e.at("weighted"));
  r.emotion.excluded_gold = e.at("excluded_gold").get<int>();
  r.emotion.out_of_set_predictions = e.at("out_of_set_predictions").get<int>();
  const auto& conf = e.at("confusion");
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    for (std::size_t k = 0; k < kEmotionCount; ++k) r.emotion.confusion[i][k] = conf.at(i).at(k).get<int>();
  }
  r.emotion.zero_division = e.at("zero_division").get<std::vector<std::string>>();
  r.joint_acc = j.at("joint").at("acc").get<double>();
  r.joint_correct = j.at("joint").at("correct").get<int>();
  r.joint_support = j.at("joint").at("support").get<int>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::TextTable: return text_table(report);
    case ReportFormat::Json: return to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return csv(report);
    case ReportFormat::ConfusionPng: return confusion_png(report);
  }
  throw ArgumentError("unknown report format");
}

}  // namespace comicvox
