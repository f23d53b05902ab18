#include "comicvox/llm.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <set>

#include "comicvox/util.hpp"

namespace comicvox {

using json = nlohmann::json;

void MemoryState::check() const {
  if (utf8_length(global_summary) > budget_global) {
    throw ContractError("global summary exceeds its budget of " + std::to_string(budget_global));
  }
  if (utf8_length(local_summary) > budget_local) {
    throw ContractError("local summary exceeds its budget of " + std::to_string(budget_local));
  }
}

std::size_t AttributionResult::flag_count() const {
  std::size_t n = 0;
  for (const auto& [id, entry] : entries) n += entry.flags.size();
  return n;
}

std::string_view to_string(AttributionStatus status) {
  switch (status) {
    case AttributionStatus::Ok: return "ok";
    case AttributionStatus::ParseFailureFallback: return "parse_failure";
    case AttributionStatus::BackendErrorFallback: return "backend_error";
  }
  return "ok";
}

namespace {

std::string display_name(const std::vector<Character>& roster, std::string_view id) {
  if (id == kOthers || id == kUnknownSpeaker) return "unknown person";
  for (const auto& c : roster) {
    if (c.id == id) return c.name.empty() ? c.id : c.name;
  }
  return std::string(id);
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", v);
  return buf;
}

struct Placed {
  BBox box;
  std::string id;
  std::string line;
};

void sort_placed(std::vector<Placed>& items, ReadingDirection dir) {
  std::sort(items.begin(), items.end(), [dir](const Placed& a, const Placed& b) {
    if (a.box.ymin != b.box.ymin) return a.box.ymin < b.box.ymin;
    if (dir == ReadingDirection::RightToLeft) {
      if (a.box.xmax != b.box.xmax) return a.box.xmax > b.box.xmax;
    } else if (a.box.xmin != b.box.xmin) {
      return a.box.xmin < b.box.xmin;
    }
    return a.id < b.id;
  });
}

}  // namespace

PagePrompt build_prompt(const PageInputs& in, const MemoryState& memory) {
  memory.check();
  const auto& scene = in.scene;
  PagePrompt prompt;

  std::string preamble =
      "You are annotating one page of a Japanese comic for an audiobook.\n"
      "For every dialogue text, name the character who speaks it and the emotion of the line.\n";
  preamble += "Title: " + scene.page.title_id + "\n";
  preamble += "Page: " + std::to_string(scene.page.page_index) + "\n";
  preamble += "Main characters:";
  if (in.main_characters.empty()) preamble += " (none)";
  for (std::size_t i = 0; i < in.main_characters.size(); ++i) {
    preamble += (i == 0 ? " " : "; ") + display_name(in.roster, in.main_characters[i]) + " [" +
                in.main_characters[i] + "]";
  }
  preamble += "\nEmotion labels:";
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    preamble += (i == 0 ? " " : ", ") + std::string(to_string(kAllEmotions[i]));
  }
  prompt.system_preamble = std::move(preamble);

  prompt.memory_block = "Story so far:\n" +
                        (memory.global_summary.empty() ? "(none)" : memory.global_summary) +
                        "\nPrevious page:\n" +
                        (memory.local_summary.empty() ? "(none)" : memory.local_summary);

  std::map<std::string, const CharPrediction*> preds;
  for (const auto& p : in.char_preds) preds[p.char_instance_id] = &p;
  std::map<std::string, const EmotionIntensity*> scores;
  if (in.intensities) {
    for (const auto& s : *in.intensities) scores[s.char_instance_id] = &s;
  }

  std::map<std::optional<std::string>, std::vector<Placed>> blocks;
  for (const auto& t : scene.texts) {
    blocks[in.seq.frame_of(t.id)].push_back(
        {t.box, t.id, "text " + t.id + ": " + json(t.content).dump()});
  }
  for (const auto& c : scene.chars) {
    auto it = preds.find(c.id);
    const std::string who =
        it == preds.end() ? "unknown person" : display_name(in.roster, it->second->predicted);
    std::string line = "character " + c.id + ": " + who;
    if (in.intensities) {
      auto s = scores.find(c.id);
      const double z = s == scores.end() ? -kOracleLogit : s->second->logit;
      line += std::string(" | expression ") + (z > 0.0 ? "STRONG" : "NEUTRAL") + " (" +
              one_decimal(z) + ")";
    }
    blocks[in.seq.frame_of(c.id)].push_back({c.box, c.id, std::move(line)});
  }
  for (const auto& frame_id : in.seq.ordered_frames) {
    FrameBlock block{frame_id, {}};
    if (auto it = blocks.find(frame_id); it != blocks.end()) {
      sort_placed(it->second, in.direction);
      for (auto& p : it->second) block.lines.push_back(std::move(p.line));
    }
    prompt.frame_blocks.push_back(std::move(block));
  }
  if (auto it = blocks.find(std::nullopt); it != blocks.end()) {
    sort_placed(it->second, in.direction);
    for (auto& p : it->second) prompt.unassigned_block.push_back(std::move(p.line));
  }

  std::string ids;
  for (const auto& t : scene.texts) ids += (ids.empty() ? "" : ", ") + t.id;
  std::string out =
      "Answer with exactly one JSON object and nothing else, shaped like:\n"
      "{\"dialogues\": {\"<text id>\": {\"speaker\": \"<character name, or unknown>\", "
      "\"emotion\": \"<emotion label>\"}}, \"global_summary\": \"...\", "
      "\"local_summary\": \"...\"}\n";
  out += scene.texts.empty()
             ? "This page has no dialogue; return an empty dialogues object.\n"
             : "Include every text id: " + ids + "\n";
  out += "global_summary: the whole plot so far including this page, oldest events first, at most " +
         std::to_string(memory.budget_global) + " characters.\n";
  out += "local_summary: what happens on this page, at most " +
         std::to_string(memory.budget_local) + " characters.";
  prompt.output_schema_instructions = std::move(out);
  return prompt;
}

std::string PagePrompt::render() const {
  std::string out = system_preamble + "\n\n" + memory_block + "\n\nPage elements in reading order:\n";
  for (std::size_t i = 0; i < frame_blocks.size(); ++i) {
    out += "Frame " + std::to_string(i + 1) + " (" + frame_blocks[i].frame_id + "):\n";
    if (frame_blocks[i].lines.empty()) out += "  (empty)\n";
    for (const auto& line : frame_blocks[i].lines) out += "  " + line + "\n";
  }
  if (!unassigned_block.empty()) {
    out += "Outside any frame:\n";
    for (const auto& line : unassigned_block) out += "  " + line + "\n";
  }
  out += "\n" + output_schema_instructions + "\n";
  return out;
}

namespace {

// Index one past the brace closing the object that opens at `start`, or
// npos when unbalanced.
std::size_t object_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<json> first_object(std::string_view raw) {
  for (auto pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
    const auto end = object_end(raw, pos);
    if (end == std::string_view::npos) continue;
    auto parsed = json::parse(raw.substr(pos, end - pos), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

bool means_unknown(const std::string& lowered) {
  static const std::set<std::string> kWords = {"",      "unknown", "unknown person", "others",
                                               "other", "none",    "narrator",       "n/a"};
  return kWords.contains(lowered);
}

std::optional<std::string> match_speaker(const std::string& raw,
                                         const std::vector<Character>& roster) {
  const auto lowered = ascii_lower(raw);
  for (const auto& c : roster) {
    if (ascii_lower(c.id) == lowered || (!c.name.empty() && ascii_lower(c.name) == lowered)) {
      return c.id;
    }
  }
  const auto norm = normalize_whitespace(lowered);
  for (const auto& c : roster) {
    if (normalize_whitespace(ascii_lower(c.id)) == norm ||
        (!c.name.empty() && normalize_whitespace(ascii_lower(c.name)) == norm)) {
      return c.id;
    }
  }
  return std::nullopt;
}

}  // namespace

AttributionResult parse_response(std::string_view raw,
                                 const std::vector<std::string>& expected_text_ids,
                                 const std::vector<Character>& roster) {
  auto obj = first_object(raw);
  if (!obj) throw ParseFailure("no JSON object in model reply");

  AttributionResult result;
  const json* dialogues = nullptr;
  if (auto it = obj->find("dialogues"); it != obj->end() && it->is_object()) {
    dialogues = &*it;
  } else {
    result.warnings.push_back("reply has no dialogues object");
  }
  const std::set<std::string> expected(expected_text_ids.begin(), expected_text_ids.end());
  if (dialogues) {
    for (const auto& [id, value] : dialogues->items()) {
      if (!expected.contains(id)) result.warnings.push_back("unexpected text id " + id + " ignored");
    }
  }

  for (const auto& id : expected_text_ids) {
    TextAttribution entry;
    const json* item = nullptr;
    if (dialogues) {
      if (auto it = dialogues->find(id); it != dialogues->end()) item = &*it;
    }
    if (!item || !item->is_object()) {
      entry.flags.emplace_back(item ? "malformed" : "missing");
      result.entries[id] = std::move(entry);
      continue;
    }
    if (auto sp = item->find("speaker"); sp != item->end() && sp->is_string()) {
      const auto name = sp->get<std::string>();
      if (!means_unknown(normalize_whitespace(ascii_lower(name)))) {
        if (auto match = match_speaker(name, roster)) {
          entry.speaker = *match;
        } else {
          entry.flags.emplace_back("unmatched_speaker");
        }
      }
    } else if (sp == item->end() || !sp->is_null()) {
      entry.flags.emplace_back("missing_speaker");
    }
    if (auto em = item->find("emotion"); em != item->end() && em->is_string()) {
      const auto label = em->get<std::string>();
      if (auto e = normalize_emotion(label)) {
        entry.emotion = *e;
      } else {
        result.warnings.push_back("text " + id + ": emotion '" + label + "' mapped to neutral");
      }
    } else {
      result.warnings.push_back("text " + id + ": no emotion, using neutral");
    }
    result.entries[id] = std::move(entry);
  }
  if (auto g = obj->find("global_summary"); g != obj->end() && g->is_string()) {
    result.new_global_summary = g->get<std::string>();
  } else {
    result.warnings.push_back("reply has no global_summary");
  }
  if (auto l = obj->find("local_summary"); l != obj->end() && l->is_string()) {
    result.new_local_summary = l->get<std::string>();
  } else {
    result.warnings.push_back("reply has no local_summary");
  }
  return result;
}

namespace {

constexpr std::string_view kRetrySuffix =
    "\nYour previous answer could not be used. Reply with the JSON object only.\n";

AttributionResult fallback_result(const PageInputs& in, const std::string& flag) {
  AttributionResult result;
  const auto preds = frame_distance(in.scene, in.seq, to_identity_map(in.char_preds),
                                    in.fallback_metric);
  for (const auto& p : preds) {
    TextAttribution entry;
    entry.speaker = p.character_id == kOthers ? std::string(kUnknownSpeaker) : p.character_id;
    entry.flags.push_back(flag);
    result.entries[p.text_id] = std::move(entry);
  }
  return result;
}

}  // namespace

PageAttribution attribute_page(const PageInputs& inputs, const MemoryState& memory,
                               LlmBackend& backend, const RetryPolicy& policy) {
  memory.check();
  const int page = inputs.scene.page.page_index;
  if (memory.page_cursor != page - 1) {
    throw ContractError("memory is at page " + std::to_string(memory.page_cursor) +
                        ", cannot attribute page " + std::to_string(page));
  }
  PageAttribution out;
  out.prompt = build_prompt(inputs, memory).render();
  std::vector<std::string> expected;
  for (const auto& t : inputs.scene.texts) expected.push_back(t.id);

  AttributionStatus failure = AttributionStatus::ParseFailureFallback;
  std::string last_error;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    LlmRequest request{inputs.scene.page.title_id, page,
                       attempt == 0 ? out.prompt : out.prompt + std::string(kRetrySuffix),
                       attempt, &inputs, &memory};
    ++out.calls;
    try {
      const auto raw = backend.complete(request);
      out.result = parse_response(raw, expected, inputs.roster);
      out.memory = memory;
      if (out.result.new_global_summary) {
        out.memory.global_summary = utf8_truncate(*out.result.new_global_summary, memory.budget_global);
      }
      if (out.result.new_local_summary) {
        out.memory.local_summary = utf8_truncate(*out.result.new_local_summary, memory.budget_local);
      }
      out.memory.page_cursor = page;
      out.status = AttributionStatus::Ok;
      return out;
    } catch (const ParseFailure& e) {
      failure = AttributionStatus::ParseFailureFallback;
      last_error = e.what();
    } catch (const BackendError& e) {
      failure = AttributionStatus::BackendErrorFallback;
      last_error = e.what();
    }
  }
  out.status = failure;
  out.result = fallback_result(inputs, "fallback_" + std::string(to_string(failure)));
  out.result.warnings.push_back("page " + std::to_string(page) + " fell back after " +
                                std::to_string(out.calls) + " calls: " + last_error);
  out.memory = memory;
  out.memory.page_cursor = page;
  return out;
}

}  // namespace comicvox
