#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "comicvox/annotation.hpp"
#include "comicvox/layout.hpp"

namespace comicvox {

// Canonical corpus dump: JSON-lines, keys sorted. Each title starts with a
// {"kind":"title"} line holding the roster, followed by one {"kind":"page"}
// line per page. Speaker links ride on their text objects and emotion
// labels on their faces; a "layout" member is added once pages have been
// laid out.

inline constexpr std::string_view kCorpusSchema = "corpus_v1";

/// `layouts` maps page_index -> layout; pages without one carry no
/// "layout" member.
std::string dump_corpus(const TitleCorpus& corpus,
                        const std::map<int, PageLayout>* layouts = nullptr);

struct DumpedTitle {
  TitleCorpus corpus;
  std::map<int, FrameSequence> layouts;
};

std::vector<DumpedTitle> read_corpus_dump(std::string_view text);

nlohmann::json to_json(const FrameSequence& seq);
FrameSequence frame_sequence_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LinkedSample& sample);
LinkedSample linked_sample_from_json(const nlohmann::json& j);

/// Reads every non-blank line of a JSON-lines file.
std::vector<nlohmann::json> read_jsonl(const std::string& path);
std::vector<nlohmann::json> parse_jsonl(std::string_view text, const std::string& source = "<memory>");

}  // namespace comicvox
