#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comicvox/emotion.hpp"
#include "comicvox/geometry.hpp"

namespace comicvox {

struct Character {
  std::string id;
  std::string name;
  friend bool operator==(const Character&, const Character&) = default;
};

struct FrameAnnotation {
  std::string id;
  BBox box;
  friend bool operator==(const FrameAnnotation&, const FrameAnnotation&) = default;
};

struct TextAnnotation {
  std::string id;
  BBox box;
  std::string content;
  friend bool operator==(const TextAnnotation&, const TextAnnotation&) = default;
};

struct BodyAnnotation {
  std::string id;
  BBox box;
  std::string character_id;
  friend bool operator==(const BodyAnnotation&, const BodyAnnotation&) = default;
};

struct FaceAnnotation {
  std::string id;
  BBox box;
  std::string character_id;
  std::optional<Emotion> emotion;
  friend bool operator==(const FaceAnnotation&, const FaceAnnotation&) = default;
};

struct PageAnnotation {
  std::string title_id;
  int page_index = 0;
  int width = 0;
  int height = 0;
  std::vector<FrameAnnotation> frames;
  std::vector<TextAnnotation> texts;
  std::vector<BodyAnnotation> bodies;
  std::vector<FaceAnnotation> faces;
  friend bool operator==(const PageAnnotation&, const PageAnnotation&) = default;
};

struct SpeakerLink {
  std::string title_id;
  std::string text_element_id;
  std::string speaker_character_id;
  friend bool operator==(const SpeakerLink&, const SpeakerLink&) = default;
};

/// One title: roster, pages in index order, and validated speaker links.
/// `warnings` collects dropped or repaired records and is not part of
/// corpus equality.
struct TitleCorpus {
  std::string title_id;
  std::vector<Character> roster;
  std::vector<PageAnnotation> pages;
  std::vector<SpeakerLink> links;
  std::vector<std::string> warnings;

  [[nodiscard]] const Character* find_character(std::string_view id) const;
  [[nodiscard]] std::size_t emotion_annotation_count() const;

  friend bool operator==(const TitleCorpus& a, const TitleCorpus& b) {
    return a.title_id == b.title_id && a.roster == b.roster &&
           a.pages == b.pages && a.links == b.links;
  }
};

/// A speaker-linked dialogue line, with the speaker's facial emotion when
/// one is annotated on the same page.
struct LinkedSample {
  std::string title_id;
  std::string text_element_id;
  int page_index = 0;
  std::string content;
  std::string gt_speaker;
  std::optional<Emotion> gt_emotion;
  friend bool operator==(const LinkedSample&, const LinkedSample&) = default;
};

/// Parses a Manga109-style `<book>` XML file plus optional JSON-lines
/// sidecars for speaker links ({"title","text_id","speaker_id"}) and
/// emotion labels ({"title","face_id","label"}). Sidecar records for other
/// titles are ignored.
///
/// Dangling references (unknown characters, unknown text or face ids) and
/// out-of-page boxes are warned about and dropped or clamped rather than
/// treated as fatal. Malformed XML or JSON throws ParseError with the
/// offending line.
TitleCorpus parse_title(const std::filesystem::path& annotation_file,
                        const std::optional<std::filesystem::path>& speaker_file = {},
                        const std::optional<std::filesystem::path>& emotion_file = {});

/// Same as parse_title, from in-memory document text. `source_name` is
/// used in error messages.
TitleCorpus parse_title_text(std::string_view xml, std::string_view speaker_jsonl = {},
                             std::string_view emotion_jsonl = {},
                             const std::string& source_name = "<memory>");

/// Writes the corpus back out as Manga109-style XML (links and emotion
/// labels are not part of that format; see write_speaker_links /
/// write_emotion_labels).
std::string write_title_xml(const TitleCorpus& corpus);
std::string write_speaker_links(const TitleCorpus& corpus);
std::string write_emotion_labels(const TitleCorpus& corpus);

std::vector<LinkedSample> build_linked_set(const TitleCorpus& corpus);

/// Titles sorted by descending emotion-annotation count, ties broken by
/// title id; the first `n` are returned. Throws ArgumentError when `n`
/// exceeds the number of corpora.
std::vector<std::string> select_test_titles(std::span<const TitleCorpus> corpora,
                                            std::size_t n = 20);

}  // namespace comicvox
