#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comicvox/annotation.hpp"

namespace comicvox {

enum class SplitMode { TwoPage, FourKoma, None };
enum class ReadingDirection { RightToLeft, LeftToRight };
enum class CaseDifficulty { Easy, Hard };

SplitMode split_mode_from_string(std::string_view s);
std::string_view to_string(SplitMode m);
ReadingDirection reading_direction_from_string(std::string_view s);
std::string_view to_string(ReadingDirection d);
std::string_view to_string(CaseDifficulty d);

struct LayoutOptions {
  ReadingDirection direction = ReadingDirection::RightToLeft;
  SplitMode split_mode = SplitMode::TwoPage;
  double merge_iou = 0.4;
};

struct PageRef {
  std::string title_id;
  int page_index = 0;
  int region = 0;
  int region_count = 1;
  friend bool operator==(const PageRef&, const PageRef&) = default;
};

struct SceneFrame {
  std::string id;
  BBox box;
  friend bool operator==(const SceneFrame&, const SceneFrame&) = default;
};

struct SceneText {
  std::string id;
  BBox box;
  std::string content;
  friend bool operator==(const SceneText&, const SceneText&) = default;
};

/// A character instance (annotated body). Ground-truth identity and the
/// emotion of the attached face ride along for oracle backends and scoring;
/// predictive code paths never read them directly.
struct SceneChar {
  std::string id;
  BBox box;
  std::string gt_character;
  std::optional<std::string> face_id;
  std::optional<Emotion> gt_emotion;
  friend bool operator==(const SceneChar&, const SceneChar&) = default;
};

struct SceneGraph {
  PageRef page;
  int width = 0;
  int height = 0;
  std::vector<SceneFrame> frames;
  std::vector<SceneText> texts;
  std::vector<SceneChar> chars;

  [[nodiscard]] std::size_t n_text() const { return texts.size(); }
  [[nodiscard]] std::size_t n_char() const { return chars.size(); }
  [[nodiscard]] const SceneText* find_text(std::string_view id) const;
  [[nodiscard]] const SceneChar* find_char(std::string_view id) const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

/// Reading-ordered frames and the frame (or nullopt for "not in any
/// frame") each text and character instance belongs to.
struct FrameSequence {
  std::vector<std::string> ordered_frames;
  std::map<std::string, std::optional<std::string>> assignment;
  /// Frame ids absorbed by the overlap merge, mapped to the surviving id.
  std::map<std::string, std::string> merged_into;

  [[nodiscard]] std::optional<std::string> frame_of(std::string_view element_id) const;
  /// Position of a frame in ordered_frames, or nullopt.
  [[nodiscard]] std::optional<std::size_t> position(std::string_view frame_id) const;

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

/// Whole page as one scene. Each body becomes a character instance; the
/// face of the same character overlapping the body most is attached to it.
SceneGraph make_scene(const PageAnnotation& page);

/// Splits a scanned spread into reading-ordered regions (1, 2, or 4).
/// Elements go to the region they overlap most, ties to the region read
/// first. Coordinates are kept in page space.
std::vector<SceneGraph> split_spread(const PageAnnotation& page, SplitMode mode,
                                     ReadingDirection direction = ReadingDirection::RightToLeft);

/// Merges frames whose IoU reaches `threshold` into their bounding union,
/// repeatedly, keeping the id of the earliest frame in each group.
/// Absorbed ids are recorded in `merged_into` when given.
std::vector<SceneFrame> merge_frames(const std::vector<SceneFrame>& frames, double threshold,
                                     std::map<std::string, std::string>* merged_into = nullptr);

/// Recursive gap cut. A set is split at its widest horizontal gap (upper
/// part first); failing that, at its widest vertical gap (right part first
/// for right-to-left reading); each part is cut again. A set that no gap
/// separates is ordered by top edge, then by right edge descending (left
/// edge ascending for left-to-right).
std::vector<std::string> order_frames(const SceneGraph& scene,
                                      ReadingDirection direction = ReadingDirection::RightToLeft);

/// Assigns each text and character to the frame containing its box center;
/// if several do, the one with the largest intersection wins (ties to the
/// earlier frame in `ordered`).
FrameSequence assign_elements(const SceneGraph& scene, const std::vector<std::string>& ordered);

/// Easy when some instance of the speaker shares the text's frame.
/// Elements outside every frame share one pseudo-frame. Throws
/// ArgumentError for unknown or unassigned text ids.
CaseDifficulty classify_case(std::string_view text_id, std::string_view gt_speaker,
                             const SceneGraph& scene, const FrameSequence& seq);

/// Page-level layout: the region scenes concatenated back into one scene
/// with merged frames, and a sequence that reads region by region.
struct PageLayout {
  SceneGraph scene;
  FrameSequence seq;
};

PageLayout analyze_page(const PageAnnotation& page, const LayoutOptions& options = {});

/// Text ids in reading order: frame by frame following `seq`, then
/// unassigned. Within a block elements go top to bottom, then in reading
/// direction.
std::vector<std::string> texts_in_reading_order(
    const SceneGraph& scene, const FrameSequence& seq,
    ReadingDirection direction = ReadingDirection::RightToLeft);

}  // namespace comicvox
