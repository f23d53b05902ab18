#include "comicvox/layout.hpp"

#include <algorithm>
#include <numeric>

#include "comicvox/error.hpp"

namespace comicvox {

SplitMode split_mode_from_string(std::string_view s) {
  if (s == "two_page") return SplitMode::TwoPage;
  if (s == "four_koma") return SplitMode::FourKoma;
  if (s == "none") return SplitMode::None;
  throw ConfigError("unknown split mode '" + std::string(s) + "'");
}

std::string_view to_string(SplitMode m) {
  switch (m) {
    case SplitMode::TwoPage: return "two_page";
    case SplitMode::FourKoma: return "four_koma";
    case SplitMode::None: return "none";
  }
  return "none";
}

ReadingDirection reading_direction_from_string(std::string_view s) {
  if (s == "rtl") return ReadingDirection::RightToLeft;
  if (s == "ltr") return ReadingDirection::LeftToRight;
  throw ConfigError("unknown reading direction '" + std::string(s) + "'");
}

std::string_view to_string(ReadingDirection d) {
  return d == ReadingDirection::RightToLeft ? "rtl" : "ltr";
}

std::string_view to_string(CaseDifficulty d) {
  return d == CaseDifficulty::Easy ? "easy" : "hard";
}

const SceneText* SceneGraph::find_text(std::string_view id) const {
  for (const auto& t : texts) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

const SceneChar* SceneGraph::find_char(std::string_view id) const {
  for (const auto& c : chars) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::optional<std::string> FrameSequence::frame_of(std::string_view element_id) const {
  auto it = assignment.find(std::string(element_id));
  if (it == assignment.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> FrameSequence::position(std::string_view frame_id) const {
  auto it = std::find(ordered_frames.begin(), ordered_frames.end(), frame_id);
  if (it == ordered_frames.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ordered_frames.begin());
}

SceneGraph make_scene(const PageAnnotation& page) {
  SceneGraph scene;
  scene.page = {page.title_id, page.page_index, 0, 1};
  scene.width = page.width;
  scene.height = page.height;
  for (const auto& f : page.frames) scene.frames.push_back({f.id, f.box});
  for (const auto& t : page.texts) scene.texts.push_back({t.id, t.box, t.content});
  for (const auto& b : page.bodies) {
    SceneChar c{b.id, b.box, b.character_id, std::nullopt, std::nullopt};
    const FaceAnnotation* best = nullptr;
    std::int64_t best_area = 0;
    for (const auto& face : page.faces) {
      if (face.character_id != b.character_id) continue;
      const auto area = intersection_area(face.box, b.box);
      if (area > best_area || (area == best_area && area > 0 && face.id < best->id)) {
        best = &face;
        best_area = area;
      }
    }
    if (best) {
      c.face_id = best->id;
      c.gt_emotion = best->emotion;
    }
    scene.chars.push_back(std::move(c));
  }
  return scene;
}

namespace {

struct Strip {
  double x0;
  double x1;
};

double overlap(const BBox& b, const Strip& s) {
  const double w = std::min<double>(b.xmax, s.x1) - std::max<double>(b.xmin, s.x0);
  return w > 0 ? w * b.height() : 0.0;
}

std::size_t best_strip(const BBox& b, const std::vector<Strip>& strips) {
  std::size_t best = 0;
  double best_area = -1.0;
  for (std::size_t i = 0; i < strips.size(); ++i) {
    const double a = overlap(b, strips[i]);
    if (a > best_area) {
      best = i;
      best_area = a;
    }
  }
  return best;
}

}  // namespace

std::vector<SceneGraph> split_spread(const PageAnnotation& page, SplitMode mode,
                                     ReadingDirection direction) {
  SceneGraph whole = make_scene(page);
  const int count = mode == SplitMode::TwoPage ? 2 : mode == SplitMode::FourKoma ? 4 : 1;
  if (count == 1) return {whole};

  std::vector<Strip> strips;
  const double w = static_cast<double>(page.width) / count;
  for (int i = 0; i < count; ++i) {
    // strips listed in reading order
    const int slot = direction == ReadingDirection::RightToLeft ? count - 1 - i : i;
    strips.push_back({slot * w, (slot + 1) * w});
  }
  std::vector<SceneGraph> regions(count);
  for (int i = 0; i < count; ++i) {
    regions[i].page = {page.title_id, page.page_index, i, count};
    regions[i].width = page.width;
    regions[i].height = page.height;
  }
  for (auto& f : whole.frames) regions[best_strip(f.box, strips)].frames.push_back(f);
  for (auto& t : whole.texts) regions[best_strip(t.box, strips)].texts.push_back(t);
  for (auto& c : whole.chars) regions[best_strip(c.box, strips)].chars.push_back(c);
  return regions;
}

std::vector<SceneFrame> merge_frames(const std::vector<SceneFrame>& frames, double threshold,
                                     std::map<std::string, std::string>* merged_into) {
  std::vector<SceneFrame> out = frames;
  std::vector<std::vector<std::string>> absorbed(out.size());
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < out.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        if (iou(out[i].box, out[j].box) >= threshold) {
          out[i].box = bounding_union(out[i].box, out[j].box);
          absorbed[i].push_back(out[j].id);
          for (auto& id : absorbed[j]) absorbed[i].push_back(std::move(id));
          out.erase(out.begin() + static_cast<std::ptrdiff_t>(j));
          absorbed.erase(absorbed.begin() + static_cast<std::ptrdiff_t>(j));
          changed = true;
          break;
        }
      }
    }
  }
  if (merged_into) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (const auto& id : absorbed[i]) (*merged_into)[id] = out[i].id;
    }
  }
  return out;
}

namespace {

enum class Axis { Horizontal, Vertical };

struct Gap {
  std::size_t split;  // index into the sorted list where the far side begins
  std::vector<const SceneFrame*> sorted;
};

// Widest gap between projections on one axis; ties go to the gap nearest
// the low coordinate.
std::optional<Gap> widest_gap(const std::vector<const SceneFrame*>& group, Axis axis) {
  auto lo = [axis](const SceneFrame* f) {
    return axis == Axis::Horizontal ? f->box.ymin : f->box.xmin;
  };
  auto hi = [axis](const SceneFrame* f) {
    return axis == Axis::Horizontal ? f->box.ymax : f->box.xmax;
  };
  auto sorted = group;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](const auto* a, const auto* b) { return lo(a) < lo(b); });
  std::optional<std::size_t> best;
  int best_width = -1;
  int reach = hi(sorted.front());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (lo(sorted[i]) >= reach && lo(sorted[i]) - reach > best_width) {
      best = i;
      best_width = lo(sorted[i]) - reach;
    }
    reach = std::max(reach, hi(sorted[i]));
  }
  if (!best) return std::nullopt;
  return Gap{*best, std::move(sorted)};
}

void cut(const std::vector<const SceneFrame*>& group, ReadingDirection dir,
         std::vector<std::string>& out) {
  if (group.empty()) return;
  if (group.size() == 1) {
    out.push_back(group.front()->id);
    return;
  }
  if (auto gap = widest_gap(group, Axis::Horizontal)) {
    const auto mid = gap->sorted.begin() + static_cast<std::ptrdiff_t>(gap->split);
    cut({gap->sorted.begin(), mid}, dir, out);
    cut({mid, gap->sorted.end()}, dir, out);
    return;
  }
  if (auto gap = widest_gap(group, Axis::Vertical)) {
    const auto mid = gap->sorted.begin() + static_cast<std::ptrdiff_t>(gap->split);
    std::vector<const SceneFrame*> left(gap->sorted.begin(), mid);
    std::vector<const SceneFrame*> right(mid, gap->sorted.end());
    if (dir == ReadingDirection::RightToLeft) std::swap(left, right);
    cut(left, dir, out);
    cut(right, dir, out);
    return;
  }
  auto rest = group;
  std::sort(rest.begin(), rest.end(), [dir](const auto* a, const auto* b) {
    if (a->box.ymin != b->box.ymin) return a->box.ymin < b->box.ymin;
    if (dir == ReadingDirection::RightToLeft) {
      if (a->box.xmax != b->box.xmax) return a->box.xmax > b->box.xmax;
    } else if (a->box.xmin != b->box.xmin) {
      return a->box.xmin < b->box.xmin;
    }
    return a->id < b->id;
  });
  for (const auto* f : rest) out.push_back(f->id);
}

}  // namespace

std::vector<std::string> order_frames(const SceneGraph& scene, ReadingDirection direction) {
  std::vector<const SceneFrame*> group;
  group.reserve(scene.frames.size());
  for (const auto& f : scene.frames) group.push_back(&f);
  std::vector<std::string> out;
  out.reserve(group.size());
  cut(group, direction, out);
  return out;
}

namespace {

std::optional<std::string> containing_frame(const BBox& box, const SceneGraph& scene,
                                            const std::vector<std::string>& ordered) {
  std::optional<std::string> best;
  std::int64_t best_area = -1;
  for (const auto& id : ordered) {
    auto it = std::find_if(scene.frames.begin(), scene.frames.end(),
                           [&](const auto& f) { return f.id == id; });
    if (it == scene.frames.end()) continue;
    if (!it->box.contains(box.cx(), box.cy())) continue;
    const auto area = intersection_area(it->box, box);
    if (area > best_area) {
      best = id;
      best_area = area;
    }
  }
  return best;
}

}  // namespace

FrameSequence assign_elements(const SceneGraph& scene, const std::vector<std::string>& ordered) {
  FrameSequence seq;
  seq.ordered_frames = ordered;
  for (const auto& t : scene.texts) seq.assignment[t.id] = containing_frame(t.box, scene, ordered);
  for (const auto& c : scene.chars) seq.assignment[c.id] = containing_frame(c.box, scene, ordered);
  return seq;
}

CaseDifficulty classify_case(std::string_view text_id, std::string_view gt_speaker,
                             const SceneGraph& scene, const FrameSequence& seq) {
  if (!scene.find_text(text_id)) {
    throw ArgumentError("unknown text id " + std::string(text_id));
  }
  auto it = seq.assignment.find(std::string(text_id));
  if (it == seq.assignment.end()) {
    throw ArgumentError("text " + std::string(text_id) + " missing from frame assignment");
  }
  const auto& text_frame = it->second;
  for (const auto& c : scene.chars) {
    if (c.gt_character != gt_speaker) continue;
    if (seq.frame_of(c.id) == text_frame) return CaseDifficulty::Easy;
  }
  return CaseDifficulty::Hard;
}

PageLayout analyze_page(const PageAnnotation& page, const LayoutOptions& options) {
  PageLayout layout;
  layout.scene = make_scene(page);
  layout.scene.frames.clear();
  for (auto& region : split_spread(page, options.split_mode, options.direction)) {
    region.frames = merge_frames(region.frames, options.merge_iou, &layout.seq.merged_into);
    const auto ordered = order_frames(region, options.direction);
    auto seq = assign_elements(region, ordered);
    for (auto& f : region.frames) layout.scene.frames.push_back(std::move(f));
    for (auto& id : seq.ordered_frames) layout.seq.ordered_frames.push_back(std::move(id));
    layout.seq.assignment.merge(seq.assignment);
  }
  return layout;
}

std::vector<std::string> texts_in_reading_order(const SceneGraph& scene,
                                                const FrameSequence& seq,
                                                ReadingDirection direction) {
  const std::size_t unassigned = seq.ordered_frames.size();
  struct Key {
    std::size_t block;
    const SceneText* text;
  };
  std::vector<Key> keys;
  for (const auto& t : scene.texts) {
    std::size_t block = unassigned;
    if (auto frame = seq.frame_of(t.id)) {
      if (auto pos = seq.position(*frame)) block = *pos;
    }
    keys.push_back({block, &t});
  }
  std::sort(keys.begin(), keys.end(), [direction](const Key& a, const Key& b) {
    if (a.block != b.block) return a.block < b.block;
    if (a.text->box.ymin != b.text->box.ymin) return a.text->box.ymin < b.text->box.ymin;
    if (direction == ReadingDirection::RightToLeft) {
      if (a.text->box.xmax != b.text->box.xmax) return a.text->box.xmax > b.text->box.xmax;
    } else if (a.text->box.xmin != b.text->box.xmin) {
      return a.text->box.xmin < b.text->box.xmin;
    }
    return a.text->id < b.text->id;
  });
  std::vector<std::string> out;
  for (const auto& k : keys) out.push_back(k.text->id);
  return out;
}

}  // namespace comicvox
