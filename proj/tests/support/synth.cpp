#include "synth.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>

namespace synth {

using namespace comicvox;

namespace {

int between(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

// Splits `region` into n guillotine leaves separated by random gutters.
std::vector<BBox> guillotine(Rng& rng, BBox region, int n) {
  std::vector<BBox> leaves{region};
  int attempts = 0;
  while (static_cast<int>(leaves.size()) < n && attempts++ < 1000) {
    const auto i = static_cast<std::size_t>(rng.below(leaves.size()));
    const BBox b = leaves[i];
    const int gutter = rng.bernoulli(0.2) ? 0 : between(rng, 4, 30);
    const bool horizontal = b.height() > b.width() ? rng.bernoulli(0.75) : rng.bernoulli(0.25);
    const int span = horizontal ? b.height() : b.width();
    if (span < 2 * 60 + gutter) continue;
    const int cut = between(rng, 60, span - 60 - gutter);
    BBox first = b, second = b;
    if (horizontal) {
      first.ymax = b.ymin + cut;
      second.ymin = first.ymax + gutter;
    } else {
      first.xmax = b.xmin + cut;
      second.xmin = first.xmax + gutter;
    }
    leaves[i] = first;
    leaves.push_back(second);
  }
  return leaves;
}

// Five frames around a center frame; no straight cut separates them.
std::vector<BBox> pinwheel(Rng& rng, BBox r) {
  const int w = r.width(), h = r.height();
  const int x1 = r.xmin + w * between(rng, 25, 40) / 100;
  const int x2 = r.xmin + w * between(rng, 60, 75) / 100;
  const int y1 = r.ymin + h * between(rng, 25, 40) / 100;
  const int y2 = r.ymin + h * between(rng, 60, 75) / 100;
  const int g = between(rng, 0, 6);
  auto shrink = [g](BBox b) { return BBox{b.xmin + g, b.ymin + g, b.xmax - g, b.ymax - g}; };
  return {shrink({r.xmin, r.ymin, x2, y1}), shrink({x2, r.ymin, r.xmax, y2}),
          shrink({x1, y2, r.xmax, r.ymax}), shrink({r.xmin, y1, x1, r.ymax}),
          shrink({x1, y1, x2, y2})};
}

std::vector<BBox> scatter(Rng& rng, int n, int width, int height) {
  for (int scale = 400;; scale = std::max(60, scale * 3 / 4)) {
    std::vector<BBox> boxes;
    for (int tries = 0; tries < 2000 && static_cast<int>(boxes.size()) < n; ++tries) {
      const int w = between(rng, 40, scale), h = between(rng, 40, scale);
      const int x = between(rng, 0, width - w), y = between(rng, 0, height - h);
      const BBox b{x, y, x + w, y + h};
      if (std::all_of(boxes.begin(), boxes.end(),
                      [&](const BBox& o) { return intersection_area(o, b) == 0; })) {
        boxes.push_back(b);
      }
    }
    if (static_cast<int>(boxes.size()) == n) return boxes;
  }
}

}  // namespace

std::vector<SceneFrame> random_frames(Rng& rng, int n, int width, int height) {
  std::vector<BBox> boxes;
  const auto kind = rng.below(3);
  const BBox page{20, 20, width - 20, height - 20};
  if (kind == 1 && n >= 5) {
    const int band = n == 5 ? page.ymax : page.ymin + page.height() * between(rng, 55, 75) / 100;
    boxes = pinwheel(rng, {page.xmin, page.ymin, page.xmax, band});
    if (n > 5) {
      auto rest = guillotine(rng, {page.xmin, band + between(rng, 0, 20), page.xmax, page.ymax}, n - 5);
      boxes.insert(boxes.end(), rest.begin(), rest.end());
    }
  } else if (kind == 2) {
    boxes = scatter(rng, n, width, height);
  } else {
    boxes = guillotine(rng, page, n);
  }
  // Random id assignment so ids carry no positional hint.
  std::vector<int> labels(boxes.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i);
  labels = sample_without_replacement(labels, labels.size(), rng);
  std::vector<SceneFrame> frames;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    frames.push_back({"f" + std::to_string(labels[i]), boxes[i]});
  }
  return frames;
}

namespace {

const char* const kNames[] = {"Aiko Mori", "Kenta",  "Mr. Sato",  "Haruka", "Daichi",
                              "Grandma Ume", "Rin",  "Shota",     "Captain Iwata", "Yui"};

const char* const kLines[] = {"We should go now",       "Did you see that",   "I told you so",
                              "Wait for me",            "It is already late", "That is not fair",
                              "Look over there",        "I can do it myself", "Thank you for today",
                              "Where did everyone go",  "Leave it to me",     "This again",
                              "You came back",          "I am not scared",    "The train is leaving",
                              "What a strange day",     "No way",             "Let us eat first",
                              "I forgot my bag",        "Hold on tight"};

Emotion draw_emotion(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.33) return Emotion::Neutral;
  if (u < 0.63) return Emotion::Happiness;
  if (u < 0.71) return Emotion::Surprise;
  if (u < 0.85) return Emotion::Anger;
  if (u < 0.95) return Emotion::Sadness;
  if (u < 0.98) return Emotion::Disgust;
  return Emotion::Fear;
}

std::string punctuate(const std::string& line, std::optional<Emotion> e, Rng& rng) {
  if (rng.bernoulli(0.04)) return "えっ、" + line + "…";
  if (!e) return line + ".";
  switch (*e) {
    case Emotion::Surprise: return line + "?";
    case Emotion::Anger: return line + "!";
    case Emotion::Happiness: return line + (rng.bernoulli(0.5) ? "!" : "~");
    case Emotion::Sadness: return line + "...";
    case Emotion::Fear: return line + "?!";
    default: return line + ".";
  }
}

struct Body {
  BodyAnnotation body;
  FaceAnnotation face;
  std::size_t frame = 0;
  BBox slot;
};

class IdSource {
 public:
  explicit IdSource(const std::string& title) : next_(fnv1a(title) & 0x7ff00000u) {}
  std::string operator()() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(next_++));
    return buf;
  }

 private:
  std::uint64_t next_;
};

// Frame boxes of one page region: 2-3 rows of 1-2 columns.
std::vector<BBox> region_frames(Rng& rng, BBox r) {
  std::vector<BBox> out;
  const int rows = between(rng, 2, 3);
  const int gutter = between(rng, 12, 24);
  const int row_h = (r.height() - (rows - 1) * gutter) / rows;
  for (int i = 0; i < rows; ++i) {
    const int y0 = r.ymin + i * (row_h + gutter);
    const int cols = between(rng, 1, 2);
    if (cols == 1) {
      out.push_back({r.xmin, y0, r.xmax, y0 + row_h});
    } else {
      const int cut = r.xmin + r.width() * between(rng, 40, 60) / 100;
      out.push_back({r.xmin, y0, cut, y0 + row_h});
      out.push_back({cut + gutter, y0, r.xmax, y0 + row_h});
    }
  }
  return out;
}

std::vector<BBox> koma_frames(int strip_x0, int strip_x1, int height) {
  std::vector<BBox> out;
  const int margin = 40, gutter = 16;
  const int h = (height - 2 * margin - 3 * gutter) / 4;
  for (int i = 0; i < 4; ++i) {
    const int y0 = margin + i * (h + gutter);
    out.push_back({strip_x0 + 12, y0, strip_x1 - 12, y0 + h});
  }
  return out;
}

}  // namespace

TitleCorpus make_title(const TitleOptions& o) {
  Rng rng(derive_seed(o.seed, {o.title_id}));
  IdSource next_id(o.title_id);
  TitleCorpus corpus;
  corpus.title_id = o.title_id;
  const int n_chars = std::clamp(o.characters, 1, static_cast<int>(std::size(kNames)));
  for (int i = 0; i < n_chars; ++i) corpus.roster.push_back({next_id(), kNames[i]});

  constexpr int kWidth = 1654, kHeight = 1170;
  for (int p = 0; p < o.pages; ++p) {
    PageAnnotation page;
    page.title_id = o.title_id;
    page.page_index = p;
    page.width = kWidth;
    page.height = kHeight;

    std::vector<BBox> frame_boxes;
    if (o.four_koma) {
      for (int s = 0; s < 4; ++s) {
        auto strip = koma_frames(s * kWidth / 4, (s + 1) * kWidth / 4, kHeight);
        frame_boxes.insert(frame_boxes.end(), strip.begin(), strip.end());
      }
    } else {
      for (int half = 0; half < 2; ++half) {
        const int x0 = half * kWidth / 2;
        auto boxes = region_frames(rng, {x0 + 50, 50, x0 + kWidth / 2 - 50, kHeight - 50});
        frame_boxes.insert(frame_boxes.end(), boxes.begin(), boxes.end());
      }
    }
    for (const auto& b : frame_boxes) page.frames.push_back({next_id(), b});

    // Bodies, each in its own vertical slot of the frame.
    std::vector<Body> bodies;
    for (std::size_t f = 0; f < frame_boxes.size(); ++f) {
      if (o.no_characters) break;
      const BBox fb = frame_boxes[f];
      const int count = static_cast<int>(rng.below(static_cast<std::uint64_t>(o.max_chars_per_frame) + 1));
      std::set<std::size_t> used;
      for (int j = 0; j < count; ++j) {
        // min of two draws skews appearances toward the first roster entries
        auto who = std::min(rng.below(corpus.roster.size()), rng.below(corpus.roster.size()));
        if (used.count(who)) continue;
        used.insert(who);
        const int slot_w = fb.width() / count;
        const BBox slot{fb.xmin + j * slot_w, fb.ymin, fb.xmin + (j + 1) * slot_w, fb.ymax};
        const int bw = std::max(8, slot_w / 2), bh = std::max(8, fb.height() * 55 / 100);
        const int bx = slot.xmin + (slot_w - bw) / 2;
        const int by = fb.ymax - fb.height() / 20 - bh;
        Body b;
        b.frame = f;
        b.slot = slot;
        b.body = {next_id(), {bx, by, bx + bw, by + bh}, corpus.roster[who].id};
        const int fw = std::max(4, bw * 6 / 10), fh = std::max(4, bh * 3 / 10);
        const int fx = bx + (bw - fw) / 2;
        b.face = {next_id(), {fx, by, fx + fw, by + fh}, corpus.roster[who].id, std::nullopt};
        if (rng.bernoulli(o.labeled_faces)) b.face.emotion = draw_emotion(rng);
        bodies.push_back(std::move(b));
      }
    }

    auto make_text = [&](const BBox& box, const std::string& speaker, std::optional<Emotion> mood) {
      const std::string line = kLines[rng.below(std::size(kLines))];
      TextAnnotation t{next_id(), box, punctuate(line, mood, rng)};
      corpus.links.push_back({o.title_id, t.id, speaker});
      page.texts.push_back(std::move(t));
    };

    for (std::size_t f = 0; f < frame_boxes.size(); ++f) {
      const BBox fb = frame_boxes[f];
      std::vector<const Body*> here;
      for (const auto& b : bodies) {
        if (b.frame == f) here.push_back(&b);
      }
      const int n_texts = static_cast<int>(rng.below(here.empty() ? 2 : 3));
      for (int k = 0; k < n_texts; ++k) {
        const bool hard = here.empty() || (o.out_of_frame > 0 && rng.bernoulli(o.out_of_frame));
        if (hard && o.out_of_frame <= 0) continue;
        const int tw = std::max(8, fb.width() / 5), th = std::max(8, fb.height() * 3 / 10);
        if (!hard) {
          const Body& s = *here[rng.below(here.size())];
          const int cx = s.slot.xmin + s.slot.width() / 2;
          const int x0 = std::clamp(cx - tw / 2 + between(rng, -3, 3), fb.xmin, fb.xmax - tw);
          const int y0 = fb.ymin + fb.height() / 20;
          make_text({x0, y0, x0 + tw, y0 + th}, s.body.character_id, s.face.emotion);
          continue;
        }
        std::set<std::string> present;
        for (const auto* b : here) present.insert(b->body.character_id);
        std::vector<const Body*> away;
        for (const auto& b : bodies) {
          if (!present.count(b.body.character_id)) away.push_back(&b);
        }
        const int x0 = between(rng, fb.xmin, fb.xmax - tw);
        const int y0 = fb.ymin + fb.height() / 20;
        if (!away.empty()) {
          const Body& s = *away[rng.below(away.size())];
          make_text({x0, y0, x0 + tw, y0 + th}, s.body.character_id, s.face.emotion);
        } else {
          std::vector<std::string> absent;
          for (const auto& c : corpus.roster) {
            if (!present.count(c.id)) absent.push_back(c.id);
          }
          if (absent.empty()) continue;
          make_text({x0, y0, x0 + tw, y0 + th}, absent[rng.below(absent.size())], std::nullopt);
        }
      }
    }
    if (o.out_of_frame > 0 && !o.four_koma && !bodies.empty() && rng.bernoulli(o.unframed * 4)) {
      // a caption-like line in the top margin, outside every frame
      const int x0 = between(rng, 60, kWidth - 260);
      const Body& s = bodies[rng.below(bodies.size())];
      make_text({x0, 8, x0 + 180, 44}, s.body.character_id, s.face.emotion);
    }

    for (const auto& b : bodies) {
      page.bodies.push_back(b.body);
      page.faces.push_back(b.face);
    }
    corpus.pages.push_back(std::move(page));
  }
  return corpus;
}

namespace {

enum class Dir { Rows, Cols };

// Best separable bipartition along one axis, by exhaustive enumeration.
std::optional<std::pair<std::vector<SceneFrame>, std::vector<SceneFrame>>> best_split(
    const std::vector<SceneFrame>& frames, Dir dir) {
  const auto lo = [dir](const SceneFrame& f) { return dir == Dir::Rows ? f.box.ymin : f.box.xmin; };
  const auto hi = [dir](const SceneFrame& f) { return dir == Dir::Rows ? f.box.ymax : f.box.xmax; };
  const std::size_t n = frames.size();
  long best_gap = -1;
  int best_pos = std::numeric_limits<int>::max();
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    int near_hi = std::numeric_limits<int>::min();
    int far_lo = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        near_hi = std::max(near_hi, hi(frames[i]));
      } else {
        far_lo = std::min(far_lo, lo(frames[i]));
      }
    }
    if (far_lo < near_hi) continue;
    const long gap = static_cast<long>(far_lo) - near_hi;
    if (gap > best_gap || (gap == best_gap && near_hi < best_pos)) {
      best_gap = gap;
      best_pos = near_hi;
      best_mask = mask;
    }
  }
  if (best_gap < 0) return std::nullopt;
  std::pair<std::vector<SceneFrame>, std::vector<SceneFrame>> parts;
  for (std::size_t i = 0; i < n; ++i) {
    (best_mask & (1u << i) ? parts.first : parts.second).push_back(frames[i]);
  }
  return parts;
}

void oracle_cut(const std::vector<SceneFrame>& frames, ReadingDirection direction,
                std::vector<std::string>& out) {
  if (frames.size() <= 1) {
    for (const auto& f : frames) out.push_back(f.id);
    return;
  }
  if (auto rows = best_split(frames, Dir::Rows)) {
    oracle_cut(rows->first, direction, out);
    oracle_cut(rows->second, direction, out);
    return;
  }
  if (auto cols = best_split(frames, Dir::Cols)) {
    const bool rtl = direction == ReadingDirection::RightToLeft;
    oracle_cut(rtl ? cols->second : cols->first, direction, out);
    oracle_cut(rtl ? cols->first : cols->second, direction, out);
    return;
  }
  auto rest = frames;
  std::sort(rest.begin(), rest.end(), [direction](const SceneFrame& a, const SceneFrame& b) {
    const int ka = direction == ReadingDirection::RightToLeft ? -a.box.xmax : a.box.xmin;
    const int kb = direction == ReadingDirection::RightToLeft ? -b.box.xmax : b.box.xmin;
    return std::tie(a.box.ymin, ka, a.id) < std::tie(b.box.ymin, kb, b.id);
  });
  for (const auto& f : rest) out.push_back(f.id);
}

}  // namespace

std::vector<std::string> brute_force_order(const std::vector<SceneFrame>& frames,
                                           ReadingDirection direction) {
  std::vector<std::string> out;
  oracle_cut(frames, direction, out);
  return out;
}

std::string brute_force_nearest(const BBox& text, const std::vector<SceneChar>& chars) {
  std::string best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& c : chars) {
    const double dx = text.cx() - c.box.cx(), dy = text.cy() - c.box.cy();
    const double d = dx * dx + dy * dy;  // exact: coordinates are half-integers
    if (d < best_d || (d == best_d && c.id < best)) {
      best = c.id;
      best_d = d;
    }
  }
  return best;
}

}  // namespace synth
