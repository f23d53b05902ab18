#include "comicvox/baselines.hpp"

#include <cstdint>
#include <limits>

namespace comicvox {

namespace {

std::int64_t distance_key(const BBox& a, const BBox& b, DistanceMetric metric) {
  return metric == DistanceMetric::Center ? center_distance_key(a, b) : edge_distance_key(a, b);
}

SpeakerPrediction nearest(const SceneText& text, const std::vector<const SceneChar*>& candidates,
                          const IdentityMap& identities, DistanceMetric metric,
                          std::string_view method) {
  SpeakerPrediction pred{text.id, std::nullopt, std::string(kUnknownSpeaker),
                         std::string(method)};
  const SceneChar* best = nullptr;
  std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
  for (const auto* c : candidates) {
    const auto d = distance_key(text.box, c->box, metric);
    if (!best || d < best_d || (d == best_d && c->id < best->id)) {
      best = c;
      best_d = d;
    }
  }
  if (best) {
    pred.instance_id = best->id;
    if (auto it = identities.find(best->id); it != identities.end()) {
      pred.character_id = it->second;
    }
  }
  return pred;
}

std::vector<const SceneChar*> all_chars(const SceneGraph& scene) {
  std::vector<const SceneChar*> out;
  for (const auto& c : scene.chars) out.push_back(&c);
  return out;
}

std::vector<const SceneChar*> chars_in(const SceneGraph& scene, const FrameSequence& seq,
                                       const std::optional<std::string>& frame) {
  std::vector<const SceneChar*> out;
  for (const auto& c : scene.chars) {
    if (seq.frame_of(c.id) == frame) out.push_back(&c);
  }
  return out;
}

}  // namespace

std::vector<SpeakerPrediction> short_distance(const SceneGraph& scene,
                                              const IdentityMap& identities,
                                              DistanceMetric metric) {
  const auto candidates = all_chars(scene);
  std::vector<SpeakerPrediction> out;
  out.reserve(scene.texts.size());
  for (const auto& t : scene.texts) {
    out.push_back(nearest(t, candidates, identities, metric, kMethodRuleShort));
  }
  return out;
}

std::vector<SpeakerPrediction> frame_distance(const SceneGraph& scene,
                                              const FrameSequence& seq,
                                              const IdentityMap& identities,
                                              DistanceMetric metric) {
  if (seq.ordered_frames.size() <= 1) {
    auto out = short_distance(scene, identities, metric);
    for (auto& p : out) p.method = kMethodRuleFrame;
    return out;
  }
  const auto everyone = all_chars(scene);
  std::vector<SpeakerPrediction> out;
  out.reserve(scene.texts.size());
  for (const auto& t : scene.texts) {
    const auto frame = seq.frame_of(t.id);
    auto candidates = chars_in(scene, seq, frame);
    if (candidates.empty() && frame) {
      if (auto pos = seq.position(*frame)) {
        if (*pos > 0) {
          candidates = chars_in(scene, seq, seq.ordered_frames[*pos - 1]);
        }
        if (candidates.empty() && *pos + 1 < seq.ordered_frames.size()) {
          candidates = chars_in(scene, seq, seq.ordered_frames[*pos + 1]);
        }
      }
    }
    if (candidates.empty()) candidates = everyone;
    out.push_back(nearest(t, candidates, identities, metric, kMethodRuleFrame));
  }
  return out;
}

IdentityMap gold_identities(const SceneGraph& scene) {
  IdentityMap out;
  for (const auto& c : scene.chars) out[c.id] = c.gt_character;
  return out;
}

}  // namespace comicvox
