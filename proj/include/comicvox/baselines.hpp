#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comicvox/layout.hpp"

namespace comicvox {

inline constexpr std::string_view kUnknownSpeaker = "UNKNOWN";
inline constexpr std::string_view kOthers = "OTHERS";

inline constexpr std::string_view kMethodRuleShort = "rule_short";
inline constexpr std::string_view kMethodRuleFrame = "rule_frame";

/// Character instance id -> character id (or OTHERS).
using IdentityMap = std::map<std::string, std::string>;

struct SpeakerPrediction {
  std::string text_id;
  std::optional<std::string> instance_id;  // nullopt: abstained
  std::string character_id{kUnknownSpeaker};
  std::string method;

  [[nodiscard]] bool abstained() const { return !instance_id.has_value(); }
  friend bool operator==(const SpeakerPrediction&, const SpeakerPrediction&) = default;
};

enum class DistanceMetric { Center, Edge };

/// Nearest character instance to each text; ties go to the smaller
/// instance id. Every text abstains on pages without characters.
std::vector<SpeakerPrediction> short_distance(const SceneGraph& scene,
                                              const IdentityMap& identities,
                                              DistanceMetric metric = DistanceMetric::Center);

/// Nearest character restricted to the text's frame. An empty frame falls
/// back to the previous frame in reading order, then the next, then the
/// whole page. Pages with at most one frame reduce to short_distance.
std::vector<SpeakerPrediction> frame_distance(const SceneGraph& scene,
                                              const FrameSequence& seq,
                                              const IdentityMap& identities,
                                              DistanceMetric metric = DistanceMetric::Center);

/// Ground-truth identities of every character instance in the scene.
IdentityMap gold_identities(const SceneGraph& scene);

}  // namespace comicvox
