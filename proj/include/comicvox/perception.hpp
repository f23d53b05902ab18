#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comicvox/adapter.hpp"
#include "comicvox/baselines.hpp"
#include "comicvox/layout.hpp"

namespace comicvox {

/// The k main characters of a title plus the implicit OTHERS class.
struct CharacterRegistry {
  std::string title_id;
  std::vector<std::string> main_characters;

  [[nodiscard]] std::size_t k() const { return main_characters.size(); }
  [[nodiscard]] bool contains(std::string_view character_id) const;
  /// main_characters followed by OTHERS: the k+1 output classes.
  [[nodiscard]] std::vector<std::string> labels() const;
  /// Ground-truth id, or OTHERS when not a main character.
  [[nodiscard]] std::string map(std::string_view character_id) const;
};

/// A labeled character crop, identified by its annotation element.
struct CropRef {
  std::string title_id;
  std::string element_id;
  std::string character_id;
  friend bool operator==(const CropRef&, const CropRef&) = default;
};

struct ReferenceSet {
  std::map<std::string, std::vector<CropRef>> per_character;
  std::vector<CropRef> negatives;
  friend bool operator==(const ReferenceSet&, const ReferenceSet&) = default;
};

enum class RegistryStatus { Ok, NoMainCharacters };

struct RegistryOptions {
  std::size_t min_appearances = 50;
  std::size_t n_ref = 40;
  std::uint64_t seed = 0;
};

struct RegistryBuild {
  CharacterRegistry registry;
  ReferenceSet references;
  RegistryStatus status = RegistryStatus::Ok;
  std::vector<std::string> warnings;
};

/// Every body crop in a title; the usual source of negative pools.
std::vector<CropRef> crop_pool(const TitleCorpus& corpus);

/// Main characters are those with strictly more than `min_appearances`
/// bodies. Up to `n_ref` references are drawn per character and `n_ref`
/// negatives from `negative_pool` (crops of other titles), all with a
/// seeded generator. A title with no main character yields k = 0 and
/// status NoMainCharacters.
RegistryBuild build_registry(const TitleCorpus& corpus, std::span<const CropRef> negative_pool,
                             const RegistryOptions& options = {});

struct CharPrediction {
  std::string char_instance_id;
  std::string predicted;
  double confidence = 1.0;
  std::optional<std::string> error;
  friend bool operator==(const CharPrediction&, const CharPrediction&) = default;
};

/// Raw emotion logit of a character instance. The binary decision is
/// derived, never stored, so it always agrees with the sign of the logit.
struct EmotionIntensity {
  std::string char_instance_id;
  double logit = 0.0;
  std::optional<std::string> error;

  [[nodiscard]] int binary() const { return logit > 0.0 ? 1 : 0; }
  [[nodiscard]] bool strong() const { return logit > 0.0; }
  friend bool operator==(const EmotionIntensity&, const EmotionIntensity&) = default;
};

class IdentityBackend {
 public:
  virtual ~IdentityBackend() = default;
  [[nodiscard]] virtual std::vector<CharPrediction> identify(const SceneGraph& scene) const = 0;
};

class IntensityBackend {
 public:
  virtual ~IntensityBackend() = default;
  [[nodiscard]] virtual std::vector<EmotionIntensity> estimate(const SceneGraph& scene) const = 0;
};

class OcrBackend {
 public:
  virtual ~OcrBackend() = default;
  /// One string per text region, in scene order.
  [[nodiscard]] virtual std::vector<std::string> recognize(const SceneGraph& scene) const = 0;
};

class OracleIdentity final : public IdentityBackend {
 public:
  explicit OracleIdentity(CharacterRegistry registry) : registry_(std::move(registry)) {}
  [[nodiscard]] std::vector<CharPrediction> identify(const SceneGraph& scene) const override;

 private:
  CharacterRegistry registry_;
};

/// Oracle whose answer is replaced, with probability epsilon, by a
/// uniformly drawn wrong label among the k+1 classes. Draws depend only
/// on (seed, title, page, instance id).
class NoisyIdentity final : public IdentityBackend {
 public:
  NoisyIdentity(CharacterRegistry registry, double epsilon, std::uint64_t seed);
  [[nodiscard]] std::vector<CharPrediction> identify(const SceneGraph& scene) const override;

 private:
  CharacterRegistry registry_;
  double epsilon_;
  std::uint64_t seed_;
};

class AdapterIdentity final : public IdentityBackend {
 public:
  AdapterIdentity(Transport& transport, CharacterRegistry registry, std::string image_root)
      : transport_(transport), registry_(std::move(registry)), image_root_(std::move(image_root)) {}
  [[nodiscard]] std::vector<CharPrediction> identify(const SceneGraph& scene) const override;

 private:
  Transport& transport_;
  CharacterRegistry registry_;
  std::string image_root_;
};

inline constexpr double kOracleLogit = 2.0;

/// Labeled non-neutral faces score +magnitude; neutral, unlabeled, or
/// face-less instances score -magnitude.
class OracleIntensity final : public IntensityBackend {
 public:
  explicit OracleIntensity(double magnitude = kOracleLogit) : magnitude_(magnitude) {}
  [[nodiscard]] std::vector<EmotionIntensity> estimate(const SceneGraph& scene) const override;

 private:
  double magnitude_;
};

/// Oracle with the classifier's published per-class error rates: neutral
/// instances flip to strong with probability 0.584 (41.6% neutral
/// accuracy), strong ones flip to neutral with probability 0.122 (87.8%).
class MiscalibratedIntensity final : public IntensityBackend {
 public:
  static constexpr double kNeutralFlip = 0.584;
  static constexpr double kStrongFlip = 0.122;

  explicit MiscalibratedIntensity(std::uint64_t seed, double magnitude = kOracleLogit,
                                  double neutral_flip = kNeutralFlip,
                                  double strong_flip = kStrongFlip)
      : seed_(seed), magnitude_(magnitude), neutral_flip_(neutral_flip), strong_flip_(strong_flip) {}
  [[nodiscard]] std::vector<EmotionIntensity> estimate(const SceneGraph& scene) const override;

 private:
  std::uint64_t seed_;
  double magnitude_;
  double neutral_flip_;
  double strong_flip_;
};

class AdapterIntensity final : public IntensityBackend {
 public:
  AdapterIntensity(Transport& transport, std::string image_root)
      : transport_(transport), image_root_(std::move(image_root)) {}
  [[nodiscard]] std::vector<EmotionIntensity> estimate(const SceneGraph& scene) const override;

 private:
  Transport& transport_;
  std::string image_root_;
};

class OracleOcr final : public OcrBackend {
 public:
  [[nodiscard]] std::vector<std::string> recognize(const SceneGraph& scene) const override;
};

/// Throws ProtocolError when the adapter returns a different number of
/// strings than there are text boxes.
class AdapterOcr final : public OcrBackend {
 public:
  AdapterOcr(Transport& transport, std::string image_root)
      : transport_(transport), image_root_(std::move(image_root)) {}
  [[nodiscard]] std::vector<std::string> recognize(const SceneGraph& scene) const override;

 private:
  Transport& transport_;
  std::string image_root_;
};

/// Batched identity channel: exactly one prediction per character instance,
/// in scene order. Backend failures become per-instance OTHERS entries
/// carrying an error.
std::vector<CharPrediction> identify_characters(const SceneGraph& scene,
                                                const IdentityBackend& backend);

/// Batched intensity channel, one score per character instance. Failures
/// become neutral (negative) scores carrying an error.
std::vector<EmotionIntensity> estimate_intensity(const SceneGraph& scene,
                                                 const IntensityBackend& backend);

struct OcrOutcome {
  SceneGraph scene;
  std::vector<std::string> warnings;
};

/// Replaces text contents with recognized strings. Backend failure leaves
/// empty strings and a warning.
OcrOutcome ocr_text(const SceneGraph& scene, const OcrBackend& backend);

IdentityMap to_identity_map(const std::vector<CharPrediction>& predictions);

}  // namespace comicvox
