#include "ic2vqa/registry.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/toy_models.hpp"

namespace ic2vqa {

namespace {

// Pretrained models are consumed as optional plug-ins and are not part of
// this build; their names are reserved so configs fail with a clear message.
const std::vector<std::string>& pretrained(AdapterRole role) {
  static const std::vector<std::string> image{"nima", "paq2piq", "spaq"};
  static const std::vector<std::string> video{"vsfa", "mdtvsfa", "tivqa"};
  static const std::vector<std::string> embed{"clip"};
  switch (role) {
    case AdapterRole::kImage:
      return image;
    case AdapterRole::kVideo:
      return video;
    case AdapterRole::kEmbedding:
      return embed;
  }
  return image;
}

std::string toy_name(AdapterRole role) {
  switch (role) {
    case AdapterRole::kImage:
      return "toy-iqa";
    case AdapterRole::kVideo:
      return "toy-vqa";
    case AdapterRole::kEmbedding:
      return "toy-embed";
  }
  return "";
}

ToyKind toy_kind(AdapterRole role) {
  switch (role) {
    case AdapterRole::kImage:
      return ToyKind::kIqa;
    case AdapterRole::kVideo:
      return ToyKind::kVqa;
    case AdapterRole::kEmbedding:
      return ToyKind::kEmbed;
  }
  return ToyKind::kIqa;
}

ToyWeights toy_weights(const AdapterSpec& spec, AdapterRole role) {
  if (spec.name != toy_name(role)) {
    const auto& reserved = pretrained(role);
    if (std::find(reserved.begin(), reserved.end(), spec.name) !=
        reserved.end()) {
      throw CapabilityError(fmt::format(
          "adapter '{}' wraps a pretrained model that is not bundled with this "
          "build; use '{}' or provide a plug-in",
          spec.name, toy_name(role)));
    }
    throw ConfigError(fmt::format("unknown adapter '{}' (known: {})",
                                  spec.name,
                                  fmt::join(registered_adapters(role), ", ")));
  }
  ToyWeights weights;
  if (spec.weights) {
    weights = ToyWeights::load(*spec.weights);
    if (weights.kind != toy_kind(role)) {
      throw ConfigError(fmt::format("weight file '{}' holds a {} model",
                                    spec.weights->string(),
                                    to_string(weights.kind)));
    }
  } else {
    ToyOptions options;
    options.width = spec.width;
    options.embed_dim = spec.embed_dim;
    options.preprocess.resize_side = spec.resize_side;
    weights = ToyWeights::generate(spec.seed, toy_kind(role), options);
  }
  return weights;
}

class NormalizedVqa final : public VideoQualityMetric {
 public:
  NormalizedVqa(std::unique_ptr<VideoQualityMetric> inner, double lo, double hi)
      : inner_(std::move(inner)), lo_(lo), hi_(hi) {}

  const std::string& name() const override { return inner_->name(); }
  std::size_t min_frames() const override { return inner_->min_frames(); }
  std::size_t num_taps() const override { return inner_->num_taps(); }
  std::vector<std::string> tap_names() const override {
    return inner_->tap_names();
  }
  std::vector<double> extract_video_features(const VideoClip& clip,
                                             std::size_t layer) const override {
    return inner_->extract_video_features(clip, layer);
  }

 protected:
  double evaluate(const VideoClip& clip) const override {
    return (inner_->score_video(clip) - lo_) / (hi_ - lo_);
  }

 private:
  std::unique_ptr<VideoQualityMetric> inner_;
  double lo_, hi_;
};

}  // namespace

std::vector<std::string> registered_adapters(AdapterRole role) {
  std::vector<std::string> names{toy_name(role)};
  const auto& reserved = pretrained(role);
  names.insert(names.end(), reserved.begin(), reserved.end());
  return names;
}

bool is_registered(AdapterRole role, const std::string& name) {
  const auto names = registered_adapters(role);
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::unique_ptr<LayeredImageMetric> make_image_metric(const AdapterSpec& spec) {
  return std::make_unique<ToyIqa>(toy_weights(spec, AdapterRole::kImage));
}

std::unique_ptr<VideoQualityMetric> make_video_metric(const AdapterSpec& spec) {
  std::unique_ptr<VideoQualityMetric> vqa =
      std::make_unique<ToyVqa>(toy_weights(spec, AdapterRole::kVideo));
  if (spec.score_range) {
    const auto [lo, hi] = *spec.score_range;
    if (!(hi > lo)) {
      throw ConfigError(fmt::format("score_range [{}, {}] is empty", lo, hi));
    }
    vqa = std::make_unique<NormalizedVqa>(std::move(vqa), lo, hi);
  }
  return vqa;
}

std::unique_ptr<EmbeddingModel> make_embedding_model(const AdapterSpec& spec) {
  return std::make_unique<ToyEmbedder>(
      toy_weights(spec, AdapterRole::kEmbedding));
}

}  // namespace ic2vqa
