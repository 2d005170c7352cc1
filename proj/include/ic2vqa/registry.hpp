#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ic2vqa/adapters.hpp"

namespace ic2vqa {

// One adapter entry of a campaign configuration.
struct AdapterSpec {
  std::string name;  // registry key, e.g. "toy-iqa"
  std::uint64_t seed = 0;
  std::size_t width = 8;
  std::size_t embed_dim = 0;
  std::size_t resize_side = 0;
  std::optional<std::filesystem::path> weights;
  std::string tap = "layer1";  // image metrics only
  double alpha = 1.0;          // image metrics only
  // Affine map of the raw score range onto [0,1] (video metrics only).
  std::optional<std::pair<double, double>> score_range;
};

enum class AdapterRole { kImage, kVideo, kEmbedding };

// Registry keys known to this build, including the pretrained plug-in names
// that are recognized but not bundled.
std::vector<std::string> registered_adapters(AdapterRole role);
bool is_registered(AdapterRole role, const std::string& name);

std::unique_ptr<LayeredImageMetric> make_image_metric(const AdapterSpec& spec);
std::unique_ptr<VideoQualityMetric> make_video_metric(const AdapterSpec& spec);
std::unique_ptr<EmbeddingModel> make_embedding_model(const AdapterSpec& spec);

}  // namespace ic2vqa
