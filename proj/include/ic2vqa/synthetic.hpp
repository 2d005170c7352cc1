#pragma once

#include <cstdint>
#include <string>

#include "ic2vqa/media.hpp"

namespace ic2vqa {

// Deterministic test video: a drifting colour gradient, a fixed texture and a
// few moving soft-edged blobs. Values stay inside [0.02, 0.98].
VideoClip synthesize_clip(std::uint64_t seed, std::size_t frames,
                          std::size_t height, std::size_t width,
                          std::string source_id);

}  // namespace ic2vqa
