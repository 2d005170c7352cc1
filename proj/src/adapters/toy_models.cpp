#include "ic2vqa/toy_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include "json.hpp"

#include "ic2vqa/errors.hpp"
#include "ic2vqa/rng.hpp"

namespace ic2vqa {

namespace {

constexpr std::array<std::size_t, ToyBackbone::kNumLayers> kStrides{2, 2, 2, 1};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Output index range [lo, hi) whose input position y*stride + k - 1 lies
// inside [0, in).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t in,
                                                      std::ptrdiff_t out,
                                                      std::ptrdiff_t stride,
                                                      std::ptrdiff_t k) {
  const std::ptrdiff_t lo = k == 0 ? 1 : 0;
  std::ptrdiff_t hi = in - k < 0 ? 0 : (in - k) / stride + 1;
  hi = std::min(hi, out);
  return {lo, std::max(lo, hi)};
}

Frame conv_forward(const ConvLayer& layer, const Frame& in) {
  const auto ih = static_cast<std::ptrdiff_t>(in.height());
  const auto iw = static_cast<std::ptrdiff_t>(in.width());
  const auto oh = static_cast<std::ptrdiff_t>(layer.output_extent(in.height()));
  const auto ow = static_cast<std::ptrdiff_t>(layer.output_extent(in.width()));
  const auto s = static_cast<std::ptrdiff_t>(layer.stride);
  Frame out(layer.out_channels, oh, ow);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    auto out_plane = out.plane(o);
    std::fill(out_plane.begin(), out_plane.end(), layer.bias[o]);
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const auto in_plane = in.plane(c);
      for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
        const auto [y_lo, y_hi] = valid_range(ih, oh, s, ky);
        for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
          const auto [x_lo, x_hi] = valid_range(iw, ow, s, kx);
          const double w = layer.weight(o, c, ky, kx);
          for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
            const double* src = in_plane.data() + (y * s + ky - 1) * iw + kx - 1;
            double* dst = out_plane.data() + y * ow;
            for (std::ptrdiff_t x = x_lo; x < x_hi; ++x) {
              dst[x] += w * src[x * s];
            }
          }
        }
      }
    }
  }
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

// grad is with respect to the layer's pre-activation.
Frame conv_backward(const ConvLayer& layer, const Frame& grad,
                    std::size_t in_h, std::size_t in_w) {
  const auto ih = static_cast<std::ptrdiff_t>(in_h);
  const auto iw = static_cast<std::ptrdiff_t>(in_w);
  const auto oh = static_cast<std::ptrdiff_t>(grad.height());
  const auto ow = static_cast<std::ptrdiff_t>(grad.width());
  const auto s = static_cast<std::ptrdiff_t>(layer.stride);
  Frame grad_in(layer.in_channels, in_h, in_w);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const auto g_plane = grad.plane(o);
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      auto in_plane = grad_in.plane(c);
      for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
        const auto [y_lo, y_hi] = valid_range(ih, oh, s, ky);
        for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
          const auto [x_lo, x_hi] = valid_range(iw, ow, s, kx);
          const double w = layer.weight(o, c, ky, kx);
          for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
            double* dst = in_plane.data() + (y * s + ky - 1) * iw + kx - 1;
            const double* src = g_plane.data() + y * ow;
            for (std::ptrdiff_t x = x_lo; x < x_hi; ++x) {
              dst[x * s] += w * src[x];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

std::vector<double> linear(const LinearHead& head, std::span<const double> x) {
  std::vector<double> y(head.bias);
  for (std::size_t o = 0; o < head.out; ++o) {
    for (std::size_t i = 0; i < head.in; ++i) {
      y[o] += head.weights[o * head.in + i] * x[i];
    }
  }
  return y;
}

std::vector<double> linear_backward(const LinearHead& head,
                                    std::span<const double> grad_y) {
  std::vector<double> grad_x(head.in, 0.0);
  for (std::size_t o = 0; o < head.out; ++o) {
    for (std::size_t i = 0; i < head.in; ++i) {
      grad_x[i] += head.weights[o * head.in + i] * grad_y[o];
    }
  }
  return grad_x;
}

// Spreads a gradient on the pooled vector evenly over the activation.
Frame pool_backward(std::span<const double> grad_pooled, const Frame& shape) {
  Frame g(shape.channels(), shape.height(), shape.width());
  const double inv = 1.0 / static_cast<double>(shape.height() * shape.width());
  for (std::size_t c = 0; c < shape.channels(); ++c) {
    auto plane = g.plane(c);
    std::fill(plane.begin(), plane.end(), grad_pooled[c] * inv);
  }
  return g;
}

std::vector<double> flatten(const Frame& f) {
  return {f.values().begin(), f.values().end()};
}

LinearHead random_head(Rng& rng, std::size_t in, std::size_t out,
                       double gain) {
  LinearHead head;
  head.in = in;
  head.out = out;
  head.weights.resize(in * out);
  head.bias.assign(out, 0.0);
  const double scale = gain / std::sqrt(static_cast<double>(in));
  for (double& w : head.weights) w = rng.normal() * scale;
  return head;
}

std::string default_name(ToyKind kind, std::uint64_t seed) {
  return fmt::format("toy-{}-s{}", to_string(kind), seed);
}

}  // namespace

Frame Preprocess::apply(const Frame& frame) const {
  Frame out = resize_side == 0
                  ? frame
                  : bilinear_resize(frame, resize_side, resize_side);
  for (std::size_t c = 0; c < out.channels(); ++c) {
    const double inv = 1.0 / stddev[c];
    for (double& v : out.plane(c)) v = (v - mean[c]) * inv;
  }
  return out;
}

Frame Preprocess::backward(const Frame& grad, std::size_t in_h,
                           std::size_t in_w) const {
  Frame g = grad;
  for (std::size_t c = 0; c < g.channels(); ++c) {
    const double inv = 1.0 / stddev[c];
    for (double& v : g.plane(c)) v *= inv;
  }
  if (resize_side != 0) g = bilinear_resize_backward(g, in_h, in_w);
  return g;
}

ToyBackbone::ToyBackbone(std::vector<ConvLayer> layers)
    : layers_(std::move(layers)) {
  if (layers_.size() != kNumLayers) {
    throw ConfigError(fmt::format("toy backbone needs {} layers, got {}",
                                  kNumLayers, layers_.size()));
  }
}

ToyBackbone ToyBackbone::random(std::uint64_t seed, std::size_t width) {
  Rng rng(derive_seed(seed, "backbone"));
  std::vector<ConvLayer> layers;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    ConvLayer layer;
    layer.in_channels = l == 0 ? 3 : width;
    layer.out_channels = width;
    layer.stride = kStrides[l];
    layer.weights.resize(layer.out_channels * layer.in_channels * 9);
    const double scale =
        1.0 / std::sqrt(static_cast<double>(layer.in_channels * 9));
    for (double& w : layer.weights) w = rng.normal() * scale;
    layer.bias.resize(width);
    for (double& b : layer.bias) b = rng.normal() * 0.1;
    layers.push_back(std::move(layer));
  }
  return ToyBackbone(std::move(layers));
}

ToyBackbone::Trace ToyBackbone::forward(const Frame& input,
                                        std::size_t upto) const {
  Trace trace;
  trace.activations.reserve(upto + 1);
  trace.activations.push_back(input);
  for (std::size_t l = 0; l < upto; ++l) {
    trace.activations.push_back(conv_forward(layers_[l], trace.activations[l]));
  }
  return trace;
}

Frame ToyBackbone::backward(const Trace& trace, std::size_t layer,
                            Frame grad) const {
  ++backward_calls_;
  for (std::size_t l = layer; l >= 1; --l) {
    const Frame& out = trace.activations[l];
    auto g = grad.values();
    const auto a = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
    const Frame& in = trace.activations[l - 1];
    grad = conv_backward(layers_[l - 1], grad, in.height(), in.width());
  }
  return grad;
}

std::vector<double> global_average_pool(const Frame& activation) {
  std::vector<double> pooled(activation.channels());
  const double inv =
      1.0 / static_cast<double>(activation.height() * activation.width());
  for (std::size_t c = 0; c < activation.channels(); ++c) {
    double sum = 0.0;
    for (double v : activation.plane(c)) sum += v;
    pooled[c] = sum * inv;
  }
  return pooled;
}

// ---------------------------------------------------------------------------
// Weights

ToyWeights ToyWeights::generate(std::uint64_t seed, ToyKind kind,
                                const ToyOptions& options) {
  if (options.width == 0) throw ConfigError("toy model width must be positive");
  ToyWeights w;
  w.kind = kind;
  w.name = default_name(kind, seed);
  w.preprocess = options.preprocess;
  w.backbone = ToyBackbone::random(seed, options.width).layers();
  switch (kind) {
    // The video model scores every frame with the image model's head.
    case ToyKind::kIqa:
    case ToyKind::kVqa: {
      Rng rng(derive_seed(seed, "head/iqa"));
      w.head = random_head(rng, options.width, 1, 2.0);
      break;
    }
    case ToyKind::kEmbed: {
      Rng rng(derive_seed(seed, "head/embed"));
      const std::size_t dim =
          options.embed_dim == 0 ? 2 * options.width : options.embed_dim;
      w.head = random_head(rng, options.width, dim, 1.0);
      break;
    }
  }
  return w;
}

void ToyWeights::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["name"] = name;
  j["preprocess"] = {{"mean", preprocess.mean},
                     {"stddev", preprocess.stddev},
                     {"resize_side", preprocess.resize_side}};
  for (const ConvLayer& layer : backbone) {
    j["backbone"].push_back({{"in_channels", layer.in_channels},
                             {"out_channels", layer.out_channels},
                             {"stride", layer.stride},
                             {"weights", layer.weights},
                             {"bias", layer.bias}});
  }
  j["head"] = {{"in", head.in},
               {"out", head.out},
               {"weights", head.weights},
               {"bias", head.bias}};
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(1) << '\n';
}

ToyWeights ToyWeights::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("cannot open '{}'", path.string()));
  ToyWeights w;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    w.kind = parse_toy_kind(j.at("kind").get<std::string>());
    w.name = j.at("name").get<std::string>();
    const auto& p = j.at("preprocess");
    w.preprocess.mean = p.at("mean").get<std::array<double, 3>>();
    w.preprocess.stddev = p.at("stddev").get<std::array<double, 3>>();
    w.preprocess.resize_side = p.at("resize_side").get<std::size_t>();
    for (const auto& l : j.at("backbone")) {
      ConvLayer layer;
      layer.in_channels = l.at("in_channels").get<std::size_t>();
      layer.out_channels = l.at("out_channels").get<std::size_t>();
      layer.stride = l.at("stride").get<std::size_t>();
      layer.weights = l.at("weights").get<std::vector<double>>();
      layer.bias = l.at("bias").get<std::vector<double>>();
      if (layer.weights.size() != layer.in_channels * layer.out_channels * 9 ||
          layer.bias.size() != layer.out_channels || layer.stride == 0) {
        throw FormatError("inconsistent conv layer");
      }
      w.backbone.push_back(std::move(layer));
    }
    const auto& h = j.at("head");
    w.head.in = h.at("in").get<std::size_t>();
    w.head.out = h.at("out").get<std::size_t>();
    w.head.weights = h.at("weights").get<std::vector<double>>();
    w.head.bias = h.at("bias").get<std::vector<double>>();
    if (w.head.weights.size() != w.head.in * w.head.out ||
        w.head.bias.size() != w.head.out ||
        w.backbone.size() != ToyBackbone::kNumLayers ||
        w.head.in != w.backbone.back().out_channels) {
      throw FormatError("inconsistent head");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(
        fmt::format("weight file '{}': {}", path.string(), e.what()));
  } catch (const FormatError& e) {
    throw FormatError(
        fmt::format("weight file '{}': {}", path.string(), e.what()));
  }
  return w;
}

// ---------------------------------------------------------------------------
// IQA

ToyIqa::ToyIqa(ToyWeights weights)
    : name_(std::move(weights.name)),
      preprocess_(weights.preprocess),
      backbone_(std::move(weights.backbone)),
      head_(std::move(weights.head)) {
  if (head_.out != 1) throw ConfigError("toy IQA head must be scalar");
}

std::vector<std::string> ToyIqa::tap_names() const {
  return {"layer1", "layer2", "layer3", "layer4", "score"};
}

double ToyIqa::score_image(const Frame& frame) const {
  require_min_side(frame, min_input_side(), name_);
  const auto trace = backbone_.forward(preprocess_.apply(frame));
  const auto pooled = global_average_pool(trace.activations.back());
  return sigmoid(linear(head_, pooled)[0]);
}

Pullback ToyIqa::score_with_pullback(const Frame& frame) const {
  require_min_side(frame, min_input_side(), name_);
  auto trace = backbone_.forward(preprocess_.apply(frame));
  const auto pooled = global_average_pool(trace.activations.back());
  const double s = sigmoid(linear(head_, pooled)[0]);
  const std::size_t h = frame.height();
  const std::size_t w = frame.width();
  return {{s},
          [this, s, h, w, trace = std::move(trace)](std::span<const double> u) {
            const double dz = u[0] * s * (1.0 - s);
            const auto grad_pooled = linear_backward(head_, std::span(&dz, 1));
            Frame g = pool_backward(grad_pooled, trace.activations.back());
            g = backbone_.backward(trace, ToyBackbone::kNumLayers, std::move(g));
            return preprocess_.backward(g, h, w);
          }};
}

std::vector<double> ToyIqa::features_at_layer(const Frame& frame,
                                              std::size_t k) const {
  require_tap(k, num_layers(), name_);
  if (k == num_layers()) return {score_image(frame)};
  require_min_side(frame, min_input_side(), name_);
  const auto trace = backbone_.forward(preprocess_.apply(frame), k);
  return flatten(trace.activations[k]);
}

Pullback ToyIqa::features_with_pullback(const Frame& frame,
                                        std::size_t k) const {
  require_tap(k, num_layers(), name_);
  if (k == num_layers()) return score_with_pullback(frame);
  require_min_side(frame, min_input_side(), name_);
  auto trace = backbone_.forward(preprocess_.apply(frame), k);
  auto value = flatten(trace.activations[k]);
  const std::size_t h = frame.height();
  const std::size_t w = frame.width();
  return {std::move(value),
          [this, k, h, w, trace = std::move(trace)](std::span<const double> u) {
            const Frame& act = trace.activations[k];
            Frame g(act.channels(), act.height(), act.width());
            std::copy(u.begin(), u.end(), g.values().begin());
            g = backbone_.backward(trace, k, std::move(g));
            return preprocess_.backward(g, h, w);
          }};
}

std::vector<double> ToyIqa::pooled_features(const Frame& frame,
                                            std::size_t k) const {
  require_tap(k, num_layers(), name_);
  if (k == num_layers()) return {score_image(frame)};
  require_min_side(frame, min_input_side(), name_);
  const auto trace = backbone_.forward(preprocess_.apply(frame), k);
  return global_average_pool(trace.activations[k]);
}

// ---------------------------------------------------------------------------
// VQA

ToyVqa::ToyVqa(ToyWeights weights)
    : name_(std::move(weights.name)),
      preprocess_(weights.preprocess),
      backbone_(std::move(weights.backbone)),
      head_(std::move(weights.head)) {
  if (head_.out != 1) throw ConfigError("toy VQA head must be scalar");
}

std::vector<std::string> ToyVqa::tap_names() const {
  return {"layer1", "layer2", "layer3", "layer4"};
}

double ToyVqa::frame_score(const Frame& frame) const {
  require_min_side(frame, 4, name_);
  const auto trace = backbone_.forward(preprocess_.apply(frame));
  const auto pooled = global_average_pool(trace.activations.back());
  return sigmoid(linear(head_, pooled)[0]);
}

double ToyVqa::evaluate(const VideoClip& clip) const {
  if (clip.frames.size() < min_frames()) {
    throw ShapeError(fmt::format("{}: clip has {} frames, need at least {}",
                                 name_, clip.frames.size(), min_frames()));
  }
  double sum = 0.0;
  for (const Frame& frame : clip.frames) sum += frame_score(frame);
  return sum / static_cast<double>(clip.frames.size());
}

std::vector<double> ToyVqa::extract_video_features(const VideoClip& clip,
                                                   std::size_t layer) const {
  require_tap(layer, num_taps(), name_);
  if (clip.frames.empty()) throw ShapeError("clip has no frames");
  std::vector<double> mean(backbone_.width(), 0.0);
  for (const Frame& frame : clip.frames) {
    require_min_side(frame, 4, name_);
    const auto trace = backbone_.forward(preprocess_.apply(frame), layer);
    const auto pooled = global_average_pool(trace.activations[layer]);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += pooled[c];
  }
  for (double& v : mean) v /= static_cast<double>(clip.frames.size());
  return mean;
}

// ---------------------------------------------------------------------------
// Embedder

ToyEmbedder::ToyEmbedder(ToyWeights weights)
    : name_(std::move(weights.name)),
      preprocess_(weights.preprocess),
      backbone_(std::move(weights.backbone)),
      head_(std::move(weights.head)) {}

std::vector<double> ToyEmbedder::embed_frame(const Frame& frame) const {
  require_min_side(frame, 4, name_);
  const auto trace = backbone_.forward(preprocess_.apply(frame));
  return linear(head_, global_average_pool(trace.activations.back()));
}

Pullback ToyEmbedder::embed_with_pullback(const Frame& frame) const {
  require_min_side(frame, 4, name_);
  auto trace = backbone_.forward(preprocess_.apply(frame));
  auto value = linear(head_, global_average_pool(trace.activations.back()));
  const std::size_t h = frame.height();
  const std::size_t w = frame.width();
  return {std::move(value),
          [this, h, w, trace = std::move(trace)](std::span<const double> u) {
            const auto grad_pooled = linear_backward(head_, u);
            Frame g = pool_backward(grad_pooled, trace.activations.back());
            g = backbone_.backward(trace, ToyBackbone::kNumLayers, std::move(g));
            return preprocess_.backward(g, h, w);
          }};
}

// ---------------------------------------------------------------------------
// Factory

ToyAdapter make_toy_metric(std::uint64_t seed, ToyKind kind,
                           std::size_t width) {
  ToyOptions options;
  options.width = width;
  return make_toy_metric(seed, kind, options);
}

ToyAdapter make_toy_metric(std::uint64_t seed, ToyKind kind,
                           const ToyOptions& options) {
  switch (kind) {
    case ToyKind::kIqa:
      return make_toy_iqa(seed, options);
    case ToyKind::kVqa:
      return make_toy_vqa(seed, options);
    case ToyKind::kEmbed:
      return make_toy_embedder(seed, options);
  }
  throw ConfigError("unknown toy kind");
}

std::unique_ptr<ToyIqa> make_toy_iqa(std::uint64_t seed,
                                     const ToyOptions& options) {
  return std::make_unique<ToyIqa>(
      ToyWeights::generate(seed, ToyKind::kIqa, options));
}

std::unique_ptr<ToyVqa> make_toy_vqa(std::uint64_t seed,
                                     const ToyOptions& options) {
  return std::make_unique<ToyVqa>(
      ToyWeights::generate(seed, ToyKind::kVqa, options));
}

std::unique_ptr<ToyEmbedder> make_toy_embedder(std::uint64_t seed,
                                               const ToyOptions& options) {
  return std::make_unique<ToyEmbedder>(
      ToyWeights::generate(seed, ToyKind::kEmbed, options));
}

std::string to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::kIqa:
      return "iqa";
    case ToyKind::kVqa:
      return "vqa";
    case ToyKind::kEmbed:
      return "embed";
  }
  return "?";
}

ToyKind parse_toy_kind(const std::string& text) {
  if (text == "iqa") return ToyKind::kIqa;
  if (text == "vqa") return ToyKind::kVqa;
  if (text == "embed") return ToyKind::kEmbed;
  throw ConfigError(fmt::format("unknown toy model kind '{}'", text));
}

}  // namespace ic2vqa
