#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"

namespace ic2vqa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects schema violations so that one error lists all of them.
class Checker {
 public:
  void fail(const std::string& field, const std::string& message) {
    errors_.push_back(fmt::format("{}: {}", field, message));
  }

  bool object(const json& j, const std::string& field,
              std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
      fail(field, "expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
            return key == k;
          }) == keys.end()) {
        fail(join(field, key), "unknown field");
      }
    }
    return true;
  }

  static std::string join(const std::string& field, const std::string& key) {
    return field.empty() ? key : field + "." + key;
  }

  template <typename T>
  std::optional<T> get(const json& parent, const std::string& field,
                       const char* key);

  std::optional<std::uint64_t> unsigned_value(const json& j,
                                              const std::string& field) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
      const auto v = j.get<std::int64_t>();
      if (v >= 0) return static_cast<std::uint64_t>(v);
      fail(field, fmt::format("{} must be >= 0", v));
      return std::nullopt;
    }
    fail(field, "expected a non-negative integer");
    return std::nullopt;
  }

  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

template <>
std::optional<bool> Checker::get<bool>(const json& parent,
                                       const std::string& field,
                                       const char* key) {
  if (!parent.contains(key)) return std::nullopt;
  const json& j = parent.at(key);
  if (!j.is_boolean()) {
    fail(join(field, key), "expected true or false");
    return std::nullopt;
  }
  return j.get<bool>();
}

template <>
std::optional<double> Checker::get<double>(const json& parent,
                                           const std::string& field,
                                           const char* key) {
  if (!parent.contains(key)) return std::nullopt;
  const json& j = parent.at(key);
  if (!j.is_number()) {
    fail(join(field, key), "expected a number");
    return std::nullopt;
  }
  return j.get<double>();
}

template <>
std::optional<std::string> Checker::get<std::string>(const json& parent,
                                                     const std::string& field,
                                                     const char* key) {
  if (!parent.contains(key)) return std::nullopt;
  const json& j = parent.at(key);
  if (!j.is_string()) {
    fail(join(field, key), "expected a string");
    return std::nullopt;
  }
  return j.get<std::string>();
}

template <>
std::optional<std::uint64_t> Checker::get<std::uint64_t>(
    const json& parent, const std::string& field, const char* key) {
  if (!parent.contains(key)) return std::nullopt;
  return unsigned_value(parent.at(key), join(field, key));
}

// A number or a "numerator/denominator" string.
std::optional<double> parse_fraction(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) return std::nullopt;
  const std::string s = j.get<std::string>();
  const auto slash = s.find('/');
  auto number = [](std::string_view text) -> std::optional<double> {
    double v = 0.0;
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      return std::nullopt;
    }
    return v;
  };
  if (slash == std::string::npos) return number(s);
  const auto num = number(std::string_view(s).substr(0, slash));
  const auto den = number(std::string_view(s).substr(slash + 1));
  if (!num || !den || *den == 0.0) return std::nullopt;
  return *num / *den;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

std::optional<AdapterSpec> parse_adapter(Checker& check, const json& j,
                                         const std::string& field,
                                         AdapterRole role,
                                         const fs::path& base_dir) {
  if (!check.object(j, field,
                    {"name", "seed", "width", "embed_dim", "resize_side",
                     "weights", "tap", "alpha", "score_range"})) {
    return std::nullopt;
  }
  AdapterSpec spec;
  const auto name = check.get<std::string>(j, field, "name");
  if (!name) {
    if (!j.contains("name")) check.fail(Checker::join(field, "name"), "missing");
    return std::nullopt;
  }
  spec.name = *name;
  bool ok = true;
  if (!is_registered(role, spec.name)) {
    check.fail(Checker::join(field, "name"),
               fmt::format("unknown adapter '{}'", spec.name));
    ok = false;
  }
  if (auto v = check.get<std::uint64_t>(j, field, "seed")) spec.seed = *v;
  if (auto v = check.get<std::uint64_t>(j, field, "width")) {
    if (*v == 0) {
      check.fail(Checker::join(field, "width"), "must be positive");
      ok = false;
    }
    spec.width = *v;
  }
  if (auto v = check.get<std::uint64_t>(j, field, "embed_dim")) {
    spec.embed_dim = *v;
  }
  if (auto v = check.get<std::uint64_t>(j, field, "resize_side")) {
    spec.resize_side = *v;
  }
  if (auto v = check.get<std::string>(j, field, "weights")) {
    spec.weights = resolve(base_dir, *v);
  }
  if (j.contains("tap") || j.contains("alpha")) {
    if (role != AdapterRole::kImage) {
      if (j.contains("tap")) {
        check.fail(Checker::join(field, "tap"), "only valid for image metrics");
      }
      if (j.contains("alpha")) {
        check.fail(Checker::join(field, "alpha"),
                   "only valid for image metrics");
      }
      ok = false;
    }
  }
  if (j.contains("tap")) {
    const json& t = j.at("tap");
    if (t.is_string()) {
      spec.tap = t.get<std::string>();
    } else if (t.is_number_unsigned()) {
      spec.tap = std::to_string(t.get<std::uint64_t>());
    } else {
      check.fail(Checker::join(field, "tap"), "expected a layer name or index");
      ok = false;
    }
  }
  if (auto v = check.get<double>(j, field, "alpha")) {
    if (!(*v > 0.0) || !std::isfinite(*v)) {
      check.fail(Checker::join(field, "alpha"),
                 fmt::format("{} must be positive", *v));
      ok = false;
    }
    spec.alpha = *v;
  }
  if (j.contains("score_range")) {
    const json& r = j.at("score_range");
    const std::string f = Checker::join(field, "score_range");
    if (role != AdapterRole::kVideo) {
      check.fail(f, "only valid for video metrics");
      ok = false;
    } else if (!r.is_array() || r.size() != 2 || !r[0].is_number() ||
               !r[1].is_number()) {
      check.fail(f, "expected [low, high]");
      ok = false;
    } else if (!(r[1].get<double>() > r[0].get<double>())) {
      check.fail(f, "high must exceed low");
      ok = false;
    } else {
      spec.score_range = {r[0].get<double>(), r[1].get<double>()};
    }
  }
  if (!ok) return std::nullopt;
  return spec;
}

json adapter_to_json(const AdapterSpec& spec, AdapterRole role) {
  json j{{"name", spec.name},
         {"seed", spec.seed},
         {"width", spec.width},
         {"embed_dim", spec.embed_dim},
         {"resize_side", spec.resize_side}};
  if (spec.weights) j["weights"] = spec.weights->string();
  if (role == AdapterRole::kImage) {
    j["tap"] = spec.tap;
    j["alpha"] = spec.alpha;
  }
  if (spec.score_range) {
    j["score_range"] = {spec.score_range->first, spec.score_range->second};
  }
  return j;
}

void parse_dataset(Checker& check, const json& j, DatasetSpec& out,
                   const fs::path& base_dir) {
  const std::string field = "dataset";
  if (!check.object(j, field,
                    {"videos", "frame_pattern", "synthetic", "max_frames",
                     "scale"})) {
    return;
  }
  if (j.contains("videos")) {
    const json& v = j.at("videos");
    if (!v.is_array()) {
      check.fail("dataset.videos", "expected a list of paths");
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) {
          check.fail(fmt::format("dataset.videos[{}]", i), "expected a path");
        } else {
          out.videos.push_back(resolve(base_dir, v[i].get<std::string>()));
        }
      }
    }
  }
  if (auto v = check.get<std::string>(j, field, "frame_pattern")) {
    out.frame_pattern = *v;
  }
  if (auto v = check.get<std::uint64_t>(j, field, "max_frames")) {
    out.max_frames = *v;
  }
  if (auto v = check.get<std::uint64_t>(j, field, "scale")) out.scale = *v;
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    const std::string sf = "dataset.synthetic";
    if (check.object(s, sf, {"count", "frames", "height", "width", "seed"})) {
      SyntheticSpec syn;
      if (auto v = check.get<std::uint64_t>(s, sf, "count")) syn.count = *v;
      if (auto v = check.get<std::uint64_t>(s, sf, "frames")) syn.frames = *v;
      if (auto v = check.get<std::uint64_t>(s, sf, "height")) syn.height = *v;
      if (auto v = check.get<std::uint64_t>(s, sf, "width")) syn.width = *v;
      if (auto v = check.get<std::uint64_t>(s, sf, "seed")) syn.seed = *v;
      if (syn.count == 0) check.fail(sf + ".count", "must be positive");
      if (syn.frames == 0) check.fail(sf + ".frames", "must be positive");
      if (syn.height < kMinClipSide) {
        check.fail(sf + ".height", fmt::format("must be >= {}", kMinClipSide));
      }
      if (syn.width < kMinClipSide) {
        check.fail(sf + ".width", fmt::format("must be >= {}", kMinClipSide));
      }
      out.synthetic = syn;
    }
  }
  if (out.videos.empty() && !out.synthetic) {
    check.fail(field, "needs 'videos' or 'synthetic'");
  }
}

void parse_adapters(Checker& check, const json& j, CampaignConfig& out,
                    const fs::path& base_dir) {
  const std::string field = "adapters";
  if (!check.object(j, field, {"image_metrics", "embedder", "vqa"})) return;
  if (j.contains("image_metrics")) {
    const json& list = j.at("image_metrics");
    if (!list.is_array()) {
      check.fail("adapters.image_metrics", "expected a list of adapters");
    } else {
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (auto spec = parse_adapter(
                check, list[i], fmt::format("adapters.image_metrics[{}]", i),
                AdapterRole::kImage, base_dir)) {
          out.image_metrics.push_back(*spec);
        }
      }
    }
  }
  if (j.contains("embedder") && !j.at("embedder").is_null()) {
    out.embedder = parse_adapter(check, j.at("embedder"), "adapters.embedder",
                                 AdapterRole::kEmbedding, base_dir);
  }
  if (j.contains("vqa")) {
    if (auto spec = parse_adapter(check, j.at("vqa"), "adapters.vqa",
                                  AdapterRole::kVideo, base_dir)) {
      out.vqa = *spec;
    }
  } else {
    check.fail("adapters.vqa", "missing");
  }
}

void parse_attack(Checker& check, const json& j, CampaignConfig& out) {
  const std::string field = "attack";
  if (!check.object(j, field,
                    {"kind", "step_size", "clamp_range", "losses",
                     "multi_metric", "query_budget", "p_init"})) {
    return;
  }
  AttackConfig& a = out.attack;
  if (auto v = check.get<std::string>(j, field, "kind")) {
    try {
      a.kind = parse_attack_kind(*v);
    } catch (const Error&) {
      check.fail("attack.kind", fmt::format("unknown attack kind '{}'", *v));
    }
  }
  if (auto v = check.get<double>(j, field, "step_size")) {
    if (!(*v > 0.0)) {
      check.fail("attack.step_size", fmt::format("{} must be positive", *v));
    }
    a.step_size = *v;
  }
  if (auto v = check.get<bool>(j, field, "clamp_range")) a.clamp_range = *v;
  if (auto v = check.get<std::string>(j, field, "multi_metric")) {
    try {
      a.multi_metric = parse_multi_metric_mode(*v);
    } catch (const Error&) {
      check.fail("attack.multi_metric",
                 fmt::format("unknown mode '{}' (sequential, summed)", *v));
    }
  }
  if (auto v = check.get<std::uint64_t>(j, field, "query_budget")) {
    a.query_budget = *v;
  }
  if (auto v = check.get<double>(j, field, "p_init")) {
    if (!(*v > 0.0 && *v <= 1.0)) {
      check.fail("attack.p_init", fmt::format("{} outside (0,1]", *v));
    }
    a.square_p_init = *v;
  }
  if (j.contains("losses")) {
    const json& l = j.at("losses");
    if (check.object(l, "attack.losses", {"xlayer", "embed", "temporal"})) {
      if (auto v = check.get<bool>(l, "attack.losses", "xlayer")) {
        a.loss.use_xlayer = *v;
      }
      if (auto v = check.get<bool>(l, "attack.losses", "embed")) {
        a.loss.use_embed = *v;
      }
      if (auto v = check.get<bool>(l, "attack.losses", "temporal")) {
        a.loss.use_temporal = *v;
      }
    }
  }
}

void parse_grid(Checker& check, const json& j, CampaignConfig& out) {
  if (!check.object(j, "grid", {"epsilon", "iterations"})) return;
  if (!j.contains("epsilon") || !j.at("epsilon").is_array() ||
      j.at("epsilon").empty()) {
    check.fail("grid.epsilon", "expected a non-empty list");
  } else {
    const json& eps = j.at("epsilon");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const std::string f = fmt::format("grid.epsilon[{}]", i);
      const auto v = parse_fraction(eps[i]);
      if (!v) {
        check.fail(f, "expected a number or 'a/b'");
      } else if (!(*v >= 0.0 && *v <= 1.0)) {
        check.fail(f, fmt::format("{} outside [0,1]", eps[i].dump()));
      } else {
        out.grid_epsilon.push_back(*v);
      }
    }
  }
  if (!j.contains("iterations") || !j.at("iterations").is_array() ||
      j.at("iterations").empty()) {
    check.fail("grid.iterations", "expected a non-empty list");
  } else {
    const json& its = j.at("iterations");
    for (std::size_t i = 0; i < its.size(); ++i) {
      if (auto v =
              check.unsigned_value(its[i], fmt::format("grid.iterations[{}]", i))) {
        out.grid_iterations.push_back(*v);
      }
    }
  }
  auto dedupe = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(out.grid_epsilon);
  dedupe(out.grid_iterations);
}

void parse_report(Checker& check, const json& j, CampaignConfig& out,
                  const fs::path& base_dir) {
  if (!check.object(j, "report", {"label", "heatmap_controls",
                                  "heatmap_videos"})) {
    return;
  }
  if (auto v = check.get<std::string>(j, "report", "label")) {
    out.report.label = *v;
  }
  if (auto v = check.get<std::uint64_t>(j, "report", "heatmap_videos")) {
    out.report.heatmap_videos = *v;
  }
  if (j.contains("heatmap_controls")) {
    const json& list = j.at("heatmap_controls");
    if (!list.is_array()) {
      check.fail("report.heatmap_controls", "expected a list of adapters");
      return;
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (auto spec = parse_adapter(
              check, list[i], fmt::format("report.heatmap_controls[{}]", i),
              AdapterRole::kImage, base_dir)) {
        out.report.heatmap_controls.push_back(*spec);
      }
    }
  }
}

}  // namespace

CampaignConfig parse_config(const json& doc, const fs::path& base_dir) {
  Checker check;
  CampaignConfig out;
  if (!check.object(doc, "",
                    {"name", "seed", "workers", "output", "dataset", "adapters",
                     "attack", "grid", "write_videos", "report"})) {
    throw ConfigError("invalid config:\n  config: expected an object");
  }
  if (auto v = check.get<std::string>(doc, "", "name")) {
    if (v->empty() || v->find_first_of("/\\") != std::string::npos) {
      check.fail("name", "must be a non-empty file-name-safe string");
    }
    out.name = *v;
  }
  if (auto v = check.get<std::uint64_t>(doc, "", "seed")) out.seed = *v;
  if (auto v = check.get<std::uint64_t>(doc, "", "workers")) out.workers = *v;
  if (auto v = check.get<std::string>(doc, "", "output")) out.output = *v;
  if (auto v = check.get<bool>(doc, "", "write_videos")) out.write_videos = *v;

  if (doc.contains("dataset")) {
    parse_dataset(check, doc.at("dataset"), out.dataset, base_dir);
  } else {
    check.fail("dataset", "missing");
  }
  if (doc.contains("adapters")) {
    parse_adapters(check, doc.at("adapters"), out, base_dir);
  } else {
    check.fail("adapters", "missing");
  }
  if (doc.contains("attack")) parse_attack(check, doc.at("attack"), out);
  if (doc.contains("grid")) {
    parse_grid(check, doc.at("grid"), out);
  } else {
    check.fail("grid", "missing");
  }
  if (doc.contains("report")) {
    parse_report(check, doc.at("report"), out, base_dir);
  }

  const AttackKind kind = out.attack.kind;
  auto reported = [&](const std::string& prefix) {
    return std::any_of(check.errors().begin(), check.errors().end(),
                       [&](const std::string& e) { return e.starts_with(prefix); });
  };
  if ((kind == AttackKind::kIc2vqa || kind == AttackKind::kPgd) &&
      out.image_metrics.empty() && !reported("adapters")) {
    check.fail("adapters.image_metrics",
               fmt::format("the {} attack needs at least one image metric",
                           to_string(kind)));
  }
  if (kind == AttackKind::kIc2vqa) {
    const LossConfig& l = out.attack.loss;
    if (!l.use_xlayer && !l.use_embed && !l.use_temporal) {
      check.fail("attack.losses", "at least one loss term must be enabled");
    }
    if (l.use_embed && !out.embedder && !reported("adapters.embedder")) {
      check.fail("adapters.embedder", "required by losses.embed");
    }
  }

  if (!check.errors().empty()) {
    std::string message = "invalid config:";
    for (const auto& e : check.errors()) message += "\n  " + e;
    throw ConfigError(message);
  }
  return out;
}

CampaignConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("config '{}' not found", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(
        fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(doc, path.parent_path());
}

json config_to_json(const CampaignConfig& c) {
  json dataset{{"videos", json::array()},
               {"frame_pattern", c.dataset.frame_pattern},
               {"max_frames", c.dataset.max_frames},
               {"scale", c.dataset.scale}};
  for (const auto& v : c.dataset.videos) dataset["videos"].push_back(v.string());
  if (c.dataset.synthetic) {
    const SyntheticSpec& s = *c.dataset.synthetic;
    dataset["synthetic"] = {{"count", s.count},
                            {"frames", s.frames},
                            {"height", s.height},
                            {"width", s.width},
                            {"seed", s.seed}};
  }
  json adapters{{"image_metrics", json::array()},
                {"vqa", adapter_to_json(c.vqa, AdapterRole::kVideo)}};
  for (const auto& m : c.image_metrics) {
    adapters["image_metrics"].push_back(adapter_to_json(m, AdapterRole::kImage));
  }
  if (c.embedder) {
    adapters["embedder"] = adapter_to_json(*c.embedder, AdapterRole::kEmbedding);
  }
  const AttackConfig& a = c.attack;
  json attack{{"kind", to_string(a.kind)},
              {"step_size", a.step_size},
              {"clamp_range", a.clamp_range},
              {"losses",
               {{"xlayer", a.loss.use_xlayer},
                {"embed", a.loss.use_embed},
                {"temporal", a.loss.use_temporal}}},
              {"multi_metric", to_string(a.multi_metric)},
              {"query_budget", a.query_budget},
              {"p_init", a.square_p_init}};
  return json{{"name", c.name},
              {"seed", c.seed},
              {"dataset", dataset},
              {"adapters", adapters},
              {"attack", attack},
              {"grid",
               {{"epsilon", c.grid_epsilon}, {"iterations", c.grid_iterations}}},
              {"write_videos", c.write_videos}};
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("cannot initialize SHA-256");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) {
    EVP_DigestUpdate(ctx_, data, size);
  }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, out, &len);
    std::string s;
    for (unsigned int i = 0; i < len; ++i) s += fmt::format("{:02x}", out[i]);
    return s;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string config_digest(const CampaignConfig& config) {
  json doc = config_to_json(config);
  json files = json::array();
  auto add = [&](const fs::path& p) {
    files.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  };
  for (const auto& v : config.dataset.videos) {
    if (fs::is_directory(v)) {
      std::vector<fs::path> entries;
      for (const auto& e : fs::directory_iterator(v)) {
        if (e.is_regular_file()) entries.push_back(e.path());
      }
      std::sort(entries.begin(), entries.end());
      for (const auto& e : entries) add(e);
    } else if (fs::exists(v)) {
      add(v);
    } else {
      throw NotFoundError(fmt::format("dataset entry '{}' not found", v.string()));
    }
  }
  auto weights = [&](const AdapterSpec& s) {
    if (s.weights) add(*s.weights);
  };
  for (const auto& m : config.image_metrics) weights(m);
  if (config.embedder) weights(*config.embedder);
  weights(config.vqa);
  doc["files"] = files;
  return sha256_hex(doc.dump());
}

std::string epsilon_label(double epsilon) {
  return fmt::format("{:.6g}", epsilon * 255.0);
}

std::string white_box_label(const CampaignConfig& config) {
  switch (config.attack.kind) {
    case AttackKind::kSquare:
    case AttackKind::kNoise:
      return "none";
    default:
      break;
  }
  std::string label;
  for (const auto& m : config.image_metrics) {
    if (!label.empty()) label += "+";
    label += fmt::format("{}-s{}", m.name, m.seed);
  }
  if (config.attack.kind == AttackKind::kIc2vqa && config.attack.loss.use_embed &&
      config.embedder) {
    label += fmt::format("+{}-s{}", config.embedder->name, config.embedder->seed);
  }
  return label;
}

fs::path resolve_output_root(const CampaignConfig& config,
                             const std::optional<fs::path>& override_root) {
  if (override_root) return *override_root;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) {
    return fs::path(env);
  }
  return config.output;
}

}  // namespace ic2vqa
