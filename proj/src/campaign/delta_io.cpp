#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"

namespace ic2vqa {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ShapeError(fmt::format("{} {} too large", what, v));
  return static_cast<std::uint32_t>(v);
}

// Replaces `path` atomically so an interrupted write never leaves a torn file.
void write_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write to '{}' failed", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '.' ||
                      c == '_' || c == '+';
    if (!keep) c = '_';
  }
  return s;
}

}  // namespace

void write_delta(const fs::path& path, const Perturbation& delta) {
  const std::size_t n = delta.data.size();
  const std::size_t c = n ? delta.data[0].channels() : 0;
  const std::size_t h = n ? delta.data[0].height() : 0;
  const std::size_t w = n ? delta.data[0].width() : 0;
  std::string bytes;
  bytes.reserve(16 + n * c * h * w * 4);
  put_u32(bytes, checked_u32(n, "frame count"));
  put_u32(bytes, checked_u32(c, "channel count"));
  put_u32(bytes, checked_u32(h, "height"));
  put_u32(bytes, checked_u32(w, "width"));
  for (const Frame& f : delta.data) {
    if (f.channels() != c || f.height() != h || f.width() != w) {
      throw ShapeError("perturbation frames differ in shape");
    }
    for (double v : f.values()) {
      put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  write_atomic(path, bytes);
}

DeltaDump read_delta(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("delta dump '{}' not found", path.string()));
  std::array<unsigned char, 16> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != 16) {
    throw FormatError(fmt::format("'{}': truncated shape header", path.string()));
  }
  DeltaDump d;
  d.frames = get_u32(header.data());
  d.channels = get_u32(header.data() + 4);
  d.height = get_u32(header.data() + 8);
  d.width = get_u32(header.data() + 12);
  const std::size_t count = static_cast<std::size_t>(d.frames) * d.channels *
                            d.height * d.width;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(fmt::format("'{}': expected {} values", path.string(), count));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(fmt::format("'{}': trailing bytes after data", path.string()));
  }
  d.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    d.values[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
  }
  return d;
}

void write_loss_trace(const fs::path& path, const AttackResult& result) {
  std::string out = "iteration,metric,xlayer,embed,temporal,total\n";
  auto row = [&](const LossTraceEntry& e, const std::string& it) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", it, e.metric,
                       e.xlayer, e.embed, e.temporal, e.total);
  };
  for (const auto& e : result.loss_trace) row(e, std::to_string(e.iteration));
  if (result.final_loss) row(*result.final_loss, "final");
  if (!result.score_trace.empty()) {
    out += "\nstep,score\n";
    for (std::size_t i = 0; i < result.score_trace.size(); ++i) {
      out += fmt::format("{},{:.17g}\n", i, result.score_trace[i]);
    }
  }
  write_atomic(path, out);
}

CellPaths cell_paths(const fs::path& campaign_dir,
                     const EvaluationRecord& record) {
  const std::string stem = sanitize(fmt::format(
      "{}__{}__{}__eps{}__I{}", record.video_id, record.attack,
      record.white_box_metric, epsilon_label(record.epsilon), record.iterations));
  const fs::path dir = campaign_dir / "cells";
  return {dir / (stem + ".delta"), dir / (stem + ".y4m"),
          dir / (stem + ".trace.csv")};
}

}  // namespace ic2vqa
