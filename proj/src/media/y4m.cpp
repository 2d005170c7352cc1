#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

namespace {

constexpr std::string_view kMagic = "YUV4MPEG2";
constexpr std::string_view kFrameMarker = "FRAME";

std::size_t parse_dimension(std::string_view token) {
  std::size_t value = 0;
  const auto digits = token.substr(1);
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc() ||
      ptr != digits.data() + digits.size() || value == 0) {
    throw FormatError(fmt::format("y4m: malformed header token '{}'", token));
  }
  return value;
}

FrameRate parse_rate(std::string_view token) {
  const auto body = token.substr(1);
  const auto colon = body.find(':');
  FrameRate rate;
  if (colon == std::string_view::npos) {
    throw FormatError(fmt::format("y4m: malformed header token '{}'", token));
  }
  const auto num = body.substr(0, colon);
  const auto den = body.substr(colon + 1);
  auto r1 = std::from_chars(num.data(), num.data() + num.size(), rate.numerator);
  auto r2 = std::from_chars(den.data(), den.data() + den.size(),
                            rate.denominator);
  if (num.empty() || den.empty() || r1.ec != std::errc() ||
      r2.ec != std::errc() || r1.ptr != num.data() + num.size() ||
      r2.ptr != den.data() + den.size() || rate.denominator == 0) {
    throw FormatError(fmt::format("y4m: malformed header token '{}'", token));
  }
  return rate;
}

bool is_420(std::string_view chroma) {
  return chroma == "420" || chroma == "420jpeg" || chroma == "420paldv" ||
         chroma == "420mpeg2";
}

Y4mHeader parse_header(std::string_view line) {
  Y4mHeader header;
  bool have_w = false;
  bool have_h = false;
  std::size_t pos = 0;
  bool first = true;
  while (pos <= line.size()) {
    auto end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    const auto token = line.substr(pos, end - pos);
    pos = end + 1;
    if (first) {
      if (token != kMagic) {
        throw FormatError(fmt::format("y4m: bad magic token '{}'", token));
      }
      first = false;
      continue;
    }
    if (token.empty()) {
      throw FormatError("y4m: empty header token");
    }
    switch (token.front()) {
      case 'W':
        header.width = parse_dimension(token);
        have_w = true;
        break;
      case 'H':
        header.height = parse_dimension(token);
        have_h = true;
        break;
      case 'F':
        header.frame_rate = parse_rate(token);
        break;
      case 'C':
        header.chroma = std::string(token.substr(1));
        if (!is_420(header.chroma)) {
          throw UnsupportedFormatError(fmt::format(
              "y4m: unsupported chroma mode '{}', only 4:2:0 is accepted",
              token));
        }
        break;
      case 'I':
      case 'A':
      case 'X':
        break;
      default:
        throw FormatError(
            fmt::format("y4m: malformed header token '{}'", token));
    }
  }
  if (!have_w || !have_h) {
    throw FormatError("y4m: header is missing W or H");
  }
  return header;
}

std::size_t chroma_extent(std::size_t n) { return (n + 1) / 2; }

}  // namespace

VideoClip load_y4m(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("cannot open '{}'", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::string_view view(bytes);

  const auto header_end = view.find('\n');
  if (header_end == std::string_view::npos) {
    throw FormatError("y4m: header line is not terminated");
  }
  const Y4mHeader header = parse_header(view.substr(0, header_end));
  const std::size_t w = header.width;
  const std::size_t h = header.height;
  const std::size_t cw = chroma_extent(w);
  const std::size_t ch = chroma_extent(h);
  const std::size_t frame_bytes = w * h + 2 * cw * ch;

  VideoClip clip;
  clip.frame_rate = header.frame_rate;
  clip.source_id = path.stem().string();

  std::size_t pos = header_end + 1;
  while (pos < view.size()) {
    const std::size_t index = clip.frames.size();
    if (view.substr(pos, kFrameMarker.size()) != kFrameMarker) {
      throw FormatError(
          fmt::format("y4m: expected FRAME marker before frame {}", index));
    }
    const auto line_end = view.find('\n', pos);
    if (line_end == std::string_view::npos) {
      throw TruncationError(
          fmt::format("y4m: frame {} header is truncated", index), index);
    }
    pos = line_end + 1;
    if (view.size() - pos < frame_bytes) {
      throw TruncationError(
          fmt::format("y4m: frame {} payload is truncated ({} of {} bytes)",
                      index, view.size() - pos, frame_bytes),
          index);
    }
    const auto* y_plane = reinterpret_cast<const std::uint8_t*>(view.data() + pos);
    const auto* u_plane = y_plane + w * h;
    const auto* v_plane = u_plane + cw * ch;

    Frame frame(3, h, w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t ci = (y / 2) * cw + x / 2;
        double r, g, b;
        ycbcr_to_rgb(y_plane[y * w + x], u_plane[ci], v_plane[ci], r, g, b);
        frame.at(0, y, x) = clamp_unit(r);
        frame.at(1, y, x) = clamp_unit(g);
        frame.at(2, y, x) = clamp_unit(b);
      }
    }
    clip.frames.push_back(std::move(frame));
    pos += frame_bytes;
  }
  if (clip.frames.empty()) throw FormatError("y4m: stream has no frames");
  validate_clip(clip);
  return clip;
}

void write_y4m(const VideoClip& clip, const std::filesystem::path& path) {
  validate_clip(clip);
  const std::size_t w = clip.width();
  const std::size_t h = clip.height();
  const std::size_t cw = chroma_extent(w);
  const std::size_t ch = chroma_extent(h);

  std::string out = fmt::format("{} W{} H{} F{}:{} Ip A1:1 C420\n", kMagic, w,
                                h, clip.frame_rate.numerator,
                                clip.frame_rate.denominator);
  std::vector<std::uint8_t> y_plane(w * h);
  std::vector<double> cb_sum(cw * ch);
  std::vector<double> cr_sum(cw * ch);
  std::vector<int> count(cw * ch);
  for (const Frame& frame : clip.frames) {
    std::fill(cb_sum.begin(), cb_sum.end(), 0.0);
    std::fill(cr_sum.begin(), cr_sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Ycbcr c =
            rgb_to_ycbcr(frame.at(0, y, x), frame.at(1, y, x), frame.at(2, y, x));
        y_plane[y * w + x] = quantize_u8(c.y);
        const std::size_t ci = (y / 2) * cw + x / 2;
        cb_sum[ci] += c.cb;
        cr_sum[ci] += c.cr;
        ++count[ci];
      }
    }
    out += kFrameMarker;
    out += '\n';
    out.append(reinterpret_cast<const char*>(y_plane.data()), y_plane.size());
    for (std::size_t i = 0; i < cb_sum.size(); ++i) {
      out += static_cast<char>(quantize_u8(cb_sum[i] / count[i]));
    }
    for (std::size_t i = 0; i < cr_sum.size(); ++i) {
      out += static_cast<char>(quantize_u8(cr_sum[i] / count[i]));
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(fmt::format("cannot write '{}'", path.string()));
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace ic2vqa
