#include <doctest.h>

#include <algorithm>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/media.hpp"
#include "ic2vqa/synthetic.hpp"
#include "test_support.hpp"

using namespace ic2vqa;
using testing::TempDir;

namespace {

std::string y4m_header(std::size_t w, std::size_t h, const std::string& extra = "") {
  return "YUV4MPEG2 W" + std::to_string(w) + " H" + std::to_string(h) +
         " F25:1" + extra + "\n";
}

std::string constant_frame(std::size_t w, std::size_t h, std::uint8_t y,
                           std::uint8_t u, std::uint8_t v) {
  const std::size_t c = ((w + 1) / 2) * ((h + 1) / 2);
  return "FRAME\n" + std::string(w * h, static_cast<char>(y)) +
         std::string(c, static_cast<char>(u)) + std::string(c, static_cast<char>(v));
}

VideoClip constant_clip(std::size_t n, std::size_t h, std::size_t w, double v) {
  VideoClip clip;
  for (std::size_t i = 0; i < n; ++i) clip.frames.emplace_back(3, h, w, v);
  return clip;
}

std::size_t count_markers(const std::string& bytes) {
  std::size_t n = 0;
  for (auto pos = bytes.find("FRAME\n"); pos != std::string::npos;
       pos = bytes.find("FRAME\n", pos + 1)) {
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("colour conversion matches the reference decode") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const int y = 16 + static_cast<int>(rng.below(220));
    const int cb = 16 + static_cast<int>(rng.below(225));
    const int cr = 16 + static_cast<int>(rng.below(225));
    double r, g, b, rr, rg, rb;
    ycbcr_to_rgb(y, cb, cr, r, g, b);
    testing::reference_ycbcr_to_rgb(y, cb, cr, rr, rg, rb);
    CHECK(r == doctest::Approx(rr).epsilon(1e-12));
    CHECK(g == doctest::Approx(rg).epsilon(1e-12));
    CHECK(b == doctest::Approx(rb).epsilon(1e-12));
    const Ycbcr back = rgb_to_ycbcr(r, g, b);
    CHECK(back.y == doctest::Approx(y).epsilon(1e-12));
    CHECK(back.cb == doctest::Approx(cb).epsilon(1e-12));
    CHECK(back.cr == doctest::Approx(cr).epsilon(1e-12));
  }
  const Ycbcr white = rgb_to_ycbcr(1, 1, 1);
  CHECK(white.y == doctest::Approx(235));
  CHECK(white.cb == doctest::Approx(128));
}

TEST_CASE("quantization rounds half away from zero and saturates") {
  CHECK(quantize_u8(2.5) == 3);
  CHECK(quantize_u8(2.49) == 2);
  CHECK(quantize_u8(-0.4) == 0);
  CHECK(quantize_u8(-3.0) == 0);
  CHECK(quantize_u8(255.4) == 255);
  CHECK(quantize_u8(300.0) == 255);
}

TEST_CASE("black limited-range stream loads as zeros") {
  TempDir dir("media");
  const auto path = dir / "black.y4m";
  testing::write_bytes(path, y4m_header(16, 16, " C420jpeg") +
                                 constant_frame(16, 16, 16, 128, 128) +
                                 constant_frame(16, 16, 16, 128, 128));
  const VideoClip clip = load_y4m(path);
  REQUIRE(clip.num_frames() == 2);
  CHECK(clip.height() == 16);
  CHECK(clip.width() == 16);
  CHECK(clip.frame_rate == FrameRate{25, 1});
  for (const Frame& f : clip.frames) CHECK(max_abs(f) <= 1.0 / 255.0);
}

TEST_CASE("out-of-gamut samples are clamped on load") {
  TempDir dir("media");
  const auto path = dir / "hot.y4m";
  testing::write_bytes(path, y4m_header(8, 8) + constant_frame(8, 8, 250, 250, 250));
  const VideoClip clip = load_y4m(path);
  for (double v : clip.frames[0].values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("all 4:2:0 chroma tags are accepted, others rejected") {
  TempDir dir("media");
  for (const std::string tag : {"", " C420", " C420jpeg", " C420paldv", " C420mpeg2"}) {
    const auto path = dir / "ok.y4m";
    testing::write_bytes(path, y4m_header(8, 8, tag) + constant_frame(8, 8, 100, 128, 128));
    CHECK_NOTHROW(load_y4m(path));
  }
  const auto path = dir / "c444.y4m";
  testing::write_bytes(path, y4m_header(8, 8, " C444") +
                                 "FRAME\n" + std::string(8 * 8 * 3, 'x'));
  CHECK_THROWS_AS(load_y4m(path), UnsupportedFormatError);
}

TEST_CASE("malformed headers name the offending token") {
  TempDir dir("media");
  const auto path = dir / "bad.y4m";
  testing::write_bytes(path, "YUV4MPEG2 Wabc H8 F25:1\n" +
                                 constant_frame(8, 8, 100, 128, 128));
  try {
    load_y4m(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("Wabc") != std::string::npos);
  }
  testing::write_bytes(path, "NOTY4M W8 H8\n");
  CHECK_THROWS_AS(load_y4m(path), FormatError);
  testing::write_bytes(path, y4m_header(8, 8) + "FRAMX\n" + std::string(96, 'x'));
  CHECK_THROWS_AS(load_y4m(path), FormatError);
  CHECK_THROWS_AS(load_y4m(dir / "missing.y4m"), NotFoundError);
}

TEST_CASE("truncated payload reports the frame index") {
  TempDir dir("media");
  const auto path = dir / "short.y4m";
  std::string bytes = y4m_header(8, 8) + constant_frame(8, 8, 100, 128, 128) +
                      constant_frame(8, 8, 100, 128, 128);
  bytes.resize(bytes.size() - 5);
  testing::write_bytes(path, bytes);
  try {
    load_y4m(path);
    FAIL("expected truncation");
  } catch (const TruncationError& e) {
    CHECK(e.frame_index() == 1);
  }
}

TEST_CASE("writing a zero clip gives limited-range black") {
  TempDir dir("media");
  const auto path = dir / "zeros.y4m";
  write_y4m(constant_clip(2, 8, 10, 0.0), path);
  const std::string bytes = testing::read_bytes(path);
  const auto header_end = bytes.find('\n');
  CHECK(bytes.substr(0, header_end) == "YUV4MPEG2 W10 H8 F25:1 Ip A1:1 C420");
  std::size_t pos = header_end + 1;
  for (int f = 0; f < 2; ++f) {
    REQUIRE(bytes.substr(pos, 6) == "FRAME\n");
    pos += 6;
    for (std::size_t i = 0; i < 80; ++i) CHECK(static_cast<unsigned char>(bytes[pos + i]) == 16);
    pos += 80;
    for (std::size_t i = 0; i < 40; ++i) CHECK(static_cast<unsigned char>(bytes[pos + i]) == 128);
    pos += 40;
  }
  CHECK(pos == bytes.size());
}

TEST_CASE("single-frame clip has exactly one FRAME marker") {
  TempDir dir("media");
  const auto path = dir / "one.y4m";
  write_y4m(constant_clip(1, 8, 8, 0.5), path);
  CHECK(count_markers(testing::read_bytes(path)) == 1);
}

TEST_CASE("lattice round trip is bit exact") {
  TempDir dir("media");
  Rng rng(2024);
  for (int i = 0; i < 10; ++i) {
    const std::size_t h = 8 + rng.below(9);
    const std::size_t w = 8 + rng.below(9);
    const std::string original = testing::random_in_gamut_y4m(rng, 1 + rng.below(3), h, w);
    const auto in = dir / "in.y4m";
    const auto out = dir / "out.y4m";
    testing::write_bytes(in, original);
    const VideoClip clip = load_y4m(in);
    write_y4m(clip, out);
    CHECK(testing::read_bytes(out) == original);
    const VideoClip again = load_y4m(out);
    REQUIRE(again.num_frames() == clip.num_frames());
    for (std::size_t f = 0; f < clip.num_frames(); ++f) {
      CHECK(again.frames[f] == clip.frames[f]);
    }
  }
}

TEST_CASE("loader output always satisfies clip invariants") {
  TempDir dir("media");
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const std::size_t h = 8 + 2 * rng.below(5);
    const std::size_t w = 8 + 2 * rng.below(5);
    std::string bytes = y4m_header(w, h);
    const std::size_t frames = 1 + rng.below(3);
    for (std::size_t f = 0; f < frames; ++f) {
      bytes += "FRAME\n";
      for (std::size_t k = 0; k < w * h * 3 / 2; ++k) {
        bytes += static_cast<char>(rng.below(256));
      }
    }
    const auto path = dir / "noise.y4m";
    testing::write_bytes(path, bytes);
    const VideoClip clip = load_y4m(path);
    CHECK(clip.num_frames() == frames);
    CHECK_NOTHROW(validate_clip(clip));
  }
}

TEST_CASE("validate_clip rejects invalid clips") {
  CHECK_THROWS_AS(validate_clip(VideoClip{}), ShapeError);
  CHECK_THROWS_AS(validate_clip(constant_clip(1, 4, 4, 0.5)), ShapeError);
  VideoClip mixed = constant_clip(2, 8, 8, 0.5);
  mixed.frames[1] = Frame(3, 8, 10, 0.5);
  CHECK_THROWS_AS(validate_clip(mixed), ShapeError);
  VideoClip bright = constant_clip(1, 8, 8, 0.5);
  bright.frames[0].at(1, 2, 3) = 1.5;
  CHECK_THROWS(validate_clip(bright));
}

TEST_CASE("frame directories load in natural order") {
  TempDir dir("frames");
  for (int i : {1, 2, 10}) {
    Frame f(3, 8, 8, i / 255.0);
    write_png(f, dir / ("f" + std::to_string(i) + ".png"));
  }
  const VideoClip clip = load_frame_dir(dir.path());
  REQUIRE(clip.num_frames() == 3);
  CHECK(clip.frames[0].at(0, 0, 0) == doctest::Approx(1 / 255.0));
  CHECK(clip.frames[1].at(0, 0, 0) == doctest::Approx(2 / 255.0));
  CHECK(clip.frames[2].at(0, 0, 0) == doctest::Approx(10 / 255.0));
  CHECK(natural_less("f2", "f10"));
  CHECK_FALSE(natural_less("f10", "f2"));
  CHECK(natural_less("a", "b"));
}

TEST_CASE("solid gray frames load exactly") {
  TempDir dir("frames");
  write_png(Frame(3, 8, 8, 128 / 255.0), dir / "f001.png");
  write_png(Frame(3, 8, 8, 128 / 255.0), dir / "f002.png");
  const VideoClip clip = load_frame_dir(dir.path(), "f*.png");
  REQUIRE(clip.num_frames() == 2);
  for (const Frame& f : clip.frames) {
    for (double v : f.values()) CHECK(v == 128 / 255.0);
  }
}

TEST_CASE("frame directory errors") {
  TempDir dir("frames");
  CHECK_THROWS_AS(load_frame_dir(dir.path()), NotFoundError);
  CHECK_THROWS_AS(load_frame_dir(dir / "nope"), NotFoundError);
  write_png(Frame(3, 8, 8, 0.2), dir / "a1.png");
  write_png(Frame(3, 10, 8, 0.2), dir / "a2.png");
  try {
    load_frame_dir(dir.path());
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("3x10x8") != std::string::npos);
    CHECK(what.find("3x8x8") != std::string::npos);
  }
}

TEST_CASE("png round trip on the 8-bit lattice") {
  TempDir dir("png");
  Rng rng(3);
  Frame f(3, 9, 13);
  for (double& v : f.values()) v = static_cast<double>(rng.below(256)) / 255.0;
  write_png(f, dir / "x.png");
  CHECK(read_png(dir / "x.png") == f);
}

TEST_CASE("bilinear 2x reduction is a box average") {
  Rng rng(8);
  const Frame in = testing::random_frame(rng, 3, 8, 12);
  const Frame out = bilinear_resize(in, 4, 6);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 6; ++x) {
        const double box = (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y + 1, 2 * x) +
                            in.at(c, 2 * y, 2 * x + 1) +
                            in.at(c, 2 * y + 1, 2 * x + 1)) / 4.0;
        CHECK(out.at(c, y, x) == doctest::Approx(box).epsilon(1e-12));
      }
    }
  }
  CHECK(bilinear_resize(in, 8, 12) == in);
}

TEST_CASE("resize backward is the adjoint of resize") {
  Rng rng(9);
  for (auto [ih, iw, oh, ow] : std::vector<std::array<std::size_t, 4>>{
           {8, 12, 4, 6}, {9, 7, 5, 11}, {16, 16, 3, 3}, {5, 5, 10, 8}}) {
    const Frame x = testing::random_frame(rng, 2, ih, iw, -1, 1);
    const Frame y = testing::random_frame(rng, 2, oh, ow, -1, 1);
    const Frame rx = bilinear_resize(x, oh, ow);
    const Frame rty = bilinear_resize_backward(y, ih, iw);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) lhs += rx.values()[i] * y.values()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * rty.values()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("dataset preparation trims and halves 1080p") {
  VideoClip big = constant_clip(2, 1080, 1920, 0.25);
  VideoClip prepared = prepare_clip(big, 75, 540);
  CHECK(prepared.num_frames() == 2);
  CHECK(prepared.height() == 540);
  CHECK(prepared.width() == 960);
  CHECK(prepared.frames[0].at(1, 100, 100) == doctest::Approx(0.25));

  VideoClip longer = constant_clip(150, 16, 16, 0.5);
  prepared = prepare_clip(longer, 75, 540);
  CHECK(prepared.num_frames() == 75);
  CHECK(prepared.height() == 16);
  CHECK(prepare_clip(longer, 0, 0).num_frames() == 150);
}

TEST_CASE("synthetic clips are deterministic and valid") {
  const VideoClip a = synthesize_clip(4, 6, 16, 20, "a");
  const VideoClip b = synthesize_clip(4, 6, 16, 20, "a");
  const VideoClip c = synthesize_clip(5, 6, 16, 20, "c");
  CHECK_NOTHROW(validate_clip(a));
  CHECK(a.num_frames() == 6);
  CHECK(a.frames == b.frames);
  CHECK(a.frames != c.frames);
  CHECK(a.frames[0] != a.frames[5]);
}
