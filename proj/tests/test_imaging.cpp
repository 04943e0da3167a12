#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "vialcv/imaging.hpp"

using namespace vialcv;

namespace {

const VialGeometry kVial = VialGeometry::standard_vial();

TestProtocol default_protocol() { return TestProtocol{}; }

Frame impulse_frame(int h, int w) {
  Frame f(h, w);
  f.at(h / 2, w / 2) = 1.0;
  return f;
}

Frame step_frame(int h, int w, int edge_col) {
  Frame f(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = edge_col; c < w; ++c) f.at(r, c) = 1.0;
  return f;
}

double max_abs_diff(const Frame& a, const Frame& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i)
    m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
  return m;
}

}  // namespace

TEST_CASE("default frame schedule") {
  const auto sched = frame_schedule(default_protocol());
  REQUIRE(sched.size() == 35);
  CHECK(sched.front() == doctest::Approx(0.5));
  CHECK(sched[9] == doctest::Approx(5.0));
  CHECK(sched[10] == doctest::Approx(7.0));
  CHECK(sched.back() == doctest::Approx(55.0));
  for (size_t i = 1; i < sched.size(); ++i) CHECK(sched[i] > sched[i - 1]);
}

TEST_CASE("frame schedule respects the observation window") {
  TestProtocol p;
  p.t_obs = 10.0;
  const auto sched = frame_schedule(p);
  CHECK(sched.size() == 12);  // ten fast frames plus 7 s and 9 s
  CHECK(sched.back() == doctest::Approx(9.0));

  p.t_obs = 4.0;
  CHECK_THROWS_AS(frame_schedule(p), std::invalid_argument);

  p.t_obs = 60.0;
  p.frame_schedule = {1.0, 2.0, 3.0};
  CHECK(frame_schedule(p) == p.frame_schedule);
}

TEST_CASE("rasterize produces bounded deterministic frames") {
  FlowState s;
  s.suspended_volume = kVial.fill_volume() / 2.0;
  s.bath_height = 2e-3;
  RenderConfig cfg;
  const Frame a = rasterize(s, kVial, cfg, 7);
  const Frame b = rasterize(s, kVial, cfg, 7);
  const Frame c = rasterize(s, kVial, cfg, 8);
  CHECK(a.height == cfg.frame_height);
  CHECK(a.width == cfg.frame_width);
  for (double p : a.pixels) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK(max_abs_diff(a, c) > 0.0);
}

TEST_CASE("rasterize draws liquid darker regions and a bright meniscus") {
  FlowState s;
  s.bath_height = 5e-3;
  RenderConfig cfg;
  cfg.sigma_noise = 0.0;
  const Frame f = rasterize(s, kVial, cfg);
  CHECK(f.at(0, 0) == doctest::Approx(cfg.background));
  CHECK(f.at(f.height - 1, 0) == doctest::Approx(cfg.liquid));
  // one row at the bath surface carries the meniscus intensity
  bool meniscus = false;
  for (int r = 0; r < f.height; ++r) meniscus |= f.at(r, 0) == cfg.meniscus;
  CHECK(meniscus);
}

TEST_CASE("gaussian blur basics") {
  const Frame f = impulse_frame(21, 21);
  CHECK(max_abs_diff(gaussian_blur(f, 0.0), f) == 0.0);

  const Frame g = gaussian_blur(f, 1.5);
  const double sum = std::accumulate(g.pixels.begin(), g.pixels.end(), 0.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(g.at(10, 10) > g.at(10, 11));
  CHECK(g.at(10, 11) == doctest::Approx(g.at(10, 9)).epsilon(1e-12));
  CHECK(g.at(11, 10) == doctest::Approx(g.at(9, 10)).epsilon(1e-12));

  Frame flat(9, 9, 0.37);
  CHECK(max_abs_diff(gaussian_blur(flat, 2.0), flat) < 1e-12);
  CHECK_THROWS_AS(gaussian_blur(f, -1.0), std::invalid_argument);
}

TEST_CASE("sobel magnitude of a constant frame is zero") {
  const Frame flat(16, 12, 0.6);
  const Frame s = sobel_magnitude(flat);
  for (double p : s.pixels) CHECK(p == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sobel magnitude of a unit step") {
  const Frame f = step_frame(11, 11, 5);
  const Frame s = sobel_magnitude(f);
  // gradient 4 at the edge columns, scaled by the fixed divisor
  CHECK(s.at(5, 4) == doctest::Approx(4.0 / kSobelDivisor).epsilon(1e-12));
  CHECK(s.at(5, 5) == doctest::Approx(4.0 / kSobelDivisor).epsilon(1e-12));
  CHECK(s.at(5, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sobel magnitude is invariant under transposition") {
  Frame f(9, 9);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) f.at(r, c) = 0.1 * r + 0.03 * c * c / 9.0;
  Frame ft(9, 9);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) ft.at(r, c) = f.at(c, r);
  const Frame s = sobel_magnitude(f);
  const Frame st = sobel_magnitude(ft);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c)
      CHECK(s.at(r, c) == doctest::Approx(st.at(c, r)).epsilon(1e-12));
}

TEST_CASE("sobel rejects tiny frames and preprocess rejects empty input") {
  CHECK_THROWS_AS(sobel_magnitude(Frame(2, 5)), std::invalid_argument);
  CHECK_THROWS_AS(preprocess({}), std::invalid_argument);
}

TEST_CASE("preprocess chains blur and gradient per frame") {
  std::vector<Frame> frames = {step_frame(20, 20, 10), Frame(20, 20, 0.5)};
  const auto out = preprocess(frames, {1.0});
  REQUIRE(out.size() == 2);
  const Frame manual = sobel_magnitude(gaussian_blur(frames[0], 1.0));
  CHECK(max_abs_diff(out[0], manual) == 0.0);
  for (double p : out[1].pixels) CHECK(p == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("integer roi extraction is an exact crop") {
  Frame f(120, 16);
  for (size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = double(i % 97) / 97.0;
  ROISpec spec;  // origin (2, 6), 10x104, no rotation
  const auto seq = extract_roi({f}, spec);
  REQUIRE(seq.frames.size() == 1);
  const Frame& roi = seq.frames[0];
  CHECK(roi.height == 104);
  CHECK(roi.width == 10);
  for (int r = 0; r < roi.height; ++r)
    for (int c = 0; c < roi.width; ++c)
      CHECK(roi.at(r, c) == f.at(6 + r, 2 + c));
}

TEST_CASE("integer translation shifts the crop exactly") {
  Frame f(120, 16);
  for (size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = double(i % 113) / 113.0;
  ROISpec a, b;
  b.origin_x += 2.0;
  b.origin_y += 3.0;
  const Frame ra = extract_roi({f}, a).frames[0];
  const Frame rb = extract_roi({f}, b).frames[0];
  for (int r = 0; r + 3 < ra.height; ++r)
    for (int c = 0; c + 2 < ra.width; ++c)
      CHECK(rb.at(r, c) == ra.at(r + 3, c + 2));
}

TEST_CASE("full rotation reproduces the unrotated roi") {
  Frame f(120, 16);
  for (size_t i = 0; i < f.pixels.size(); ++i)
    f.pixels[i] = 0.5 + 0.5 * std::sin(0.1 * double(i));
  ROISpec plain, turned;
  turned.rotation_deg = 360.0;
  const Frame a = extract_roi({f}, plain).frames[0];
  const Frame b = extract_roi({f}, turned).frames[0];
  CHECK(max_abs_diff(a, b) < 1e-9);
}

TEST_CASE("roi sampling outside the frame throws") {
  ROISpec spec;
  spec.origin_x = 10.0;  // 10 + 10 - 1 > 15
  CHECK_THROWS_AS(extract_roi({Frame(120, 16)}, spec), OutOfBounds);
}

TEST_CASE("augmentation is seeded and one-sided") {
  Frame f(120, 16);
  for (size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = double(i % 89) / 89.0;
  ROISpec base;
  AugmentSpec aug;
  aug.seed = 42;
  const auto a = augment({f}, base, aug);
  const auto b = augment({f}, base, aug);
  REQUIRE(a.size() == 10);
  for (int i = 0; i < 10; ++i)
    CHECK(max_abs_diff(a[i].frames[0], b[i].frames[0]) == 0.0);

  aug.seed = 43;
  const auto c = augment({f}, base, aug);
  double diff = 0.0;
  for (int i = 0; i < 10; ++i) diff += max_abs_diff(a[i].frames[0], c[i].frames[0]);
  CHECK(diff > 0.0);
}

TEST_CASE("zero jitter reproduces the base roi for every augmentation") {
  Frame f(120, 16);
  for (size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = double(i % 71) / 71.0;
  ROISpec base;
  AugmentSpec aug;
  aug.max_shift = 0.0;
  aug.max_rotation = 0.0;
  const Frame ref = extract_roi({f}, base).frames[0];
  for (const auto& seq : augment({f}, base, aug))
    CHECK(max_abs_diff(seq.frames[0], ref) == 0.0);
  aug.count = 0;
  CHECK_THROWS_AS(augment({f}, base, aug), std::invalid_argument);
}
