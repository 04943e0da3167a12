#include "vialcv/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vialcv {

std::vector<double> frame_schedule(const TestProtocol& protocol) {
  protocol.validate();
  if (!protocol.frame_schedule.empty()) return protocol.frame_schedule;
  if (protocol.t_obs < 5.0)
    throw std::invalid_argument("frame_schedule: default rule needs t_obs >= 5 s");
  std::vector<double> out;
  for (int k = 1; k <= 10; ++k) {
    const double t = 0.5 * k;
    if (t > protocol.t_obs) break;
    out.push_back(t);
  }
  for (int k = 1; k <= 25; ++k) {
    const double t = 5.0 + 2.0 * k;
    if (t >= protocol.t_obs) break;
    out.push_back(t);
  }
  return out;
}

Frame rasterize(const FlowState& state, const VialGeometry& geom,
                const RenderConfig& cfg, std::uint64_t noise_seed) {
  const int H = cfg.frame_height, W = cfg.frame_width;
  Frame f(H, W, cfg.background);

  const double wall_len = geom.interior_height;
  const double px_per_m = H / wall_len;  // rows map the vial axis
  const double area = geom.cross_section();

  auto row_of = [&](double x) { return x * px_per_m; };
  auto fill_rows = [&](double x0, double x1, int c0, int c1, double value) {
    // Coverage-weighted fill of the axial span [x0, x1] in columns [c0, c1).
    const double r0 = std::clamp(row_of(x0), 0.0, double(H));
    const double r1 = std::clamp(row_of(x1), 0.0, double(H));
    if (r1 <= r0) return;
    for (int r = int(std::floor(r0)); r < int(std::ceil(r1)) && r < H; ++r) {
      const double cover = std::min(double(r + 1), r1) - std::max(double(r), r0);
      if (cover <= 0.0) continue;
      for (int c = c0; c < c1; ++c)
        f.at(r, c) += cover * (value - cfg.background);
    }
  };

  // Suspended column hanging from the top.
  const double bubble_area_frac = 0.5;  // matches the simulator default
  const double col_len =
      (state.suspended_volume + bubble_area_frac * area * state.bubble_depth) / area;
  if (col_len > 0.0) fill_rows(0.0, col_len, 0, W, cfg.liquid);

  // Taylor-drop air finger: central channel entering the column bottom.
  if (state.bubble_depth > 0.0 && col_len > 0.0) {
    const int half = int(std::lround(W * std::sqrt(bubble_area_frac) / 2.0));
    const int c0 = std::max(0, W / 2 - half), c1 = std::min(W, W / 2 + half);
    fill_rows(col_len - state.bubble_depth, col_len, c0, c1, cfg.background);
    // bright rim at the bubble tip
    const int tip = std::clamp(int(row_of(col_len - state.bubble_depth)), 0, H - 1);
    for (int c = c0; c < c1; ++c) f.at(tip, c) = cfg.meniscus;
  }

  // Wall films: edge-band intensity scales with local thickness.
  if (!state.film_profile.empty()) {
    const double h_ref = cfg.film_h_ref_frac * geom.radius;
    const int n = int(state.film_profile.size());
    for (int i = 0; i < n; ++i) {
      const double h = state.film_profile[i];
      if (h <= 0.0) continue;
      const double x0 = wall_len * i / n, x1 = wall_len * (i + 1) / n;
      const double v =
          cfg.background + (cfg.liquid - cfg.background) * std::min(1.0, h / h_ref);
      fill_rows(x0, x1, 0, std::min(2, W), v);
      fill_rows(x0, x1, std::max(0, W - 2), W, v);
    }
  }

  // Bath with a flat, bright meniscus.
  if (state.bath_height > 0.0) {
    const double x_surf = wall_len - state.bath_height;
    fill_rows(x_surf, wall_len, 0, W, cfg.liquid);
    const int r = std::clamp(int(row_of(x_surf)), 0, H - 1);
    for (int c = 0; c < W; ++c) f.at(r, c) = cfg.meniscus;
  }

  if (cfg.sigma_noise > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, cfg.sigma_noise);
    for (double& p : f.pixels) p += noise(rng);
  }
  for (double& p : f.pixels) p = std::clamp(p, 0.0, 1.0);
  return f;
}

std::vector<Frame> render_video(const FlowTrajectory& traj, const RenderConfig& cfg,
                                std::uint64_t noise_seed) {
  std::vector<Frame> out;
  out.reserve(traj.states.size());
  std::uint64_t k = 0;
  for (const auto& s : traj.states) {
    if (s.t <= 0.0) continue;  // the t=0 bookkeeping state is not a camera frame
    out.push_back(rasterize(s, traj.geom, cfg,
                            noise_seed + 0x9e3779b97f4a7c15ull * (k + 1)));
    ++k;
  }
  return out;
}

Frame gaussian_blur(const Frame& frame, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return frame;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };

  Frame tmp(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      double v = 0.0;
      for (int i = -radius; i <= radius; ++i)
        v += kernel[i + radius] * frame.at(r, reflect(c + i, frame.width));
      tmp.at(r, c) = v;
    }
  Frame out(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      double v = 0.0;
      for (int i = -radius; i <= radius; ++i)
        v += kernel[i + radius] * tmp.at(reflect(r + i, frame.height), c);
      out.at(r, c) = v;
    }
  return out;
}

Frame sobel_magnitude(const Frame& frame) {
  if (frame.height < 3 || frame.width < 3)
    throw std::invalid_argument("sobel_magnitude: frame must be at least 3x3");
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  auto reflect = [](int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
  };
  Frame out(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      double gx = 0.0, gy = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const double v = frame.at(reflect(r + i, frame.height), reflect(c + j, frame.width));
          gx += kx[i + 1][j + 1] * v;
          gy += ky[i + 1][j + 1] * v;
        }
      out.at(r, c) = std::min(1.0, std::sqrt(gx * gx + gy * gy) / kSobelDivisor);
    }
  return out;
}

std::vector<Frame> preprocess(const std::vector<Frame>& frames,
                              const PreprocessConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("preprocess: no frames");
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (const auto& f : frames)
    out.push_back(sobel_magnitude(gaussian_blur(f, cfg.blur_sigma)));
  return out;
}

namespace {

double bilinear(const Frame& f, double x, double y) {
  // x = column, y = row
  if (x < 0.0 || y < 0.0 || x > f.width - 1 || y > f.height - 1)
    throw OutOfBounds("extract_roi: sample outside frame bounds");
  const int x0 = std::min(int(x), f.width - 2);
  const int y0 = std::min(int(y), f.height - 2);
  const double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * f.at(y0, x0) + fx * (1 - fy) * f.at(y0, x0 + 1) +
         (1 - fx) * fy * f.at(y0 + 1, x0) + fx * fy * f.at(y0 + 1, x0 + 1);
}

}  // namespace

ROISequence extract_roi(const std::vector<Frame>& frames, const ROISpec& spec) {
  ROISequence seq;
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cx = spec.origin_x + (spec.width - 1) / 2.0;
  const double cy = spec.origin_y + (spec.height - 1) / 2.0;
  for (const auto& f : frames) {
    Frame roi(spec.height, spec.width);
    for (int r = 0; r < spec.height; ++r)
      for (int c = 0; c < spec.width; ++c) {
        const double dx = spec.origin_x + c - cx;
        const double dy = spec.origin_y + r - cy;
        const double x = cx + ct * dx - st * dy;
        const double y = cy + st * dx + ct * dy;
        roi.at(r, c) = bilinear(f, x, y);
      }
    seq.frames.push_back(std::move(roi));
  }
  return seq;
}

std::vector<ROISequence> augment(const std::vector<Frame>& frames,
                                 const ROISpec& base, const AugmentSpec& aug) {
  if (aug.count < 1) throw std::invalid_argument("augment: count must be >= 1");
  std::vector<ROISequence> out;
  out.reserve(aug.count);
  for (int i = 0; i < aug.count; ++i) {
    // Draws derive from (seed, index) so generation order is irrelevant.
    std::mt19937_64 rng(aug.seed * 0x9e3779b97f4a7c15ull + std::uint64_t(i) + 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ROISpec spec = base;
    spec.origin_x += u01(rng) * aug.max_shift;
    spec.origin_y += u01(rng) * aug.max_shift;
    spec.rotation_deg += u01(rng) * aug.max_rotation;
    out.push_back(extract_roi(frames, spec));
  }
  return out;
}

}  // namespace vialcv
