#ifndef VIALCV_IMAGING_HPP
#define VIALCV_IMAGING_HPP

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vialcv/flowsim.hpp"

namespace vialcv {

/// Row-major grayscale image with intensities in [0, 1].
struct Frame {
  int height = 0, width = 0;
  std::vector<double> pixels;

  Frame() = default;
  Frame(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(size_t(h) * w, fill) {}

  double& at(int r, int c) { return pixels[size_t(r) * width + c]; }
  double at(int r, int c) const { return pixels[size_t(r) * width + c]; }
};

struct ROISpec {
  double origin_x = 2.0;   ///< column of the ROI's top-left corner [px]
  double origin_y = 6.0;   ///< row of the ROI's top-left corner [px]
  int width = 10;
  int height = 104;
  double rotation_deg = 0.0;  ///< about the ROI centre
};

struct AugmentSpec {
  int count = 10;
  double max_shift = 3.0;     ///< [px], shifts drawn from U[0, max_shift]
  double max_rotation = 1.0;  ///< [deg], rotations drawn from U[0, max_rotation]
  std::uint64_t seed = 0;
};

/// Network input: one 104x10 intensity grid per scheduled frame plus the
/// density side-channel label.
struct ROISequence {
  std::vector<Frame> frames;
  double density = 0.0;  ///< [kg/m^3]
};

struct RenderConfig {
  int frame_height = 120;
  int frame_width = 16;
  double sigma_noise = 0.01;
  double background = 0.15;   ///< air inside the vial
  double liquid = 0.85;
  double meniscus = 1.0;
  double film_h_ref_frac = 0.2;  ///< film intensity saturates at h = frac*R
};

struct OutOfBounds : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Default sampling rule: 2 fps over the first 5 s (10 frames) then 0.5 fps
/// (up to 25 frames) while inside the observation window; 35 timestamps for
/// the default 60 s protocol. An explicit protocol.frame_schedule wins.
std::vector<double> frame_schedule(const TestProtocol& protocol);

/// Draws the liquid silhouette of one flow state. The RNG drives the
/// additive Gaussian pixel noise.
Frame rasterize(const FlowState& state, const VialGeometry& geom,
                const RenderConfig& cfg, std::uint64_t noise_seed = 0);

/// Renders every recorded frame timestamp of a trajectory (the t=0 state is
/// not rendered).
std::vector<Frame> render_video(const FlowTrajectory& traj, const RenderConfig& cfg,
                                std::uint64_t noise_seed = 0);

/// Separable Gaussian convolution, reflective padding, kernel cut at 3 sigma.
Frame gaussian_blur(const Frame& frame, double sigma);

/// Magnitude of the 3x3 Sobel pair, reflective padding, rescaled to [0, 1]
/// by the fixed theoretical maximum for unit-range input (4*sqrt(2)).
Frame sobel_magnitude(const Frame& frame);

inline constexpr double kSobelDivisor = 5.656854249492380;  // 4*sqrt(2)

struct PreprocessConfig {
  double blur_sigma = 1.0;
};

/// Per-frame blur + Sobel.
std::vector<Frame> preprocess(const std::vector<Frame>& frames,
                              const PreprocessConfig& cfg = {});

/// Bilinear crop of the rotated/translated ROI window from every frame.
ROISequence extract_roi(const std::vector<Frame>& frames, const ROISpec& spec);

/// `count` jittered ROI sequences from a seeded generator; the base ROI is
/// not included.
std::vector<ROISequence> augment(const std::vector<Frame>& frames,
                                 const ROISpec& base, const AugmentSpec& aug);

}  // namespace vialcv

#endif  // VIALCV_IMAGING_HPP
