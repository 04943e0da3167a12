#ifndef VIALCV_FLOWSIM_HPP
#define VIALCV_FLOWSIM_HPP

#include <stdexcept>
#include <vector>

#include "vialcv/physics.hpp"

namespace vialcv {

/// Reduced-order model coefficients. Acceptance never depends on the
/// absolute value of c_taylor, only on scaling and monotonicity.
struct SimConfig {
  double c_taylor = 0.05;      ///< bubble speed coefficient, U_b = c rho g R^2/eta
  double bubble_area_frac = 0.5;  ///< bubble cross-section / vial cross-section
  double dt = 1e-3;            ///< explicit step [s]
  int n_x = 128;               ///< wall grid stations
  double film_deposit_frac = 0.35;  ///< front-phase outflow routed to the wall film
  double front_blend_width = 0.25;  ///< smoothing width of the front-speed blend
  double h_cap_frac = 1.0 / 3.0;    ///< film thickness cap, as fraction of R
  double t_eff_min = 1e-2;     ///< clamp for the drainage similarity time [s]
  double volume_tol = 5e-3;    ///< StepFailure threshold, fraction of V_fill
};

/// Geometric state of the vial at one instant. x runs from the (closed)
/// top of the inverted vial downward.
struct FlowState {
  double t = 0.0;              ///< seconds since full inversion
  Regime regime = Regime::TaylorDrop;
  double bubble_depth = 0.0;   ///< Taylor-drop penetration [m]
  double front_position = 0.0; ///< lowest wetted point from the vial top [m]
  double bath_height = 0.0;    ///< liquid accumulated at the bottom [m]
  double t_eff = 0.0;          ///< similarity time used for the film profile [s]
  double suspended_volume = 0.0;  ///< [m^3]
  double film_volume = 0.0;       ///< [m^3]
  std::vector<double> film_profile;  ///< h(x_i) [m]
};

struct FlowTrajectory {
  TestProtocol protocol;
  Fluid fluid;
  VialGeometry geom;
  std::vector<double> grid_x;      ///< film station centers [m]
  std::vector<FlowState> states;   ///< state at t=0 plus one per frame timestamp
};

struct StepFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Smooth-trapezoid tilt profile: 0 at t = -t_flip, theta_final for t >= 0,
/// symmetric about the midpoint.
double flip_angle(const TestProtocol& protocol, double t);

/// Integrates the three-regime reduced-order model from the start of the
/// flip through t_obs, storing states at t=0 and the frame timestamps.
/// protocol.frame_schedule must be non-empty.
FlowTrajectory simulate(const Fluid& fluid, const VialGeometry& geom,
                        const TestProtocol& protocol, const SimConfig& cfg = {});

/// Bath volume / fill volume at time t, linearly interpolated between
/// stored states.
double drained_fraction(const FlowTrajectory& traj, double t);

}  // namespace vialcv

#endif  // VIALCV_FLOWSIM_HPP
