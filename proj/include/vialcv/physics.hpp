#ifndef VIALCV_PHYSICS_HPP
#define VIALCV_PHYSICS_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

/// Closed-form flow physics and dimensionless diagnostics of the
/// inverted-vial test. All quantities are SI unless noted.
namespace vialcv {

inline constexpr double kDefaultGravity = 9.81;  // m/s^2

/// Newtonian fluid with interfacial properties.
struct Fluid {
  double eta;            ///< dynamic viscosity [Pa.s]
  double rho;            ///< density [kg/m^3]
  double gamma = 0.04;   ///< surface tension [N/m]
  double beta = 0.0;     ///< contact angle [rad]
  std::optional<double> tau;  ///< linear relaxation time [s]

  Fluid(double eta_, double rho_, double gamma_ = 0.04, double beta_ = 0.0,
        std::optional<double> tau_ = std::nullopt)
      : eta(eta_), rho(rho_), gamma(gamma_), beta(beta_), tau(tau_) {
    if (!(eta > 0.0)) throw std::invalid_argument("Fluid: eta must be > 0");
    if (!(rho >= 0.0)) throw std::invalid_argument("Fluid: rho must be >= 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("Fluid: gamma must be >= 0");
    if (beta < 0.0 || beta > std::numbers::pi)
      throw std::invalid_argument("Fluid: beta must be in [0, pi]");
    if (tau && *tau < 0.0) throw std::invalid_argument("Fluid: tau must be >= 0");
  }
};

/// Cylindrical vial geometry. Liquid height H is derived from the fill
/// volume, V_fill = pi R^2 H.
struct VialGeometry {
  double radius;           ///< interior radius R [m]
  double interior_height;  ///< [m]
  double liquid_height;    ///< H [m]

  VialGeometry(double radius_, double interior_height_, double liquid_height_)
      : radius(radius_),
        interior_height(interior_height_),
        liquid_height(liquid_height_) {
    if (!(radius > 0.0)) throw std::invalid_argument("VialGeometry: radius must be > 0");
    if (!(liquid_height > 0.0 && liquid_height < interior_height))
      throw std::invalid_argument("VialGeometry: need 0 < H < interior height");
  }

  double cross_section() const { return std::numbers::pi * radius * radius; }
  double fill_volume() const { return cross_section() * liquid_height; }

  /// Vial defined by interior volume and fill volume [m^3].
  static VialGeometry from_volumes(double radius, double interior_volume,
                                   double fill_volume) {
    const double area = std::numbers::pi * radius * radius;
    return VialGeometry(radius, interior_volume / area, fill_volume / area);
  }

  /// Default rig: 2 mL of fluid in an 8 mL vial, R = 7.5 mm.
  static VialGeometry standard_vial() {
    return from_volumes(7.5e-3, 8e-6, 2e-6);
  }
};

/// Flip/observation protocol. Time t is measured from full inversion, so
/// the flip occupies [-t_flip, 0] and frames are sampled in [0, t_obs].
struct TestProtocol {
  double t_flip = 2.0;   ///< [s]
  double t_obs = 60.0;   ///< [s]
  double theta_final = std::numbers::pi;  ///< tilt endpoint [rad]
  std::vector<double> frame_schedule;     ///< explicit timestamps [s]; empty = default rule
  double g = kDefaultGravity;             ///< [m/s^2]

  void validate() const {
    if (!(t_flip > 0.0)) throw std::invalid_argument("TestProtocol: t_flip must be > 0");
    if (!(t_obs > 0.0)) throw std::invalid_argument("TestProtocol: t_obs must be > 0");
    double prev = 0.0;
    for (double t : frame_schedule) {
      if (!(t > prev)) throw std::invalid_argument(
          "TestProtocol: frame timestamps must be strictly increasing");
      if (t > t_obs) throw std::invalid_argument(
          "TestProtocol: frame timestamps must be <= t_obs");
      prev = t;
    }
  }
};

/// Flow regime of the inverted-vial test.
enum class Regime { TaylorDrop, AdvancingFront, Drainage };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::TaylorDrop: return "taylor-drop";
    case Regime::AdvancingFront: return "advancing-front";
    case Regime::Drainage: return "drainage";
  }
  return "?";
}

/// Viscosity thresholds separating the initial regimes.
struct RegimeThresholds {
  double drainage_max_eta = 1.0;    ///< [Pa.s]
  double front_max_eta = 30.0;      ///< [Pa.s]
};

struct DimensionlessReport {
  double u_vg;           ///< visco-gravity velocity [m/s]
  double re_vg;          ///< visco-gravity Reynolds number
  double re_flip;        ///< flip Reynolds number
  double bo;             ///< Bond number
  double sigma_taylor;   ///< buoyancy stress [Pa]
  Regime initial_regime;
};

/// Buoyancy stress of the rising air finger: rho g R (air density neglected).
inline double taylor_stress(const Fluid& fluid, const VialGeometry& geom,
                            double g = kDefaultGravity) {
  return fluid.rho * g * geom.radius;
}

/// Parabolic wall-film velocity at height z above the wall, film thickness h.
inline double film_velocity_profile(const Fluid& fluid, double h, double z,
                                    double g = kDefaultGravity) {
  if (z < 0.0 || z > h)
    throw std::invalid_argument("film_velocity_profile: z outside [0, h]");
  return fluid.rho * g / fluid.eta * (h * z - 0.5 * z * z);
}

/// Shear stress in the wall film: rho g (h - z).
inline double film_shear_stress(const Fluid& fluid, double h, double z,
                                double g = kDefaultGravity) {
  if (z < 0.0 || z > h)
    throw std::invalid_argument("film_shear_stress: z outside [0, h]");
  return fluid.rho * g * (h - z);
}

/// Draining film thickness sqrt(eta x / (g t)), x measured from the top.
inline double film_thickness(const Fluid& fluid, double x, double t,
                             double g = kDefaultGravity) {
  if (!(t > 0.0)) throw std::invalid_argument("film_thickness: t must be > 0");
  if (x < 0.0) throw std::invalid_argument("film_thickness: x must be >= 0");
  return std::sqrt(fluid.eta * x / (g * t));
}

/// Drainage stress rho g (h(x,t) - z); h from film_thickness.
inline double drainage_stress(const Fluid& fluid, double x, double z, double t,
                              double g = kDefaultGravity) {
  const double h = film_thickness(fluid, x, t, g);
  if (z < 0.0 || z > h)
    throw std::invalid_argument("drainage_stress: z above local film thickness");
  return film_shear_stress(fluid, h, z, g);
}

/// U_VG = rho g R^2 / eta, from balancing viscous and gravitational stress.
inline double visco_gravity_velocity(const Fluid& fluid, const VialGeometry& geom,
                                     double g = kDefaultGravity) {
  return fluid.rho * g * geom.radius * geom.radius / fluid.eta;
}

/// Re_VG = rho (rho g) R^3 / eta^2 = (rho R / eta) U_VG.
inline double reynolds_vg(const Fluid& fluid, const VialGeometry& geom,
                          double g = kDefaultGravity) {
  const double r = geom.radius;
  return fluid.rho * (fluid.rho * g) * r * r * r / (fluid.eta * fluid.eta);
}

/// Re_flip = rho R^2 / (eta t_flip), tangential motion during the flip.
inline double reynolds_flip(const Fluid& fluid, const VialGeometry& geom,
                            const TestProtocol& protocol) {
  if (!(protocol.t_flip > 0.0))
    throw std::invalid_argument("reynolds_flip: t_flip must be > 0");
  return fluid.rho * geom.radius * geom.radius / (fluid.eta * protocol.t_flip);
}

/// Re_exp = rho U R / eta. The regime documents which optical velocity U is:
/// meniscus (Taylor drop), bath rise (drainage) or front (advancing front).
inline double reynolds_exp(const Fluid& fluid, const VialGeometry& geom,
                           Regime /*regime*/, double u_measured) {
  if (u_measured < 0.0)
    throw std::invalid_argument("reynolds_exp: u_measured must be >= 0");
  return fluid.rho * u_measured * geom.radius / fluid.eta;
}

/// Bo = rho g R^2 / Gamma.
inline double bond_number(const Fluid& fluid, const VialGeometry& geom,
                          double g = kDefaultGravity) {
  if (!(fluid.gamma > 0.0))
    throw std::invalid_argument("bond_number: gamma must be > 0");
  return fluid.rho * g * geom.radius * geom.radius / fluid.gamma;
}

/// Initial regime at full inversion, by viscosity thresholds.
inline Regime classify_initial_regime(const Fluid& fluid,
                                      const RegimeThresholds& th = {}) {
  if (fluid.eta <= th.drainage_max_eta) return Regime::Drainage;
  if (fluid.eta <= th.front_max_eta) return Regime::AdvancingFront;
  return Regime::TaylorDrop;
}

/// Bath-surface rise speed fed by the wall film, 2 rho g h^3 / (3 eta R),
/// from mass conservation with the depth-averaged film speed rho g h^2/(3 eta).
/// Returns the value and whether the thin-film assumption held (h <= R/3).
inline double bath_rise_velocity(const Fluid& fluid, const VialGeometry& geom,
                                 double h, double g = kDefaultGravity,
                                 bool* thin_film_ok = nullptr) {
  if (h < 0.0) throw std::invalid_argument("bath_rise_velocity: h must be >= 0");
  if (thin_film_ok) *thin_film_ok = h <= geom.radius / 3.0;
  return 2.0 * fluid.rho * g * h * h * h / (3.0 * fluid.eta * geom.radius);
}

inline DimensionlessReport dimensionless_report(const Fluid& fluid,
                                                const VialGeometry& geom,
                                                const TestProtocol& protocol,
                                                const RegimeThresholds& th = {}) {
  DimensionlessReport rep{};
  rep.u_vg = visco_gravity_velocity(fluid, geom, protocol.g);
  rep.re_vg = reynolds_vg(fluid, geom, protocol.g);
  rep.re_flip = reynolds_flip(fluid, geom, protocol);
  rep.bo = bond_number(fluid, geom, protocol.g);
  rep.sigma_taylor = taylor_stress(fluid, geom, protocol.g);
  rep.initial_regime = classify_initial_regime(fluid, th);
  return rep;
}

}  // namespace vialcv

#endif  // VIALCV_PHYSICS_HPP
