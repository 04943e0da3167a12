#include "vialcv/flowsim.hpp"

#include <algorithm>
#include <cmath>

namespace vialcv {

namespace {

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace

double flip_angle(const TestProtocol& protocol, double t) {
  if (t >= 0.0) return protocol.theta_final;
  const double u = (t + protocol.t_flip) / protocol.t_flip;
  return protocol.theta_final * smoothstep01(u);
}

namespace {

// Axial gravity drive factor: full once inverted, the projection of g on
// the (tilting) vial axis while past horizontal during the flip.
double drive(const TestProtocol& protocol, double t) {
  if (t >= 0.0) return 1.0;
  return std::max(0.0, -std::cos(flip_angle(protocol, t)));
}

enum class Phase { Taylor, Front, Drainage };

struct SimWork {
  const Fluid& fluid;
  const VialGeometry& geom;
  const TestProtocol& protocol;
  const SimConfig& cfg;

  double area, v_fill, wall_len, h_cap, dx;
  std::vector<double> grid_x;

  Phase phase = Phase::Taylor;
  double t = 0.0;
  double bubble = 0.0;       // Taylor penetration
  double front = 0.0;        // lowest wetted point
  double v_susp, v_film = 0.0, v_bath = 0.0;
  double v_susp_front_entry = 0.0;
  double t_front_entry = 0.0;
  double t_star = 1e18;      // similarity time of the film profile

  explicit SimWork(const Fluid& f, const VialGeometry& g, const TestProtocol& p,
                   const SimConfig& c)
      : fluid(f), geom(g), protocol(p), cfg(c) {
    area = geom.cross_section();
    v_fill = geom.fill_volume();
    wall_len = geom.interior_height;
    h_cap = cfg.h_cap_frac * geom.radius;
    dx = wall_len / cfg.n_x;
    grid_x.resize(cfg.n_x);
    for (int i = 0; i < cfg.n_x; ++i) grid_x[i] = (i + 0.5) * dx;
    v_susp = v_fill;
    front = geom.liquid_height;
    t = -protocol.t_flip;
  }

  double bubble_speed() const {
    return cfg.c_taylor * fluid.rho * protocol.g * geom.radius * geom.radius /
           fluid.eta;
  }

  double s4_thickness(double x, double t_eff) const {
    return std::min(std::sqrt(fluid.eta * x / (protocol.g * t_eff)), h_cap);
  }

  // Capped Eq. S4 film volume over the wetted wall [0, lw].
  double s4_volume(double lw, double t_eff) const {
    double sum = 0.0;
    for (double x : grid_x) {
      if (x >= lw) break;
      sum += s4_thickness(x, t_eff);
    }
    return 2.0 * std::numbers::pi * geom.radius * sum * dx;
  }

  double column_length() const {
    return (v_susp + cfg.bubble_area_frac * area * bubble) / area;
  }

  double bath_height() const { return v_bath / area; }
  double wetted_length() const { return wall_len - bath_height(); }

  double t_eff_now() const {
    switch (phase) {
      case Phase::Front:
        return std::max(t - t_front_entry, cfg.t_eff_min);
      case Phase::Drainage:
        return t_star;
      default:
        return cfg.t_eff_min;
    }
  }

  // Similarity time t* with capped-S4 film volume equal to v_film. The
  // volume is strictly decreasing in t, so t* is unique.
  double solve_t_star(double lw) const {
    if (v_film < 1e-30) return 1e18;
    double csum = 0.0;
    double x_last = 0.0;
    for (double x : grid_x) {
      if (x >= lw) break;
      csum += std::sqrt(x);
      x_last = x;
    }
    if (csum == 0.0) return 1e18;
    const double c = 2.0 * std::numbers::pi * geom.radius * dx *
                     std::sqrt(fluid.eta / protocol.g) * csum;
    const double t_free = (c / v_film) * (c / v_film);  // no station capped
    if (std::sqrt(fluid.eta * x_last / (protocol.g * t_free)) <= h_cap)
      return std::max(t_free, cfg.t_eff_min);
    double lo = cfg.t_eff_min, hi = std::max(t_free, cfg.t_eff_min * 2.0);
    if (s4_volume(lw, lo) <= v_film) return lo;
    for (int i = 0; i < 80; ++i) {
      const double mid = std::sqrt(lo * hi);
      (s4_volume(lw, mid) > v_film ? lo : hi) = mid;
    }
    return std::sqrt(lo * hi);
  }

  void step(double dt) {
    const double gam = drive(protocol, t);
    if (gam > 0.0 && protocol.g > 0.0) {
      switch (phase) {
        case Phase::Taylor: step_taylor(gam, dt); break;
        case Phase::Front: step_front(gam, dt); break;
        case Phase::Drainage: step_drainage(gam, dt); break;
      }
    }
    t += dt;
  }

  void step_taylor(double gam, double dt) {
    const double db = gam * bubble_speed() * dt;
    bubble += db;
    // Liquid displaced by the rising air finger streams down to the bath.
    const double dv = std::min(cfg.bubble_area_frac * area * db, v_susp);
    v_susp -= dv;
    v_bath += dv;
    if (bubble >= column_length()) {
      phase = Phase::Front;
      t_front_entry = t;
      v_susp_front_entry = std::max(v_susp, 1e-300);
      front = column_length();
      bubble = 0.0;
    }
  }

  void step_front(double gam, double dt) {
    // Front speed blends from the bubble scale to film kinematics as the
    // suspended liquid depletes.
    const double xi = 1.0 - v_susp / v_susp_front_entry;
    const double w = smoothstep01(xi / std::max(cfg.front_blend_width * 4.0, 1e-9));
    const double h_nom = s4_thickness(std::max(front, dx), t_eff_now());
    const double u_drain = 2.0 * fluid.rho * protocol.g * h_nom * h_nom * h_nom /
                           (3.0 * fluid.eta * geom.radius);
    const double u_front = (1.0 - w) * bubble_speed() + w * u_drain;
    const double dv = std::min(gam * area * u_front * dt, v_susp);
    v_susp -= dv;
    v_film += cfg.film_deposit_frac * dv;
    v_bath += (1.0 - cfg.film_deposit_frac) * dv;
    front = std::min(front + gam * u_front * dt, wetted_length());
    if (v_susp <= 1e-12 * v_fill) {
      v_bath += v_susp;  // sweep the remainder
      v_susp = 0.0;
      phase = Phase::Drainage;
      front = wetted_length();
      shed_excess_film(front);
      t_star = solve_t_star(front);
    }
  }

  // A film thicker than the cap allows sheds the excess straight to the bath.
  void shed_excess_film(double lw) {
    const double vmax = s4_volume(lw, cfg.t_eff_min);
    if (v_film > vmax) {
      v_bath += v_film - vmax;
      v_film = vmax;
    }
  }

  void step_drainage(double gam, double dt) {
    const double lw = wetted_length();
    shed_excess_film(lw);
    t_star = solve_t_star(lw);
    if (v_film > 0.0 && t_star < 1e18) {
      // The film stays on the similarity profile; the bath absorbs the flux
      // through the film's lower edge.
      const double h_b = s4_thickness(lw, t_star);
      const double u_rise = 2.0 * fluid.rho * protocol.g * h_b * h_b * h_b /
                            (3.0 * fluid.eta * geom.radius);
      const double dv = std::min(gam * area * u_rise * dt, v_film);
      v_film -= dv;
      v_bath += dv;
    }
    front = wetted_length();
  }

  FlowState snapshot() const {
    FlowState s;
    s.t = t;
    s.bubble_depth = phase == Phase::Taylor ? bubble : 0.0;
    s.front_position = front;
    s.bath_height = bath_height();
    s.t_eff = t_eff_now();
    s.suspended_volume = v_susp;
    s.film_volume = v_film;
    switch (phase) {
      case Phase::Taylor: s.regime = Regime::TaylorDrop; break;
      case Phase::Front: s.regime = Regime::AdvancingFront; break;
      case Phase::Drainage: s.regime = Regime::Drainage; break;
    }
    s.film_profile.assign(grid_x.size(), 0.0);
    if (phase != Phase::Taylor && v_film > 0.0) {
      const double lw = wetted_length();
      const double top = phase == Phase::Front ? column_length() : 0.0;
      const double lo = std::min(front, lw);
      double vs4_region = 0.0;
      for (size_t i = 0; i < grid_x.size(); ++i) {
        const double x = grid_x[i];
        if (x < top || x >= lo) continue;
        vs4_region += s4_thickness(x, s.t_eff);
      }
      vs4_region *= 2.0 * std::numbers::pi * geom.radius * dx;
      const double lam = vs4_region > 0.0 ? std::min(1.0, v_film / vs4_region) : 0.0;
      for (size_t i = 0; i < grid_x.size(); ++i) {
        const double x = grid_x[i];
        if (x < top || x >= lo) continue;
        s.film_profile[i] = lam * s4_thickness(x, s.t_eff);
      }
    }
    return s;
  }

  void check_volume() const {
    const double total = v_susp + v_film + v_bath;
    if (std::abs(total - v_fill) > cfg.volume_tol * v_fill)
      throw StepFailure("simulate: volume conservation drift beyond tolerance");
  }
};

}  // namespace

FlowTrajectory simulate(const Fluid& fluid, const VialGeometry& geom,
                        const TestProtocol& protocol, const SimConfig& cfg) {
  protocol.validate();
  if (protocol.frame_schedule.empty())
    throw std::invalid_argument("simulate: protocol.frame_schedule is empty");

  SimWork w(fluid, geom, protocol, cfg);

  FlowTrajectory traj{protocol, fluid, geom, w.grid_x, {}};
  traj.states.reserve(protocol.frame_schedule.size() + 1);

  std::vector<double> record_times;
  record_times.push_back(0.0);
  record_times.insert(record_times.end(), protocol.frame_schedule.begin(),
                      protocol.frame_schedule.end());

  size_t next_rec = 0;
  while (next_rec < record_times.size()) {
    const double target = record_times[next_rec];
    if (w.t >= target - 1e-12) {
      w.check_volume();
      FlowState s = w.snapshot();
      s.t = target;
      traj.states.push_back(std::move(s));
      ++next_rec;
      continue;
    }
    const double dt = std::min(cfg.dt, target - w.t);
    w.step(dt);
  }
  return traj;
}

double drained_fraction(const FlowTrajectory& traj, double t) {
  if (traj.states.empty()) throw std::invalid_argument("drained_fraction: empty trajectory");
  const double v_fill = traj.geom.fill_volume();
  const double area = traj.geom.cross_section();
  auto frac = [&](const FlowState& s) {
    return std::clamp(s.bath_height * area / v_fill, 0.0, 1.0);
  };
  if (t <= traj.states.front().t) return frac(traj.states.front());
  for (size_t i = 0; i + 1 < traj.states.size(); ++i) {
    const auto& a = traj.states[i];
    const auto& b = traj.states[i + 1];
    if (t <= b.t) {
      const double u = (t - a.t) / (b.t - a.t);
      return frac(a) + u * (frac(b) - frac(a));
    }
  }
  return frac(traj.states.back());
}

}  // namespace vialcv
