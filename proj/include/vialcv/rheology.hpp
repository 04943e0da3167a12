#ifndef VIALCV_RHEOLOGY_HPP
#define VIALCV_RHEOLOGY_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vialcv {

/// Ellis model eta(sigma) = eta0 (1 + (k sigma)^(a-1))^-1.
struct EllisParams {
  double eta0;  ///< zero-shear viscosity [Pa.s]
  double k;     ///< [1/Pa]
  double a;     ///< exponent, >= 1

  EllisParams(double eta0_, double k_, double a_) : eta0(eta0_), k(k_), a(a_) {
    if (!(eta0 > 0.0)) throw std::invalid_argument("EllisParams: eta0 must be > 0");
    if (!(k >= 0.0)) throw std::invalid_argument("EllisParams: k must be >= 0");
    if (!(a >= 1.0)) throw std::invalid_argument("EllisParams: a must be >= 1");
  }

  /// Critical stress for nonlinearity, 1/k. Infinite when k = 0.
  double sigma_crit() const;
};

/// Steady-shear flow curve: (stress [Pa], viscosity [Pa.s]) pairs,
/// strictly increasing in stress.
struct FlowCurve {
  std::vector<std::pair<double, double>> points;

  void validate(bool for_fitting = false) const;
};

/// Small-amplitude oscillatory data: (omega [rad/s], G' [Pa], G'' [Pa]).
struct LVETable {
  struct Row {
    double omega, g_prime, g_double_prime;
  };
  std::vector<Row> rows;

  void validate() const;
};

struct EllisFit {
  EllisParams params;
  double residual_norm;  ///< RMS residual of log eta over the curve
  int iterations;
};

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoEstimate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double ellis_viscosity(const EllisParams& p, double sigma);

/// Damped Gauss-Newton least squares on log eta(sigma).
/// Flat curves return the Newtonian branch (a = 1, k = 0).
EllisFit fit_ellis(const FlowCurve& curve);

/// De = tau / t_flow.
double deborah(double tau, double t_flow);

/// A = sigma_flow / sigma_crit.
double stress_amplitude(double sigma_flow, double sigma_crit);

/// Relaxation time from LVE data: terminal-regime average of G'/(G'' omega),
/// falling back to 1/omega_c at the G'=G'' crossover. Throws NoEstimate when
/// neither exists.
double estimate_relaxation_time(const LVETable& table);

/// Two-column (sigma, eta) delimited text; '#' starts a comment.
FlowCurve read_flow_curve(const std::string& path);

/// Three-column (omega, G', G'') delimited text; '#' starts a comment.
LVETable read_lve_table(const std::string& path);

}  // namespace vialcv

#endif  // VIALCV_RHEOLOGY_HPP
