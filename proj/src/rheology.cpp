#include "vialcv/rheology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace vialcv {

double EllisParams::sigma_crit() const {
  return k > 0.0 ? 1.0 / k : std::numeric_limits<double>::infinity();
}

void FlowCurve::validate(bool for_fitting) const {
  if (for_fitting && points.size() < 4)
    throw std::invalid_argument("FlowCurve: need >= 4 points for fitting");
  double prev = 0.0;
  for (const auto& [sigma, eta] : points) {
    if (!(sigma > prev)) throw std::invalid_argument("FlowCurve: stress must be strictly increasing and > 0");
    if (!(eta > 0.0)) throw std::invalid_argument("FlowCurve: viscosity must be > 0");
    prev = sigma;
  }
}

void LVETable::validate() const {
  double prev = 0.0;
  for (const auto& r : rows) {
    if (!(r.omega > prev)) throw std::invalid_argument("LVETable: omega must be strictly increasing and > 0");
    if (r.g_prime < 0.0 || r.g_double_prime < 0.0)
      throw std::invalid_argument("LVETable: moduli must be >= 0");
    prev = r.omega;
  }
}

double ellis_viscosity(const EllisParams& p, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("ellis_viscosity: sigma must be >= 0");
  if (p.k == 0.0 || sigma == 0.0) return p.eta0;
  return p.eta0 / (1.0 + std::pow(p.k * sigma, p.a - 1.0));
}

namespace {

// Residuals and Jacobian of r_i = log_model(sigma_i) - log eta_i in the
// parameterization theta = (log eta0, log k, a).
struct LogModel {
  const FlowCurve& curve;

  void eval(const std::array<double, 3>& th, std::vector<double>& r,
            std::vector<std::array<double, 3>>& jac) const {
    const double log_eta0 = th[0], log_k = th[1], a = th[2];
    const size_t n = curve.points.size();
    r.resize(n);
    jac.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto [sigma, eta] = curve.points[i];
      const double ls = log_k + std::log(sigma);  // log(k sigma)
      const double u = std::exp((a - 1.0) * ls);  // (k sigma)^(a-1)
      const double frac = u / (1.0 + u);
      r[i] = log_eta0 - std::log1p(u) - std::log(eta);
      jac[i] = {1.0, -frac * (a - 1.0), -frac * ls};
    }
  }
};

}  // namespace

EllisFit fit_ellis(const FlowCurve& curve) {
  curve.validate(true);
  const size_t n = curve.points.size();

  // Flat curve: Newtonian degenerate branch.
  double lmin = std::numeric_limits<double>::max(), lmax = -lmin, lsum = 0.0;
  for (const auto& [s, e] : curve.points) {
    const double le = std::log(e);
    lmin = std::min(lmin, le);
    lmax = std::max(lmax, le);
    lsum += le;
  }
  if (lmax - lmin < 1e-6) {
    EllisFit fit{EllisParams(std::exp(lsum / double(n)), 0.0, 1.0), 0.0, 0};
    return fit;
  }

  // Initial guess: eta0 from the low-stress end, sigma_crit where the curve
  // first drops below eta0/2 (or the geometric mid-stress), a = 2.
  const double eta0_guess = curve.points.front().second;
  double sigma_half = std::sqrt(curve.points.front().first * curve.points.back().first);
  for (const auto& [s, e] : curve.points) {
    if (e <= 0.5 * eta0_guess) {
      sigma_half = s;
      break;
    }
  }
  std::array<double, 3> th = {std::log(eta0_guess), -std::log(sigma_half), 2.0};

  LogModel model{curve};
  std::vector<double> r;
  std::vector<std::array<double, 3>> jac;
  double lambda = 1e-3;
  // The valley is extremely flat for near-Newtonian curves (a close to 1),
  // so the gradient tolerance must be tight to pin down k and eta0.
  const int max_iter = 5000;
  const double grad_tol = 1e-13;

  auto sq_norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };

  model.eval(th, r, jac);
  double cost = sq_norm(r);
  int it = 0;
  for (; it < max_iter; ++it) {
    // Normal equations J^T J + lambda diag, J^T r (3x3 system).
    double jtj[3][3] = {};
    double jtr[3] = {};
    for (size_t i = 0; i < r.size(); ++i)
      for (int p = 0; p < 3; ++p) {
        jtr[p] += jac[i][p] * r[i];
        for (int q = 0; q < 3; ++q) jtj[p][q] += jac[i][p] * jac[i][q];
      }
    const double gnorm = std::sqrt(jtr[0] * jtr[0] + jtr[1] * jtr[1] + jtr[2] * jtr[2]);
    if (gnorm < grad_tol) break;

    bool stepped = false;
    for (int tries = 0; tries < 40 && !stepped; ++tries) {
      double m[3][4];
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) m[p][q] = jtj[p][q] + (p == q ? lambda * (1.0 + jtj[p][p]) : 0.0);
        m[p][3] = -jtr[p];
      }
      // Gaussian elimination with partial pivoting.
      bool singular = false;
      for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int rr = c + 1; rr < 3; ++rr)
          if (std::abs(m[rr][c]) > std::abs(m[piv][c])) piv = rr;
        if (std::abs(m[piv][c]) < 1e-300) {
          singular = true;
          break;
        }
        std::swap(m[c], m[piv]);
        for (int rr = c + 1; rr < 3; ++rr) {
          const double f = m[rr][c] / m[c][c];
          for (int q = c; q < 4; ++q) m[rr][q] -= f * m[c][q];
        }
      }
      std::array<double, 3> step{};
      if (!singular) {
        for (int c = 2; c >= 0; --c) {
          double s = m[c][3];
          for (int q = c + 1; q < 3; ++q) s -= m[c][q] * step[q];
          step[c] = s / m[c][c];
        }
      }
      std::array<double, 3> cand = {th[0] + step[0], th[1] + step[1],
                                    std::max(1.0, th[2] + step[2])};
      std::vector<double> rc;
      std::vector<std::array<double, 3>> jc;
      model.eval(cand, rc, jc);
      const double cc = sq_norm(rc);
      if (!singular && cc < cost) {
        th = cand;
        r = std::move(rc);
        jac = std::move(jc);
        cost = cc;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) break;
  }

  // Final gradient check against the declared tolerance.
  double jtr[3] = {};
  for (size_t i = 0; i < r.size(); ++i)
    for (int p = 0; p < 3; ++p) jtr[p] += jac[i][p] * r[i];
  const double gnorm = std::sqrt(jtr[0] * jtr[0] + jtr[1] * jtr[1] + jtr[2] * jtr[2]);
  if (gnorm >= 1e-13 && it >= max_iter)
    throw NonConvergence("fit_ellis: gradient tolerance not reached");

  EllisFit fit{EllisParams(std::exp(th[0]), std::exp(th[1]), th[2]),
               std::sqrt(cost / double(n)), it};
  return fit;
}

double deborah(double tau, double t_flow) {
  if (!(t_flow > 0.0)) throw std::invalid_argument("deborah: t_flow must be > 0");
  if (tau < 0.0) throw std::invalid_argument("deborah: tau must be >= 0");
  return tau / t_flow;
}

double stress_amplitude(double sigma_flow, double sigma_crit) {
  if (!(sigma_crit > 0.0))
    throw std::invalid_argument("stress_amplitude: sigma_crit must be > 0");
  return sigma_flow / sigma_crit;
}

double estimate_relaxation_time(const LVETable& table) {
  table.validate();
  const auto& rows = table.rows;
  if (rows.size() < 3)
    throw std::invalid_argument("estimate_relaxation_time: need >= 3 points");

  // Terminal branch: lowest-omega points with G'' > G' whose local log-log
  // slopes match G' ~ w^2, G'' ~ w within 20%. Window of 3 points.
  auto slope = [&](int i, auto value) {
    const int j = i + 1;
    return (std::log(value(rows[j])) - std::log(value(rows[i]))) /
           (std::log(rows[j].omega) - std::log(rows[i].omega));
  };
  int terminal_count = 0;
  double sum = 0.0;
  for (size_t i = 0; i + 1 < rows.size() && terminal_count < 3; ++i) {
    const auto& r = rows[i];
    if (!(r.g_double_prime > r.g_prime) || r.g_prime <= 0.0) break;
    const double sp = slope(int(i), [](const LVETable::Row& x) { return x.g_prime; });
    const double spp = slope(int(i), [](const LVETable::Row& x) { return x.g_double_prime; });
    if (std::abs(sp - 2.0) > 0.4 || std::abs(spp - 1.0) > 0.2) break;
    sum += r.g_prime / (r.g_double_prime * r.omega);
    ++terminal_count;
  }
  if (terminal_count == 3) return sum / 3.0;

  // Crossover branch: first sign change of log G' - log G''.
  for (size_t i = 0; i + 1 < rows.size(); ++i) {
    if (rows[i].g_prime <= 0.0 || rows[i].g_double_prime <= 0.0) continue;
    const double d0 = std::log(rows[i].g_prime) - std::log(rows[i].g_double_prime);
    const double d1 = std::log(rows[i + 1].g_prime) - std::log(rows[i + 1].g_double_prime);
    if (d0 == 0.0) return 1.0 / rows[i].omega;
    if (d0 * d1 < 0.0) {
      const double lw0 = std::log(rows[i].omega), lw1 = std::log(rows[i + 1].omega);
      const double lwc = lw0 + (lw1 - lw0) * (-d0) / (d1 - d0);
      return std::exp(-lwc);
    }
  }
  throw NoEstimate("estimate_relaxation_time: no terminal regime or crossover");
}

namespace {

std::vector<std::vector<double>> read_columns(const std::string& path, size_t ncols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (char& c : line)
      if (c == ',' || c == '\t' || c == ';') c = ' ';
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty()) continue;
    if (row.size() != ncols)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(ncols) + " columns");
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

FlowCurve read_flow_curve(const std::string& path) {
  FlowCurve curve;
  for (const auto& row : read_columns(path, 2))
    curve.points.emplace_back(row[0], row[1]);
  curve.validate();
  return curve;
}

LVETable read_lve_table(const std::string& path) {
  LVETable table;
  for (const auto& row : read_columns(path, 3))
    table.rows.push_back({row[0], row[1], row[2]});
  table.validate();
  return table;
}

}  // namespace vialcv
