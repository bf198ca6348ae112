#include "direp/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace direp {

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

namespace {

bool finite(const Vec3& v) { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); }

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool collinear(const GeometryInstance& inst) {
  return norm(cross(inst.S, inst.T)) <= inst.tolerance * norm(inst.S) * norm(inst.T);
}

/// Problems other than collinearity.
std::vector<std::string> hard_problems(const GeometryInstance& inst) {
  std::vector<std::string> out;
  if (!finite(inst.S) || !finite(inst.T)) {
    out.push_back("S and T must be finite");
    return out;
  }
  const double ns = norm(inst.S), nt = norm(inst.T);
  if (ns == 0.0 || nt == 0.0) {
    out.push_back("S and T must be non-zero");
    return out;
  }
  if (std::abs(ns - nt) > inst.tolerance * std::max(ns, nt)) {
    out.push_back("|S| = " + fmt(ns) + " and |T| = " + fmt(nt) + " differ (equal norms required)");
  }
  return out;
}

Vec3 unit_normal(const GeometryInstance& inst) {
  if (collinear(inst)) throw GeometryError("S and T are collinear: the plane normal is undefined");
  const Vec3 n = cross(inst.S, inst.T);
  return (1.0 / norm(n)) * n;
}

void require_valid(const GeometryInstance& inst) {
  const auto problems = hard_problems(inst);
  if (problems.empty()) return;
  std::string message = "invalid geometry instance:";
  for (const auto& p : problems) message += " " + p + ";";
  throw GeometryError(message);
}

}  // namespace

std::vector<std::string> instance_problems(const GeometryInstance& inst) {
  auto out = hard_problems(inst);
  if (out.empty() && collinear(inst)) out.push_back("S and T are collinear");
  return out;
}

Decomposition vaegan_decompose(const GeometryInstance& inst) {
  require_valid(inst);
  Decomposition d;
  d.direp = 0.5 * (inst.S + inst.T);
  if (norm(d.direp) <= inst.tolerance * norm(inst.S)) throw GeometryError("S = -T: the midpoint V is the origin");
  d.ddrep_source = inst.S - d.direp;
  d.ddrep_target = inst.T - d.direp;
  d.degenerate = collinear(inst);
  return d;
}

Vec3 circle_point(const GeometryInstance& inst, double theta) {
  if (!(theta > 0.0 && theta <= std::numbers::pi / 2)) {
    throw GeometryError("theta = " + fmt(theta) + " outside (0, pi/2]");
  }
  require_valid(inst);
  const Vec3 n = unit_normal(inst);
  const Vec3 V = 0.5 * (inst.S + inst.T);
  const double s = std::sin(theta), c = std::cos(theta);
  if (theta == std::numbers::pi / 2) return V;  // cos(pi/2) is not exactly 0 in floating point
  return (s * s) * V + (norm(V) * s * c) * n;
}

std::array<double, 2> orthogonality_residual(const GeometryInstance& inst, const Vec3& D) {
  if (!finite(D)) throw GeometryError("D must be finite");
  const double od = norm(D);
  if (od == 0.0) throw GeometryError("OD has zero length");
  auto residual = [&](const Vec3& P) {
    const Vec3 dp = P - D;
    const double len = norm(dp);
    return len == 0.0 ? 0.0 : std::abs(dot(D, dp)) / (od * len);
  };
  return {residual(inst.S), residual(inst.T)};
}

double ddrep_size(const GeometryInstance& inst, const Vec3& direp) {
  return norm(inst.S - direp) + norm(inst.T - direp);
}

GeometryReport verify_claims(const GeometryInstance& inst, std::size_t n_theta) {
  GeometryReport report;
  if (n_theta < 2) throw GeometryError("verify_claims needs n_theta >= 2");
  for (const auto& p : instance_problems(inst)) report.diagnostics.push_back("instance invariant violated: " + p);
  if (!report.diagnostics.empty()) return report;

  const Vec3 V = 0.5 * (inst.S + inst.T);
  const double v_norm = norm(V);
  const double step = (std::numbers::pi / 2) / static_cast<double>(n_theta);
  double best_size = std::numeric_limits<double>::infinity();
  double previous_od = 0.0;
  report.od_monotone = true;
  for (std::size_t i = 1; i <= n_theta; ++i) {
    const double theta = i == n_theta ? std::numbers::pi / 2 : step * static_cast<double>(i);
    const Vec3 D = circle_point(inst, theta);
    const auto [rs, rt] = orthogonality_residual(inst, D);
    SweepRow row{theta, norm(D), ddrep_size(inst, D), rs, rt};
    report.sweep.push_back(row);

    const double residual = std::max(rs, rt);
    if (residual > report.max_residual) report.max_residual = residual;
    if (residual >= inst.tolerance) {
      report.diagnostics.push_back("orthogonality residual " + fmt(residual) + " at theta = " + fmt(theta));
    }
    const double sine_error = std::abs(row.od_norm / v_norm - std::sin(theta));
    if (sine_error > report.max_sine_error) report.max_sine_error = sine_error;
    if (sine_error >= inst.tolerance) {
      report.diagnostics.push_back("|OD|/|V| differs from sin(theta) by " + fmt(sine_error) +
                                   " at theta = " + fmt(theta));
    }
    if (row.od_norm < previous_od) {
      report.od_monotone = false;
      report.diagnostics.push_back("|OD| decreases at theta = " + fmt(theta));
    }
    previous_od = row.od_norm;
    if (row.ddrep_size < best_size) {
      best_size = row.ddrep_size;
      report.argmin_theta = theta;
    }
  }
  if (std::abs(report.argmin_theta - std::numbers::pi / 2) > step) {
    report.diagnostics.push_back("ddrep_size is smallest at theta = " + fmt(report.argmin_theta) +
                                 ", not at pi/2");
  }
  report.passed = report.diagnostics.empty();
  return report;
}

void write_sweep_csv(const GeometryReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "theta,od_norm,ddrep_size,residual_source,residual_target\n";
  char buf[160];
  for (const auto& r : report.sweep) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.theta, r.od_norm, r.ddrep_size,
                  r.residual_source, r.residual_target);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace direp
