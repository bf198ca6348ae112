#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace direp {

using Vec3 = std::array<double, 3>;

class GeometryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);
Vec3 operator*(double s, const Vec3& a);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);

/// Source and target vectors of equal length.
struct GeometryInstance {
  Vec3 S{};
  Vec3 T{};
  double tolerance = 1e-9;  // relative
};

/// Violations of the instance invariants: unequal norms, zero or non-finite
/// vectors, collinear S and T.
std::vector<std::string> instance_problems(const GeometryInstance& inst);

/// DI_V = (S + T) / 2 with DD_S = S - DI_V and DD_T = T - DI_V.
struct Decomposition {
  Vec3 direp{};
  Vec3 ddrep_source{};
  Vec3 ddrep_target{};
  bool degenerate = false;  // S and T collinear (S = T gives zero DDReps)
};

/// Throws GeometryError for unequal norms, zero or non-finite vectors, or
/// V = 0. Collinear S = T is flagged, not rejected.
Decomposition vaegan_decompose(const GeometryInstance& inst);

/// D = V sin^2(theta) + n |V| sin(theta) cos(theta), V = (S + T) / 2 and
/// n = unit(S x T). Throws GeometryError unless 0 < theta <= pi/2 and n exists.
Vec3 circle_point(const GeometryInstance& inst, double theta);

/// |OD.DS| / (|OD| |DS|) and |OD.DT| / (|OD| |DT|); a zero DS or DT counts
/// as 0. Throws GeometryError when OD has zero length.
std::array<double, 2> orthogonality_residual(const GeometryInstance& inst, const Vec3& D);

/// |S - DI| + |T - DI|.
double ddrep_size(const GeometryInstance& inst, const Vec3& direp);

struct SweepRow {
  double theta = 0.0;
  double od_norm = 0.0;
  double ddrep_size = 0.0;
  double residual_source = 0.0;
  double residual_target = 0.0;
};

struct GeometryReport {
  bool passed = false;
  double max_residual = 0.0;
  double max_sine_error = 0.0;  // max | |OD| / |V| - sin(theta) |
  double argmin_theta = 0.0;
  bool od_monotone = false;
  std::vector<SweepRow> sweep;
  std::vector<std::string> diagnostics;  // one entry per violated claim
};

/// Sweeps theta_i = (pi/2) i / n_theta for i = 1..n_theta and checks that the
/// circle points are orthogonal, that |OD| / |V| = sin(theta), that |OD| grows
/// with theta, and that ddrep_size is smallest at theta = pi/2. An invalid
/// instance is reported without sweeping.
GeometryReport verify_claims(const GeometryInstance& inst, std::size_t n_theta);

/// theta,od_norm,ddrep_size,residual_source,residual_target
void write_sweep_csv(const GeometryReport& report, const std::filesystem::path& path);

}  // namespace direp
