#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qsp/config.hpp"
#include "qsp/continuation.hpp"
#include "qsp/grid.hpp"
#include "qsp/pde.hpp"
#include "qsp/wna.hpp"

namespace qsp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Plain CSV: header row, then rows; numbers printed with %.12g.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(const std::vector<double>& row);
  void add_cells(const std::vector<std::string>& row);
  std::string str() const;
  void write(const std::string& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_number(double v);

/// Manifest of one CLI run: what was run, with which inputs, and what it wrote.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> arguments;
  json config;
  std::string tool_version = kToolVersion;
  std::string started_utc;
  std::string finished_utc;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;  // paths relative to the output directory

  json to_json() const;
  static RunManifest from_json(const json& j);
};

std::string utc_now();

/// Numerical setup shared by the PDE experiments.
struct StudyOptions {
  GridOptions grid;
  SolverOptions solver;
  /// D' search interval (1 +- bracket) D'_0 for bifurcation detection.
  double bracket = 0.15;
  int bracket_samples = 4;
  FitSamplingPolicy fit;
};

struct BifurcationStudy {
  double epsilon = 0.0;
  int nx = 0;
  int nu = 0;
  double D_theory = 0.0;
  double D_hat = 0.0;
  double D_rel_error = 0.0;
  double b_theory = 0.0;
  double b_hat = 0.0;
  double b_rel_error = 0.0;
  PitchforkFit fit;
  std::string status = "ok";
  double seconds = 0.0;
  Branch branch;  // amplitude-pinned points used by the fit
};

/// Detect the pitchfork on the uniform branch and fit b on the "+" branch.
/// Failures are reported through status, not thrown.
BifurcationStudy run_bifurcation_study(const ModelParams& params, const StudyOptions& options);

struct SweepPlan {
  enum class Axis { Epsilon, RhoStar, DPrime };
  Axis axis = Axis::Epsilon;
  std::vector<double> values;
  int threads = 1;

  /// Nonempty, finite, sorted (strictly decreasing for epsilon, increasing otherwise).
  void validate() const;
};
std::string to_string(SweepPlan::Axis axis);

struct OriginFit {
  double slope = 0.0;
  double r_squared = 0.0;             // 1 - SS_res / SS_tot about the mean
  double r_squared_uncentered = 0.0;  // 1 - SS_res / sum y^2
  int n = 0;
};
OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y);

struct EpsilonScaling {
  std::vector<BifurcationStudy> rows;
  double D_theory = 0.0;
  double b_theory = 0.0;
  OriginFit D_fit;
  OriginFit b_fit;
  bool D_monotone = false;  // errors strictly decrease with epsilon
  bool b_monotone = false;
};

/// Needs >= 3 epsilon values; per-point failures are recorded and skipped in the fits.
EpsilonScaling run_epsilon_scaling(const ModelParams& params, const SweepPlan& plan, const StudyOptions& options);

/// Side of D_hat on which small nontrivial states live, read off
/// amplitude-pinned "+" states, against the side predicted by sign(mu).
struct DirectionCheck {
  double rho_star = 0.0;
  double mu = 0.0;
  double D_theory = 0.0;
  double D_hat = 0.0;
  std::vector<double> amplitudes;  // pinned rho cos-amplitudes
  std::vector<double> offsets;     // D' - D_hat of the pinned states
  int observed = 0;   // sign of D' - D_hat; 0 if inconsistent
  int predicted = 0;  // -1 supercritical, +1 subcritical
  bool agree = false;
  std::string status = "ok";
};

DirectionCheck observe_branch_direction(const ModelParams& params, const StudyOptions& options,
                                        const std::vector<double>& amplitude_fractions = {0.01, 0.02});

std::vector<DirectionCheck> run_criticality_sweep(const ModelParams& params, const SweepPlan& plan,
                                                  const StudyOptions& options);

struct GrowthOptions {
  double D_prime_factor = 1.5;  // D' = factor * D'_0
  double amplitude = 1e-4;
  double dt = 0.5;
  double t_skip = 40.0;
  double t_end = 80.0;
};

struct GrowthMeasurement {
  double D_prime = 0.0;
  double sigma_theory = 0.0;
  double sigma_log_slope = 0.0;  // raw log slope of the cos amplitude
  double sigma_measured = 0.0;   // corrected for the implicit Euler amplification factor
  double relative_error = 0.0;
  std::vector<std::pair<double, double>> trace;  // (t, rho cos amplitude)
};

GrowthMeasurement measure_linear_growth(const ModelParams& params, const StudyOptions& options,
                                        const GrowthOptions& growth);

/// a(t)^2 = a_sat^2 / (1 + C exp(-2 sigma t)).
struct LogisticFit {
  double sigma = 0.0;
  double a_sat = 0.0;
  double C = 0.0;
  double residual = 0.0;  // relative RMS misfit
};
LogisticFit fit_logistic(const std::vector<std::pair<double, double>>& trace);

struct AmplitudeOptions {
  /// D' = D_hat - offset |D'_0| (the supercritical side for mu > 0).
  double offset = 0.03;
  double amplitude = 2e-3;
  double dt = 2.0;
  double t_skip = 60.0;
  double t_end = 2400.0;
};

struct AmplitudeDynamics {
  double D_hat = 0.0;
  double D_prime = 0.0;
  double sigma_theory = 0.0;
  double a_sat_theory = 0.0;
  LogisticFit pde;
  LogisticFit ode;
  double sat_rel_error = 0.0;
  double growth_rel_error = 0.0;
  std::vector<std::pair<double, double>> pde_trace;  // (t, c cos amplitude)
  std::vector<std::pair<double, double>> ode_trace;
};

/// PDE run just past the detected bifurcation against the amplitude equation
/// integrated from the same initial amplitude. Unfolding is measured from D_hat.
AmplitudeDynamics run_amplitude_dynamics(const ModelParams& params, const StudyOptions& options,
                                         const AmplitudeOptions& amp);

struct PhasePoint {
  double rho_star = 0.0;
  double D_prime = 0.0;
  double small_seed = 0.0;  // final drho / rho* from a small perturbation
  double large_seed = 0.0;  // final drho / rho* from a finite-amplitude perturbation
  std::string status = "ok";
};

struct PhaseDiagram {
  std::vector<double> rho_values;
  std::vector<double> D_values;
  std::vector<PhasePoint> points;  // row-major in (rho, D)
  std::vector<std::pair<double, double>> critical_curve;  // (rho*, D'_0)
  double mu_crossing = 0.0;  // NaN if none found
};

struct PhaseOptions {
  double small_amplitude = 1e-3;
  double large_amplitude = 0.5;
  double dt = 5.0;
  double t_max = 1500.0;
  double steady_tol = 1e-7;
};

PhaseDiagram run_phase_diagram(const ModelParams& params, const std::vector<double>& rho_values,
                               const std::vector<double>& D_values, const StudyOptions& options,
                               const PhaseOptions& phase, int threads = 1);

/// Writes name.csv and name.svg side by side; returns both file names.
std::vector<std::string> emit_line_plot(const std::string& dir, const std::string& name, const CsvTable& table,
                                        const std::string& svg);

}  // namespace qsp
