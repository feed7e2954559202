#pragma once

#include <array>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "qsp/model.hpp"

namespace qsp::testing {

/// Five-point central difference of f at x.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// Roots of the monic cubic s^3 + c[1] s^2 + c[2] s + c[3] as eigenvalues of
/// its companion matrix, sorted by real part descending.
std::array<std::complex<double>, 3> companion_roots(const std::array<double, 4>& c);

double bisect(const std::function<double(double)>& f, double a, double b, double tol = 1e-15);

/// Sign changes of f on a uniform scan of [a, b].
int count_sign_changes(const std::function<double(double)>& f, double a, double b, int n);

/// tanh motility evaluated directly at complex u.
std::complex<double> motility_complex(const MotilitySpec& spec, std::complex<double> u);

/// Taylor coefficients f^{(m)}(u0) / m! from the trapezoidal Cauchy integral
/// on a circle of the given radius.
std::vector<double> cauchy_taylor(const std::function<std::complex<double>(std::complex<double>)>& f, double u0,
                                  double radius, int m_max, int nodes = 256);

/// A random parameter set with a steady state whose uniform mode is stable.
ModelParams random_params(std::mt19937_64& rng);

/// Chebyshev collocation solution of
///   eps y'' - lambda s y' - D(u) k^2 y = -F s,   s = u - u*, |s| <= half_width,
/// with Dirichlet data y(u* -+ half_width) = left, right. Returns (s, y) at the nodes.
struct BvpSolution {
  std::vector<double> s;
  std::vector<double> y;
};
BvpSolution solve_q_bvp(const MotilitySpec& motility, double u_star, double k, double lambda, double forcing,
                        double epsilon, double half_width, double left, double right, int nodes = 96);

}  // namespace qsp::testing
