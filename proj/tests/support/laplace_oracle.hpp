#pragma once

#include "qsp/wna.hpp"

namespace qsp::testing {

/// The six u-integrals and both second-order signal coefficients evaluated
/// at finite epsilon by adaptive Gauss-Kronrod quadrature of the
/// series-built WKB integrands (eta, W, eta_20, eta_22, n*).
struct LaplaceQuadrature {
  double epsilon = 0.0;
  double I0 = 0.0;
  double I1_per_dprime = 0.0;
  double I2 = 0.0;
  double I3 = 0.0;
  double I4 = 0.0;
  double I5 = 0.0;
  double c20 = 0.0;
  double c22 = 0.0;
};

LaplaceQuadrature laplace_quadrature(const WnaContext& ctx, double epsilon, int j_max = 4, int l_max = 24);

}  // namespace qsp::testing
