// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

namespace kshk {

// One-dimensional quadrature rule: sum_i weights[i] * g(nodes[i]).
struct Rule1D {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    int size() const { return static_cast<int>(nodes.size()); }
};

// Gauss-Hermite rule for the standard normal weight:
//   integral g(x) (2*pi)^{-1/2} exp(-x^2/2) dx  =  sum w_i g(x_i).
Rule1D gauss_hermite_prob(int n);

// Gauss-Hermite rule for the physicists' weight exp(-x^2), total mass sqrt(pi).
Rule1D gauss_hermite_phys(int n);

// Gauss-Legendre rule on [a, b] for the unit weight.
Rule1D gauss_legendre(int n, double a, double b);

// Generalized Gauss-Laguerre rule for the weight x^alpha exp(-x) on (0, inf),
// alpha > -1.  Total mass Gamma(alpha + 1).
Rule1D gauss_laguerre(int n, double alpha);

// Graded rule for the angular kernel factor:
//   integral_{theta_min}^{pi/2} theta^{-1-2s} g(theta) dtheta
// with theta_min = (pi/2) / 2^levels.  The domain is split into `levels`
// dyadic panels [pi/2^{k+1}, pi/2^k], each carrying a Gauss-Legendre rule
// with pts_per_panel points; the kernel factor theta^{-1-2s} is folded into
// the weights.  Grazing collisions below theta_min are excluded; this
// truncation is part of the discretized kernel definition, shared by default
// and refined rules.
Rule1D graded_theta_rule(double s, int levels, int pts_per_panel);

// Uniform azimuthal rule: phi_j = 2*pi*j/m, weights 2*pi/m.  Exact for
// trigonometric polynomials of degree <= m-1.
Rule1D uniform_azimuthal(int m);

} // namespace kshk
