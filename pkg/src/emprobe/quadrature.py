"""Quadrature rules: Gauss product rules on balls, graded surface panels.

The ball rule feeds volume integrals over the source ball; its weights sum
to the exact ball volume (the radial Gauss rule integrates r^2 exactly),
which downstream code checks before trusting a rule.  The graded panel
generator concentrates nodes near theta = 0 where Laplace-type surface
integrands localize.
"""

import numpy as np

from .errors import DegenerateQuadrature


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w


def ball_rule(center, radius, n_r=6, n_theta=8, n_phi=8):
    """Product Gauss rule on the ball |x - center| < radius.

    Radial Gauss-Legendre with the r^2 Jacobian folded into the weights,
    Gauss in cos(theta), uniform in phi.  All nodes are strictly interior.
    Returns (nodes (n,3), weights (n,)); weights sum to the ball volume to
    machine precision.
    """
    center = np.asarray(center, dtype=float)
    r, wr = gauss_legendre(n_r, 0.0, radius)
    c, wc = gauss_legendre(n_theta, -1.0, 1.0)
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = 2.0 * np.pi / n_phi

    R, C, P = np.meshgrid(r, c, phi, indexing="ij")
    S = np.sqrt(np.clip(1.0 - C * C, 0.0, None))
    pts = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C],
                   axis=-1).reshape(-1, 3)
    w = (wr * r * r)[:, None, None] * wc[None, :, None] * wphi
    w = np.broadcast_to(w, R.shape).reshape(-1).copy()

    vol = 4.0 * np.pi * radius ** 3 / 3.0
    if abs(w.sum() - vol) > 1e-6 * vol:
        raise DegenerateQuadrature("ball rule weights do not sum to the "
                                   "ball volume", got=float(w.sum()),
                                   expected=vol)
    return center + pts, w


def graded_theta_panels(theta_star, n_gauss=12, growth=2.0,
                        theta_max=np.pi):
    """Panel breakpoints and Gauss nodes for integrands that decay on the
    angular scale theta_star away from theta = 0.

    The first panel has width ~ theta_star, later panels grow
    geometrically until they cover [0, theta_max].  Returns (nodes,
    weights) as flat arrays.
    """
    width = min(max(theta_star, 1e-8), theta_max)
    edges = [0.0]
    while edges[-1] < theta_max:
        edges.append(min(edges[-1] + width, theta_max))
        width *= growth
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(n_gauss, a, b)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def phi_ring(n_phi):
    """Midpoint rule in the azimuthal angle: nodes and the common weight."""
    return 2.0 * np.pi * (np.arange(int(n_phi)) + 0.5) / n_phi, \
        2.0 * np.pi / n_phi
