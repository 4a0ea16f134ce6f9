"""Closed-form free-space probe field V and its derivatives.

V solves (1/(eps mu)) curl curl V + tau^2 V + f = 0 in all of space with
f = -(tau/eps) f_tilde(tau) chi_B a.  Everything reduces to the radial
Yukawa ball potential

    u(rho) = (1/4 pi) integral_B e^{-tau_t |x-y|} / |x-y| dy,

for which both sides of the ball boundary have elementary expressions:

    u_out(rho) = phi(tau_t eta) / tau_t^3 * e^{-tau_t rho} / rho,
    u_in(rho)  = (1 - (1 + tau_t eta) e^{-tau_t eta} sinh(s)/s) / tau_t^2,

with s = tau_t rho and phi(xi) = xi cosh xi - sinh xi.  The field is

    V(x) = mu tau f_tilde [ u I - Hess u / tau_t^2 ] a,

smooth across the ball boundary.  Outside B this collapses to the
prefactor K f_tilde v(r) times the matrix M = A I - B w (x) w acting on a,
which is the form the curl, the Jacobian, and all surface asymptotics
use; the A, B coefficients and the derivative displays are below.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsideBall

_PHI_SERIES_CUT = 0.2


def phi(xi):
    """xi cosh xi - sinh xi, stable for small and large arguments.

    Equals (xi-1)e^xi/2 + (xi+1)e^{-xi}/2; below the series cut the
    expansion sum_k 2k xi^{2k+1}/(2k+1)! avoids the cancellation of the
    two halves.
    """
    xi = np.asarray(xi, dtype=float)
    small = np.abs(xi) < _PHI_SERIES_CUT
    x2 = xi * xi
    ser = xi * x2 * (1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (
        1.0 / 840.0 + x2 / 45360.0)))
    with np.errstate(over="ignore"):
        direct = np.where(small, 0.0,
                          0.5 * (xi - 1.0) * np.exp(np.where(small, 0.0, xi))
                          + 0.5 * (xi + 1.0) * np.exp(-xi))
    out = np.where(small, ser, direct)
    return float(out) if out.ndim == 0 else out


def phi_log(xi):
    """log phi(xi) for xi > 0, valid far past floating-point overflow."""
    xi = float(xi)
    if xi <= 0:
        raise ValueError("phi_log needs xi > 0")
    if xi < _PHI_SERIES_CUT:
        return float(np.log(phi(xi)))
    if xi < 30.0:
        return float(np.log(phi(xi)))
    # phi = (xi-1)e^xi/2 * (1 + ((xi+1)/(xi-1)) e^{-2xi})
    return xi + np.log(0.5 * (xi - 1.0)) + np.log1p(
        (xi + 1.0) / (xi - 1.0) * np.exp(-2.0 * xi))


def _g_pair(s):
    """(sinh(s)/s, phi(s)/s^3, g'' numerator/s^3) for the interior radial
    potential: g = sinh(s)/s, g' = s * (phi(s)/s^3), g'' with the removable
    singularity at s = 0 handled by series.
    """
    if s < _PHI_SERIES_CUT:
        s2 = s * s
        g = 1.0 + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 / 5040.0))
        gp_over_s = 1.0 / 3.0 + s2 * (1.0 / 30.0 + s2 / 840.0)
        gpp = 1.0 / 3.0 + s2 * (1.0 / 10.0 + s2 / 168.0)
        return g, gp_over_s, gpp
    sh, ch = np.sinh(s), np.cosh(s)
    g = sh / s
    gp_over_s = (s * ch - sh) / s ** 3
    gpp = ((s * s + 2.0) * sh - 2.0 * s * ch) / s ** 3
    return g, gp_over_s, gpp


@dataclass(frozen=True)
class ProbeField:
    """A source spec frozen at one value of tau, with cached transforms."""

    spec: object
    tau: float
    tau_t: float = field(init=False)
    f_tilde: float = field(init=False)
    K: float = field(init=False)
    log_K: float = field(init=False)

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        sp = self.spec
        tau_t = self.tau * np.sqrt(sp.mu * sp.eps)
        xi = tau_t * sp.eta
        log_K = np.log(sp.mu * self.tau) + phi_log(xi) - 3.0 * np.log(tau_t)
        object.__setattr__(self, "tau_t", float(tau_t))
        object.__setattr__(self, "f_tilde", float(sp.f_tilde(self.tau)))
        object.__setattr__(self, "log_K", float(log_K))
        with np.errstate(over="ignore"):
            object.__setattr__(self, "K", float(np.exp(log_K)))

    def _radial(self, x):
        d = np.asarray(x, dtype=float) - self.spec.p
        r = float(np.linalg.norm(d))
        return r, (d / r if r > 0 else np.zeros(3))

    def coeffs(self, r):
        """A(r), B(r) of the outside form M = A I - B w (x) w."""
        tt = self.tau_t
        q = (1.0 / tt) * (1.0 / r + 1.0 / (tt * r * r))
        return 1.0 + q, 1.0 + 3.0 * q


def log_v(tau_t, r):
    """log of the Yukawa kernel v(r) = e^{-tau_t r}/r."""
    return -tau_t * r - np.log(r)


def mean_value_kernel(x, spec, tau):
    """(1/4 pi) integral_B e^{-tau_t|x-y|}/|x-y| dy for x outside B.

    The ball average of the Yukawa kernel collapses to
    phi(tau_t eta)/tau_t^3 * e^{-tau_t |x-p|}/|x-p|.
    """
    tau_t = tau * np.sqrt(spec.mu * spec.eps)
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - spec.p))
    if r <= spec.eta:
        raise InsideBall("mean-value identity needs |x-p| > eta",
                         r=r, eta=spec.eta)
    return phi(tau_t * spec.eta) / tau_t ** 3 * np.exp(-tau_t * r) / r


def _u_derivs(probe, r):
    """(u, u'/rho, u'') of the radial potential at rho = r, either side."""
    sp = probe.spec
    tt = probe.tau_t
    s = tt * r
    if r > sp.eta:
        c = phi(tt * sp.eta) / tt ** 3
        e = np.exp(-s)
        u = c * e / r
        up_over_r = -c * e * (s + 1.0) / r ** 3
        upp = c * e * (tt * tt / r + 2.0 * tt / r ** 2 + 2.0 / r ** 3)
        return u, up_over_r, upp
    xi = tt * sp.eta
    b = (1.0 + xi) * np.exp(-xi)
    g, gp_over_s, gpp = _g_pair(s)
    u = (1.0 - b * g) / tt ** 2
    up_over_r = -b * gp_over_s          # u'/rho, regular at rho = 0
    upp = -b * gpp
    return u, up_over_r, upp


def V_field(x, probe):
    """The probe field V(x), exact on both sides of the ball boundary."""
    sp = probe.spec
    r, w = probe._radial(x)
    pref = sp.mu * probe.tau * probe.f_tilde
    if r == 0.0:
        u, up_over_r, _ = _u_derivs(probe, 0.0)
        return pref * (u - up_over_r / probe.tau_t ** 2) * sp.a
    u, up_over_r, upp = _u_derivs(probe, r)
    tt2 = probe.tau_t ** 2
    ca = u - up_over_r / tt2
    cw = (up_over_r - upp) / tt2
    return pref * (ca * sp.a + cw * np.dot(w, sp.a) * w)


def M_times_a(x, probe):
    """(A I - B w (x) w) a for x outside B: the bounded part of V."""
    sp = probe.spec
    r, w = probe._radial(x)
    if r <= sp.eta:
        raise InsideBall("outside form needs |x-p| > eta", r=r, eta=sp.eta)
    A, B = probe.coeffs(r)
    return A * sp.a - B * np.dot(w, sp.a) * w


def curl_V(x, probe):
    """curl V = -tau_t K f_tilde v(r) (1 + 1/(tau_t r)) w x a, x outside B."""
    sp = probe.spec
    r, w = probe._radial(x)
    if r <= sp.eta:
        raise InsideBall("curl closed form needs |x-p| > eta",
                         r=r, eta=sp.eta)
    scale = probe.K * probe.f_tilde * np.exp(-probe.tau_t * r) / r
    return -probe.tau_t * scale * (1.0 + 1.0 / (probe.tau_t * r)) \
        * np.cross(w, sp.a)


def curl_core(x, probe):
    """curl V without the K f_tilde v(r) prefactor (log-domain assembly)."""
    sp = probe.spec
    r, w = probe._radial(x)
    if r <= sp.eta:
        raise InsideBall("curl closed form needs |x-p| > eta",
                         r=r, eta=sp.eta)
    return -probe.tau_t * (1.0 + 1.0 / (probe.tau_t * r)) \
        * np.cross(w, sp.a)


def jacobian_core(x, probe):
    """V'(x) / (K f_tilde v(r)) for x outside B.

    d(Ma)/dx = alpha (3 (w.a) w(x)w - a(x)w)
               - (B/r) ((w.a) I - 2 (w.a) w(x)w + w(x)a)
    with alpha = (1/tau_t)(1/r^2 + 2/(tau_t r^3)), and the radial factor
    contributes -(tau_t + 1/r) (Ma)(x)w.
    """
    sp = probe.spec
    r, w = probe._radial(x)
    if r <= sp.eta:
        raise InsideBall("Jacobian closed form needs |x-p| > eta",
                         r=r, eta=sp.eta)
    tt = probe.tau_t
    A, B = probe.coeffs(r)
    alpha = (1.0 / tt) * (1.0 / r ** 2 + 2.0 / (tt * r ** 3))
    wa = np.dot(w, sp.a)
    ww = np.outer(w, w)
    Ma = A * sp.a - B * wa * w
    core = alpha * (3.0 * wa * ww - np.outer(sp.a, w)) \
        - (B / r) * (wa * np.eye(3) - 2.0 * wa * ww + np.outer(w, sp.a))
    return core - (tt + 1.0 / r) * np.outer(Ma, w)


def V_jacobian(x, probe):
    """dV/dx for x outside B, from the closed-form derivative displays."""
    r, _ = probe._radial(x)
    scale = probe.K * probe.f_tilde * np.exp(-probe.tau_t * r) / r
    return scale * jacobian_core(x, probe)
