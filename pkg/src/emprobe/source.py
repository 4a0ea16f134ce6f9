"""Current-density pulses, their Laplace transforms, and admissibility.

The source is J(x,t) = f(t) chi_B(x) a for a ball B of radius eta around p
and a unit vector a.  Pulses vanish at t = 0 and have an H1 derivative;
the default ramped sine f(t) = t sin(omega t) is blended to zero with a C1
cutoff so its transform keeps the closed-form leading term.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import Overlap, OutOfWindow
from . import geometry

# Gauss-Legendre nodes for the blend segment of the transform.  The
# integrand there is smooth and short, 40 points are far past machine
# precision for every tau we use.
_GL_N = 40
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)


def _smoothstep_down(s):
    """C1 ramp 1 -> 0 on s in [0,1]."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class Pulse:
    """Scalar pulse shape with compact support [0, cutoff].

    variant is one of "ramped-sine" (t sin(omega t), gamma = 3),
    "poly" (t**degree, gamma = degree + 1), or "tabulated" (linear
    interpolation of sample columns t, value).  The C1 blend window of
    width `blend` before `cutoff` takes the analytic variants to zero.
    """

    variant: str = "ramped-sine"
    omega: float = 1.0
    cutoff: float = 1.0
    blend: float = 0.2
    degree: int = 2
    amplitude: float = 1.0
    table: np.ndarray = None  # (n, 2) for the tabulated variant

    def __post_init__(self):
        if self.variant not in ("ramped-sine", "poly", "tabulated"):
            raise ValueError("unknown pulse variant %r" % self.variant)
        if self.variant == "tabulated":
            t = np.asarray(self.table, dtype=float)
            if t.ndim != 2 or t.shape[1] != 2 or t.shape[0] < 2:
                raise ValueError("tabulated pulse needs an (n,2) table")
            if np.any(np.diff(t[:, 0]) <= 0):
                raise ValueError("tabulated pulse times must increase")
            if abs(t[0, 1]) > 0 or t[0, 0] != 0.0:
                raise ValueError("pulse must start at (0, 0)")
            object.__setattr__(self, "table", t)
        else:
            if not (self.cutoff > 0):
                raise ValueError("pulse cutoff must be positive")
            if not (0 < self.blend <= self.cutoff):
                raise ValueError("blend must lie in (0, cutoff]")
            if self.variant == "ramped-sine" and not (self.omega > 0):
                raise ValueError("omega must be positive")
            if self.variant == "poly" and self.degree < 1:
                raise ValueError("poly degree must be >= 1")

    @property
    def gamma(self):
        """Transform decay order: f_tilde ~ tau^{-gamma}.  Metadata only;
        unknown (nan) for tabulated data."""
        if self.variant == "ramped-sine":
            return 3.0
        if self.variant == "poly":
            return float(self.degree + 1)
        return float("nan")

    def support_end(self):
        if self.variant == "tabulated":
            return float(self.table[-1, 0])
        return self.cutoff

    def _raw(self, t):
        if self.variant == "ramped-sine":
            return self.amplitude * t * np.sin(self.omega * t)
        if self.variant == "poly":
            return self.amplitude * t ** self.degree
        return self.amplitude * np.interp(t, self.table[:, 0],
                                          self.table[:, 1],
                                          left=0.0, right=0.0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = self._raw(np.clip(t, 0.0, None))
        if self.variant != "tabulated":
            s = (t - (self.cutoff - self.blend)) / self.blend
            v = v * _smoothstep_down(s)
        return np.where((t < 0) | (t > self.support_end()), 0.0, v)

    def h1_seminorm(self):
        """Discrete H1 seminorm of the pulse (finite by construction for
        analytic variants; checks the tabulated data)."""
        if self.variant == "tabulated":
            dt = np.diff(self.table[:, 0])
            dv = np.diff(self.table[:, 1])
            return float(np.sqrt(np.sum(dv * dv / dt)))
        t = np.linspace(0.0, self.support_end(), 4001)
        dv = np.gradient(self.__call__(t), t)
        return float(np.sqrt(np.trapezoid(dv * dv, t)))


def pulse_value(pulse, t, T=None):
    """Pulse value at time t; t may be an array.

    Raises OutOfWindow for t < 0 or, when the observation span T is given,
    t > T.
    """
    t_arr = np.asarray(t, dtype=float)
    hi = np.inf if T is None else float(T)
    if np.any(t_arr < 0) or np.any(t_arr > hi):
        raise OutOfWindow("time outside the recording window",
                          t=float(np.atleast_1d(t_arr).ravel()[0]), T=T)
    out = pulse(t_arr)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def _laplace_ramped_sine_segment(omega, tau, t1):
    """Closed form of integral_0^t1 e^{-tau t} t sin(omega t) dt.

    Written via the imaginary part of integral t e^{st} dt with
    s = i omega - tau, whose antiderivative is e^{st}(st - 1)/s^2.
    """
    s = complex(-tau, omega)
    F = lambda t: np.exp(s * t) * (s * t - 1.0) / (s * s)
    return float((F(t1) - F(0.0)).imag)


def _gl_segment(g, a, b, tau):
    """Gauss-Legendre integral of e^{-tau t} g(t) on [a, b]."""
    if b <= a:
        return 0.0
    tm = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
    wm = 0.5 * (b - a) * _GL_W
    return float(np.sum(wm * np.exp(-tau * tm) * g(tm)))


def laplace_pulse(pulse, tau, T=None):
    """Laplace transform integral_0^T e^{-tau t} f(t) dt.

    T defaults to the pulse support end (f vanishes beyond it, so any
    larger T gives the same value).  Ramped sine uses the closed form up
    to the blend window plus Gauss quadrature across it; other variants
    are integrated by composite quadrature at their own resolution.
    """
    tau = float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    end = pulse.support_end()
    upper = end if T is None else min(float(T), end)
    if upper <= 0:
        return 0.0
    if pulse.variant == "ramped-sine":
        t1 = min(upper, pulse.cutoff - pulse.blend)
        out = pulse.amplitude \
            * _laplace_ramped_sine_segment(pulse.omega, tau, t1) \
            if t1 > 0 else 0.0
        out += _gl_segment(pulse, t1, upper, tau)
        return out
    if pulse.variant == "poly":
        t1 = min(upper, pulse.cutoff - pulse.blend)
        # piecewise: polynomial part exactly, blend by quadrature
        out = 0.0
        if t1 > 0:
            # integral t^k e^{-tau t} by stable downward recursion
            # I_k(t1) = (k I_{k-1} - t1^k e^{-tau t1}) / tau, I_0 known.
            e1 = np.exp(-tau * t1)
            I = (1.0 - e1) / tau
            for k in range(1, pulse.degree + 1):
                I = (k * I - t1 ** k * e1) / tau
            out = pulse.amplitude * I
        out += _gl_segment(pulse, t1, upper, tau)
        return out
    # tabulated: exact transform of the linear interpolant, segment by
    # segment (each piece is (alpha + beta t) e^{-tau t}, integrable in
    # closed form), which is the transform of the pulse as defined.
    t, v = pulse.table[:, 0], pulse.amplitude * pulse.table[:, 1]
    out = 0.0
    for k in range(len(t) - 1):
        a, b = t[k], min(t[k + 1], upper)
        if b <= a:
            break
        beta = (v[k + 1] - v[k]) / (t[k + 1] - t[k])
        alpha = v[k] - beta * t[k]

        def anti(tt):
            return -np.exp(-tau * tt) * (alpha + beta * tt
                                         + beta / tau) / tau
        out += anti(b) - anti(a)
    return float(out)


@dataclass(frozen=True)
class SourceSpec:
    """Ball-supported polarized source with its observation window."""

    p: np.ndarray
    eta: float
    a: np.ndarray
    pulse: Pulse = field(default_factory=Pulse)
    T: float = 4.0
    eps: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        a = np.asarray(self.a, dtype=float)
        na = np.linalg.norm(a)
        if na == 0:
            raise ValueError("polarization direction must be nonzero")
        object.__setattr__(self, "a", a / na)
        if not (self.eta > 0):
            raise ValueError("source radius eta must be positive")
        if not (self.T > 0):
            raise ValueError("observation time T must be positive")
        if not (self.eps > 0 and self.mu > 0):
            raise ValueError("material constants must be positive")

    @property
    def gamma(self):
        return self.pulse.gamma

    @property
    def wave_speed(self):
        return 1.0 / np.sqrt(self.eps * self.mu)

    def f_tilde(self, tau):
        return laplace_pulse(self.pulse, tau, self.T)


@dataclass(frozen=True)
class SourceDiagnostics:
    dist: float
    window_ok: bool
    window_needed: float
    reflectors: tuple          # SurfacePoint tuple
    slant_ok: tuple            # per reflector: |a . nu_q| != 1
    gamma: float
    h1_seminorm: float


def validate_source(spec, obstacle):
    """Admissibility report for a source against an obstacle.

    Raises Overlap when the closed source ball meets the closed obstacle.
    Warns (without failing) when every first reflector has a . nu_q = +-1,
    which makes the curvature-weighted sum degenerate.
    """
    d_p = geometry.signed_distance(obstacle, spec.p)
    if d_p <= spec.eta:
        raise Overlap("source ball intersects the obstacle",
                      d_boundary=float(d_p), eta=spec.eta)
    dist = float(d_p - spec.eta)
    needed = 2.0 * np.sqrt(spec.mu * spec.eps) * dist
    refl = tuple(geometry.first_reflector(obstacle, spec.p))
    slant = tuple(bool(abs(abs(np.dot(spec.a, sp.nu)) - 1.0) > 1e-12)
                  for sp in refl)
    if refl and not any(slant):
        warnings.warn("polarization is normal to every first reflector; "
                      "the leading curvature term vanishes", UserWarning,
                      stacklevel=2)
    return SourceDiagnostics(dist=dist, window_ok=bool(spec.T > needed),
                             window_needed=float(needed), reflectors=refl,
                             slant_ok=slant, gamma=float(spec.gamma),
                             h1_seminorm=spec.pulse.h1_seminorm())
