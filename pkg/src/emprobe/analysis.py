"""Semi-analytic side of the method: Laplace-method surface integrals,
the boundary form of the probe's energy over the obstacle, the
closed-form prediction of the indicator limit, and the curvature
recovery that inverts it.

Shape-operator orientation used throughout: every operator at a
reflector q is taken with respect to the unit vector nu_q pointing from
q toward the probe center.  That is the outward normal of the obstacle
(so a convex obstacle has H < 0, sphere of radius R has S = -I/R) and
the inward normal of the enclosing sphere through q (S = +I/d).  The
determinant of the difference is then positive for admissible geometry.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHessian, HypothesisViolated, \
    NegativeDiscriminant, QuadratureNotConverged, SingularSystem
from .freefield import ProbeField
from .logdomain import LogVal
from .quadrature import graded_theta_panels, phi_ring

_DET_TOL = 1e-12


# ---------------------------------------------------------------------------
# Reflector bookkeeping and the closed-form limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReflectorSummary:
    """Per-reflector geometry entering the second-order limit."""

    q: np.ndarray
    nu: np.ndarray
    det_diff: float       # det(S_sphere - S_obstacle), 1/length^2
    directional: float    # 1 - (a . nu)^2

    def __post_init__(self):
        if not (0.0 <= self.directional <= 1.0 + 1e-12):
            raise ValueError("directional factor out of range")


def reflector_summaries(obstacle, spec):
    """(d_p, [ReflectorSummary]) for the nearest boundary points."""
    refl = obstacle.reflectors(spec.p)
    d_p = float(np.linalg.norm(refl[0].q - spec.p))
    lam = 1.0 / d_p
    out = []
    for sp in refl:
        det2 = float(np.linalg.det(lam * np.eye(2) - sp.shape))
        if det2 <= _DET_TOL:
            raise DegenerateHessian(
                "shape operator difference not positive definite at a "
                "reflector", det=det2, q=sp.q.tolist())
        adn = float(np.dot(spec.a, sp.nu))
        out.append(ReflectorSummary(
            q=sp.q, nu=sp.nu, det_diff=det2,
            directional=min(max(1.0 - adn * adn, 0.0), 1.0)))
    return d_p, out


def laplace_oracle(obstacle, spec):
    """Closed-form value of the normalized indicator limit.

    (pi / 2 eps^2) (eta / d_p)^2 sum_q (1 - (a.nu_q)^2) / sqrt(det).
    """
    d_p, refl = reflector_summaries(obstacle, spec)
    s = sum(r.directional / math.sqrt(r.det_diff) for r in refl)
    return (math.pi / (2.0 * spec.eps ** 2)) \
        * (spec.eta / d_p) ** 2 * s


# ---------------------------------------------------------------------------
# Adaptive surface quadrature with the exponential factored out
# ---------------------------------------------------------------------------

def _components(obstacle):
    members = getattr(obstacle, "members", None)
    return members if members is not None else [obstacle]


def _component_scale(comp):
    lo, hi = comp.bounding_box()
    return 0.5 * float(np.max(hi - lo))


def adaptive_surface_integral(obstacle, p, rate, core, tol=1e-8,
                              n_gauss=10, n_phi=32, max_level=5):
    """integral over the boundary of e^{-rate |x-p|} core(x, nu, w, r) dS
    as a LogVal; w = (x-p)/r.

    Panels are graded toward each component's nearest point, where the
    exponential peaks; levels double the node counts until two agree to
    tol relative.  The reference exponent rate*d_min is factored out so
    the quadrature runs at O(1) scale.
    """
    p = np.asarray(p, dtype=float)
    comps = _components(obstacle)
    polemap = []
    d_min = np.inf
    for comp in comps:
        q = comp.nearest(p).q
        d_min = min(d_min, float(np.linalg.norm(q - p)))
        polemap.append((q - comp.center)
                       / np.linalg.norm(q - comp.center))

    prev = None
    ng, nph = n_gauss, n_phi
    for _ in range(max_level):
        total = 0.0
        for comp, pole in zip(comps, polemap):
            f = comp.chart(pole)
            theta_star = 1.0 / math.sqrt(1.0 + rate
                                         * _component_scale(comp))
            th, wth = graded_theta_panels(theta_star, n_gauss=ng)
            ph, wph = phi_ring(nph)
            TH, PH = np.meshgrid(th, ph, indexing="ij")
            pts, J = f(TH, PH)
            d = pts - p
            r = np.linalg.norm(d, axis=-1)
            w = d / r[..., None]
            nu = comp.normals(pts)
            vals = core(pts, nu, w, r)
            damp = np.exp(-rate * (r - d_min))
            total += float(np.sum(wth[:, None] * wph * J * damp * vals))
        if prev is not None:
            denom = max(abs(total), abs(prev), 1e-300)
            if abs(total - prev) <= tol * denom:
                if total == 0.0:
                    return LogVal.zero()
                return LogVal(1 if total > 0 else -1,
                              math.log(abs(total)) - rate * d_min)
        prev = total
        ng *= 2
        nph *= 2
    raise QuadratureNotConverged(
        "surface quadrature levels did not agree",
        last=prev, tolerance=tol)


def mform_weight(pts, nu, w, a):
    """The directional surface weight: -(nu.w)(1 - (w.a)^2).

    Equals 1 - (a.nu)^2 at a nearest boundary point, where w = -nu.
    """
    wa = w @ np.asarray(a, dtype=float)
    return -(np.sum(nu * w, axis=-1)) * (1.0 - wa * wa)


def surface_laplace_integral(obstacle, p, tau, weight="const", a=None,
                             eps=1.0, mu=1.0, tol=1e-8, **kw):
    """integral over the boundary of e^{-2 tau_t |x-p|}/|x-p|^2 w(x) dS
    with tau_t = tau sqrt(mu eps).

    weight "const" takes w = 1; "mform" takes the directional weight
    above (requires the polarization a).  Returns a LogVal.
    """
    tau_t = float(tau) * math.sqrt(mu * eps)
    if weight == "const":
        def core(pts, nu, w, r):
            return 1.0 / (r * r)
    elif weight == "mform":
        if a is None:
            raise ValueError("mform weight needs the polarization a")
        a = np.asarray(a, dtype=float)

        def core(pts, nu, w, r):
            return mform_weight(pts, nu, w, a) / (r * r)
    else:
        raise ValueError("weight must be 'const' or 'mform'")
    return adaptive_surface_integral(obstacle, p, 2.0 * tau_t, core,
                                     tol=tol, **kw)


# ---------------------------------------------------------------------------
# Energy of the probe over the obstacle, reduced to the boundary
# ---------------------------------------------------------------------------

def _unit_fields(probe, pts, w, r):
    """V and curl V at boundary points with the K f~ v-prefactor removed.

    V_hat = (1/r)(A a - B (w.a) w); C_hat = -(tau_t/r)(1 + 1/(tau_t r))
    (w x a).  The removed prefactor is K f~ e^{-tau_t r} per field.
    """
    a = probe.spec.a
    tt = probe.tau_t
    A, B = probe.coeffs(r)
    wa = w @ a
    V = (A[..., None] * a - (B * wa)[..., None] * w) / r[..., None]
    C = (-tt * (1.0 + 1.0 / (tt * r)) / r)[..., None] * np.cross(w, a)
    return V, C


def J_energy(obstacle, spec, tau, form="mixed", tol=1e-8, **kw):
    """Energy of the probe field over the obstacle, as a boundary
    integral (the probe is source-free there, so the volume energy
    (1/(mu eps)) |curl V|^2 + tau^2 |V|^2 integrates by parts onto the
    boundary).  Returns a LogVal.

    form "mixed" integrates -(1/(mu eps)) nu . (curl V x V); form
    "tangential" integrates (1/(mu eps)) (nu x V) . curl V.  The two
    integrands are algebraically identical; assembling both is a cheap
    independent check of the quadrature plumbing.
    """
    probe = ProbeField(spec, tau)

    if form == "tangential":
        def core(pts, nu, w, r):
            V, C = _unit_fields(probe, pts, w, r)
            return np.sum(np.cross(nu, V) * C, axis=-1)
    elif form == "mixed":
        def core(pts, nu, w, r):
            V, C = _unit_fields(probe, pts, w, r)
            return -np.sum(nu * np.cross(C, V), axis=-1)
    else:
        raise ValueError("form must be 'tangential' or 'mixed'")

    raw = adaptive_surface_integral(obstacle, spec.p, 2.0 * probe.tau_t,
                                    core, tol=tol, **kw)
    pref = LogVal(1, 2.0 * probe.log_K - math.log(spec.mu * spec.eps))
    return raw * pref * LogVal.from_value(probe.f_tilde) \
        * LogVal.from_value(probe.f_tilde)


def normalized_indicator_prediction(obstacle, spec, tau, **kw):
    """Semi-analytic stand-in for the indicator: 2 J(tau), as a LogVal.

    Valid when the recording window exceeds the round trip, the shape
    operator difference is positive definite at every reflector, and
    the polarization is not aligned with every reflector normal.
    """
    d_p, refl = reflector_summaries(obstacle, spec)
    dist = d_p - spec.eta
    if dist <= 0:
        raise HypothesisViolated("source ball touches the obstacle",
                                 dist=dist)
    t_round = 2.0 * math.sqrt(spec.mu * spec.eps) * dist
    if spec.T <= t_round:
        raise HypothesisViolated(
            "recording window shorter than the round trip",
            T=spec.T, needed=t_round)
    if all(r.directional < 1e-12 for r in refl):
        raise HypothesisViolated(
            "polarization aligned with every reflector normal")
    return J_energy(obstacle, spec, tau, **kw).scaled(2.0)


# ---------------------------------------------------------------------------
# Curvature recovery from two normalized limits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryResult:
    R: tuple
    X: tuple
    lambdas: tuple
    H: float
    K: float
    residual: float

    # H follows the toward-probe orientation pinned above: a convex
    # obstacle seen from outside reports H < 0.


def recover_curvatures(R, s, d_p, eta_j, a_dot_nu, eps):
    """Gauss and mean curvature at the reflector from two normalized
    limits R_j measured with ball offsets s_j and radii eta_j.

    Each R_j determines det(lambda_j I - S) with lambda_j =
    1/(d_p - s_j); expanding the determinant in (H, K) gives a linear
    2x2 system.
    """
    R1, R2 = float(R[0]), float(R[1])
    s1, s2 = float(s[0]), float(s[1])
    e1, e2 = float(eta_j[0]), float(eta_j[1])
    if s1 == s2:
        raise SingularSystem("equal offsets give a rank-one system",
                             s=s1)
    if not (0.0 < s1 < s2 < d_p):
        raise ValueError("offsets must satisfy 0 < s1 < s2 < d_p")
    if R1 <= 0.0 or R2 <= 0.0:
        raise ValueError("normalized limits must be positive")
    if abs(a_dot_nu) >= 1.0:
        raise ValueError("polarization aligned with the reflector "
                         "normal carries no curvature information")

    lam = np.array([1.0 / (d_p - s1), 1.0 / (d_p - s2)])
    face = 1.0 - a_dot_nu * a_dot_nu
    X = np.array([
        (face / R1) ** 2
        * ((math.pi / (2.0 * eps ** 2)) * (e1 / (d_p - s1)) ** 2) ** 2,
        (face / R2) ** 2
        * ((math.pi / (2.0 * eps ** 2)) * (e2 / (d_p - s2)) ** 2) ** 2,
    ])
    A = np.array([[-2.0 * lam[0], 1.0], [-2.0 * lam[1], 1.0]])
    rhs = X - lam ** 2
    Y = np.linalg.solve(A, rhs)
    H, K = float(Y[0]), float(Y[1])
    if H * H < K - 1e-9 * max(abs(K), 1.0):
        warnings.warn(NegativeDiscriminant(
            "recovered H^2 < K; principal curvatures not real "
            "(quadrature noise)"))
    resid = float(np.max(np.abs(A @ Y - rhs)))
    return RecoveryResult(R=(R1, R2), X=(float(X[0]), float(X[1])),
                          lambdas=(float(lam[0]), float(lam[1])),
                          H=H, K=K, residual=resid)


# ---------------------------------------------------------------------------
# Direction probing
# ---------------------------------------------------------------------------

def probe_direction(dist_at, p, omega, s, eta=0.0, tol=1e-6):
    """True when stepping from p by s d toward omega shortens the
    boundary distance by exactly s d, the signature of a nearest
    boundary direction.

    dist_at may return the boundary distance itself (eta = 0) or the
    pipeline's ball distance, in which case eta converts it.
    """
    p = np.asarray(p, dtype=float)
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    d = float(dist_at(p)) + eta
    moved = p + s * d * omega
    got = float(dist_at(moved)) + eta
    return abs(got - (1.0 - s) * d) <= tol * d


def direction_sweep(dist_at, p, directions, s=0.5, eta=0.0, tol=1e-6):
    """Boolean mask over a direction grid; True rows point at a nearest
    boundary point."""
    return np.array([probe_direction(dist_at, p, om, s, eta=eta, tol=tol)
                     for om in directions])


# ---------------------------------------------------------------------------
# Coarse exterior energy diagnostic
# ---------------------------------------------------------------------------

def exterior_energy_diagnostic(obstacle, spec, grid, taus, strict=True):
    """Truncated-domain estimate of the exterior energy of the scattered
    wave, (1/(mu eps)) |curl W|^2 + tau^2 |W|^2 summed over grid cells
    outside the obstacle, W the transform of (total - free) E.

    Diagnostic only: the domain is cut at the grid box, the transform is
    a trapezoid sum over the recorded window, and the curl is the bare
    grid stencil.  Returns one value per tau.
    """
    from . import kernels
    from .fdtd import _E_OFFSETS, build_sim, step

    taus = [float(t) for t in taus]
    if any(t <= 0 for t in taus):
        raise ValueError("tau must be positive")

    acc = {}
    for tag, obs in (("total", obstacle), ("free", None)):
        sim = build_sim(obs, spec, grid, strict=strict)
        acc[tag] = {t: {ax: np.zeros_like(sim.E[ax]) for ax in "xyz"}
                    for t in taus}
        for m in range(1, sim.n_steps + 1):
            step(sim, spec)
            w = sim.dt if m < sim.n_steps else 0.5 * sim.dt
            for t in taus:
                damp = w * math.exp(-t * m * sim.dt)
                for ax in "xyz":
                    acc[tag][t][ax] += damp * sim.E[ax]

    h = grid.h
    origin = sim.origin
    n = sim.n_cells

    def interior_mask(offsets, shape):
        ax = [origin[d] + (np.arange(shape[d]) + offsets[d]) * h
              for d in range(3)]
        X, Y, Z = np.meshgrid(*ax, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1)
        return obstacle.sdf(pts) < h

    emask = {ax: interior_mask(_E_OFFSETS[ax], sim.E[ax].shape)
             for ax in "xyz"}
    h_off = {"x": (0.0, 0.5, 0.5), "y": (0.5, 0.0, 0.5),
             "z": (0.5, 0.5, 0.0)}
    hshape = {"x": (n[0] + 1, n[1], n[2]), "y": (n[0], n[1] + 1, n[2]),
              "z": (n[0], n[1], n[2] + 1)}
    hmask = {ax: interior_mask(h_off[ax], hshape[ax]) for ax in "xyz"}

    out = []
    for t in taus:
        W = {ax: acc["total"][t][ax] - acc["free"][t][ax] for ax in "xyz"}
        C = {ax: np.zeros(hshape[ax]) for ax in "xyz"}
        kernels.update_h(W["x"], W["y"], W["z"], C["x"], C["y"], C["z"],
                         1.0 / h)
        curl_sq = sum(float(np.sum(np.where(hmask[ax], 0.0, C[ax] ** 2)))
                      for ax in "xyz")
        field_sq = sum(float(np.sum(np.where(emask[ax], 0.0,
                                             W[ax] ** 2)))
                       for ax in "xyz")
        out.append(h ** 3 * (curl_sq / (spec.mu * spec.eps)
                             + t * t * field_sq))
    return out
