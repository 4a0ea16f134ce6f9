"""Exact analytic geometry for parametric obstacles.

Supplies signed distance, nearest boundary points, first-reflection sets,
shape operators, and the collar reflection map for three obstacle families:
spheres, ellipsoids, and unions of pairwise disjoint spheres.

Sign conventions, fixed once and used everywhere downstream:

* signed distance is positive outside the obstacle, negative inside;
* the unit normal ``nu`` points out of the obstacle;
* the shape operator of the obstacle surface is reported with respect to
  ``nu`` such that a sphere of radius R has S = -(1/R) I.  With this choice
  det(lambda I - S) = lambda^2 - 2 lambda H + K, the sphere that encloses
  the probing region at distance d carries +(1/d) I, and the difference
  used by the curvature asymptotics is positive definite at a first
  reflection point.  A convex obstacle therefore reports H < 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousProjection, ContinuumReflector, OutsideCollar

# Cap on well-separated near-minimizers before the reflector set is
# classified as a continuum and refused by the curvature asymptotics.
N_MAX_REFLECTORS = 64


@dataclass(frozen=True)
class SurfacePoint:
    """A boundary point with its local second-order data.

    shape is the 2x2 shape operator expressed in tangent_frame (rows are
    the two tangent vectors).
    """

    q: np.ndarray
    nu: np.ndarray
    tangent_frame: np.ndarray  # (2, 3), orthonormal, both rows perp to nu
    shape: np.ndarray          # (2, 2), symmetric

    def principal(self):
        """Principal curvatures and world-frame principal directions."""
        w, v = np.linalg.eigh(0.5 * (self.shape + self.shape.T))
        dirs = v.T @ self.tangent_frame  # (2, 3)
        return w, dirs


@dataclass(frozen=True)
class TubularParams:
    """Half-width of the collar where nearest-point projection is unique."""

    delta0: float


def orthonormal_tangents(n):
    """Two orthonormal vectors spanning the plane perpendicular to n."""
    n = np.asarray(n, dtype=float)
    k = np.argmin(np.abs(n))
    t1 = np.zeros(3)
    t1[k] = 1.0
    t1 = t1 - np.dot(t1, n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.vstack([t1, t2])


class Sphere:
    """Ball obstacle {|x - center| < radius}."""

    def __init__(self, center, radius):
        radius = float(radius)
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = radius

    def inside(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) < self.radius

    def sdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def nearest(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        v = x - self.center
        r = np.linalg.norm(v)
        if r <= tol * self.radius:
            raise AmbiguousProjection(
                "point at the sphere center projects to the whole boundary",
                x=x.tolist())
        nu = v / r
        return self.surface_point(self.center + self.radius * nu)

    def surface_point(self, q):
        q = np.asarray(q, dtype=float)
        nu = (q - self.center) / self.radius
        frame = orthonormal_tangents(nu)
        shape = -np.eye(2) / self.radius
        return SurfacePoint(q=q, nu=nu, tangent_frame=frame, shape=shape)

    def reflectors(self, p, tol=1e-8):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p - self.center)
        if r <= self.radius:
            raise ValueError("probe center must lie outside the obstacle")
        return [self.nearest(p)]

    def normals(self, pts):
        """Outward unit normals for an array of boundary points."""
        u = np.asarray(pts, dtype=float) - self.center
        return u / np.linalg.norm(u, axis=-1, keepdims=True)

    def max_curvature(self):
        return 1.0 / self.radius

    def reach(self):
        return self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def chart(self, pole):
        """Spherical chart with theta = 0 at unit direction `pole` from the
        center.  Returns f(theta, phi) -> (points, area elements); theta and
        phi broadcast elementwise."""
        pole = np.asarray(pole, dtype=float)
        pole = pole / np.linalg.norm(pole)
        t = orthonormal_tangents(pole)
        c, R = self.center, self.radius

        def f(theta, phi):
            theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float),
                                             np.asarray(phi, dtype=float))
            st, ct = np.sin(theta), np.cos(theta)
            u = (ct[..., None] * pole
                 + (st * np.cos(phi))[..., None] * t[0]
                 + (st * np.sin(phi))[..., None] * t[1])
            return c + R * u, R * R * st
        return f


class Ellipsoid:
    """Ellipsoid obstacle with semiaxes > 0 and an orthonormal frame.

    World points map to local coordinates via y = frame.T @ (x - center);
    the boundary is sum((y_i / semiaxes_i)^2) = 1.
    """

    def __init__(self, center, semiaxes, frame=None):
        self.center = np.asarray(center, dtype=float)
        self.semiaxes = np.asarray(semiaxes, dtype=float)
        if np.any(self.semiaxes <= 0):
            raise ValueError("semiaxes must be positive")
        if frame is None:
            frame = np.eye(3)
        self.frame = np.asarray(frame, dtype=float)
        if not np.allclose(self.frame @ self.frame.T, np.eye(3), atol=1e-10):
            raise ValueError("frame must be orthonormal")

    def _local(self, x):
        return (np.asarray(x, dtype=float) - self.center) @ self.frame

    def _world(self, y):
        return self.center + np.asarray(y, dtype=float) @ self.frame.T

    def inside(self, x):
        y = self._local(x)
        return np.sum((y / self.semiaxes) ** 2, axis=-1) < 1.0

    def _foot_parameter(self, y):
        """Solve sum (a_i^2 y_i^2 / (a_i^2 + t)^2) = 1 for the nearest-point
        Lagrange parameter t.  Newton with a bisection safeguard."""
        a2 = self.semiaxes ** 2
        live = np.abs(y) > 1e-300
        if not np.any(live):
            raise AmbiguousProjection("point at the ellipsoid center",
                                      x=self._world(y).tolist())
        lo = -np.min(a2[live])  # pole of the active terms

        def F(t):
            return float(np.sum(a2 * y * y / (a2 + t) ** 2) - 1.0)

        def dF(t):
            return float(-2.0 * np.sum(a2 * y * y / (a2 + t) ** 3))

        scale = float(np.max(self.semiaxes))
        hi = max(0.0, float(np.linalg.norm(y)) * scale)
        while F(hi) > 0:
            hi = 2.0 * hi + scale * scale
        lo_b = lo + 1e-14 * scale * scale
        while F(lo_b) < 0:  # start just right of the pole
            lo_b = lo + 0.5 * (lo_b - lo)
        t = 0.5 * (lo_b + hi)
        for _ in range(200):
            ft = F(t)
            if ft > 0:
                lo_b = t
            else:
                hi = t
            dt = ft / dF(t)
            t_new = t - dt
            if not (lo_b < t_new < hi):
                t_new = 0.5 * (lo_b + hi)
            if abs(t_new - t) <= 1e-15 * (abs(t) + scale * scale):
                t = t_new
                break
            t = t_new
        return t

    def _min_distance(self, y, tol):
        """Distance from local point y to the boundary.

        Returns (d, z, unique) where z is the minimizing footpoint when it
        is unique and None otherwise.  The monotone Lagrange root handles
        every point with all coordinates active; when y lies on a symmetry
        plane the off-plane minimizers sit at poles of the dead coordinates
        and are checked as explicit candidates.
        """
        a2 = self.semiaxes ** 2
        t = self._foot_parameter(y)
        z = a2 * y / (a2 + t)
        d = float(np.linalg.norm(y - z))
        live = np.abs(y) > 1e-300
        best_ring = None
        for aj2 in sorted(set(a2[~live])):
            if t >= -aj2:
                continue  # monotone branch already past this pole
            w = np.zeros(3)
            w[live] = a2[live] * y[live] / (a2[live] - aj2)
            s = float(np.sum((w[live] / self.semiaxes[live]) ** 2))
            if s >= 1.0:
                continue
            d_ring = float(np.sqrt(np.sum((y - w)[live] ** 2)
                                   + aj2 * (1.0 - s)))
            if best_ring is None or d_ring < best_ring:
                best_ring = d_ring
        if best_ring is not None and best_ring < d + tol:
            return min(best_ring, d), None, False
        return d, z, True

    def sdf(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            return np.array([self.sdf(xi) for xi in x.reshape(-1, 3)
                             ]).reshape(x.shape[:-1])
        y = self._local(x)
        try:
            d, _, _ = self._min_distance(y, 0.0)
        except AmbiguousProjection:
            d = float(np.min(self.semiaxes))  # center
        return d if np.sum((y / self.semiaxes) ** 2) >= 1.0 else -d

    def nearest(self, x, tol=1e-10):
        y = self._local(x)
        scale = max(1.0, float(np.max(self.semiaxes)))
        d, z, unique = self._min_distance(y, tol * scale)
        if not unique:
            raise AmbiguousProjection(
                "nearest boundary point is not unique",
                x=np.asarray(x, dtype=float).tolist())
        return self.surface_point(self._world(z))

    def _scan_min(self, y, exclude=None, sep=0.0, n_theta=48, n_phi=96):
        """Coarse surface scan for the minimum distance from local point y,
        optionally ignoring a neighborhood of `exclude`."""
        th = np.linspace(0, np.pi, n_theta)
        ph = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        pts = np.stack([self.semiaxes[0] * np.sin(T) * np.cos(P),
                        self.semiaxes[1] * np.sin(T) * np.sin(P),
                        self.semiaxes[2] * np.cos(T)], axis=-1)
        d = np.linalg.norm(pts - y, axis=-1)
        if exclude is not None:
            mask = np.linalg.norm(pts - exclude, axis=-1) > sep
            if not np.any(mask):
                return None
            d = d[mask]
        return float(np.min(d))

    def surface_point(self, q):
        y = self._local(q)
        a2 = self.semiaxes ** 2
        g = y / a2  # half-gradient of the level function in local coords
        gn = np.linalg.norm(g)
        nu_l = g / gn
        frame_l = orthonormal_tangents(nu_l)
        # Jacobian of the unit normal field: (I - nu nu^T) diag(1/a^2) / |g|
        A = np.diag(1.0 / a2)
        nup = (np.eye(3) - np.outer(nu_l, nu_l)) @ A / gn
        shape = -frame_l @ nup @ frame_l.T
        shape = 0.5 * (shape + shape.T)
        R = self.frame
        return SurfacePoint(q=np.asarray(q, dtype=float),
                            nu=R @ nu_l,
                            tangent_frame=frame_l @ R.T,
                            shape=shape)

    def reflectors(self, p, tol=1e-8):
        p = np.asarray(p, dtype=float)
        y = self._local(p)
        if np.sum((y / self.semiaxes) ** 2) <= 1.0:
            raise ValueError("probe center must lie outside the obstacle")
        sp = self.nearest(p)
        d = float(np.linalg.norm(p - sp.q))
        # Strict convexity makes the minimizer unique; the scan guards
        # against a near-tie that would behave like a continuum numerically.
        other = self._scan_min(y, exclude=self._local(sp.q),
                               sep=0.2 * float(np.min(self.semiaxes)))
        if other is not None and other <= d * (1.0 + tol):
            raise ContinuumReflector(
                "minimizing set is not numerically isolated", p=p.tolist())
        return [sp]

    def normals(self, pts):
        """Outward unit normals for an array of boundary points."""
        y = (np.asarray(pts, dtype=float) - self.center) @ self.frame
        g = y / self.semiaxes ** 2
        g = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return g @ self.frame.T

    def max_curvature(self):
        # Largest principal curvature sits at an axis endpoint: a_i / a_j^2.
        return max(self.semiaxes[i] / self.semiaxes[j] ** 2
                   for i in range(3) for j in range(3) if i != j)

    def reach(self):
        return 1.0 / self.max_curvature()

    def bounding_box(self):
        # Extent of the rotated ellipsoid along world axes.
        half = np.sqrt(((self.frame * self.semiaxes) ** 2).sum(axis=1))
        return self.center - half, self.center + half

    def chart(self, pole):
        """Parametric chart with theta = 0 mapped to the boundary point in
        the scaled direction of the world unit vector `pole`."""
        pole = np.asarray(pole, dtype=float)
        u0 = (self.frame.T @ pole) / self.semiaxes
        u0 = u0 / np.linalg.norm(u0)
        t = orthonormal_tangents(u0)
        a = self.semiaxes

        def f(theta, phi):
            theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float),
                                             np.asarray(phi, dtype=float))
            st, ct = np.sin(theta), np.cos(theta)
            cp, sp = np.cos(phi), np.sin(phi)
            u = (ct[..., None] * u0 + (st * cp)[..., None] * t[0]
                 + (st * sp)[..., None] * t[1])
            du_th = ((-st)[..., None] * u0 + (ct * cp)[..., None] * t[0]
                     + (ct * sp)[..., None] * t[1])
            du_ph = ((-st * sp)[..., None] * t[0]
                     + (st * cp)[..., None] * t[1])
            J = np.linalg.norm(np.cross(du_th * a, du_ph * a), axis=-1)
            return self._world(u * a), J
        return f


class SphereUnion:
    """Union of spheres with pairwise disjoint closures."""

    def __init__(self, spheres):
        self.members = list(spheres)
        if len(self.members) < 1:
            raise ValueError("union needs at least one sphere")
        for i, si in enumerate(self.members):
            for sj in self.members[i + 1:]:
                gap = (np.linalg.norm(si.center - sj.center)
                       - si.radius - sj.radius)
                if gap <= 0:
                    raise ValueError("union members must have disjoint "
                                     "closures (gap %.3g)" % gap)

    def inside(self, x):
        return np.any(np.stack([s.inside(x) for s in self.members]), axis=0)

    def sdf(self, x):
        return np.min(np.stack([s.sdf(x) for s in self.members]), axis=0)

    def _owner(self, x, tol):
        d = np.array([s.sdf(x) for s in self.members])
        order = np.argsort(d)
        if len(d) > 1 and d[order[1]] - d[order[0]] <= tol * max(
                1.0, abs(d[order[0]])):
            raise AmbiguousProjection("equidistant union members",
                                      x=np.asarray(x, dtype=float).tolist())
        return self.members[order[0]]

    def nearest(self, x, tol=1e-10):
        return self._owner(x, tol).nearest(x, tol)

    def surface_point(self, q):
        d = np.array([abs(s.sdf(q)) for s in self.members])
        return self.members[int(np.argmin(d))].surface_point(q)

    def reflectors(self, p, tol=1e-8):
        p = np.asarray(p, dtype=float)
        d = np.array([s.sdf(p) for s in self.members])
        if np.any(d <= 0):
            raise ValueError("probe center must lie outside the obstacle")
        dmin = float(np.min(d))
        out = []
        for s, di in zip(self.members, d):
            if di <= dmin * (1.0 + tol) + tol:
                out.extend(s.reflectors(p, tol))
        if len(out) > N_MAX_REFLECTORS:
            raise ContinuumReflector("reflector count exceeds cap",
                                     count=len(out))
        return out

    def max_curvature(self):
        return max(s.max_curvature() for s in self.members)

    def reach(self):
        gaps = []
        for i, si in enumerate(self.members):
            for sj in self.members[i + 1:]:
                gaps.append(np.linalg.norm(si.center - sj.center)
                            - si.radius - sj.radius)
        r = min(s.reach() for s in self.members)
        if gaps:
            r = min(r, 0.5 * min(gaps))
        return r

    def bounding_box(self):
        los, his = zip(*(s.bounding_box() for s in self.members))
        return np.min(los, axis=0), np.max(his, axis=0)


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def signed_distance(obstacle, x):
    """Distance to the obstacle boundary, positive outside."""
    return obstacle.sdf(x)


def nearest_point(obstacle, x, tol=1e-10):
    """Unique nearest boundary point of x as a SurfacePoint.

    Raises AmbiguousProjection when two minimizers tie within tol.
    """
    return obstacle.nearest(x, tol)


def first_reflector(obstacle, p, tol=1e-8):
    """All boundary points at minimal distance from p, with normals.

    Raises ContinuumReflector when the minimizing set is not finite.
    """
    out = obstacle.reflectors(p, tol)
    for sp in out:
        v = p - sp.q
        v = v / np.linalg.norm(v)
        assert np.dot(v, sp.nu) > 1.0 - 1e-8, "reflector normal sanity"
    return out


def shape_operator(obstacle, q):
    """2x2 shape operator at boundary point q in the pinned convention."""
    if isinstance(q, SurfacePoint):
        return q.shape
    return obstacle.surface_point(q).shape


def curvature_invariants(S):
    """(Gauss curvature, mean curvature) = (det S, trace S / 2)."""
    S = np.asarray(S, dtype=float)
    K = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    H = 0.5 * (S[0, 0] + S[1, 1])
    return float(K), float(H)


def tubular_params(obstacle, safety=0.5):
    """Collar half-width: a conservative fraction of the reach."""
    return TubularParams(delta0=safety * obstacle.reach())


@dataclass(frozen=True)
class ReflectionData:
    x_r: np.ndarray
    d: float                 # signed distance of x
    n: np.ndarray            # extended unit normal field at x
    pi: np.ndarray           # n (x) n projector
    n_prime: np.ndarray      # Jacobian of the normal field at x
    q: SurfacePoint


def reflection_map(obstacle, x, delta0=None, tol=1e-10):
    """Mirror x across the boundary along the normal through its projection.

    Returns the reflected point 2 q(x) - x together with the normal field
    data (n, pi, n') used by the field reflection operator.  Only valid in
    the collar |d(x)| < 2 delta0.
    """
    x = np.asarray(x, dtype=float)
    if delta0 is None:
        delta0 = tubular_params(obstacle).delta0
    sp = obstacle.nearest(x, tol)
    d = float(np.linalg.norm(x - sp.q))
    side = 1.0 if not bool(obstacle.inside(x)) else -1.0
    d *= side
    if abs(d) >= 2.0 * delta0:
        raise OutsideCollar("point outside the projection collar",
                            d=d, delta0=delta0)
    x_r = 2.0 * sp.q - x
    n = sp.nu
    kappa, dirs = sp.principal()
    # d/dx of the extended normal field n(x) = nu(q(x)):
    # eigenvalue -kappa_i / (1 - d kappa_i) on each principal direction.
    n_prime = np.zeros((3, 3))
    for k_i, e_i in zip(kappa, dirs):
        n_prime += (-k_i / (1.0 - d * k_i)) * np.outer(e_i, e_i)
    return ReflectionData(x_r=x_r, d=d, n=n, pi=np.outer(n, n),
                          n_prime=n_prime, q=sp)


def icosphere_directions(level=2):
    """Unit direction grid from `level` subdivisions of an icosahedron.

    level 0, 1, 2 give 12, 42, 162 vertices.
    """
    g = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
             (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
             (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for (i, j, k) in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    return np.array(verts)
