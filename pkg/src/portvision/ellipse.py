"""Robust ellipse recovery from skeleton pixels.

The conic is parameterized as

    Q(x, y) = A x^2 + B xy + C y^2 + D x + E y + 1 = 0

with the constant pinned to one, which turns 5-point fitting and least-squares
refinement into plain linear solves.  Fitting runs in a normalized frame
(centroid at the origin, RMS radius sqrt(2)) so the pinned constant stays well
conditioned; a conic through the origin of that frame would be an ellipse
passing through the centroid of its own sample, which real samples do not do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    """Base for fitting failures that reject a hypothesis."""


class DegenerateFitError(FitError):
    """Singular or near-singular design (collinear/coincident points)."""


class NonEllipseError(FitError):
    """The fitted conic is a hyperbola, parabola, or imaginary ellipse."""


@dataclass(frozen=True)
class Conic:
    """Conic coefficients with the constant term fixed to 1."""

    a: float
    b: float
    c: float
    d: float
    e: float

    def coefficients(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e, 1.0])

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.a, self.b / 2.0, self.d / 2.0],
                [self.b / 2.0, self.c, self.e / 2.0],
                [self.d / 2.0, self.e / 2.0, 1.0],
            ]
        )

    def discriminant(self) -> float:
        return self.b * self.b - 4.0 * self.a * self.c

    def is_ellipse(self) -> bool:
        return self.discriminant() < 0.0

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        return self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + 1.0

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Conic":
        m = np.asarray(m, dtype=float)
        scale = m[2, 2]
        if abs(scale) < 1e-12 * np.max(np.abs(m)):
            raise NonEllipseError("conic passes through the origin; cannot pin F=1")
        m = m / scale
        return cls(a=m[0, 0], b=2.0 * m[0, 1], c=m[1, 1], d=2.0 * m[0, 2], e=2.0 * m[1, 2])


@dataclass
class EllipseAxes:
    """Center/axes form: semi-axes a >= b > 0, major-axis angle in [0, pi)."""

    center: np.ndarray
    a: float
    b: float
    theta: float  # radians; the one internal-unit angle, documented as such

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (2,):
            raise FitError("ellipse center must be a 2-vector")
        if not (self.a >= self.b > 0):
            raise FitError("semi-axes must satisfy a >= b > 0")
        self.theta = float(self.theta) % np.pi

    def major_endpoints(self) -> np.ndarray:
        u = np.array([np.cos(self.theta), np.sin(self.theta)])
        return np.stack([self.center + self.a * u, self.center - self.a * u])

    def minor_endpoints(self) -> np.ndarray:
        v = np.array([-np.sin(self.theta), np.cos(self.theta)])
        return np.stack([self.center + self.b * v, self.center - self.b * v])

    def point_at(self, t) -> np.ndarray:
        """Point(s) at canonical parameter t (radians)."""
        t = np.asarray(t, dtype=float)
        u = np.array([np.cos(self.theta), np.sin(self.theta)])
        v = np.array([-np.sin(self.theta), np.cos(self.theta)])
        pts = (
            self.center[None, :]
            + self.a * np.cos(t)[..., None] * u[None, :]
            + self.b * np.sin(t)[..., None] * v[None, :]
        )
        return pts if t.ndim else pts[0]


def normalize_points(points) -> tuple:
    """Similarity transform taking the cloud to centroid 0, RMS radius sqrt(2).

    Returns (normalized_points, T) with homogeneous T so that x' = T x.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("expected an (N, 2) point array")
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateFitError("all points coincide; cannot normalize")
    s = np.sqrt(2.0) / rms
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (pts - centroid) * s, t


def _design(points) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return np.stack([x * x, x * y, y * y, x, y], axis=1)


def fit_conic_5pts(points) -> Conic:
    """Exact conic through 5 distinct points, constant pinned to 1."""
    pts = np.asarray(points, dtype=float)
    if pts.shape != (5, 2):
        raise FitError("fit_conic_5pts needs exactly 5 points")
    design = _design(pts)
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise DegenerateFitError("singular 5-point system (collinear or repeated points)")
    coef = np.linalg.solve(design, -np.ones(5))
    conic = Conic(*coef)
    if not conic.is_ellipse():
        raise NonEllipseError("five-point conic is not an ellipse")
    return conic


def refine_least_squares(points, inlier_indices=None) -> Conic:
    """Linear least-squares conic over the given points (constant = 1).

    The fit runs in the points' own normalized frame: pinning the constant
    term is well conditioned there no matter where the subset sits in the
    caller's coordinates, whereas pinning it in a frame whose origin lies
    near the curve skews the algebraic residual and biases the fit.
    """
    pts = np.asarray(points, dtype=float)
    if inlier_indices is not None:
        pts = pts[np.asarray(inlier_indices, dtype=int)]
    if pts.shape[0] < 5:
        raise DegenerateFitError("need at least 5 points to refine")
    local, t = normalize_points(pts)
    design = _design(local)
    coef, _, rank, _ = np.linalg.lstsq(design, -np.ones(local.shape[0]), rcond=None)
    if rank < 5:
        raise DegenerateFitError("rank-deficient refinement system")
    local_conic = Conic(*coef)
    if not local_conic.is_ellipse():
        raise NonEllipseError("refined conic left the ellipse family")
    return Conic.from_matrix(t.T @ local_conic.matrix() @ t)


def point_distance(conic: Conic, points) -> np.ndarray:
    """First-order geometric (Sampson) distance |Q| / |grad Q| in pixels.

    Exact zero on the curve; within ~10% of true geometric distance for
    points within a few pixels of it.  At the conic center the gradient
    vanishes and the distance is reported as +inf.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    q = conic.evaluate(pts)
    gx = 2.0 * conic.a * x + conic.b * y + conic.d
    gy = conic.b * x + 2.0 * conic.c * y + conic.e
    grad = np.hypot(gx, gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(grad > 1e-12, np.abs(q) / grad, np.inf)
    return dist


def _axes_from_quadratic(m2: np.ndarray, q0: float):
    """Semi-axes and major-axis angle from the centered quadratic form.

    The translated conic is u^T m2 u + q0 = 0; eigenvalues of m2 share a sign
    for an ellipse and the semi-axis along eigenvector v_i is sqrt(-q0 / l_i),
    so the major axis pairs with the smaller |eigenvalue|.
    """
    a11, a12, a22 = m2[0, 0], m2[0, 1], m2[1, 1]
    half_tr = 0.5 * (a11 + a22)
    root = np.hypot(0.5 * (a11 - a22), a12)
    lam1, lam2 = half_tr + root, half_tr - root
    if lam1 * lam2 <= 0:
        raise NonEllipseError("quadratic form is not definite (not an ellipse)")
    with np.errstate(invalid="raise"):
        try:
            s1 = np.sqrt(-q0 / lam1)
            s2 = np.sqrt(-q0 / lam2)
        except FloatingPointError:
            raise NonEllipseError("imaginary ellipse (no real points)")
    if s1 >= s2:
        major_s, major_lam, minor_s = s1, lam1, s2
    else:
        major_s, major_lam, minor_s = s2, lam2, s1
    if abs(a12) > 1e-12 * max(abs(a11), abs(a22)):
        vec = np.array([a12, major_lam - a11])
    else:
        # diagonal form: the major axis pairs with the smaller |eigenvalue|
        vec = np.array([1.0, 0.0]) if abs(a11) <= abs(a22) else np.array([0.0, 1.0])
    theta = float(np.arctan2(vec[1], vec[0])) % np.pi
    return float(major_s), float(minor_s), theta


def conic_to_axes(conic: Conic) -> EllipseAxes:
    """Closed-form conversion of an ellipse conic to center/axes form."""
    m2 = np.array([[conic.a, conic.b / 2.0], [conic.b / 2.0, conic.c]])
    if not conic.is_ellipse():
        raise NonEllipseError("conic discriminant is not negative")
    try:
        center = np.linalg.solve(2.0 * m2, -np.array([conic.d, conic.e]))
    except np.linalg.LinAlgError:
        # discriminant < 0 but underflowed: numerically a parabola
        raise NonEllipseError("quadratic form is numerically singular")
    q0 = float(conic.evaluate(center[None, :])[0])
    a, b, theta = _axes_from_quadratic(m2, q0)
    return EllipseAxes(center=center, a=a, b=b, theta=theta)


def axes_from_conic_matrix(m3: np.ndarray) -> EllipseAxes:
    """Center/axes form from an arbitrary-scale symmetric conic matrix."""
    m3 = np.asarray(m3, dtype=float)
    m2 = m3[:2, :2]
    det = np.linalg.det(m2)
    if det <= 0:
        raise NonEllipseError("conic matrix is not an ellipse")
    try:
        center = np.linalg.solve(m2, -m3[:2, 2])
    except np.linalg.LinAlgError:
        raise NonEllipseError("quadratic form is numerically singular")
    hom = np.array([center[0], center[1], 1.0])
    q0 = float(hom @ m3 @ hom)
    a, b, theta = _axes_from_quadratic(m2, q0)
    return EllipseAxes(center=center, a=a, b=b, theta=theta)


def axes_to_conic(axes: EllipseAxes) -> Conic:
    """Inverse of conic_to_axes; fails only if the curve passes through (0,0)."""
    if axes.b <= 0:
        raise NonEllipseError("degenerate ellipse with zero minor axis")
    c, s = np.cos(axes.theta), np.sin(axes.theta)
    rot = np.array([[c, -s], [s, c]])
    m2 = rot @ np.diag([1.0 / axes.a**2, 1.0 / axes.b**2]) @ rot.T
    mc = m2 @ axes.center
    m3 = np.empty((3, 3))
    m3[:2, :2] = m2
    m3[:2, 2] = -mc
    m3[2, :2] = -mc
    m3[2, 2] = float(axes.center @ mc) - 1.0
    return Conic.from_matrix(m3)


@dataclass
class RansacConfig:
    max_iterations: int = 200
    inlier_tolerance_px: float = 2.0
    min_axis_ratio: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise FitError("max_iterations must be positive")
        if self.inlier_tolerance_px <= 0:
            raise FitError("inlier tolerance must be positive")
        if not (0.0 < self.min_axis_ratio <= 1.0):
            raise FitError("min_axis_ratio must lie in (0, 1]")


# distinct consensus sets polished after sampling; diminishing returns past
# a handful because weaker chains converge into the leaders' fixed points
_POLISH_POOL = 5


def _grow_consensus(conic, cur_dist, inliers, count, rms, norm_pts, tol, ratio, cache):
    """Refit on the consensus and re-select while it keeps improving.

    Equal-count steps are kept when the residual shrinks, which lets a
    stalled set drift free instead of locking onto its first fixed point.
    Chains starting from different hypotheses funnel into shared consensus
    sets almost immediately, so every visited set is cached against the
    chain's final state and later chains shortcut on first contact.
    """
    hit = cache.get(inliers.tobytes())
    if hit is not None:
        return hit
    visited = [inliers.tobytes()]
    for _ in range(10):
        try:
            polished = refine_least_squares(norm_pts[inliers])
            axes_p = conic_to_axes(polished)
        except FitError:
            break
        if axes_p.b < ratio * axes_p.a:
            break
        dist = point_distance(polished, norm_pts)
        grown = dist <= tol
        grown_count = int(np.count_nonzero(grown))
        grown_rms = float(np.sqrt(np.mean(dist[grown] ** 2)))
        if grown_count < count or (grown_count == count and grown_rms >= rms):
            break
        conic, cur_dist, inliers, count, rms = polished, dist, grown, grown_count, grown_rms
        hit = cache.get(inliers.tobytes())
        if hit is not None:
            conic, cur_dist, inliers, count, rms = hit
            break
        visited.append(inliers.tobytes())
    state = (conic, cur_dist, inliers, count, rms)
    for key in visited:
        cache[key] = state
    return state


def _polish_hypothesis(conic, cur_dist, inliers, count, norm_pts, tol, ratio,
                       grow_cache, restart_cache):
    """Local optimization of one sampled hypothesis.

    Grows the consensus to a fixed point, then restarts from the snuggest
    core of the stalled set: when a contaminated sample locks onto a partial
    arc, a refit on its lowest-residual members extrapolates the rest of
    the curve and the re-grown consensus jumps to the full boundary.
    Restart work is cached per fixed point.
    """
    rms = float(np.sqrt(np.mean(cur_dist[inliers] ** 2)))
    state = _grow_consensus(conic, cur_dist, inliers, count, rms, norm_pts, tol, ratio,
                            grow_cache)
    key = state[2].tobytes()
    hit = restart_cache.get(key)
    if hit is not None:
        return hit
    for frac in (0.5, 0.7):
        conic0, dist0, in0, count0, _rms0 = state
        k = max(5, int(np.ceil(frac * count0)))
        if k >= count0:
            continue
        members = np.nonzero(in0)[0]
        core = members[np.argsort(dist0[members], kind="stable")][:k]
        try:
            seed = refine_least_squares(norm_pts[core])
            axes_s = conic_to_axes(seed)
        except FitError:
            continue
        if axes_s.b < ratio * axes_s.a:
            continue
        d = point_distance(seed, norm_pts)
        msk = d <= tol
        c = int(np.count_nonzero(msk))
        if c < 5:
            continue
        r = float(np.sqrt(np.mean(d[msk] ** 2)))
        cand = _grow_consensus(seed, d, msk, c, r, norm_pts, tol, ratio, grow_cache)
        if (cand[3], -cand[4]) > (state[3], -state[4]):
            state = cand
    restart_cache[key] = state
    return state


def ransac_ellipse(points, cfg: RansacConfig, index_samples=None):
    """Seeded RANSAC ellipse fit with local optimization.

    Returns (EllipseAxes, inlier index array) or None when no sample produces
    an acceptable ellipse.  The sampling loop only scores raw hypotheses; the
    leading distinct consensus sets are then polished by deterministic
    refit/re-select rounds before the final ranking, so the result is
    bit-stable for identical input.  Hypothesis index draws depend only on
    (seed, point count); ``index_samples`` overrides them for tests, normal
    callers leave it None.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 5:
        return None
    n = pts.shape[0]
    try:
        norm_pts, t = normalize_points(pts)
    except DegenerateFitError:
        return None
    scale = t[0, 0]
    tol_norm = cfg.inlier_tolerance_px * scale

    if index_samples is None:
        rng = np.random.default_rng(cfg.rng_seed)
        samples = (rng.choice(n, size=5, replace=False) for _ in range(cfg.max_iterations))
    else:
        samples = iter(index_samples)

    # one entry per distinct consensus mask: (count, -rms, conic, dist, mask)
    candidates = {}
    exhausted_all = None
    for sample in samples:
        idx = np.asarray(sample, dtype=int)
        try:
            conic = fit_conic_5pts(norm_pts[idx])
            axes = conic_to_axes(conic)
        except FitError:
            continue
        if axes.b < cfg.min_axis_ratio * axes.a:
            continue
        cur_dist = point_distance(conic, norm_pts)
        inliers = cur_dist <= tol_norm
        count = int(np.count_nonzero(inliers))
        if count < 6:
            continue
        key = inliers.tobytes()
        if key not in candidates:
            rms = float(np.sqrt(np.mean(cur_dist[inliers] ** 2)))
            candidates[key] = (count, -rms, conic, cur_dist, inliers)
        if count == n:
            exhausted_all = candidates[key]
            break
    if not candidates:
        return None

    # polish the few strongest distinct hypotheses rather than all of them:
    # chains started from weaker consensus sets converge into the same fixed
    # points, so past a handful they stop changing the outcome while their
    # refit rounds dominate runtime
    if exhausted_all is not None:
        pool = [exhausted_all]
    else:
        pool = sorted(candidates.values(), key=lambda c: (c[0], c[1]), reverse=True)
        pool = pool[:_POLISH_POOL]
    grow_cache = {}
    restart_cache = {}
    best = None
    for count, _, conic, cur_dist, inliers in pool:
        state = _polish_hypothesis(
            conic, cur_dist, inliers, count, norm_pts, tol_norm,
            cfg.min_axis_ratio, grow_cache, restart_cache
        )
        # rank by consensus size; an exact tie goes to the snugger fit so a
        # sprawling conic grazing extra points cannot displace the tight one
        if best is None or (state[3], -state[4]) > (best[3], -best[4]):
            best = state
    best_conic, _, best_inliers, best_count, best_rms = best

    final = best_conic
    try:
        refined = refine_least_squares(norm_pts[best_inliers])
        axes_r = conic_to_axes(refined)
        if axes_r.b >= cfg.min_axis_ratio * axes_r.a:
            d_old = point_distance(best_conic, norm_pts[best_inliers])
            d_new = point_distance(refined, norm_pts[best_inliers])
            # keep the refit only while it honors the residual guarantee
            if np.sqrt(np.mean(d_new**2)) <= np.sqrt(np.mean(d_old**2)):
                final = refined
    except FitError:
        pass

    # report inliers of the ellipse actually returned, so the residual
    # guarantee holds for the returned pair
    dist = point_distance(final, norm_pts)
    inlier_idx = np.nonzero(dist <= tol_norm)[0]
    if inlier_idx.size < 5:
        inlier_idx = np.nonzero(best_inliers)[0]
        final = best_conic

    m_px = t.T @ final.matrix() @ t
    try:
        axes_px = axes_from_conic_matrix(m_px)
    except FitError:
        return None
    return axes_px, inlier_idx
