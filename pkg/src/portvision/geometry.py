"""Camera model, rotations, and the docking-port rigid geometry.

Conventions used throughout the toolkit:

* Camera frame: x right, y down, z forward (out of the camera).  A point is
  visible only if its z coordinate is positive.
* Pixel coordinates are (x, y) = (column, row) floats; integer coordinates
  address pixel centers.
* Port frame: origin at the center of the navigation ring, +z pointing out
  of the port toward an approaching camera.  A port pose (R, p) maps port
  coordinates into the camera frame: X_cam = R @ X_port + p.
* Angles are degrees at public API boundaries, radians internally.
* Quaternions are unit, ordered (w, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import config


class GeometryError(ValueError):
    """Invalid geometric input (behind camera, degenerate rotation, ...)."""


# ---------------------------------------------------------------------------
# camera intrinsics

_INTRINSICS_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; distortion-free by design."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise GeometryError("image dimensions must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def contains(self, pixel) -> bool:
        x, y = float(pixel[0]), float(pixel[1])
        return 0.0 <= x < self.width and 0.0 <= y < self.height

    @classmethod
    def davis_default(cls) -> "CameraIntrinsics":
        """346x260 sensor with ~330 px focal length, principal point centered."""
        return cls(fx=330.0, fy=330.0, cx=173.0, cy=130.0, width=346, height=260)

    @classmethod
    def from_kv(cls, kv: dict) -> "CameraIntrinsics":
        return cls(
            fx=config.get_float(kv, "fx"),
            fy=config.get_float(kv, "fy"),
            cx=config.get_float(kv, "cx"),
            cy=config.get_float(kv, "cy"),
            width=config.get_int(kv, "width"),
            height=config.get_int(kv, "height"),
        )

    def to_kv(self) -> dict:
        return {
            "fx": repr(self.fx),
            "fy": repr(self.fy),
            "cx": repr(self.cx),
            "cy": repr(self.cy),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_file(cls, path) -> "CameraIntrinsics":
        kv = config.read_kv_file(path)
        config.require_keys(kv, _INTRINSICS_KEYS, where=f"intrinsics file {path}")
        return cls.from_kv(kv)

    def to_file(self, path) -> None:
        config.write_kv_file(path, self.to_kv())


def project(K: CameraIntrinsics, points) -> np.ndarray:
    """Project camera-frame 3D point(s) to pixel coordinates.

    Accepts shape (3,) or (N, 3); returns matching (2,) or (N, 2).
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise GeometryError("cannot project a point at or behind the camera plane")
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = K.fx * pts[:, 0] / z + K.cx
    out[:, 1] = K.fy * pts[:, 1] / z + K.cy
    return out[0] if single else out


def back_project(K: CameraIntrinsics, pixels) -> np.ndarray:
    """Unit viewing ray(s) through pixel coordinate(s).

    Accepts shape (2,) or (N, 2); returns unit vectors of matching shape
    (3,) or (N, 3).  Norm is 1 by construction.
    """
    px = np.asarray(pixels, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    rays = np.empty((px.shape[0], 3))
    rays[:, 0] = (px[:, 0] - K.cx) / K.fx
    rays[:, 1] = (px[:, 1] - K.cy) / K.fy
    rays[:, 2] = 1.0
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return rays[0] if single else rays


# ---------------------------------------------------------------------------
# rotations

def rotation_about_axis(axis, angle_deg: float) -> np.ndarray:
    """Rodrigues rotation matrix about an arbitrary (non-zero) axis."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm < 1e-15:
        raise GeometryError("rotation axis must be non-zero")
    k = axis / norm
    a = np.deg2rad(angle_deg)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(a) * kx + (1.0 - np.cos(a)) * (kx @ kx)


def rotation_z(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_aligning_z(normal) -> np.ndarray:
    """Minimal rotation taking (0,0,1) onto the given unit direction.

    This fixes the yaw-zero reference for the grid search: of all rotations
    whose third column equals ``normal``, return the one with the smallest
    geodesic distance from identity.  The antipodal case (normal ~ -z) has
    no unique minimum; we pin it to a half-turn about x for determinism.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, n))
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    axis = np.cross(z, n)
    s = np.linalg.norm(axis)
    if s < 1e-15:
        return np.eye(3)
    kx = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    # sin = s, cos = c with |axis| = s: Rodrigues without trig calls
    return np.eye(3) + kx + kx @ kx * ((1.0 - c) / (s * s))


def geodesic_angle_deg(ra: np.ndarray, rb: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices."""
    tr = float(np.trace(ra.T @ np.asarray(rb, dtype=float)))
    c = (tr - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def quaternion_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, w >= 0."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_from_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise GeometryError("zero quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# port pose and rigid model

@dataclass
class PortPose:
    """Rigid transform from port frame to camera frame."""

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        p = np.asarray(self.position, dtype=float)
        if r.shape != (3, 3) or p.shape != (3,):
            raise GeometryError("pose needs a 3x3 rotation and a 3-vector position")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(p)):
            raise GeometryError("pose entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise GeometryError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise GeometryError("rotation must be proper (det +1)")
        self.rotation = r
        self.position = p

    @property
    def normal(self) -> np.ndarray:
        """Port +z axis expressed in the camera frame."""
        return self.rotation[:, 2].copy()

    def to_quaternion(self) -> np.ndarray:
        return quaternion_from_rotation(self.rotation)

    @classmethod
    def from_quaternion(cls, q, position) -> "PortPose":
        return cls(rotation=rotation_from_quaternion(q), position=np.asarray(position, float))


def _default_reflectors(ring_radius: float) -> np.ndarray:
    # Three congruent rectangles inside the ring at 120 deg spacing.  Each is
    # tilted 25 deg off the tangential direction: a pure radial layout has a
    # mirror symmetry that lets the wrong normal candidate score as well as
    # the right one at symmetric yaws.
    half_w, half_h = 0.18 * ring_radius, 0.12 * ring_radius
    radial = 0.62 * ring_radius
    tilt = np.deg2rad(25.0)
    local = np.array(
        [[-half_w, -half_h], [half_w, -half_h], [half_w, half_h], [-half_w, half_h]]
    )
    c, s = np.cos(tilt), np.sin(tilt)
    local = local @ np.array([[c, s], [-s, c]]).T
    quads = []
    for k in range(3):
        ang = np.deg2rad(90.0 + 120.0 * k)
        center = radial * np.array([np.cos(ang), np.sin(ang)])
        ca, sa = np.cos(ang - np.pi / 2.0), np.sin(ang - np.pi / 2.0)
        rot = np.array([[ca, -sa], [sa, ca]])
        quads.append(local @ rot.T + center)
    return np.array(quads)


@dataclass
class PortModel:
    """Dimensions of the docking port: ring radius and reflector footprints.

    ``reflectors`` holds the planar corner coordinates (port frame, z = 0) of
    three convex quads, shape (3, 4, 2).  The layout must map onto itself
    under rotation by 360/symmetry_order degrees about the port normal.
    """

    ring_radius: float = 0.1
    reflectors: np.ndarray = field(default=None)  # type: ignore[assignment]
    symmetry_order: int = 3

    def __post_init__(self):
        if self.ring_radius <= 0:
            raise GeometryError("ring radius must be positive")
        if self.reflectors is None:
            self.reflectors = _default_reflectors(self.ring_radius)
        self.reflectors = np.asarray(self.reflectors, dtype=float)
        if self.reflectors.ndim != 3 or self.reflectors.shape[1:] != (4, 2):
            raise GeometryError("reflectors must have shape (n, 4, 2)")
        if self.symmetry_order < 1:
            raise GeometryError("symmetry order must be >= 1")
        self._check_symmetry()

    def _check_symmetry(self, tol: float = 1e-9) -> None:
        ang = 2.0 * np.pi / self.symmetry_order
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        rotated = self.reflectors @ rot.T
        # the rotated set must equal the original set up to quad reordering
        remaining = list(range(len(self.reflectors)))
        for quad in rotated:
            hit = None
            for idx in remaining:
                if np.max(np.abs(self.reflectors[idx] - quad)) < tol:
                    hit = idx
                    break
            if hit is None:
                raise GeometryError(
                    "reflector layout is not symmetric under the declared order"
                )
            remaining.remove(hit)

    def reflector_corners_3d(self) -> np.ndarray:
        """Corners lifted to the port plane, shape (n, 4, 3)."""
        n = self.reflectors.shape[0]
        out = np.zeros((n, 4, 3))
        out[:, :, :2] = self.reflectors
        return out

    def to_kv(self) -> dict:
        kv = {
            "ring_radius": repr(self.ring_radius),
            "symmetry_order": self.symmetry_order,
            "reflector_count": self.reflectors.shape[0],
        }
        for i, quad in enumerate(self.reflectors):
            kv[f"reflector_{i}"] = " ".join(repr(float(v)) for v in quad.ravel())
        return kv

    @classmethod
    def from_kv(cls, kv: dict) -> "PortModel":
        count = config.get_int(kv, "reflector_count")
        quads = []
        for i in range(count):
            raw = config.get_str(kv, f"reflector_{i}").split()
            if len(raw) != 8:
                raise config.ConfigError(f"reflector_{i}: expected 8 numbers")
            quads.append(np.array([float(v) for v in raw]).reshape(4, 2))
        return cls(
            ring_radius=config.get_float(kv, "ring_radius"),
            reflectors=np.array(quads),
            symmetry_order=config.get_int(kv, "symmetry_order", 3),
        )


# ---------------------------------------------------------------------------
# exact projection of the navigation ring

def circle_image_conic(normal, center, radius: float, K: CameraIntrinsics) -> np.ndarray:
    """Exact image conic of a 3D circle, as a symmetric 3x3 matrix.

    The circle with unit normal n, center p and radius r lies on the plane
    n.(X - p) = 0.  A viewing ray d hits the circle iff the scaled plane
    point (h/n.d) d lies on it, h = n.p, which expands to the quadratic cone
    d^T M d = 0 with

        M = h^2 I - h (n p^T + p n^T) + (|p|^2 - r^2) n n^T.

    Substituting d = K^-1 x gives the image conic x^T (K^-T M K^-1) x = 0.
    The matrix is scale-free; callers normalize as needed.
    """
    n = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise GeometryError("circle normal must be a nonzero vector")
    if radius <= 0.0:
        raise GeometryError("circle radius must be positive")
    n = n / norm
    p = np.asarray(center, dtype=float)
    h = float(n @ p)
    if abs(h) < 1e-12:
        raise GeometryError("camera lies in the circle plane; projection degenerates")
    m = (
        h * h * np.eye(3)
        - h * (np.outer(n, p) + np.outer(p, n))
        + (float(p @ p) - radius * radius) * np.outer(n, n)
    )
    kinv = K.inverse_matrix()
    return kinv.T @ m @ kinv


def circle_plane_basis(normal) -> tuple:
    """Deterministic orthonormal in-plane basis (u, w) with u x w = n."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    seed = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(seed, n)
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    return u, w


def project_circle_points(
    normal, center, radius: float, K: CameraIntrinsics, count: int = 360
) -> np.ndarray:
    """Exact pixel locations of `count` evenly spaced circle points."""
    u, w = circle_plane_basis(normal)
    t = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    pts = (
        np.asarray(center, dtype=float)[None, :]
        + radius * np.cos(t)[:, None] * u[None, :]
        + radius * np.sin(t)[:, None] * w[None, :]
    )
    return project(K, pts)
