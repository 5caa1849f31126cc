"""Procedural branching cubic Bezier shapes with paired skeleton labels."""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from iterskel.classic import boolean_thin
from iterskel.errors import ShapeError
from iterskel.grid import dilate

CONE_HALF_ANGLE = math.pi / 3
MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class GenParams:
    dims: tuple = (64, 64)
    n_trunks: tuple = None  # inclusive range; None -> (1, 3) in 2D, (1, 2) in 3D
    w_trunk: int = 3
    W_trunk: int = 10
    n_branches: int = 1
    N_branches: int = 3
    depth: int = 3
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) not in (2, 3) or min(self.dims) < 3:
            raise ShapeError(f"bad dims {self.dims}")
        if not 1 <= self.w_trunk <= self.W_trunk:
            raise ValueError("need 1 <= w_trunk <= W_trunk")
        if not 0 <= self.n_branches <= self.N_branches:
            raise ValueError("need 0 <= n_branches <= N_branches")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        lo, hi = self.trunk_range
        if not 1 <= lo <= hi:
            raise ValueError("need 1 <= min trunks <= max trunks")

    @property
    def trunk_range(self):
        if self.n_trunks is not None:
            return tuple(self.n_trunks)
        return (1, 3) if len(self.dims) == 2 else (1, 2)

    def to_dict(self):
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["n_trunks"] = list(self.trunk_range)
        return d


@dataclass
class Curve:
    points: np.ndarray  # (4, ndim) control points P0..P3
    thickness: int
    level: int

    def to_dict(self):
        return {"points": self.points.tolist(), "thickness": self.thickness, "level": self.level}


@dataclass
class Sample:
    image: np.ndarray
    skeleton: np.ndarray
    params: GenParams
    curves: list = field(default_factory=list)
    id: str = ""


def bezier_point(P0, P1, P2, P3, t):
    """Cubic Bezier point at parameter ``t`` in ``[0, 1]``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    P0, P1, P2, P3 = (np.asarray(p, dtype=np.float64) for p in (P0, P1, P2, P3))
    s = 1.0 - t
    return s**3 * P0 + 3 * s**2 * t * P1 + 3 * s * t**2 * P2 + t**3 * P3


def _sample_curve(points):
    """Points along the curve no more than half a pixel apart."""
    # |B'(t)| <= 3 * longest leg of the control polygon
    legs = np.linalg.norm(np.diff(points, axis=0), axis=1)
    n = max(2, int(math.ceil(3.0 * legs.max() / 0.5)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    s = 1.0 - t
    P0, P1, P2, P3 = points
    return s**3 * P0 + 3 * s**2 * t * P1 + 3 * s * t**2 * P2 + t**3 * P3


def _ball_offsets(radius, ndim):
    r = int(math.ceil(radius)) + 1
    ax = np.arange(-r, r + 1)
    grid = np.stack(np.meshgrid(*([ax] * ndim), indexing="ij"), axis=-1).reshape(-1, ndim)
    return grid


def rasterize_curve(curve, thickness, canvas):
    """Stamp a ball of diameter ``thickness`` along ``curve`` into a copy of ``canvas``.

    ``curve`` is the (4, ndim) array of control points. A cell is covered when
    its centre lies within ``thickness / 2`` of a curve sample. Stamps falling
    outside the canvas are clipped.
    """
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    canvas = np.array(canvas, dtype=np.float32, copy=True)
    pts = _sample_curve(np.asarray(curve, dtype=np.float64))
    ndim = canvas.ndim
    radius = thickness / 2.0
    offs = _ball_offsets(radius, ndim)
    base = np.floor(pts).astype(np.int64)
    cells = base[:, None, :] + offs[None, :, :]
    d2 = ((cells - pts[:, None, :]) ** 2).sum(-1)
    cells = cells[d2 <= radius * radius + 1e-9]
    inside = np.all((cells >= 0) & (cells < np.array(canvas.shape)), axis=1)
    cells = np.unique(cells[inside], axis=0)
    if len(cells):
        canvas[tuple(cells.T)] = 1.0
    return canvas


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 1e-9 else None


def _cone_direction(rng, axis, half_angle):
    """Uniformly random direction within ``half_angle`` of unit vector ``axis``."""
    if len(axis) == 2:
        a = rng.uniform(-half_angle, half_angle)
        c, s = math.cos(a), math.sin(a)
        return np.array([c * axis[0] - s * axis[1], s * axis[0] + c * axis[1]])
    cos_t = rng.uniform(math.cos(half_angle), 1.0)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = rng.uniform(0.0, 2 * math.pi)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(axis, helper))
    w = np.cross(axis, u)
    return cos_t * axis + sin_t * (math.cos(phi) * u + math.sin(phi) * w)


def _trunks(rng, params):
    dims = np.array(params.dims, dtype=np.float64)
    lo, hi = params.trunk_range
    out = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        pts = rng.uniform(0.0, 1.0, size=(4, len(dims))) * (dims - 1)
        out.append(Curve(pts, int(rng.integers(params.w_trunk, params.W_trunk + 1)), 0))
    return out


def _branches(rng, parent, params):
    axis = _unit(parent.points[3] - parent.points[2])
    if axis is None:
        axis = _unit(parent.points[3] - parent.points[0])
    if axis is None:
        axis = _unit(rng.normal(size=len(params.dims)))
    span = min(params.dims)
    children = []
    for _ in range(int(rng.integers(params.n_branches, params.N_branches + 1))):
        lengths = np.sort(rng.uniform(0.1, 0.4, size=3)) * span
        pts = [parent.points[3]]
        for ln in lengths:
            pts.append(parent.points[3] + ln * _cone_direction(rng, axis, CONE_HALF_ANGLE))
        hi = min(params.W_trunk, parent.thickness)
        thick = int(rng.integers(params.w_trunk, hi + 1)) if hi >= params.w_trunk else hi
        children.append(Curve(np.array(pts), thick, parent.level + 1))
    return children


def _grow(rng, params):
    curves = _trunks(rng, params)
    frontier = list(curves)
    for _ in range(params.depth):
        nxt = []
        for c in frontier:
            nxt.extend(_branches(rng, c, params))
        curves.extend(nxt)
        frontier = nxt
    return curves


def render(curves, dims):
    canvas = np.zeros(tuple(dims), dtype=np.float32)
    for c in curves:
        canvas = rasterize_curve(c.points, c.thickness, canvas)
    return canvas


def generate(params, label=True):
    """Draw one sample; deterministic in ``params.seed``.

    Empty rasters are redrawn from the same generator up to ten times.
    With ``label=False`` the skeleton is left empty (image-only use).
    """
    rng = np.random.default_rng(params.seed)
    for _ in range(MAX_ATTEMPTS):
        curves = _grow(rng, params)
        image = render(curves, params.dims)
        if image.any():
            skel = boolean_thin(image) if label else np.zeros_like(image)
            return Sample(image=image, skeleton=skel, params=params, curves=curves)
    raise RuntimeError(f"empty raster after {MAX_ATTEMPTS} attempts (seed={params.seed})")


def sample_seed(seed, index):
    return int(seed) ^ int(index)


def generate_many(params, count, label=True):
    return [generate(replace(params, seed=sample_seed(params.seed, i)), label=label) for i in range(count)]


def thicken(sample, k, k_max=None):
    """``dilate^k(skeleton) * image``; ``k = 0`` returns the skeleton."""
    k_max = sample.params.W_trunk if k_max is None else k_max
    if not 0 <= k <= k_max:
        raise ValueError(f"k={k} outside [0, {k_max}]")
    s = np.asarray(sample.skeleton, dtype=np.float32)
    for _ in range(k):
        s = dilate(s)
    return s * sample.image
