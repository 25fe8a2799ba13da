"""Deterministic synthetic terrains with analytic ground truth.

Scenes live on ``[-ex/2, ex/2] x [-ey/2, ey/2]`` (meters) around a flat
base at z = 0. Features add to the base height; the whole surface is then
optionally tilted about the x-axis.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cloud_io import PointCloud
from .exceptions import ValidationError

# bump when sampling changes so pinned acceptance scenes stay reproducible
SCENE_SEED_V1 = 0x5EED0001


def _positive(**values):
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class Hemisphere:
    radius: float
    center: tuple[float, float] = (0.0, 0.0)
    kind = "hemisphere"

    def __post_init__(self):
        _positive(radius=self.radius)

    def footprint(self):
        return ("disc", tuple(self.center), self.radius)

    def surface(self, x, y):
        rho2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return np.sqrt(np.clip(self.radius**2 - rho2, 0.0, None))


@dataclass(frozen=True)
class Spike:
    """Right circular cone standing on the base plane."""

    height: float
    base_radius: float
    center: tuple[float, float] = (0.0, 0.0)
    kind = "spike"

    def __post_init__(self):
        _positive(height=self.height, base_radius=self.base_radius)

    def footprint(self):
        return ("disc", tuple(self.center), self.base_radius)

    def surface(self, x, y):
        rho = np.hypot(x - self.center[0], y - self.center[1])
        return self.height * np.clip(1.0 - rho / self.base_radius, 0.0, None)


@dataclass(frozen=True)
class Trench:
    """Flat-bottomed channel running parallel to ``axis`` at ``offset``."""

    width: float
    depth: float
    axis: str = "y"
    offset: float = 0.0
    kind = "trench"

    def __post_init__(self):
        _positive(width=self.width, depth=self.depth)
        if self.axis not in ("x", "y"):
            raise ValidationError(f"trench axis must be 'x' or 'y', got {self.axis!r}")

    def footprint(self):
        return ("strip", self.axis, self.offset, self.width / 2)

    def surface(self, x, y):
        u = x if self.axis == "y" else y
        return np.where(np.abs(u - self.offset) <= self.width / 2, -self.depth, 0.0)


_FEATURES = {"hemisphere": Hemisphere, "spike": Spike, "trench": Trench}


def _overlap(fa, fb) -> bool:
    if fa[0] == "disc" and fb[0] == "disc":
        return math.dist(fa[1], fb[1]) < fa[2] + fb[2]
    if fa[0] == "strip" and fb[0] == "strip":
        if fa[1] != fb[1]:
            return True
        return abs(fa[2] - fb[2]) < fa[3] + fb[3]
    disc, strip = (fa, fb) if fa[0] == "disc" else (fb, fa)
    u = disc[1][0] if strip[1] == "y" else disc[1][1]
    return abs(u - strip[2]) < disc[2] + strip[3]


@dataclass(frozen=True)
class SceneSpec:
    extent: tuple[float, float] = (0.2, 0.2)
    tilt_deg: float = 0.0
    features: tuple = field(default_factory=tuple)
    density: float = 250_000.0
    noise: float = 0.0
    seed: int = SCENE_SEED_V1

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "features", tuple(self.features))
        if len(self.extent) != 2 or min(self.extent) <= 0:
            raise ValidationError(f"extent must be two positive lengths, got {self.extent}")
        if not self.density > 0:
            raise ValidationError("density must be positive")
        if not self.noise >= 0:
            raise ValidationError("noise sigma must be >= 0")
        if not -90.0 < self.tilt_deg < 90.0:
            raise ValidationError("tilt must lie in (-90, 90) degrees")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        fps = [f.footprint() for f in self.features]
        for a in range(len(fps)):
            for b in range(a + 1, len(fps)):
                if _overlap(fps[a], fps[b]):
                    raise ValidationError(f"features {a} and {b} overlap")

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            feats.append({"kind": f.kind, **asdict(f)})
        return {
            "extent": list(self.extent),
            "tilt_deg": self.tilt_deg,
            "density": self.density,
            "noise": self.noise,
            "seed": int(self.seed),
            "features": [
                {k: (list(v) if isinstance(v, tuple) else v) for k, v in f.items()} for f in feats
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        data = dict(data)
        feats = []
        for raw in data.pop("features", []):
            raw = dict(raw)
            kind = raw.pop("kind", None)
            if kind not in _FEATURES:
                raise ValidationError(f"unknown feature kind {kind!r}")
            if "center" in raw:
                raw["center"] = tuple(raw["center"])
            try:
                feats.append(_FEATURES[kind](**raw))
            except TypeError as exc:
                raise ValidationError(f"bad {kind} feature: {exc}") from None
        unknown = set(data) - {"extent", "tilt_deg", "density", "noise", "seed"}
        if unknown:
            raise ValidationError(f"unknown scene keys: {sorted(unknown)}")
        return cls(features=tuple(feats), **data)


def analytic_height(spec: SceneSpec, x, y):
    """Exact surface height (before tilt) at scene coordinates (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hx, hy = spec.extent[0] / 2, spec.extent[1] / 2
    tol = 1e-12
    if (np.abs(x) > hx + tol).any() or (np.abs(y) > hy + tol).any():
        raise ValidationError("query point outside the scene extent")
    z = np.zeros(np.broadcast(x, y).shape)
    for f in spec.features:
        z = z + f.surface(x, y)
    return z if z.ndim else float(z)


def tilt_rotation(tilt_deg: float) -> np.ndarray:
    t = math.radians(tilt_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _stratified(spec: SceneSpec, rng) -> np.ndarray:
    n = int(round(spec.density * spec.area))
    if n < 1:
        raise ValidationError("scene density times area rounds to zero points")
    ex, ey = spec.extent
    nx = max(1, int(round(math.sqrt(n * ex / ey))))
    ny = -(-n // nx)
    m = nx * ny
    jitter = rng.random((m, 2))
    cells = np.arange(m)
    if m > n:
        cells = np.round(np.linspace(0, m - 1, n)).astype(np.int64)
    ix, iy = np.divmod(cells, ny)
    x = -ex / 2 + (ix + jitter[cells, 0]) * (ex / nx)
    y = -ey / 2 + (iy + jitter[cells, 1]) * (ey / ny)
    return np.column_stack([x, y])


def generate_scene(spec: SceneSpec) -> PointCloud:
    """Sample the scene surface; the same spec always yields the same cloud."""
    rng = np.random.default_rng(int(spec.seed))
    xy = _stratified(spec, rng)
    z = analytic_height(spec, xy[:, 0], xy[:, 1])
    if spec.noise > 0:
        z = z + rng.normal(0.0, spec.noise, size=z.shape)
    pts = np.column_stack([xy, z])
    if spec.tilt_deg != 0.0:
        pts = pts @ tilt_rotation(spec.tilt_deg).T
    return PointCloud(pts)


def hemisphere_scene(radius=0.03, extent=(0.16, 0.16), density=1e6, seed=SCENE_SEED_V1,
                     tilt_deg=0.0, noise=0.0) -> SceneSpec:
    """The pinned bump-on-a-plane acceptance scene (25,600 points by default)."""
    return SceneSpec(extent=extent, tilt_deg=tilt_deg, features=(Hemisphere(radius),),
                     density=density, noise=noise, seed=seed)


def scaled_hemisphere_scene(n_points: int, density=1e6, **kw) -> SceneSpec:
    """Square hemisphere scene whose extent yields about ``n_points`` samples."""
    if int(n_points) < 1:
        raise ValidationError("n_points must be >= 1")
    side = math.sqrt(int(n_points) / density)
    return hemisphere_scene(extent=(side, side), density=density, **kw)
