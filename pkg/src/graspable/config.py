"""Run configuration: a TOML file whose keys can all be overridden by flags.

Layout (every key optional)::

    [io]      input, input_format, scored, scored_format, graspable, report,
              frame, colormap
    [voxel]   size_mm, fill_mode
    [gripper] palm_diameter, finger_length, finger_angle_range, spine_clearance
    [scan]    z_threshold, candidates, engine, threads, threshold
    [scene]   extent, tilt_deg, density, noise, seed, [[scene.features]]

Unset optional values (no z-threshold, default thread count, auto-detected
formats) are simply absent from the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import tomli
import tomli_w

from .cloud_io import CLOUD_FORMATS, COLORMAPS, SCORED_FORMATS
from .estimator import GraspabilityAssessor
from .exceptions import ValidationError
from .synth import SceneSpec, hemisphere_scene

FRAMES = ("input", "plane")

# (section, key) for every scalar field of RunConfig
_LAYOUT = {
    "input": ("io", "input"),
    "input_format": ("io", "input_format"),
    "scored": ("io", "scored"),
    "scored_format": ("io", "scored_format"),
    "graspable": ("io", "graspable"),
    "report": ("io", "report"),
    "frame": ("io", "frame"),
    "colormap": ("io", "colormap"),
    "voxel_size": ("voxel", "size_mm"),
    "fill_mode": ("voxel", "fill_mode"),
    "palm_diameter": ("gripper", "palm_diameter"),
    "finger_length": ("gripper", "finger_length"),
    "finger_angle_range": ("gripper", "finger_angle_range"),
    "spine_clearance": ("gripper", "spine_clearance"),
    "z_threshold": ("scan", "z_threshold"),
    "candidates": ("scan", "candidates"),
    "engine": ("scan", "engine"),
    "threads": ("scan", "threads"),
    "threshold": ("scan", "threshold"),
}


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    input_format: str | None = None
    scored: str | None = None
    scored_format: str | None = None
    graspable: str | None = None
    report: str | None = None
    frame: str = "input"
    colormap: str = "viridis_like"
    voxel_size: float = 2.0
    fill_mode: str = "shell"
    palm_diameter: float = 30.0
    finger_length: float = 24.0
    finger_angle_range: tuple[float, float] = (0.0, 45.0)
    spine_clearance: float = 0.0
    z_threshold: float | None = None
    candidates: str = "surface_voxels"
    engine: str = "packed"
    threads: int | None = None
    threshold: float = 0.8
    scene: SceneSpec = field(default_factory=hemisphere_scene)

    def __post_init__(self):
        object.__setattr__(self, "finger_angle_range", tuple(float(a) for a in self.finger_angle_range))

    def estimator(self) -> GraspabilityAssessor:
        return GraspabilityAssessor(
            voxel_size=self.voxel_size,
            palm_diameter=self.palm_diameter,
            finger_length=self.finger_length,
            finger_angle_range=self.finger_angle_range,
            spine_clearance=self.spine_clearance,
            fill_mode=self.fill_mode,
            candidates=self.candidates,
            z_threshold=self.z_threshold,
            engine=self.engine,
            threshold=self.threshold,
            n_jobs=self.threads,
        )

    def validate(self) -> "RunConfig":
        """Reject any value an operation downstream would refuse."""
        try:
            self.estimator().validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(str(exc)) from None
        if self.input_format not in (None, *CLOUD_FORMATS):
            raise ValidationError(f"input_format must be one of {CLOUD_FORMATS}")
        if self.scored_format not in (None, *SCORED_FORMATS):
            raise ValidationError(f"scored_format must be one of {SCORED_FORMATS}")
        if self.colormap not in COLORMAPS:
            raise ValidationError(f"colormap must be one of {COLORMAPS}")
        if self.frame not in FRAMES:
            raise ValidationError(f"frame must be one of {FRAMES}")
        return self

    def override(self, **values) -> "RunConfig":
        """Copy with every non-None value replaced (command-line flags)."""
        known = {f.name for f in fields(self)}
        bad = set(values) - known
        if bad:
            raise ValidationError(f"unknown config fields: {sorted(bad)}")
        return dataclasses.replace(self, **{k: v for k, v in values.items() if v is not None})

    def to_dict(self) -> dict:
        out: dict = {}
        for name, (section, key) in _LAYOUT.items():
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = list(value)
            out.setdefault(section, {})[key] = value
        scene = self.scene.to_dict()
        if scene["seed"] >= 2**63:
            scene["seed"] = hex(scene["seed"])  # TOML integers are signed 64-bit
        out["scene"] = scene
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
        values = {}
        for name, (section, key) in _LAYOUT.items():
            sec = data.get(section, {})
            if key in sec:
                values[name] = sec.pop(key)
        if "scene" in data:
            scene = data.pop("scene")
            if isinstance(scene.get("seed"), str):
                try:
                    scene["seed"] = int(scene["seed"], 0)
                except ValueError:
                    raise ValidationError(f"bad scene seed {scene['seed']!r}") from None
            try:
                values["scene"] = SceneSpec.from_dict(scene)
            except TypeError as exc:
                raise ValidationError(f"bad scene block: {exc}") from None
        leftover = [f"{s}.{k}" for s, sec in data.items() if isinstance(sec, dict) for k in sec]
        leftover += [s for s, sec in data.items() if not isinstance(sec, dict)]
        if leftover:
            raise ValidationError(f"unknown config keys: {sorted(leftover)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None


def loads(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"config is not valid TOML: {exc}") from None
    return RunConfig.from_dict(data)


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load(path) -> RunConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ValidationError(f"config {path} is not UTF-8") from None
    return loads(text)
