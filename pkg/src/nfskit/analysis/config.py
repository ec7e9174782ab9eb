"""Experiment configuration: YAML schema, defaults and hashing.

Top-level keys (all optional except ``rigs``)::

    name: demo
    seed: 7
    scene: {n_buildings: 24, ..., frame_spacing: 2.0}   # SceneParams fields
    splits: {test_frames: 20, train_frames: 60}
    sensor: {azimuth_step: 0.9, vertical_fov: [-24, 2], max_range: 100,
             roof_length: 4.0, roof_width: 1.8, roof_height: 1.8}
    rigs: [in-domain, corners-1, {name: my-rig, sensors: [...]}]
    reference_rig: in-domain
    feature_radius: 1.0
    match_radius: 1.0
    models:
      - Base
      - {name: mc, fd: {p: 0.5}, mc: {p: 0.5, s: 1.0}}
      - "Base + FD(p=0.5) + MC(p=0.5, s=1.0)"
    export_point_similarity: false
    workers: 1

Frames ``[0, test_frames)`` form the test split and the following
``train_frames`` frames the training split.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from nfskit.augment import AugmentConfig, FrustumDropParams, MisCalibrationParams
from nfskit.errors import InvalidArgumentError
from nfskit.features import FEATURE_RADIUS
from nfskit.metrics.matching import MATCH_RADIUS
from nfskit.simulator.rig import Rig, SensorDefaults, get_rig, rig_from_dict
from nfskit.simulator.scene import SceneParams, scene_params_from_dict

_TOP_KEYS = {
    "name", "seed", "scene", "splits", "sensor", "rigs", "reference_rig", "in_domain_rig",
    "feature_radius", "match_radius", "models", "export_point_similarity", "workers",
}
_TERM = re.compile(r"^(FD|MC)\((.*)\)$")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    augment: AugmentConfig = AugmentConfig()


@dataclass(frozen=True)
class ExperimentConfig:
    rigs: tuple
    name: str = "experiment"
    seed: int = 0
    scene: SceneParams = SceneParams()
    test_frames: int = 20
    train_frames: int = 60
    sensor: SensorDefaults = SensorDefaults()
    reference_rig: str = "in-domain"
    in_domain_rig: str = "in-domain"
    feature_radius: float = FEATURE_RADIUS
    match_radius: float = MATCH_RADIUS
    models: tuple = (ModelConfig("Base"),)
    export_point_similarity: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.rigs:
            raise InvalidArgumentError("experiment needs at least one evaluation rig")
        if self.test_frames < 1 or self.train_frames < 1:
            raise InvalidArgumentError("test_frames and train_frames must be positive")
        if self.scene.n_frames < self.test_frames + self.train_frames:
            raise InvalidArgumentError(
                f"scene has {self.scene.n_frames} frames, splits need "
                f"{self.test_frames + self.train_frames}"
            )
        names = [m.name for m in self.models]
        if not names or len(set(names)) != len(names):
            raise InvalidArgumentError(f"model names must be unique and non-empty: {names}")

    @property
    def test_frame_ids(self) -> range:
        return range(0, self.test_frames)

    @property
    def train_frame_ids(self) -> range:
        return range(self.test_frames, self.test_frames + self.train_frames)

    def resolve_rig(self, entry) -> Rig:
        if isinstance(entry, str):
            return get_rig(entry, self.sensor)
        return rig_from_dict(entry, self.sensor)

    def rig_name(self, entry) -> str:
        return entry if isinstance(entry, str) else entry.get("name", "custom")

    def to_dict(self) -> dict:
        """Fully resolved configuration, defaults included, as plain data."""
        def plain(v):
            if dataclasses.is_dataclass(v):
                return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        d = plain(self)
        d["models"] = [
            {"name": m.name, "label": m.augment.label, **plain(m.augment)} for m in self.models
        ]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _kv(body: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        k, _, v = part.partition("=")
        if not _:
            raise InvalidArgumentError(f"expected key=value in {body!r}")
        out[k.strip()] = float(v)
    return out


def _fd(d: dict) -> FrustumDropParams:
    allowed = {"p", "r", "angle_min", "angle_max"}
    if set(d) - allowed:
        raise InvalidArgumentError(f"unknown FD keys {sorted(set(d) - allowed)}")
    return FrustumDropParams(**{k: float(v) for k, v in d.items()})


def _mc(d: dict) -> MisCalibrationParams:
    d = dict(d)
    if "s" in d:
        d["s_xy"] = d.pop("s")
    allowed = {"p", "s_xy", "s_z", "alpha_max"}
    if set(d) - allowed:
        raise InvalidArgumentError(f"unknown MC keys {sorted(set(d) - allowed)}")
    return MisCalibrationParams(**{k: float(v) for k, v in d.items()})


def parse_augmentation(label: str) -> AugmentConfig:
    """Parse labels such as ``"Base + FD(p=0.5) + MC(p=0.5, s=1.0)"``."""
    fd = mc = None
    for term in (t.strip() for t in label.split("+")):
        if term in ("", "Base"):
            continue
        m = _TERM.match(term.replace(" ", ""))
        if not m:
            raise InvalidArgumentError(f"cannot parse augmentation term {term!r}")
        kind, body = m.groups()
        if kind == "FD":
            fd = _fd(_kv(body))
        else:
            mc = _mc(_kv(body))
    return AugmentConfig(fd=fd, mc=mc)


def _model(entry: Any) -> ModelConfig:
    if isinstance(entry, str):
        return ModelConfig(entry, parse_augmentation(entry))
    if not isinstance(entry, dict) or "name" not in entry:
        raise InvalidArgumentError(f"model entry needs a name: {entry!r}")
    fd = _fd(entry["fd"]) if entry.get("fd") is not None else None
    mc = _mc(entry["mc"]) if entry.get("mc") is not None else None
    return ModelConfig(str(entry["name"]), AugmentConfig(fd=fd, mc=mc))


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown experiment keys: {sorted(unknown)}")
    splits = dict(data.get("splits") or {})
    test_frames = int(splits.get("test_frames", 20))
    train_frames = int(splits.get("train_frames", 60))
    scene = dict(data.get("scene") or {})
    scene.setdefault("n_frames", test_frames + train_frames)
    sensor = dict(data.get("sensor") or {})
    if "vertical_fov" in sensor:
        sensor["vertical_fov"] = tuple(float(v) for v in sensor["vertical_fov"])
    bad = set(sensor) - set(SensorDefaults.__dataclass_fields__)
    if bad:
        raise InvalidArgumentError(f"unknown sensor keys: {sorted(bad)}")
    models = tuple(_model(m) for m in (data.get("models") or ["Base"]))
    return ExperimentConfig(
        rigs=tuple(data.get("rigs") or ()),
        name=str(data.get("name", "experiment")),
        seed=int(data.get("seed", 0)),
        scene=scene_params_from_dict(scene),
        test_frames=test_frames,
        train_frames=train_frames,
        sensor=SensorDefaults(**sensor),
        reference_rig=str(data.get("reference_rig", "in-domain")),
        in_domain_rig=str(data.get("in_domain_rig", "in-domain")),
        feature_radius=float(data.get("feature_radius", FEATURE_RADIUS)),
        match_radius=float(data.get("match_radius", MATCH_RADIUS)),
        models=models,
        export_point_similarity=bool(data.get("export_point_similarity", False)),
        workers=data.get("workers"),
    )


def bundled_config_path(name: str = "demo") -> Path:
    return Path(__file__).resolve().parent.parent / "configs" / f"{name}.yaml"


def load_config(path) -> ExperimentConfig:
    """Load a YAML experiment file; a bare name like ``demo`` picks a bundled config."""
    p = Path(path)
    if not p.exists() and bundled_config_path(str(path)).exists():
        p = bundled_config_path(str(path))
    with open(p, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))
