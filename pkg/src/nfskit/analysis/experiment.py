"""Desk-scale protocol: train in-domain, evaluate NFS and mIoU across rigs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from nfskit.analysis.classifier import CentroidClassifier, fit_centroids
from nfskit.analysis.config import ExperimentConfig
from nfskit.analysis.regression import FULL_SCALE_REFERENCE, LinearFit, linear_fit
from nfskit.core.cloud import PointCloud
from nfskit.core.io import atomic_write_text
from nfskit.core.rng import RngStream
from nfskit.errors import DegenerateFitError, NfsKitError
from nfskit.features import FeatureMatrix, extract_features
from nfskit.metrics.index import build_index
from nfskit.metrics.matching import match_points
from nfskit.metrics.nfs import NfsReport, NfsSummary, aggregate_nfs, nfs
from nfskit.metrics.segmentation import confusion_matrix, iou_from_confusion, rmiou
from nfskit.simulator.raycast import fuse, simulate_scan
from nfskit.simulator.rig import Rig
from nfskit.simulator.scene import CLASS_TABLE, Scene, build_scene

log = logging.getLogger(__name__)

# Stream keys under the master seed.
SCENE_STREAM = 1
AUGMENT_STREAM = 2

ROW_FIELDS = (
    "model", "augmentation", "setup", "frames", "nfs_percent", "nfs_std_percent",
    "nfs_pooled_percent", "miou", "in_domain_miou", "rmiou_percent", "matched",
    "unmatched", "config_hash",
)


class ExperimentError(NfsKitError):
    def __init__(self, setup: str, cause: Exception):
        self.setup = setup
        self.cause = cause
        super().__init__(f"setup {setup!r} failed: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ExperimentRow:
    model: str
    augmentation: str
    setup: str
    frames: int
    nfs_percent: float
    nfs_std_percent: float
    nfs_pooled_percent: float
    miou: float
    in_domain_miou: float
    rmiou_percent: float
    matched: int
    unmatched: int
    config_hash: str

    def as_csv_row(self) -> list[str]:
        out = []
        for name in ROW_FIELDS:
            v = getattr(self, name)
            out.append(repr(v) if isinstance(v, float) else str(v))
        return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[ExperimentRow]
    fit: Optional[LinearFit]
    nfs_by_setup: dict[str, NfsSummary] = field(default_factory=dict)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow(r.as_csv_row())
        return buf.getvalue()

    def fit_text(self) -> str:
        lines = [f"rows: {len(self.rows)}"]
        if self.fit is None:
            lines.append("fit: degenerate (fewer than two distinct NFS values)")
        else:
            lines += [
                f"slope: {self.fit.slope!r}",
                f"intercept: {self.fit.intercept!r}",
                f"r_squared: {self.fit.r_squared!r}",
            ]
        ref = FULL_SCALE_REFERENCE
        lines.append(
            f"full_scale_reference: slope {ref.slope} intercept {ref.intercept} "
            f"r_squared {ref.r_squared} (trained CNN, not a desk-scale target)"
        )
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        head = f"{'model':<28} {'setup':<30} {'NFS %':>16} {'mIoU':>7} {'rmIoU %':>8}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            nfs_s = f"{r.nfs_percent:6.2f} ± {r.nfs_std_percent:5.2f}"
            lines.append(
                f"{r.model:<28} {r.setup:<30} {nfs_s:>16} {r.miou:7.4f} {r.rmiou_percent:8.2f}"
            )
        if self.fit is not None:
            lines.append(
                f"OLS rmIoU = {self.fit.slope:.3f} * NFS + {self.fit.intercept:.3f}  "
                f"(R² = {self.fit.r_squared:.3f})"
            )
        return "\n".join(lines) + "\n"


def _row_hash(digest: str, model: str, setup: str) -> str:
    return hashlib.sha256(f"{digest}|{model}|{setup}".encode()).hexdigest()[:16]


class _Runner:
    def __init__(self, cfg: ExperimentConfig, progress: Optional[Callable[[str], None]]):
        self.cfg = cfg
        self.progress = progress or (lambda msg: log.info(msg))
        self.master = RngStream(cfg.seed)
        self.scene: Scene = build_scene(self.master.derive(SCENE_STREAM), cfg.scene)
        self.n_classes = len(CLASS_TABLE)
        self._pool = ThreadPoolExecutor(cfg.workers) if cfg.workers and cfg.workers > 1 else None

    def map(self, fn, items):
        items = list(items)
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def scan(self, rig: Rig, frame: int) -> PointCloud:
        return fuse(simulate_scan(rig, self.scene, frame))

    def features(self, cloud: PointCloud) -> FeatureMatrix:
        return extract_features(cloud, self.cfg.feature_radius)

    def train(self, rig: Rig) -> dict[str, CentroidClassifier]:
        clouds = self.map(lambda f: self.scan(rig, f), self.cfg.train_frame_ids)
        base_feats = None
        out = {}
        for model in self.cfg.models:
            aug = model.augment
            if aug.fd is None and aug.mc is None:
                if base_feats is None:
                    base_feats = self.map(self.features, clouds)
                feats, labels = base_feats, [c.labels for c in clouds]
            else:
                augmented = [
                    aug.apply(c, self.master.derive(AUGMENT_STREAM, c.frame_id)) for c in clouds
                ]
                feats = self.map(self.features, augmented)
                labels = [c.labels for c in augmented]
            x = np.concatenate([f.values for f in feats], axis=0)
            y = np.concatenate(labels)
            out[model.name] = fit_centroids(x, y)
            self.progress(f"trained {model.name} on {x.shape[0]} points")
        return out

    def evaluate(self, rig: Rig, reference: list, classifiers: dict):
        """Per-frame NFS reports and per-model confusion matrices for one rig."""
        def one(item):
            frame, (ref_cloud, ref_feats, ref_index) = item
            cloud = self.scan(rig, frame)
            feats = self.features(cloud)
            matches = match_points(ref_cloud, cloud, self.cfg.match_radius, index=ref_index)
            report = nfs(ref_feats, feats, matches)
            cms = {
                name: confusion_matrix(cloud.labels, clf.predict(feats), self.n_classes)
                for name, clf in classifiers.items()
            }
            return report, cms

        results = self.map(one, zip(self.cfg.test_frame_ids, reference))
        reports = [r for r, _ in results]
        cms = {name: sum(c[name] for _, c in results) for name in classifiers}
        return reports, cms


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   progress: Optional[Callable[[str], None]] = None) -> ExperimentResult:
    """Run every (model, rig) evaluation and regress rmIoU on NFS.

    With ``out_dir`` set, writes ``rows.csv``, ``fit.txt``, ``summary.txt``,
    ``resolved_config.json`` and, if enabled, per-point similarity sidecars
    under ``similarity/<setup>/``.
    """
    runner = _Runner(cfg, progress)
    digest = cfg.digest()
    current = cfg.in_domain_rig
    try:
        in_rig = cfg.resolve_rig(cfg.in_domain_rig)
        classifiers = runner.train(in_rig)

        current = cfg.reference_rig
        ref_rig = cfg.resolve_rig(cfg.reference_rig)

        def ref_item(frame):
            c = runner.scan(ref_rig, frame)
            return c, runner.features(c), build_index(c)

        reference = runner.map(ref_item, cfg.test_frame_ids)

        current = cfg.in_domain_rig
        in_domain_miou = {}
        in_cms = {name: np.zeros((runner.n_classes,) * 2, dtype=np.int64) for name in classifiers}
        for frame, (ref_cloud, ref_feats, _) in zip(cfg.test_frame_ids, reference):
            if ref_rig.name == in_rig.name:
                cloud, feats = ref_cloud, ref_feats
            else:
                cloud = runner.scan(in_rig, frame)
                feats = runner.features(cloud)
            for name, clf in classifiers.items():
                in_cms[name] += confusion_matrix(cloud.labels, clf.predict(feats), runner.n_classes)
        for name, cm in in_cms.items():
            in_domain_miou[name] = iou_from_confusion(cm)[1]

        per_setup = {}
        for entry in cfg.rigs:
            current = cfg.rig_name(entry)
            rig = cfg.resolve_rig(entry)
            reports, cms = runner.evaluate(rig, reference, classifiers)
            per_setup[current] = (reports, cms)
            summary = aggregate_nfs(reports)
            runner.progress(f"evaluated {current}: NFS {100 * summary.mean:.2f}%")
            if out_dir is not None and cfg.export_point_similarity:
                _write_similarity(Path(out_dir) / "similarity" / current, cfg, reports)
    except NfsKitError as exc:
        raise ExperimentError(current, exc) from exc
    finally:
        if runner._pool is not None:
            runner._pool.shutdown()

    rows = []
    nfs_by_setup = {}
    for model in cfg.models:
        for setup, (reports, cms) in per_setup.items():
            summary = aggregate_nfs(reports)
            nfs_by_setup[setup] = summary
            m = iou_from_confusion(cms[model.name])[1]
            ind = in_domain_miou[model.name]
            rows.append(
                ExperimentRow(
                    model=model.name,
                    augmentation=model.augment.label,
                    setup=setup,
                    frames=summary.frames,
                    nfs_percent=100.0 * summary.mean,
                    nfs_std_percent=100.0 * summary.std,
                    nfs_pooled_percent=100.0 * summary.pooled,
                    miou=m,
                    in_domain_miou=ind,
                    rmiou_percent=rmiou(m, ind),
                    matched=summary.matched_count,
                    unmatched=summary.unmatched_count,
                    config_hash=_row_hash(digest, model.name, setup),
                )
            )
    try:
        fit = linear_fit([r.nfs_percent for r in rows], [r.rmiou_percent for r in rows])
    except DegenerateFitError:
        fit = None
    result = ExperimentResult(cfg, rows, fit, nfs_by_setup)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _write_similarity(root: Path, cfg: ExperimentConfig, reports: list[NfsReport]) -> None:
    for frame, rep in zip(cfg.test_frame_ids, reports):
        ref_of = np.full(rep.n_query, -1, dtype=np.int64)
        ref_of[rep.pairs[:, 1]] = rep.pairs[:, 0]
        sims = rep.per_query()
        buf = io.StringIO()
        buf.write("query_index,reference_index,similarity\n")
        for j in range(rep.n_query):
            if ref_of[j] < 0:
                buf.write(f"{j},,\n")
            else:
                buf.write(f"{j},{ref_of[j]},{sims[j]!r}\n")
        atomic_write_text(root / f"frame_{frame:06d}.csv", buf.getvalue())


def write_outputs(result: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    atomic_write_text(out / "rows.csv", result.rows_csv())
    atomic_write_text(out / "fit.txt", result.fit_text())
    atomic_write_text(out / "summary.txt", result.summary_text())
    atomic_write_text(
        out / "resolved_config.json",
        json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n",
    )
