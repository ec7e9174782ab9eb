"""``nfskit`` command line: simulate, augment, features, nfs, miou, experiment.

Every subcommand resolves paths against ``--workdir`` and writes
``resolved_config.json`` (all flags, defaults included) into its output
directory. Failures exit with status 1 and one stderr line of the form
``nfskit-error <ErrorClass>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import zlib
from pathlib import Path

import numpy as np
import yaml

from nfskit import __version__
from nfskit.analysis import load_config, run_experiment
from nfskit.augment import AugmentConfig, FrustumDropParams, MisCalibrationParams
from nfskit.core.io import FORMATS, atomic_write_text, read_cloud, read_labels, write_cloud
from nfskit.core.rng import RngStream
from nfskit.errors import ConsistencyError, InvalidArgumentError, NfsKitError
from nfskit.features import FEATURE_RADIUS, extract_features, load_features, save_features
from nfskit.metrics import MATCH_RADIUS, aggregate_nfs, match_points, miou, nfs, rmiou
from nfskit.metrics.index import THREADS_ENV
from nfskit.simulator import (
    SensorDefaults,
    build_scene,
    fuse,
    get_rig,
    rig_from_dict,
    scene_params_from_dict,
    simulate_scan,
)
from nfskit.simulator.scene import CLASS_TABLE

log = logging.getLogger("nfskit")

CLOUD_SUFFIXES = (".bin", ".nkpc")
SIM_CONFIG_KEYS = {"seed", "frames", "start_frame", "rig", "sensors", "scene", "sensor", "format"}


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _resolve(args, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(args.workdir) / p


def _expand(args, items) -> list[Path]:
    """Files as given; directories expand to their sorted cloud files."""
    out = []
    for item in items:
        p = _resolve(args, item)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix in CLOUD_SUFFIXES))
        else:
            out.append(p)
    return out


def _log_config(args, out_dir: Path, extra: dict | None = None) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(extra or {})
    text = json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n"
    atomic_write_text(out_dir / "resolved_config.json", text)
    log.info("resolved configuration: %s", json.dumps(cfg, sort_keys=True, default=str))


def _suffix(fmt: str) -> str:
    return ".bin" if fmt == "kitti-bin" else ".nkpc"


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    file_cfg = {}
    if args.config:
        with open(_resolve(args, args.config), encoding="utf-8") as fh:
            file_cfg = yaml.safe_load(fh) or {}
        unknown = set(file_cfg) - SIM_CONFIG_KEYS
        if unknown:
            raise InvalidArgumentError(f"unknown simulation keys: {sorted(unknown)}")
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    frames = args.frames if args.frames is not None else int(file_cfg.get("frames", 1))
    start = args.start_frame if args.start_frame is not None else int(file_cfg.get("start_frame", 0))
    fmt = args.format or file_cfg.get("format", "kitti-bin")
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"unknown format {fmt!r}")
    sensor = dict(file_cfg.get("sensor") or {})
    if args.azimuth_step is not None:
        sensor["azimuth_step"] = args.azimuth_step
    if "vertical_fov" in sensor:
        sensor["vertical_fov"] = tuple(sensor["vertical_fov"])
    defaults = SensorDefaults(**sensor)
    if args.rig is None and file_cfg.get("sensors"):
        rig = rig_from_dict({"name": "custom", "sensors": file_cfg["sensors"]}, defaults)
    else:
        rig = get_rig(args.rig or file_cfg.get("rig", "in-domain"), defaults)
    scene_cfg = dict(file_cfg.get("scene") or {})
    scene_cfg["n_frames"] = max(int(scene_cfg.get("n_frames", 0)), start + frames)
    scene = build_scene(RngStream(seed).derive(1), scene_params_from_dict(scene_cfg))

    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = _suffix(fmt)
    for frame in range(start, start + frames):
        clouds = simulate_scan(rig, scene, frame)
        for c in clouds:
            write_cloud(c, out / f"frame_{frame:06d}_{c.sensor_id}{ext}", fmt)
        if len(clouds) > 1:
            write_cloud(fuse(clouds), out / f"frame_{frame:06d}_fused{ext}", fmt)
    _log_config(args, out, {"resolved": {"seed": seed, "frames": frames, "start_frame": start,
                                         "format": fmt, "rig": rig.to_dict(),
                                         "scene": scene_cfg}})
    print(f"wrote {frames} frame(s) of rig {rig.name} ({len(rig.sensors)} sensor(s)) to {out}")
    return 0


# -- augment ------------------------------------------------------------------

def _augment_config(args) -> AugmentConfig:
    fd = mc = None
    if args.fd_p > 0:
        fd = FrustumDropParams(r=args.fd_r, angle_min=args.fd_angle_min,
                               angle_max=args.fd_angle_max, p=args.fd_p)
    if args.mc_p > 0:
        mc = MisCalibrationParams(s_xy=args.mc_s, s_z=args.mc_sz, alpha_max=args.mc_alpha,
                                  p=args.mc_p)
    return AugmentConfig(fd=fd, mc=mc)


def cmd_augment(args) -> int:
    cfg = _augment_config(args)
    inputs = _expand(args, args.inputs)
    if not inputs:
        raise InvalidArgumentError("no input clouds")
    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    master = RngStream(args.seed)
    for path in inputs:
        cloud = read_cloud(path)
        rng = master.derive(cloud.frame_id, zlib.crc32(cloud.sensor_id.encode("utf-8")))
        result = cfg.apply(cloud, rng)
        write_cloud(result, out / path.name)
        print(f"{path.name}: {len(cloud)} -> {len(result)} points")
    _log_config(args, out, {"augmentation": cfg.label})
    return 0


# -- features -----------------------------------------------------------------

def cmd_features(args) -> int:
    inputs = _expand(args, args.inputs)
    if not inputs:
        raise InvalidArgumentError("no input clouds")
    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in inputs:
        feats = extract_features(read_cloud(path), args.radius)
        save_features(feats, out / f"{path.stem}.feat")
        print(f"{path.name}: {len(feats)} x {feats.d}")
    _log_config(args, out)
    return 0


# -- nfs ----------------------------------------------------------------------

def _features_for(args, cloud, paths, k):
    if paths:
        feats = load_features(_resolve(args, paths[k]))
        feats.check_rows(cloud)
        return feats
    return extract_features(cloud, args.feature_radius)


def cmd_nfs(args) -> int:
    refs = _expand(args, args.reference)
    qrys = _expand(args, args.query)
    if not refs or len(refs) != len(qrys):
        raise InvalidArgumentError(f"{len(refs)} reference vs {len(qrys)} query clouds")
    for name, paths in (("reference", args.reference_features), ("query", args.query_features)):
        if paths and len(paths) != len(refs):
            raise InvalidArgumentError(f"{len(paths)} {name} feature files for {len(refs)} clouds")
    reports = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_id", "setup", "nfs", "matched", "unmatched"])
    for k, (rp, qp) in enumerate(zip(refs, qrys)):
        ref = read_cloud(rp)
        qry = read_cloud(qp)
        if args.assume_aligned:
            qry = read_cloud(qp, frame_id=ref.frame_id)
        fr = _features_for(args, ref, args.reference_features, k)
        fq = _features_for(args, qry, args.query_features, k)
        rep = nfs(fr, fq, match_points(ref, qry, args.radius))
        reports.append(rep)
        w.writerow([ref.frame_id, args.setup, repr(rep.percent), rep.matched_count,
                    rep.unmatched_count])
        if args.per_point:
            _write_per_point(_resolve(args, args.per_point) / f"{qp.stem}.sim.csv", rep)
    summary = aggregate_nfs(reports)
    text = buf.getvalue()
    if args.out:
        out = _resolve(args, args.out)
        atomic_write_text(out, text)
        _log_config(args, out.parent)
    else:
        sys.stdout.write(text)
    print(f"NFS {args.setup}: {100 * summary.mean:.4f}% ± {100 * summary.std:.4f} "
          f"(pooled {100 * summary.pooled:.4f}%, {summary.frames} frame(s))")
    return 0


def _write_per_point(path: Path, rep) -> None:
    ref_of = np.full(rep.n_query, -1, dtype=np.int64)
    ref_of[rep.pairs[:, 1]] = rep.pairs[:, 0]
    sims = rep.per_query()
    lines = ["query_index,reference_index,similarity"]
    for j in range(rep.n_query):
        lines.append(f"{j},," if ref_of[j] < 0 else f"{j},{ref_of[j]},{sims[j]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- miou ---------------------------------------------------------------------

def _label_files(args, items) -> list[Path]:
    out = []
    for item in items:
        p = _resolve(args, item)
        out.extend(sorted(p.glob("*.label")) if p.is_dir() else [p])
    return out


def cmd_miou(args) -> int:
    gts = _label_files(args, args.gt)
    preds = _label_files(args, args.pred)
    if not gts or len(gts) != len(preds):
        raise InvalidArgumentError(f"{len(gts)} ground-truth vs {len(preds)} prediction files")
    gt = np.concatenate([read_labels(p) for p in gts])
    pred = np.concatenate([read_labels(p, None) for p in preds])
    if gt.shape != pred.shape:
        raise ConsistencyError(f"{gt.size} ground-truth labels vs {pred.size} predictions")
    iou, mean = miou(gt, pred, args.classes)
    result = {
        "points": int(gt.size),
        "per_class_iou": [None if np.isnan(v) else float(v) for v in iou],
        "miou": mean,
    }
    if args.in_domain_miou is not None:
        result["rmiou_percent"] = rmiou(mean, args.in_domain_miou)
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        out = _resolve(args, args.out)
        atomic_write_text(out, text)
        _log_config(args, out.parent)
    sys.stdout.write(text)
    return 0


# -- experiment ---------------------------------------------------------------

def cmd_experiment(args) -> int:
    p = _resolve(args, args.config)
    cfg = load_config(p if p.exists() else args.config)
    out = _resolve(args, args.out)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    result = run_experiment(cfg, out, progress=lambda m: log.info(m))
    sys.stdout.write(result.summary_text())
    print(f"wrote {out / 'rows.csv'} and {out / 'fit.txt'}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfskit",
        description="LiDAR sensor-setup augmentations and normalized feature similarity.",
        formatter_class=_Formatter,
    )
    parser.add_argument("--version", action="version", version=f"nfskit {__version__}")
    parser.add_argument("--workdir", default=".", help="base directory for relative paths")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"KD-tree query threads (default: ${THREADS_ENV} or 1)")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="ray-cast a rig over a procedural scene",
                       formatter_class=_Formatter,
                       description="Write one cloud (+ .label) per sensor per frame, plus a "
                                   "fused cloud for multi-sensor rigs. Config keys: seed, "
                                   "frames, start_frame, format, rig, sensors[], scene, sensor.")
    p.add_argument("--rig", default=None, help="preset name, e.g. in-domain, corners-4, "
                                               "hfov-120, channels-128 (default: in-domain)")
    p.add_argument("--config", default=None, help="YAML simulation config")
    p.add_argument("--frames", type=int, default=None, help="number of frames (default: 1)")
    p.add_argument("--start-frame", type=int, default=None, help="first frame (default: 0)")
    p.add_argument("--seed", type=int, default=None, help="scene seed (default: 0)")
    p.add_argument("--azimuth-step", type=float, default=None,
                   help="degrees per horizontal sample (default: 0.9)")
    p.add_argument("--format", choices=FORMATS, default=None,
                   help="output format (default: kitti-bin)")
    p.add_argument("--out", default="scans", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("augment", help="apply Frustum Drop / Mis-Calibration to clouds",
                       formatter_class=_Formatter,
                       description="Mis-Calibration runs first, then Frustum Drop. Each is "
                                   "disabled while its probability is 0.")
    p.add_argument("inputs", nargs="+", help="cloud files or directories")
    p.add_argument("--out", default="augmented", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    g = p.add_argument_group("Frustum Drop",
                             "defaults: origin drawn within r = 3 m of the sensor on each axis;\n"
                             "angle limits drawn from [2.5°, 90°]")
    g.add_argument("--fd-p", type=float, default=0.0, help="trigger probability")
    g.add_argument("--fd-r", type=float, default=3.0,
                   help="frustum origin half-extent in meters")
    g.add_argument("--fd-angle-min", type=float, default=2.5, help="lower angle limit, degrees")
    g.add_argument("--fd-angle-max", type=float, default=90.0, help="upper angle limit, degrees")
    g = p.add_argument_group("Mis-Calibration",
                             "defaults: copy shifted by up to s_xy = s_z = 0.05 m and rotated by\n"
                             "up to α_max = 0.05° per axis; training use keeps MC p ≤ 0.5")
    g.add_argument("--mc-p", type=float, default=0.0,
                   help="trigger probability (values above 0.5 log a warning)")
    g.add_argument("--mc-s", type=float, default=0.05, help="s_xy, horizontal shift bound in m")
    g.add_argument("--mc-sz", type=float, default=0.05, help="s_z, vertical shift bound in m")
    g.add_argument("--mc-alpha", type=float, default=0.05, help="α_max, rotation bound in degrees")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("features", help="extract per-point geometric features",
                       formatter_class=_Formatter)
    p.add_argument("inputs", nargs="+", help="cloud files or directories")
    p.add_argument("--out", default="features", help="output directory for .feat files")
    p.add_argument("--radius", type=float, default=FEATURE_RADIUS,
                   help="neighborhood radius in meters")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("nfs", help="normalized feature similarity of query vs reference clouds",
                       formatter_class=_Formatter,
                       description="Reference and query clouds pair up by position; each query\n"
                                   "point matches its nearest reference point within the\n"
                                   "match radius 1 m (default). Features are computed unless\n"
                                   "feature files are given.")
    p.add_argument("--reference", nargs="+", required=True, help="reference clouds")
    p.add_argument("--query", nargs="+", required=True, help="query clouds")
    p.add_argument("--reference-features", nargs="+", default=None, help=".feat files")
    p.add_argument("--query-features", nargs="+", default=None, help=".feat files")
    p.add_argument("--radius", type=float, default=MATCH_RADIUS,
                   help="nearest-neighbor search radius in meters")
    p.add_argument("--feature-radius", type=float, default=FEATURE_RADIUS,
                   help="neighborhood radius when features are computed")
    p.add_argument("--setup", default="query", help="setup name written to the report")
    p.add_argument("--assume-aligned", action="store_true",
                   help="treat each query as the reference's frame regardless of file name")
    p.add_argument("--out", default=None, help="CSV report path (default: stdout)")
    p.add_argument("--per-point", default=None, help="directory for per-point similarity CSVs")
    p.set_defaults(func=cmd_nfs)

    p = sub.add_parser("miou", help="per-class IoU and mIoU from label files",
                       formatter_class=_Formatter)
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth .label files or dirs")
    p.add_argument("--pred", nargs="+", required=True, help="predicted .label files or dirs")
    p.add_argument("--classes", type=int, default=len(CLASS_TABLE), help="class count")
    p.add_argument("--in-domain-miou", type=float, default=None,
                   help="report rmIoU relative to this in-domain mIoU")
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=cmd_miou)

    p = sub.add_parser("experiment", help="run the cross-setup NFS / rmIoU protocol",
                       formatter_class=_Formatter)
    p.add_argument("config", nargs="?", default="demo",
                   help="experiment YAML, or the name of a bundled config")
    p.add_argument("--out", default="experiment", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(message)s")
    if args.threads is not None:
        os.environ[THREADS_ENV] = str(args.threads)
    try:
        return args.func(args)
    except NfsKitError as exc:
        print(f"nfskit-error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"nfskit-error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
