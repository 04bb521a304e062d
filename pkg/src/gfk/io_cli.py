"""On-disk dataset layout, run configuration, and the command-line pipeline.

A dataset directory looks like:

    <root>/
      calibration.json
      gates.json
      manifest.json            seed, split membership, class stats
      frames/<frame_id>/
        slice_1.pgm            16-bit binary PGM, maxval = sensor full scale
        slice_2.pgm
        slice_3.pgm
        labels.jsonl           one object per line

All whole-file outputs are written to a temp file and renamed into place, so
readers never observe a half-written artifact. Every random draw descends
from the run seed through per-frame substreams, which makes simulate, train
and predict byte-reproducible; GFK_THREADS may parallelize frame synthesis
without changing the output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pgm
from .camera import (
    CameraModel,
    DEFAULT_CAMERA,
    load_calibration,
    save_calibration,
    wrap_to_pi,
)
from .codec import K_DEFAULT, encode, decode, predictions_to_jsonl, read_predictions
from .errors import ConfigError, EmptyDataset, FullyOutOfImage, GfkError, ParseError
from .eval import EvalConfig, EvalReport, bev_svg, evaluate
from .loss import CodeTargets, LossWeights
from .regressor import (
    FEATURE_SIZE,
    INTENSITY_FEATURES,
    RATIO_FEATURES,
    Sample,
    TrainConfig,
    extract_features,
    metrics_to_csv,
    model_to_json,
    parse_model,
    predict,
    train,
)
from .ripsim import (
    GateConfig,
    NoiseConfig,
    default_gates,
    gates_to_json,
    render_frame,
)
from .scene import (
    DEFAULT_CLASSES,
    LabeledObject,
    ObjectClass,
    SceneConfig,
    labels_to_jsonl,
    oracle_box2d,
    parse_label,
    perturb_box2d,
    read_labels,
    sample_scene,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


def gfk_threads() -> int:
    """Worker cap from the GFK_THREADS environment variable (default 1)."""
    raw = os.environ.get("GFK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GFK_THREADS: not an integer: {raw!r}") from None
    return max(1, n)


def atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class DatasetLayout:
    root: Path

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def calibration_path(self) -> Path:
        return self.root / "calibration.json"

    @property
    def gates_path(self) -> Path:
        return self.root / "gates.json"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def frame_dir(self, frame_id: str) -> Path:
        return self.frames_dir / frame_id

    def slice_paths(self, frame_id: str) -> tuple[Path, Path, Path]:
        d = self.frame_dir(frame_id)
        return (d / "slice_1.pgm", d / "slice_2.pgm", d / "slice_3.pgm")

    def labels_path(self, frame_id: str) -> Path:
        return self.frame_dir(frame_id) / "labels.jsonl"

    def load_slices(self, frame_id: str) -> np.ndarray:
        imgs = []
        for p in self.slice_paths(frame_id):
            img, _maxval = pgm.read_pgm(p)
            imgs.append(img)
        try:
            return np.stack(imgs)
        except ValueError as e:
            raise ParseError(f"{self.frame_dir(frame_id)}: slice shapes differ: {e}") from e


@dataclass(frozen=True)
class Manifest:
    seed: int
    splits: dict[str, list[str]]
    classes: dict[str, ObjectClass]


def write_manifest(layout: DatasetLayout, seed: int, splits: dict[str, list[str]],
                   classes: dict[str, ObjectClass]) -> None:
    payload = {
        "seed": seed,
        "splits": splits,
        "classes": {
            name: {"dim_mean": list(c.dim_mean), "sigma_h": c.sigma_h}
            for name, c in sorted(classes.items())
        },
    }
    atomic_write_text(layout.manifest_path, json.dumps(payload, indent=2) + "\n")


def load_manifest(layout: DatasetLayout) -> Manifest:
    path = layout.manifest_path
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise EmptyDataset(f"{layout.root}: no manifest.json; run simulate first") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    try:
        splits = {s: [str(f) for f in payload["splits"].get(s, [])] for s in SPLITS}
        classes = {
            str(name): ObjectClass(str(name), tuple(float(d) for d in rec["dim_mean"]),
                                   float(rec["sigma_h"]))
            for name, rec in payload.get("classes", {}).items()
        }
        return Manifest(seed=int(payload["seed"]), splits=splits,
                        classes=classes or dict(DEFAULT_CLASSES))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad manifest: {e}") from e


def frame_index(frame_id: str) -> int:
    """The global frame number encoded in a frame id like 'frame_000042'."""
    try:
        return int(frame_id.rsplit("_", 1)[1])
    except (IndexError, ValueError):
        raise ParseError(f"bad frame id {frame_id!r}") from None


def _substream(seed: int, index: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index, purpose])


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: Path
    dataset_dir: Path
    frames: dict[str, int]
    camera: CameraModel
    gates: tuple[GateConfig, ...]
    noise: NoiseConfig
    scene: SceneConfig
    codec_k: float
    train_cfg: TrainConfig
    ablate_intensity: bool
    eval_cfg: EvalConfig
    predict_split: str
    perturb_2d: float

    @property
    def model_path(self) -> Path:
        return self.out_dir / "model.json"

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / "metrics.csv"

    @property
    def predictions_path(self) -> Path:
        return self.out_dir / "predictions.jsonl"

    @property
    def report_json_path(self) -> Path:
        return self.out_dir / "report.json"

    @property
    def report_csv_path(self) -> Path:
        return self.out_dir / "report.csv"

    @property
    def bev_dir(self) -> Path:
        return self.out_dir / "bev"

    @property
    def codec_check_path(self) -> Path:
        return self.out_dir / "codec_check.json"


def _check_keys(section: dict, allowed: Sequence[str], where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"{where}.{extra[0]}: unknown field")


def _get(section: dict, key: str, where: str, convert, default):
    if key not in section or section[key] is None:
        if default is ...:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    try:
        return convert(section[key])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}.{key}: {e}") from e


def load_run_config(path: str | Path, seed_override: int | None = None,
                    out_override: str | Path | None = None) -> RunConfig:
    """Parse a run configuration file.

    Relative paths inside the file resolve against the file's directory;
    --seed and --out from the command line win over the file.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(payload, ("seed", "out_dir", "dataset", "camera", "gates", "noise",
                          "scene", "codec", "train", "eval", "predict"), "config")
    base = path.parent

    seed = seed_override if seed_override is not None else _get(payload, "seed", "config", int, 0)

    out_raw = out_override if out_override is not None else payload.get("out_dir", "runs/out")
    out_dir = Path(out_raw)
    if not out_dir.is_absolute() and out_override is None:
        out_dir = base / out_dir

    ds = payload.get("dataset") or {}
    _check_keys(ds, ("dir", "frames"), "dataset")
    ds_dir_raw = ds.get("dir")
    dataset_dir = Path(ds_dir_raw) if ds_dir_raw else out_dir / "dataset"
    if ds_dir_raw and not dataset_dir.is_absolute():
        dataset_dir = base / dataset_dir
    frames_sec = ds.get("frames") or {}
    _check_keys(frames_sec, SPLITS, "dataset.frames")
    frames = {s: _get(frames_sec, s, "dataset.frames", int, 0) for s in SPLITS}
    for s, n in frames.items():
        if n < 0:
            raise ConfigError(f"dataset.frames.{s}: must be >= 0, got {n}")

    cam_sec = payload.get("camera")
    if cam_sec is None:
        camera = DEFAULT_CAMERA
    else:
        _check_keys(cam_sec, ("f_u", "f_v", "c_u", "c_v", "width", "height"), "camera")
        try:
            camera = CameraModel(
                f_u=_get(cam_sec, "f_u", "camera", float, ...),
                f_v=_get(cam_sec, "f_v", "camera", float, ...),
                c_u=_get(cam_sec, "c_u", "camera", float, ...),
                c_v=_get(cam_sec, "c_v", "camera", float, ...),
                width=_get(cam_sec, "width", "camera", int, ...),
                height=_get(cam_sec, "height", "camera", int, ...),
            )
        except ValueError as e:
            raise ConfigError(f"camera: {e}") from e

    gates_sec = payload.get("gates")
    if gates_sec is None:
        gates = default_gates()
    else:
        if not isinstance(gates_sec, list) or len(gates_sec) != 3:
            raise ConfigError("gates: expected a list of exactly 3 gate objects")
        gates = []
        for i, rec in enumerate(gates_sec):
            _check_keys(rec, ("delay", "gate_duration", "pulse_duration", "gate_amplitude",
                              "pulse_amplitude", "attenuation_gamma", "inverse_square"),
                        f"gates[{i}]")
            try:
                gates.append(GateConfig(
                    delay=_get(rec, "delay", f"gates[{i}]", float, ...),
                    gate_duration=_get(rec, "gate_duration", f"gates[{i}]", float, ...),
                    pulse_duration=_get(rec, "pulse_duration", f"gates[{i}]", float, ...),
                    gate_amplitude=_get(rec, "gate_amplitude", f"gates[{i}]", float, 1.0),
                    pulse_amplitude=_get(rec, "pulse_amplitude", f"gates[{i}]", float, 1.0),
                    attenuation_gamma=_get(rec, "attenuation_gamma", f"gates[{i}]", float, 0.0),
                    inverse_square=_get(rec, "inverse_square", f"gates[{i}]", bool, False),
                ))
            except ValueError as e:
                raise ConfigError(f"gates[{i}]: {e}") from e
        gates = tuple(gates)

    noise_sec = payload.get("noise") or {}
    _check_keys(noise_sec, ("read_noise_sigma", "photon_scale", "enable_clipping", "full_scale"),
                "noise")
    try:
        noise = NoiseConfig(
            read_noise_sigma=_get(noise_sec, "read_noise_sigma", "noise", float, 2.0),
            photon_scale=_get(noise_sec, "photon_scale", "noise", float, 20.0),
            enable_clipping=_get(noise_sec, "enable_clipping", "noise", bool, True),
            full_scale=_get(noise_sec, "full_scale", "noise", int, 1023),
        )
    except ValueError as e:
        raise ConfigError(f"noise: {e}") from e

    scene_sec = payload.get("scene") or {}
    _check_keys(scene_sec, ("classes", "min_objects", "max_objects", "z_range", "ground_y", "ground_y_jitter",
                            "albedo_range", "x_margin", "background_albedo", "background_range",
                            "max_retries"), "scene")
    class_names = scene_sec.get("classes") or list(DEFAULT_CLASSES)
    classes = []
    for name in class_names:
        if name not in DEFAULT_CLASSES:
            raise ConfigError(f"scene.classes: unknown class {name!r}")
        classes.append(DEFAULT_CLASSES[name])
    try:
        scene_cfg = SceneConfig(
            camera=camera,
            classes=tuple(classes),
            min_objects=_get(scene_sec, "min_objects", "scene", int, 1),
            max_objects=_get(scene_sec, "max_objects", "scene", int, 4),
            z_range=_get(scene_sec, "z_range", "scene",
                         lambda v: (float(v[0]), float(v[1])), (5.0, 85.0)),
            ground_y=_get(scene_sec, "ground_y", "scene", float, 1.65),
            ground_y_jitter=_get(scene_sec, "ground_y_jitter", "scene", float, 0.0),
            albedo_range=_get(scene_sec, "albedo_range", "scene",
                              lambda v: (float(v[0]), float(v[1])), (0.2, 0.9)),
            x_margin=_get(scene_sec, "x_margin", "scene", float, 0.85),
            background_albedo=_get(scene_sec, "background_albedo", "scene", float, 0.0),
            background_range=_get(scene_sec, "background_range", "scene", float, 150.0),
            max_retries=_get(scene_sec, "max_retries", "scene", int, 100),
        )
    except ValueError as e:
        raise ConfigError(f"scene: {e}") from e

    codec_sec = payload.get("codec") or {}
    _check_keys(codec_sec, ("k",), "codec")
    codec_k = _get(codec_sec, "k", "codec", float, K_DEFAULT)
    if codec_k <= 0:
        raise ConfigError(f"codec.k: must be positive, got {codec_k}")

    train_sec = payload.get("train") or {}
    _check_keys(train_sec, ("hidden_sizes", "epochs", "batch_size", "learning_rate",
                            "alpha", "beta", "smooth_l1_delta", "ablate_intensity"), "train")
    try:
        weights = LossWeights(
            alpha=_get(train_sec, "alpha", "train", float, 1.0),
            beta=_get(train_sec, "beta", "train", float, 1.0),
            smooth_l1_delta=_get(train_sec, "smooth_l1_delta", "train", float, 1.0),
        )
        train_cfg = TrainConfig(
            hidden_sizes=_get(train_sec, "hidden_sizes", "train",
                              lambda v: tuple(int(s) for s in v), (64, 64)),
            epochs=_get(train_sec, "epochs", "train", int, 40),
            batch_size=_get(train_sec, "batch_size", "train", int, 64),
            learning_rate=_get(train_sec, "learning_rate", "train", float, 3e-3),
            seed=seed,
            loss=weights,
        )
    except ValueError as e:
        raise ConfigError(f"train: {e}") from e
    ablate = _get(train_sec, "ablate_intensity", "train", bool, False)

    eval_sec = payload.get("eval") or {}
    _check_keys(eval_sec, ("iou_thresholds", "bins"), "eval")
    try:
        eval_cfg = EvalConfig(
            iou_thresholds=_get(eval_sec, "iou_thresholds", "eval",
                                lambda v: {str(k): float(t) for k, t in v.items()},
                                {"Car": 0.2, "Pedestrian": 0.1}),
            bins=_get(eval_sec, "bins", "eval",
                      lambda v: tuple((float(lo), float(hi)) for lo, hi in v),
                      ((0.0, 30.0), (30.0, 50.0), (50.0, 80.0))),
        )
    except ValueError as e:
        raise ConfigError(f"eval: {e}") from e

    predict_sec = payload.get("predict") or {}
    _check_keys(predict_sec, ("split", "perturb"), "predict")
    split = _get(predict_sec, "split", "predict", str, "test")
    if split not in SPLITS:
        raise ConfigError(f"predict.split: must be one of {SPLITS}, got {split!r}")
    perturb = _get(predict_sec, "perturb", "predict", float, 0.0)
    if perturb < 0:
        raise ConfigError(f"predict.perturb: must be >= 0, got {perturb}")

    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        dataset_dir=dataset_dir,
        frames=frames,
        camera=camera,
        gates=gates,
        noise=noise,
        scene=scene_cfg,
        codec_k=codec_k,
        train_cfg=train_cfg,
        ablate_intensity=ablate,
        eval_cfg=eval_cfg,
        predict_split=split,
        perturb_2d=perturb,
    )


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig) -> dict:
    """Synthesize the dataset described by cfg; returns a small summary."""
    if not cfg.noise.enable_clipping:
        raise ConfigError("noise.enable_clipping: must be true for on-disk datasets "
                          "(PGM slices are integer)")
    # Zero frames is legal: the manifest is still written, with empty splits.
    total = sum(cfg.frames.values())
    layout = DatasetLayout(cfg.dataset_dir)
    layout.frames_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    idx = 0
    splits: dict[str, list[str]] = {s: [] for s in SPLITS}
    for split in SPLITS:
        for _ in range(cfg.frames[split]):
            fid = f"frame_{idx:06d}"
            splits[split].append(fid)
            jobs.append((fid, idx))
            idx += 1

    def build(job) -> bool:
        fid, index = job
        scene_rng = np.random.default_rng(_substream(cfg.seed, index, 0))
        scn = sample_scene(cfg.scene, scene_rng, frame_id=fid)
        render_seed = int(_substream(cfg.seed, index, 1).generate_state(1)[0])
        frame = render_frame(scn, cfg.gates, cfg.camera, cfg.noise, seed=render_seed)
        labeled = []
        for obj in scn.objects:
            try:
                box2d = oracle_box2d(obj.box, cfg.camera)
            except FullyOutOfImage:
                logger.warning("%s: object projects outside the image, not labeling", fid)
                continue
            labeled.append(LabeledObject(obj.box, box2d, obj.albedo))
        fdir = layout.frame_dir(fid)
        fdir.mkdir(parents=True, exist_ok=True)
        for i, spath in enumerate(layout.slice_paths(fid)):
            atomic_write_bytes(spath, pgm.encode_pgm(frame.slices[i], cfg.noise.full_scale))
        atomic_write_text(layout.labels_path(fid), labels_to_jsonl(labeled))
        return scn.placement_warning

    threads = min(gfk_threads(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            warnings = list(pool.map(build, jobs))
    else:
        warnings = [build(j) for j in jobs]

    save_calibration(cfg.camera, layout.calibration_path)
    atomic_write_text(layout.gates_path, gates_to_json(cfg.gates))
    classes = {c.name: c for c in cfg.scene.classes}
    write_manifest(layout, cfg.seed, splits, classes)
    return {
        "dataset_dir": str(layout.root),
        "frames": total,
        "placement_warnings": sum(warnings),
    }


def _feature_mask(ablate_intensity: bool) -> np.ndarray | None:
    if not ablate_intensity:
        return None
    mask = np.ones(FEATURE_SIZE)
    mask[INTENSITY_FEATURES] = 0.0
    mask[RATIO_FEATURES] = 0.0
    return mask


def build_samples(layout: DatasetLayout, frame_ids: Sequence[str], classes: dict[str, ObjectClass],
                  k: float, cam: CameraModel,
                  feature_mask: np.ndarray | None = None) -> list[Sample]:
    """Load frames and turn every labeled object into a training sample."""
    samples: list[Sample] = []
    for fid in frame_ids:
        slices = layout.load_slices(fid)
        for obj in read_labels(layout.labels_path(fid)):
            st = classes.get(obj.box.cls)
            if st is None:
                logger.warning("%s: no stats for class %r, skipping", fid, obj.box.cls)
                continue
            x = extract_features(slices, obj.box2d)
            if feature_mask is not None:
                x = x * feature_mask
            code = encode(obj.box, obj.box2d, st, k, cam)
            samples.append(Sample(x, CodeTargets.from_code(code), obj.box2d))
    return samples


def cmd_train(cfg: RunConfig) -> dict:
    layout = DatasetLayout(cfg.dataset_dir)
    manifest = load_manifest(layout)
    cam = load_calibration(layout.calibration_path)
    mask = _feature_mask(cfg.ablate_intensity)
    train_samples = build_samples(layout, manifest.splits["train"], manifest.classes,
                                  cfg.codec_k, cam, mask)
    val_samples = build_samples(layout, manifest.splits["val"], manifest.classes,
                                cfg.codec_k, cam, mask)
    if not train_samples:
        raise EmptyDataset(f"{layout.root}: train split has no usable objects")
    params, history = train(train_samples, cfg.train_cfg, val_samples)
    meta = {
        "k": cfg.codec_k,
        "feature_mask": None if mask is None else mask.tolist(),
        "classes": {
            name: {"dim_mean": list(c.dim_mean), "sigma_h": c.sigma_h}
            for name, c in sorted(manifest.classes.items())
        },
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(cfg.model_path, model_to_json(params, meta))
    atomic_write_text(cfg.metrics_path, metrics_to_csv(history))
    return {
        "model": str(cfg.model_path),
        "metrics": str(cfg.metrics_path),
        "samples": len(train_samples),
        "final_train_loss": history[-1].total,
        "final_val_loss": history[-1].val_total,
    }


def _meta_classes(meta: dict, fallback: dict[str, ObjectClass]) -> dict[str, ObjectClass]:
    recs = meta.get("classes")
    if not recs:
        return dict(fallback)
    return {
        name: ObjectClass(name, tuple(float(d) for d in rec["dim_mean"]), float(rec["sigma_h"]))
        for name, rec in recs.items()
    }


def cmd_predict(cfg: RunConfig) -> dict:
    layout = DatasetLayout(cfg.dataset_dir)
    manifest = load_manifest(layout)
    cam = load_calibration(layout.calibration_path)
    params, meta = parse_model(cfg.model_path.read_text(), where=str(cfg.model_path))
    k = float(meta.get("k", cfg.codec_k))
    mask = meta.get("feature_mask")
    mask = None if mask is None else np.asarray(mask, dtype=np.float64)
    classes = _meta_classes(meta, manifest.classes)

    frame_ids = manifest.splits[cfg.predict_split]
    rows = []
    for fid in frame_ids:
        slices = layout.load_slices(fid)
        labeled = read_labels(layout.labels_path(fid))
        boxes2d = [o.box2d for o in labeled]
        if cfg.perturb_2d > 0:
            rng = np.random.default_rng(_substream(cfg.seed, frame_index(fid), 2))
            boxes2d = [perturb_box2d(b, cfg.perturb_2d, rng) for b in boxes2d]
        for pred in predict(params, slices, boxes2d, classes, k, cam, feature_mask=mask):
            rows.append((fid, pred.box, pred.box2d, pred.code))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(cfg.predictions_path, predictions_to_jsonl(rows))
    return {
        "predictions": str(cfg.predictions_path),
        "frames": len(frame_ids),
        "boxes": len(rows),
    }


def cmd_eval(cfg: RunConfig, render_bev: bool = False) -> EvalReport:
    layout = DatasetLayout(cfg.dataset_dir)
    manifest = load_manifest(layout)
    frame_ids = manifest.splits[cfg.predict_split]
    if not frame_ids:
        raise EmptyDataset(f"{layout.root}: split {cfg.predict_split!r} is empty")
    labels_by_frame = {fid: layout.labels_path(fid) for fid in frame_ids}
    report = evaluate(cfg.predictions_path, labels_by_frame, cfg.eval_cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(cfg.report_json_path,
                      json.dumps(report.to_json_dict(), indent=2) + "\n")
    atomic_write_text(cfg.report_csv_path, report.to_csv())
    if render_bev:
        cfg.bev_dir.mkdir(parents=True, exist_ok=True)
        by_frame: dict[str, list] = {fid: [] for fid in frame_ids}
        for frame_id, box, _box2d, _code in read_predictions(cfg.predictions_path):
            by_frame.setdefault(frame_id, []).append(box)
        for fid in frame_ids:
            gts = [o.box for o in read_labels(labels_by_frame[fid])]
            atomic_write_text(cfg.bev_dir / f"{fid}.svg", bev_svg(gts, by_frame[fid]))
    return report


def cmd_codec_check(cfg: RunConfig) -> dict:
    """Round-trip every label through encode/decode and summarize the errors."""
    layout = DatasetLayout(cfg.dataset_dir)
    manifest = load_manifest(layout)
    cam = load_calibration(layout.calibration_path)
    k = cfg.codec_k
    worst = {"position": 0.0, "dimension": 0.0, "yaw": 0.0}
    dz_values: list[float] = []
    record_errors: list[dict] = []
    n_boxes = 0
    all_ids = [fid for s in SPLITS for fid in manifest.splits[s]]
    for fid in all_ids:
        path = layout.labels_path(fid)
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                obj = parse_label(rec, where=where)
                st = manifest.classes.get(obj.box.cls)
                if st is None:
                    raise ParseError(f"{where}: unknown class {obj.box.cls!r}")
                code = encode(obj.box, obj.box2d, st, k, cam)
                back = decode(code, obj.box2d, st, k, cam)
            except (GfkError, ValueError) as e:
                record_errors.append({"frame": fid, "line": lineno,
                                      "error": type(e).__name__, "message": str(e)})
                continue
            n_boxes += 1
            dz_values.append(code.dz)
            b = obj.box
            worst["position"] = max(worst["position"], abs(back.x - b.x),
                                    abs(back.y - b.y), abs(back.z - b.z))
            worst["dimension"] = max(worst["dimension"], abs(back.h - b.h),
                                     abs(back.w - b.w), abs(back.l - b.l))
            worst["yaw"] = max(worst["yaw"], abs(wrap_to_pi(back.yaw - b.yaw)))
    dz = np.asarray(dz_values) if dz_values else np.zeros(0)
    out = {
        "boxes": n_boxes,
        "max_position_error": worst["position"],
        "max_dimension_error": worst["dimension"],
        "max_yaw_error": worst["yaw"],
        "dz": {
            "mean": float(dz.mean()) if dz.size else math.nan,
            "std": float(dz.std()) if dz.size else math.nan,
            "min": float(dz.min()) if dz.size else math.nan,
            "max": float(dz.max()) if dz.size else math.nan,
        },
        "record_errors": record_errors,
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(cfg.codec_check_path, json.dumps(out, indent=2) + "\n")
    return out


# ---------------------------------------------------------------------------
# command line

COMMANDS = ("simulate", "train", "predict", "eval", "codec-check")



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfk",
        description="Simulate gated range-intensity slices, train and evaluate a "
                    "frustum box regressor on them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "synthesize a dataset of gated slices and labels",
        "train": "fit the box regressor on the train split",
        "predict": "run the regressor over a split and write predictions",
        "eval": "score predictions against labels (AP by class/kind/range)",
        "codec-check": "round-trip every label through the box codec",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--out", default=None,
                       help="override the config's output directory")
        if name == "eval":
            p.add_argument("--render-bev", action="store_true",
                           help="also write per-frame bird's-eye-view SVGs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "simulate":
            out = cmd_simulate(cfg)
            print(f"wrote {out['frames']} frames to {out['dataset_dir']}"
                  + (f" ({out['placement_warnings']} placement warnings)"
                     if out["placement_warnings"] else ""))
        elif args.command == "train":
            out = cmd_train(cfg)
            print(f"trained on {out['samples']} boxes; "
                  f"final loss {out['final_train_loss']:.4f} "
                  f"(val {out['final_val_loss']:.4f})")
            print(f"model: {out['model']}")
            print(f"metrics: {out['metrics']}")
        elif args.command == "predict":
            out = cmd_predict(cfg)
            print(f"predicted {out['boxes']} boxes over {out['frames']} frames")
            print(f"predictions: {out['predictions']}")
        elif args.command == "eval":
            report = cmd_eval(cfg, render_bev=args.render_bev)
            for cls in report.classes:
                for kind in report.kinds:
                    cells = []
                    for label in report.bin_labels:
                        ap = report.ap(cls, kind, label)
                        cells.append(f"{label} {'n/a' if ap is None else f'{ap:.3f}'}")
                    print(f"{cls:<12} {kind:>3} AP40  " + "  ".join(cells))
            print(f"report: {cfg.report_json_path}")
        elif args.command == "codec-check":
            out = cmd_codec_check(cfg)
            print(f"checked {out['boxes']} boxes: "
                  f"max position error {out['max_position_error']:.3g} m, "
                  f"max dimension error {out['max_dimension_error']:.3g} m, "
                  f"max yaw error {out['max_yaw_error']:.3g} rad")
            if out["record_errors"]:
                print(f"{len(out['record_errors'])} records failed to round-trip "
                      f"(see {cfg.codec_check_path})")
        else:  # pragma: no cover - argparse enforces the choices
            raise AssertionError(args.command)
    except GfkError as e:
        print(f"gfk-error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"gfk-error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
