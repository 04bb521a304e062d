"""Per-box feature extraction and a small fully connected regressor.

The network maps a 24-entry feature vector describing one 2D box crop to the
eight frustum-code coefficients. Layout of the feature vector:

    [0:15]   per-slice crop statistics: mean, std, then three vertical-band
             means, all divided by full scale; 5 entries for each of 3 slices
    [15:18]  slice-mean ratio triple, normalized to sum to 1; all zero when
             the crop carries no signal, which doubles as the absence flag
    [18:22]  box geometry: u/width, v/height, w_u/width, h_v/height
    [22:24]  class one-hot over (Car, Pedestrian)

Forward/backward are written out by hand (tanh hidden layers, identity
output) so training is dependency-free and exactly reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .camera import CameraModel
from .codec import FrustumCode, decode
from .errors import EmptyDataset, GfkError, ModelParseError, ShapeMismatch
from .loss import CodeTargets, LossWeights, _loss_batch
from .scene import Box2D, Box3D, ObjectClass

logger = logging.getLogger(__name__)

FEATURE_SIZE = 24
INTENSITY_FEATURES = slice(0, 15)
RATIO_FEATURES = slice(15, 18)
GEOMETRY_FEATURES = slice(18, 22)
CLASS_FEATURES = slice(22, 24)
CLASS_ORDER = ("Car", "Pedestrian")

# Sensor intensity corresponding to feature value 1.0.
FULL_SCALE = 1023.0
# Crops whose slice-mean sum is at or below this count as signal-free.
RATIO_SUM_THRESHOLD = 5.0


def extract_features(frame, p: Box2D) -> np.ndarray:
    """Feature vector for one 2D box over a gated frame.

    frame may be a GatedFrame or a bare (3, H, W) array. A box that misses
    the image entirely yields zero crop statistics and a zero ratio triple.
    """
    slices = np.asarray(getattr(frame, "slices", frame), dtype=np.float64)
    if slices.ndim != 3 or slices.shape[0] != 3:
        raise ShapeMismatch(f"expected (3, H, W) slices, got {slices.shape}")
    _, img_h, img_w = slices.shape
    x = np.zeros(FEATURE_SIZE)
    x[18] = p.u / img_w
    x[19] = p.v / img_h
    x[20] = p.w_u / img_w
    x[21] = p.h_v / img_h
    if p.cls in CLASS_ORDER:
        x[22 + CLASS_ORDER.index(p.cls)] = 1.0

    c0 = max(0, int(math.floor(p.u - p.w_u / 2.0)))
    c1 = min(img_w, int(math.ceil(p.u + p.w_u / 2.0)))
    r0 = max(0, int(math.floor(p.v - p.h_v / 2.0)))
    r1 = min(img_h, int(math.ceil(p.v + p.h_v / 2.0)))
    if c0 >= c1 or r0 >= r1:
        return x
    crop = slices[:, r0:r1, c0:c1]
    means = crop.mean(axis=(1, 2))
    stds = crop.std(axis=(1, 2))
    for s in range(3):
        x[5 * s] = means[s] / FULL_SCALE
        x[5 * s + 1] = stds[s] / FULL_SCALE
        for bi, band in enumerate(np.array_split(crop[s], 3, axis=0)):
            x[5 * s + 2 + bi] = (band.mean() if band.size else means[s]) / FULL_SCALE
    total = float(means.sum())
    if total > RATIO_SUM_THRESHOLD:
        x[RATIO_FEATURES] = means / total
    return x


# ---------------------------------------------------------------------------
# network

@dataclass(eq=False)
class MlpParams:
    """Dense network parameters; weights[i] has shape (sizes[i+1], sizes[i])."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass(eq=False)
class MlpGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_params(sizes: Sequence[int] = (FEATURE_SIZE, 64, 64, 8), seed: int = 0) -> MlpParams:
    """Gaussian init scaled by 1/sqrt(fan_in), zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"bad layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0.0, 1.0 / math.sqrt(sizes[i]), size=(sizes[i + 1], sizes[i]))
        for i in range(len(sizes) - 1)
    ]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return MlpParams(sizes=sizes, weights=weights, biases=biases)


def _forward_batch(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer for a (B, n_in) batch; last entry is the output."""
    acts = [x]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if i == last else np.tanh(z))
    return acts


def _backward_batch(params: MlpParams, acts: list[np.ndarray], d_out: np.ndarray) -> MlpGradients:
    """Gradients summed over the batch, given d(loss)/d(output)."""
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [np.empty(0)] * n_layers
    gb: list[np.ndarray] = [np.empty(0)] * n_layers
    dz = d_out
    for i in reversed(range(n_layers)):
        gw[i] = dz.T @ acts[i]
        gb[i] = dz.sum(axis=0)
        if i > 0:
            # acts[i] is the tanh output of layer i-1, so tanh' = 1 - acts^2
            dz = (dz @ params.weights[i]) * (1.0 - acts[i] ** 2)
    return MlpGradients(weights=gw, biases=gb)


def forward(params: MlpParams, x) -> FrustumCode:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.sizes[0],):
        raise ShapeMismatch(f"expected input shape ({params.sizes[0]},), got {x.shape}")
    acts = _forward_batch(params, x[None, :])
    return FrustumCode.from_array(acts[-1][0])


def backward(params: MlpParams, x, grad_output) -> MlpGradients:
    """Parameter gradients for one input given d(loss)/d(code)."""
    x = np.asarray(x, dtype=np.float64)
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if x.shape != (params.sizes[0],):
        raise ShapeMismatch(f"expected input shape ({params.sizes[0]},), got {x.shape}")
    if grad_output.shape != (params.sizes[-1],):
        raise ShapeMismatch(f"expected gradient shape ({params.sizes[-1]},), got {grad_output.shape}")
    acts = _forward_batch(params, x[None, :])
    return _backward_batch(params, acts, grad_output[None, :])


# ---------------------------------------------------------------------------
# training

class Sample(NamedTuple):
    features: np.ndarray
    targets: CodeTargets
    box2d: Box2D


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = (64, 64)
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (FEATURE_SIZE, *self.hidden_sizes, 8)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loc: float
    dim: float
    ori: float
    total: float
    val_total: float = math.nan


def _mean_loss(params: MlpParams, x: np.ndarray, t: np.ndarray, w: LossWeights) -> dict:
    acts = _forward_batch(params, x)
    parts, _ = _loss_batch(acts[-1], t, w)
    return {k: float(v.mean()) for k, v in parts.items()}


def train(dataset: Sequence[Sample], cfg: TrainConfig,
          val_dataset: Sequence[Sample] = ()) -> tuple[MlpParams, list[EpochStats]]:
    """Adam over minibatches of the mean per-sample loss.

    Deterministic for a fixed config: parameter init and epoch shuffles run
    on seeds derived from cfg.seed. Returns the trained parameters and one
    EpochStats per epoch (val_total is NaN when val_dataset is empty).
    """
    if len(dataset) == 0:
        raise EmptyDataset("no training samples")
    x = np.stack([np.asarray(s.features, dtype=np.float64) for s in dataset])
    t = np.stack([s.targets.as_array() for s in dataset])
    if x.shape[1] != FEATURE_SIZE:
        raise ShapeMismatch(f"features have {x.shape[1]} entries, expected {FEATURE_SIZE}")
    x_val = t_val = None
    if len(val_dataset) > 0:
        x_val = np.stack([np.asarray(s.features, dtype=np.float64) for s in val_dataset])
        t_val = np.stack([s.targets.as_array() for s in val_dataset])

    init_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_params(cfg.sizes, seed=init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    step = 0
    n = len(dataset)
    history: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        sums = {"loc": 0.0, "dim": 0.0, "ori": 0.0, "total": 0.0}
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, tb = x[idx], t[idx]
            acts = _forward_batch(params, xb)
            parts, d_out = _loss_batch(acts[-1], tb, cfg.loss)
            for key in sums:
                sums[key] += float(parts[key].sum())
            grads = _backward_batch(params, acts, d_out / len(idx))
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for i in range(len(params.weights)):
                for p_arr, g, m_arr, v_arr in (
                    (params.weights[i], grads.weights[i], m_w[i], v_w[i]),
                    (params.biases[i], grads.biases[i], m_b[i], v_b[i]),
                ):
                    m_arr += (1.0 - cfg.beta1) * (g - m_arr)
                    v_arr += (1.0 - cfg.beta2) * (g * g - v_arr)
                    p_arr -= cfg.learning_rate * (m_arr / bc1) / (np.sqrt(v_arr / bc2) + cfg.eps)
        val_total = math.nan
        if x_val is not None:
            val_total = _mean_loss(params, x_val, t_val, cfg.loss)["total"]
        history.append(
            EpochStats(
                epoch=epoch,
                loc=sums["loc"] / n,
                dim=sums["dim"] / n,
                ori=sums["ori"] / n,
                total=sums["total"] / n,
                val_total=val_total,
            )
        )
    return params, history


# ---------------------------------------------------------------------------
# inference

class PredictedBox(NamedTuple):
    box: Box3D
    box2d: Box2D
    code: FrustumCode


def predict(params: MlpParams, frame, boxes2d: Sequence[Box2D],
            stats: dict[str, ObjectClass], k: float, cam: CameraModel,
            feature_mask: np.ndarray | None = None) -> list[PredictedBox]:
    """Decode one 3D box per 2D box; boxes that fail to decode are dropped
    with a warning. The 2D score is carried through unchanged."""
    out: list[PredictedBox] = []
    for p in boxes2d:
        st = stats.get(p.cls)
        if st is None:
            logger.warning("no class stats for %r, skipping box", p.cls)
            continue
        x = extract_features(frame, p)
        if feature_mask is not None:
            x = x * feature_mask
        q = forward(params, x)
        try:
            box = decode(q, p, st, k, cam)
        except GfkError as e:
            logger.warning("dropping box (%s): %s", type(e).__name__, e)
            continue
        out.append(PredictedBox(box, p, q))
    return out


# ---------------------------------------------------------------------------
# model and metrics files

def model_to_json(params: MlpParams, meta: dict | None = None) -> str:
    payload = {
        "sizes": list(params.sizes),
        "weights": [w.ravel().tolist() for w in params.weights],  # row-major
        "biases": [b.tolist() for b in params.biases],
        "meta": meta or {},
    }
    return json.dumps(payload) + "\n"


def parse_model(text: str, where: str = "model") -> tuple[MlpParams, dict]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"{where}: invalid JSON: {e}") from e
    try:
        sizes = tuple(int(s) for s in payload["sizes"])
        raw_w = payload["weights"]
        raw_b = payload["biases"]
        meta = dict(payload.get("meta", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelParseError(f"{where}: missing or malformed field: {e}") from e
    if len(sizes) < 2 or len(raw_w) != len(sizes) - 1 or len(raw_b) != len(sizes) - 1:
        raise ModelParseError(f"{where}: layer counts do not match sizes {sizes}")
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        w = np.asarray(raw_w[i], dtype=np.float64)
        b = np.asarray(raw_b[i], dtype=np.float64)
        if w.size != sizes[i + 1] * sizes[i] or b.size != sizes[i + 1]:
            raise ModelParseError(f"{where}: layer {i} has wrong parameter count")
        weights.append(w.reshape(sizes[i + 1], sizes[i]))
        biases.append(b)
    return MlpParams(sizes=sizes, weights=weights, biases=biases), meta


def save_model(path: str | Path, params: MlpParams, meta: dict | None = None) -> None:
    Path(path).write_text(model_to_json(params, meta))


def load_model(path: str | Path) -> tuple[MlpParams, dict]:
    path = Path(path)
    return parse_model(path.read_text(), where=str(path))


def metrics_to_csv(history: Sequence[EpochStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "loc", "dim", "ori", "total", "val_total"])
    for h in history:
        writer.writerow([h.epoch, repr(h.loc), repr(h.dim), repr(h.ori),
                         repr(h.total), repr(h.val_total)])
    return buf.getvalue()
