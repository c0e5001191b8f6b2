"""Gaze samples, bounding-box averaging, normalization into the unit square,
object hit-testing, heatmap accumulation and the synthetic gaze generator that
stands in for human subjects.

Normalized coordinates (u, v) live in [0, 1]^2 with u left-to-right and v
top-to-bottom (image convention, v axis points down).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .world import BBox2D


class TaskClass(IntEnum):
    NON_INTERACTIVE = 0
    INTERACTIVE = 1


class GazeSample(NamedTuple):
    t: float
    x_px: float
    y_px: float


class NormalizedGaze(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class AveragedBox:
    """Running mean of the 2D boxes seen for one object."""
    label: str
    mean_box: BBox2D
    n_frames: int = 1

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")


def update_averaged_box(avg: AveragedBox, new_box: BBox2D,
                        label: str | None = None) -> AveragedBox:
    """Fold one more observed box into the running per-edge mean."""
    if label is not None and label != avg.label:
        raise ValueError(f"label mismatch: {label!r} vs {avg.label!r}")
    n = avg.n_frames
    m = avg.mean_box
    f = 1.0 / (n + 1)
    mean = BBox2D(m.x_min + (new_box.x_min - m.x_min) * f,
                  m.y_min + (new_box.y_min - m.y_min) * f,
                  m.x_max + (new_box.x_max - m.x_max) * f,
                  m.y_max + (new_box.y_max - m.y_max) * f)
    return AveragedBox(avg.label, mean, n + 1)


def normalize_gaze(sample: GazeSample, box: AveragedBox | BBox2D,
                   margin_frac: float = 0.10) -> NormalizedGaze | None:
    """Position of the gaze point within the box, clamped to [0, 1]^2.

    The box is dilated by ``margin_frac`` of its width/height before the
    inside test; returns None (outside) beyond that, or for degenerate boxes.
    """
    if margin_frac < 0:
        raise ValueError("margin_frac must be >= 0")
    b = box.mean_box if isinstance(box, AveragedBox) else box
    w = b.x_max - b.x_min
    h = b.y_max - b.y_min
    if w <= 0 or h <= 0:
        return None
    mx, my = margin_frac * w, margin_frac * h
    if not (b.x_min - mx <= sample.x_px <= b.x_max + mx
            and b.y_min - my <= sample.y_px <= b.y_max + my):
        return None
    u = min(max((sample.x_px - b.x_min) / w, 0.0), 1.0)
    v = min(max((sample.y_px - b.y_min) / h, 0.0), 1.0)
    return NormalizedGaze(u, v)


def denormalize_gaze(uv: NormalizedGaze, box: AveragedBox | BBox2D) -> tuple[float, float]:
    """Map (u, v) back to pixel coordinates inside the box."""
    b = box.mean_box if isinstance(box, AveragedBox) else box
    return (b.x_min + uv.u * (b.x_max - b.x_min),
            b.y_min + uv.v * (b.y_max - b.y_min))


def hit_test(sample: GazeSample, boxes: Sequence[tuple[str, BBox2D]]) -> str | None:
    """Label of the smallest-area box containing the point, or None.

    Ties on area break lexicographically by label so the result does not
    depend on the ordering of ``boxes``.
    """
    best: tuple[float, str] | None = None
    for label, box in boxes:
        if box.contains(sample.x_px, sample.y_px):
            key = (box.area, label)
            if best is None or key < best:
                best = key
    return None if best is None else best[1]


@dataclass(frozen=True)
class GazeGenParams:
    """Per-object parameters of the synthetic gaze generator.

    Interactive gaze concentrates around ``functional_center`` (the part of
    the object one would act on); non-interactive gaze spreads broadly over
    the box.  ``sigma_interactive < spread_noninteractive`` is the
    separability premise.
    """
    functional_center: tuple[float, float] = (0.5, 0.5)
    sigma_interactive: float = 0.08
    spread_noninteractive: float = 0.30
    jitter_px: float = 2.0
    samples_per_trial: int = 280

    def __post_init__(self):
        u, v = self.functional_center
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ValueError("functional_center must lie in [0,1]^2")
        if not (0 < self.sigma_interactive < self.spread_noninteractive):
            raise ValueError("need 0 < sigma_interactive < spread_noninteractive")
        if self.jitter_px < 0 or self.samples_per_trial < 1:
            raise ValueError("bad generator params")


# Functional centers are interpretations of where one looks when imagining
# using each object (laptop: keyboard/text region; chair: seat).
DEFAULT_GEN_PARAMS: dict[str, GazeGenParams] = {
    "tv": GazeGenParams(functional_center=(0.50, 0.45)),
    "laptop": GazeGenParams(functional_center=(0.50, 0.65)),
    "chair": GazeGenParams(functional_center=(0.50, 0.70)),
}

DEFAULT_FRAME_DT = 0.04  # 25 Hz


def gen_params_for(label: str,
                   params: dict[str, GazeGenParams] | None = None) -> GazeGenParams:
    table = DEFAULT_GEN_PARAMS if params is None else params
    return table.get(label, GazeGenParams())


def sample_normalized(rng: np.random.Generator, cls: TaskClass,
                      params: GazeGenParams) -> NormalizedGaze:
    """Draw one normalized gaze point from the class-conditional density."""
    if cls == TaskClass.INTERACTIVE:
        uc, vc = params.functional_center
        u = rng.normal(uc, params.sigma_interactive)
        v = rng.normal(vc, params.sigma_interactive)
        return NormalizedGaze(u, v)
    s = params.spread_noninteractive
    for _ in range(1000):
        u = rng.normal(0.5, s)
        v = rng.normal(0.5, s)
        if 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0:
            return NormalizedGaze(u, v)
    return NormalizedGaze(0.5, 0.5)


def sample_gaze_pixel(rng: np.random.Generator, cls: TaskClass,
                      params: GazeGenParams, box: BBox2D, t: float) -> GazeSample:
    """One gaze sample in pixel space: class draw mapped into ``box`` plus jitter."""
    uv = sample_normalized(rng, cls, params)
    x = box.x_min + uv.u * (box.x_max - box.x_min)
    y = box.y_min + uv.v * (box.y_max - box.y_min)
    if params.jitter_px > 0:
        x += rng.normal(0.0, params.jitter_px)
        y += rng.normal(0.0, params.jitter_px)
    return GazeSample(t, x, y)


def synthesize_trace(label: str, cls: TaskClass, params: GazeGenParams,
                     box: BBox2D, seed: int,
                     frame_dt: float = DEFAULT_FRAME_DT) -> list[GazeSample]:
    """Deterministic synthetic gaze trace for one trial on one object."""
    rng = np.random.default_rng(seed)
    return [sample_gaze_pixel(rng, cls, params, box, i * frame_dt)
            for i in range(params.samples_per_trial)]


def class_log_density(u: np.ndarray, v: np.ndarray, cls: TaskClass,
                      params: GazeGenParams) -> np.ndarray:
    """Log density of the generator's class-conditional distribution at (u, v).

    Used for the Bayes-separability check; pixel jitter is ignored (it is
    negligible at typical box sizes).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if cls == TaskClass.INTERACTIVE:
        s = params.sigma_interactive
        uc, vc = params.functional_center
        return (-((u - uc) ** 2 + (v - vc) ** 2) / (2 * s * s)
                - math.log(2 * math.pi * s * s))
    s = params.spread_noninteractive
    from scipy.stats import norm
    axis_mass = norm.cdf(0.5 / s) - norm.cdf(-0.5 / s)
    log_mass = 2 * math.log(axis_mass)
    out = (-((u - 0.5) ** 2 + (v - 0.5) ** 2) / (2 * s * s)
           - math.log(2 * math.pi * s * s) - log_mass)
    outside = (u < 0) | (u > 1) | (v < 0) | (v > 1)
    return np.where(outside, -np.inf, out)


def accumulate_heatmap(samples: Sequence[NormalizedGaze], grid_n: int,
                       sigma: float = 0.03, normalize: bool = True) -> np.ndarray:
    """Gaussian-splat density of normalized gaze points on a grid_n x grid_n grid.

    Each sample contributes unit total mass (its splat is renormalized over
    the grid, so boundary clipping does not lose mass).  With ``normalize``
    the result is scaled so the peak cell equals 1; an empty input yields the
    all-zero grid.  Index order is [row, col] = [v, u].
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    heat = np.zeros((grid_n, grid_n))
    if not samples:
        return heat
    centers = (np.arange(grid_n) + 0.5) / grid_n
    for uv in samples:
        ku = np.exp(-((centers - uv.u) ** 2) / (2 * sigma * sigma))
        kv = np.exp(-((centers - uv.v) ** 2) / (2 * sigma * sigma))
        splat = np.outer(kv, ku)
        total = splat.sum()
        if total > 0:
            heat += splat / total
    if normalize:
        peak = heat.max()
        if peak > 0:
            heat /= peak
    return heat


# --- dataset records ------------------------------------------------------

@dataclass(frozen=True)
class GazeRecord:
    """One labeled, normalized gaze point as written to dataset files."""
    object: str
    u: float
    v: float
    label: int
    subject: int
    trial: int
    t: float

    def to_json(self) -> str:
        return json.dumps({"object": self.object, "u": self.u, "v": self.v,
                           "label": self.label, "subject": self.subject,
                           "trial": self.trial, "t": self.t}, sort_keys=True)


def record_from_dict(d: dict) -> GazeRecord:
    return GazeRecord(object=d["object"], u=float(d["u"]), v=float(d["v"]),
                      label=int(d["label"]), subject=int(d["subject"]),
                      trial=int(d["trial"]), t=float(d["t"]))


# Reference box used when synthesizing training data without a camera in the
# loop (roughly a mid-sized object box in a 1280x960 ego view).
REFERENCE_BOX = BBox2D(440.0, 330.0, 840.0, 630.0)

DEFAULT_TRIALS = 13   # ~3640 points/object at 280 samples per trial
DEFAULT_SUBJECTS = 5


def synthesize_dataset(objects: Sequence[str], seed: int,
                       params: dict[str, GazeGenParams] | None = None,
                       trials: int = DEFAULT_TRIALS,
                       box: BBox2D = REFERENCE_BOX,
                       margin_frac: float = 0.10) -> list[GazeRecord]:
    """Full synthetic training set: per object, ``trials`` alternating-class
    trials re-normalized against the generating box.  Points that fall outside
    the (dilated) box are excluded, mirroring how off-object gaze is dropped."""
    records: list[GazeRecord] = []
    avg = None
    for oi, label in enumerate(objects):
        p = gen_params_for(label, params)
        for trial in range(trials):
            cls = TaskClass(trial % 2)
            rng = np.random.default_rng([seed, oi, trial])
            for i in range(p.samples_per_trial):
                s = sample_gaze_pixel(rng, cls, p, box, i * DEFAULT_FRAME_DT)
                uv = normalize_gaze(s, box, margin_frac)
                if uv is None:
                    continue
                records.append(GazeRecord(object=label, u=uv.u, v=uv.v,
                                          label=int(cls),
                                          subject=trial % DEFAULT_SUBJECTS,
                                          trial=trial, t=s.t))
    return records
