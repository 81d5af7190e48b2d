"""Counting noise and Monte-Carlo confidence bands.

A trial rescales the whole coincidence table by one common pump multiplier
``m ~ Normal(1, pump_sigma)`` (clipped at 0) and then draws every entry from
``Poisson(N m)``; the full counts -> channel -> thermodynamics pipeline is
rerun per trial and bands are empirical quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from oamsim.channel import CountsMatrix, TransitionMatrix, forward_from_counts, joint_from_raw
from oamsim.errors import ValidationError
from oamsim.thermo import GibbsPopulations, ThermoReport, thermo_curves


@dataclass(frozen=True)
class NoiseModel:
    poisson: bool = True
    pump_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.pump_sigma < 0.5:
            raise ValidationError(f"pump_sigma must lie in [0, 0.5), got {self.pump_sigma}")

    @property
    def is_silent(self) -> bool:
        return not self.poisson and self.pump_sigma == 0


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """Per-beta empirical quantile bands for every reported quantity."""

    betas: np.ndarray
    level: float
    trials: int
    point: dict
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)

    def width(self, quantity: str) -> np.ndarray:
        return self.upper[quantity] - self.lower[quantity]

    def contains(self, quantity: str, value, atol: float = 1e-12) -> np.ndarray:
        """Elementwise ``lower - atol <= value <= upper + atol``."""
        return (self.lower[quantity] - atol <= value) & (value <= self.upper[quantity] + atol)


def synth_counts(t: TransitionMatrix, weights=None, total: int = 10**6, pump_sigma: float = 0.05) -> CountsMatrix:
    """Expected coincidence table for channel ``t``, rounded to integers.

    ``weights`` are the input populations (``GibbsPopulations``, an array, or
    ``None`` for flat); entry ``[-l, l']`` gets ``total * w_l * T[l', l]``.
    """
    if total <= 0:
        raise ValidationError(f"total must be positive, got {total}")
    if weights is None:
        w = np.ones(t.dim)
    elif isinstance(weights, GibbsPopulations):
        w = np.asarray(weights.p, dtype=float)
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape != (t.dim,) or np.any(w < 0) or w.sum() <= 0:
        raise ValidationError("weights must be non-negative with one entry per mode")
    joint = joint_from_raw(np.asarray(t.matrix), w / w.sum())
    return CountsMatrix(np.rint(total * joint).astype(np.int64), pump_sigma=pump_sigma or 0.05)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def resample(counts: CountsMatrix, model: NoiseModel, trial: int) -> CountsMatrix:
    """One noisy realisation of ``counts``; a pure function of ``(model.seed, trial)``."""
    if model.is_silent:
        return counts
    rng = _trial_rng(model.seed, trial)
    m = max(0.0, 1.0 + model.pump_sigma * rng.standard_normal())
    mean = counts.counts * m
    drawn = rng.poisson(mean) if model.poisson else np.rint(mean)
    return CountsMatrix(drawn.astype(np.int64), counts.accumulation_s, counts.gate_ns, counts.pump_sigma)


def confidence_band(
    counts: CountsMatrix,
    pipeline: Callable[[CountsMatrix], TransitionMatrix] = forward_from_counts,
    betas=(3.0,),
    model: NoiseModel = NoiseModel(),
    trials: int = 1000,
    level: float = 0.95,
) -> ConfidenceBand:
    """Monte-Carlo band of the thermodynamic curves derived from ``counts``.

    Any pipeline failure inside a trial propagates; trials are never dropped.
    """
    if trials < 100:
        raise ValidationError(f"need at least 100 trials, got {trials}")
    if not 0 < level < 1:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    betas = np.asarray(betas, dtype=float)
    point = thermo_curves(pipeline(counts), betas)
    samples = {q: np.empty((trials, betas.size)) for q in ThermoReport.FIELDS}
    for k in range(trials):
        curves = thermo_curves(pipeline(resample(counts, model, k)), betas)
        for q in ThermoReport.FIELDS:
            samples[q][k] = curves[q]
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    lower, upper = {}, {}
    for q, s in samples.items():
        s = np.sort(s, axis=0)
        lower[q] = np.quantile(s, lo_q, axis=0)
        upper[q] = np.quantile(s, hi_q, axis=0)
    return ConfidenceBand(betas, level, trials, point, lower, upper)
