"""OAM transition matrices of turbulence channels.

Each phase mask is a unitary acting on the transverse field.  The measured
channel is the incoherent (intensity) average over masks of the projections
onto the truncated p = 0 LG set, with columns renormalised afterwards.  The
mass lost to ``|ell| > l_max`` and to ``p > 0`` is kept as ``leakage``.

Matrices are stored ``T[out, in]`` with both axes running ``-l_max..l_max``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from oamsim.errors import ValidationError
from oamsim.optics import (
    DEFAULT_L_MAX,
    DEFAULT_N,
    DEFAULT_SIDE_LENGTH,
    DEFAULT_W0,
    ComplexField,
    GridSpec,
    make_grid,
    mode_basis,
)
from oamsim.turbulence import PhaseScreen, fried_from_strength, kolmogorov_screen, mask_seed

DEFAULT_WAVENUMBER = 2.0
"""Wavenumber in inverse grid units; with w0 = 1 the Rayleigh range is 1."""

MIN_CAPTURED_MASS = 1e-6

INDEX_CONVENTION = (
    "forward: input ell = -ell_A (idler prepared by heralding the signal at ell_A), "
    "output ell = ell_B; backward: input ell = -ell_B, output ell = ell_A"
)


@dataclass(frozen=True)
class ChannelConfig:
    l_max: int = DEFAULT_L_MAX
    strength: float = 0.0
    n_masks: int = 30
    sidedness: str = "single"
    separation_z: float = 0.0
    spiral_weights: Optional[tuple] = None
    master_seed: int = 0
    strength_index: int = 0
    n: int = DEFAULT_N
    side_length: float = DEFAULT_SIDE_LENGTH
    w0: float = DEFAULT_W0

    def __post_init__(self):
        if self.l_max < 1:
            raise ValidationError(f"l_max must be >= 1, got {self.l_max}")
        if self.n_masks < 1:
            raise ValidationError(f"n_masks must be >= 1, got {self.n_masks}")
        if self.sidedness not in ("single", "double"):
            raise ValidationError(f"sidedness must be 'single' or 'double', got {self.sidedness!r}")
        if self.separation_z < 0:
            raise ValidationError(f"separation_z must be >= 0, got {self.separation_z}")
        if self.strength < 0:
            raise ValidationError(f"strength must be >= 0, got {self.strength}")
        if self.spiral_weights is not None:
            c = np.asarray(self.spiral_weights, dtype=float)
            if c.shape != (self.dim,):
                raise ValidationError(f"spiral_weights needs {self.dim} entries, got {c.size}")
            if not np.all(np.isfinite(c)) or not np.allclose(c, c[::-1]):
                raise ValidationError("spiral_weights must be finite and symmetric, C(-l) = C(l)")
            if not np.any(c != 0):
                raise ValidationError("spiral_weights must not vanish identically")
            object.__setattr__(self, "spiral_weights", tuple(float(v) for v in c))

    @property
    def dim(self) -> int:
        return 2 * self.l_max + 1

    @property
    def grid(self) -> GridSpec:
        return make_grid(self.n, self.side_length)

    @property
    def r0(self) -> float:
        return fried_from_strength(self.strength, self.w0)

    def pair_weights(self) -> np.ndarray:
        """Joint-emission weights ``|C_ell|^2`` over the truncated range."""
        if self.spiral_weights is None:
            return np.ones(self.dim)
        return np.asarray(self.spiral_weights) ** 2


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Column-stochastic conditional probabilities ``T[out, in]``."""

    matrix: np.ndarray
    leakage: np.ndarray
    direction: str = "forward"
    provenance: str = "simulated"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        leak = np.array(self.leakage, dtype=np.float64)
        d = m.shape[0]
        if m.ndim != 2 or m.shape != (d, d) or d % 2 == 0 or d < 3:
            raise ValidationError(f"transition matrix must be square with odd dim >= 3, got {m.shape}")
        if leak.shape != (d,):
            raise ValidationError(f"leakage needs {d} entries, got {leak.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValidationError("transition probabilities must be finite and non-negative")
        sums = m.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-12:
            raise ValidationError(f"columns must sum to 1 (worst {sums[np.argmax(np.abs(sums - 1))]!r})")
        if np.any(leak < 0) or np.any(leak >= 1):
            raise ValidationError("leakage must lie in [0, 1)")
        if self.direction not in ("forward", "backward"):
            raise ValidationError(f"direction must be forward or backward, got {self.direction!r}")
        if self.provenance not in ("simulated", "ingested"):
            raise ValidationError(f"provenance must be simulated or ingested, got {self.provenance!r}")
        m.setflags(write=False)
        leak.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "leakage", leak)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def l_max(self) -> int:
        return (self.dim - 1) // 2

    @property
    def ells(self) -> np.ndarray:
        return np.arange(-self.l_max, self.l_max + 1)

    def diagonal_mean(self) -> float:
        return float(np.mean(np.diag(self.matrix)))

    def mirrored(self) -> "TransitionMatrix":
        """Relabel ``ell -> -ell`` on both axes."""
        return TransitionMatrix(
            self.matrix[::-1, ::-1], self.leakage[::-1], self.direction, self.provenance, dict(self.metadata)
        )


@dataclass(frozen=True, eq=False)
class CountsMatrix:
    """Coincidence counts ``N[ell_A, ell_B]`` (signal rows, idler columns)."""

    counts: np.ndarray
    accumulation_s: float = 10.0
    gate_ns: float = 12.0
    pump_sigma: float = 0.05

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise ValidationError(f"counts must be square with odd dimension, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise ValidationError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValidationError("counts must be non-negative")
        if not (self.accumulation_s > 0 and self.gate_ns > 0 and self.pump_sigma > 0):
            raise ValidationError("metadata fields must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def dim(self) -> int:
        return self.counts.shape[0]

    @property
    def l_max(self) -> int:
        return (self.dim - 1) // 2


def apply_screen(f: ComplexField, screen: PhaseScreen) -> ComplexField:
    """Multiply ``f`` by ``exp(i theta)``."""
    if f.grid != screen.grid:
        raise ValidationError("field and screen live on different grids")
    if screen.is_flat:
        return f
    return ComplexField(f.grid, f.values * np.exp(1j * screen.phase))


def _transfer(grid: GridSpec, z: float, k: float) -> np.ndarray:
    kap = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kx, ky = np.meshgrid(kap, kap, indexing="ij")
    return np.exp(-1j * z * (kx**2 + ky**2) / (2 * k))


def _check_aliasing(values: np.ndarray, grid: GridSpec, z: float, k: float) -> None:
    spec = np.abs(np.fft.fft2(values, axes=(-2, -1))) ** 2
    spec = spec.reshape(-1, grid.n, grid.n).sum(axis=0)
    kap = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kr = np.hypot(*np.meshgrid(kap, kap, indexing="ij")).ravel()
    order = np.argsort(kr, kind="stable")
    cum = np.cumsum(spec.ravel()[order])
    total = cum[-1]
    if total == 0:
        return
    k_eff = kr[order][np.searchsorted(cum, 0.999 * total)]
    nyquist = np.pi / grid.dx
    edge_power = spec.ravel()[kr >= 0.95 * nyquist].sum() / total
    walk = z * k_eff / k
    if edge_power > 1e-3:
        raise ValidationError(f"field not band-limited: {edge_power:.2e} of its power sits at the Nyquist edge")
    if walk > grid.side_length / 2:
        raise ValidationError(
            f"propagation z={z} walks the field {walk:.3g} off-axis, beyond half the window"
        )


def _propagate_values(values: np.ndarray, grid: GridSpec, z: float, k: float, reverse: bool) -> np.ndarray:
    if z == 0:
        return values
    h = _transfer(grid, z, k)
    if reverse:
        h = h.conj()
    return np.fft.ifft2(np.fft.fft2(values, axes=(-2, -1)) * h, axes=(-2, -1))


def fresnel_propagate(
    f: ComplexField, z: float, k: float = DEFAULT_WAVENUMBER, reverse: bool = False
) -> ComplexField:
    """Paraxial angular-spectrum propagation over ``z`` (grid length units).

    ``reverse=True`` applies the conjugate transfer function, undoing a forward
    step of the same length.

    Raises
    ------
    ValidationError
        For ``z < 0``, or when the field carries power at the grid Nyquist
        edge or would walk off more than half the window.
    """
    if z < 0:
        raise ValidationError(f"propagation distance must be >= 0, got {z}")
    if z == 0:
        return f
    _check_aliasing(f.values, f.grid, z, k)
    return ComplexField(f.grid, _propagate_values(f.values, f.grid, z, k, reverse))


def _mask_operator(basis, grid, screens, separation_z, k):
    """Images of every basis row under one mask, flattened (rows = input modes)."""
    n = grid.n
    first = screens[0]
    out = basis * np.exp(1j * first.phase.ravel()) if not first.is_flat else basis
    if len(screens) == 2:
        second = screens[1]
        if separation_z > 0:
            _check_aliasing(out.reshape(-1, n, n), grid, separation_z, k)
            fields = _propagate_values(out.reshape(-1, n, n), grid, separation_z, k, False)
            if not second.is_flat:
                fields = fields * np.exp(1j * second.phase)
            # measure in the conjugate plane of the input, undoing the free step
            out = _propagate_values(fields, grid, separation_z, k, True).reshape(-1, n * n)
        elif not second.is_flat:
            out = out * np.exp(1j * second.phase.ravel())
    return out


def mask_amplitude_matrix(
    screens: Sequence[PhaseScreen],
    l_max: int,
    w0: float = DEFAULT_W0,
    separation_z: float = 0.0,
    k: float = DEFAULT_WAVENUMBER,
) -> np.ndarray:
    """Amplitudes ``c[out, in] = <LG_out, U LG_in>`` for one mask.

    ``screens`` holds one screen (single-sided) or two (double-sided: first
    screen, free step ``separation_z``, second screen).
    """
    if len(screens) not in (1, 2):
        raise ValidationError("a mask has one or two screens")
    grid = screens[0].grid
    if any(s.grid != grid for s in screens):
        raise ValidationError("screens of one mask must share a grid")
    basis = mode_basis(grid, l_max, w0)
    images = _mask_operator(basis, grid, screens, separation_z, k)
    return basis.conj() @ images.T


def single_mask_amplitudes(input_ell: int, screens, config: ChannelConfig) -> np.ndarray:
    """Output amplitudes over ``ell' = -L..L`` for one input mode and one mask."""
    if abs(input_ell) > config.l_max:
        raise ValidationError(f"|input_ell| = {abs(input_ell)} exceeds l_max = {config.l_max}")
    if isinstance(screens, PhaseScreen):
        screens = [screens]
    expected = 1 if config.sidedness == "single" else 2
    if len(screens) != expected:
        raise ValidationError(f"{config.sidedness}-sided channel needs {expected} screen(s)")
    amps = mask_amplitude_matrix(screens, config.l_max, config.w0, config.separation_z)
    return amps[:, input_ell + config.l_max]


def mask_screens(config: ChannelConfig, mask_index: int) -> list[PhaseScreen]:
    """The screen(s) realising mask ``mask_index`` of a channel configuration."""
    grid, r0 = config.grid, config.r0
    sides = ["idler"] if config.sidedness == "single" else ["idler", "signal"]
    return [
        kolmogorov_screen(grid, r0, mask_seed(config.master_seed, config.strength_index, mask_index, side))
        for side in sides
    ]


def mask_power(config: ChannelConfig, mask_index: int) -> np.ndarray:
    """``|c[out, in]|^2`` for one mask of ``config``."""
    amps = mask_amplitude_matrix(mask_screens(config, mask_index), config.l_max, config.w0, config.separation_z)
    return np.abs(amps) ** 2


def _mask_power_task(args):
    return mask_power(*args)


def raw_transition(config: ChannelConfig, workers: int = 1) -> np.ndarray:
    """Mask-averaged captured power ``T_raw[out, in]`` (columns sum to <= 1).

    Per-mask results are reduced in mask order, so the output does not depend
    on ``workers``.
    """
    tasks = [(config, i) for i in range(config.n_masks)]
    if workers > 1 and config.n_masks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            powers = list(pool.map(_mask_power_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        powers = [_mask_power_task(t) for t in tasks]
    total = np.zeros((config.dim, config.dim))
    for p in powers:
        total += p
    return total / config.n_masks


def _check_mass(mass: np.ndarray, what: str) -> None:
    bad = np.flatnonzero(~(mass >= MIN_CAPTURED_MASS))
    if bad.size:
        l_max = (mass.size - 1) // 2
        raise ValidationError(f"{what} for ell={int(bad[0]) - l_max} carries no probability mass")


def joint_from_raw(raw: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Expected coincidence table ``N[ell_A, ell_B]`` (up to scale) from ``T_raw``.

    Heralding the signal at ``ell_A`` prepares the idler at ``-ell_A``.
    """
    return (raw * weights[None, :]).T[::-1, :]


def _forward_conditional(joint: np.ndarray) -> np.ndarray:
    by_input = joint[::-1, :]  # row i now indexed by input ell = -ell_A
    mass = by_input.sum(axis=1)
    _check_mass(mass, "forward input")
    return (by_input / mass[:, None]).T


def _backward_conditional(joint: np.ndarray) -> np.ndarray:
    by_input = joint[:, ::-1]  # column j now indexed by input ell = -ell_B
    mass = by_input.sum(axis=0)
    _check_mass(mass, "backward input")
    return by_input / mass[None, :]


def _renormalised(m: np.ndarray) -> np.ndarray:
    # one more pass brings column sums to within a few ulp of 1
    return m / m.sum(axis=0, keepdims=True)


def transition_from_raw(
    raw: np.ndarray, direction: str = "forward", weights: Optional[np.ndarray] = None, metadata=None
) -> TransitionMatrix:
    """Build the forward or backward channel from mask-averaged captured power."""
    d = raw.shape[0]
    weights = np.ones(d) if weights is None else np.asarray(weights, dtype=float)
    joint = joint_from_raw(raw, weights)
    if direction == "forward":
        m = _forward_conditional(joint)
        captured = raw.sum(axis=0)
    elif direction == "backward":
        m = _backward_conditional(joint)
        # the backward channel runs the masks' adjoints: captured mass is a row sum
        captured = raw.sum(axis=1)[::-1]
    else:
        raise ValidationError(f"direction must be forward or backward, got {direction!r}")
    leakage = np.clip(1.0 - captured, 0.0, None)
    meta = {"index_convention": INDEX_CONVENTION}
    meta.update(metadata or {})
    return TransitionMatrix(_renormalised(m), leakage, direction, "simulated", meta)


def estimate_transition(config: ChannelConfig, direction: str = "forward", workers: int = 1) -> TransitionMatrix:
    """Simulate the turbulence channel of ``config``.

    ``T_raw = mean over masks of |c|^2``; ``leakage = 1 - captured`` per input;
    columns are then renormalised.  Deterministic in ``config.master_seed``.

    Raises
    ------
    ValidationError
        If an input column captures less than ``1e-6`` of its power.
    """
    raw = raw_transition(config, workers)
    _check_mass(raw.sum(axis=0), "simulated input")
    meta = {
        "strength": config.strength,
        "sidedness": config.sidedness,
        "n_masks": config.n_masks,
        "separation_z": config.separation_z,
        "master_seed": config.master_seed,
    }
    return transition_from_raw(raw, direction, config.pair_weights(), meta)


def _counts_meta(counts: CountsMatrix) -> dict:
    return {
        "index_convention": INDEX_CONVENTION,
        "accumulation_s": counts.accumulation_s,
        "gate_ns": counts.gate_ns,
        "pump_sigma": counts.pump_sigma,
        "total_counts": int(counts.counts.sum()),
    }


def forward_from_counts(counts: CountsMatrix) -> TransitionMatrix:
    """Forward channel: normalise each heralded input over the idler outcomes."""
    n = counts.counts.astype(np.float64)
    m = _renormalised(_forward_conditional(n))
    return TransitionMatrix(m, np.zeros(counts.dim), "forward", "ingested", _counts_meta(counts))


def backward_from_counts(counts: CountsMatrix) -> TransitionMatrix:
    """Backward channel: roles of signal and idler exchanged on the same table."""
    n = counts.counts.astype(np.float64)
    m = _renormalised(_backward_conditional(n))
    return TransitionMatrix(m, np.zeros(counts.dim), "backward", "ingested", _counts_meta(counts))


def from_counts(counts: CountsMatrix, direction: str) -> TransitionMatrix:
    if direction == "forward":
        return forward_from_counts(counts)
    if direction == "backward":
        return backward_from_counts(counts)
    raise ValidationError(f"direction must be forward or backward, got {direction!r}")
