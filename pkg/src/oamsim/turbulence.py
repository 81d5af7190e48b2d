"""Kolmogorov phase screens and their structure-function validation.

Screens are synthesised in Fourier space with the Kolmogorov phase spectrum
``0.023 r0**(-5/3) f**(-11/3)`` (``f`` in cycles per unit length).  The region
around zero frequency is refined with base-3 subharmonic levels, and the
lowest cells carry moment-matched weights, so the structure function follows
the Kolmogorov law up to a quarter of the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from oamsim.errors import ValidationError
from oamsim.optics import GridSpec

FLAT = math.inf
"""Fried parameter of the turbulence-free (all-zero) screen."""

KOLMOGOROV_D_COEFF = 6.88
SUBHARMONIC_LEVELS = 10
MOMENT_MATCHED_CELLS = 8
SIDE_TAGS = {"idler": 0, "signal": 1}


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    grid: GridSpec
    phase: np.ndarray
    r0: float
    seed: int

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=np.float64)
        if phase.shape != (self.grid.n, self.grid.n):
            raise ValidationError(f"screen shape {phase.shape} does not match grid")
        if not np.all(np.isfinite(phase)):
            raise ValidationError("phase screen contains non-finite values")
        if not self.r0 > 0:
            raise ValidationError(f"r0 must be positive, got {self.r0}")
        phase = phase.copy() if phase.flags.writeable else phase
        phase.setflags(write=False)
        object.__setattr__(self, "phase", phase)

    @property
    def is_flat(self) -> bool:
        return math.isinf(self.r0)

    def mirrored(self) -> "PhaseScreen":
        """Screen reflected through x -> -x."""
        return PhaseScreen(self.grid, self.phase[::-1, :], self.r0, self.seed)


def fried_from_strength(s: float, w0: float = 1.0) -> float:
    """Fried parameter for scintillation strength ``s = w0 / r0``.

    ``s == 0`` returns :data:`FLAT` (infinite ``r0``, no turbulence).
    """
    if not w0 > 0:
        raise ValidationError(f"w0 must be positive, got {w0}")
    if s < 0:
        raise ValidationError(f"scintillation strength must be >= 0, got {s}")
    if s == 0:
        return FLAT
    return w0 / s


def mask_seed(master_seed: int, strength_index: int, mask_index: int, side: str = "idler") -> int:
    """Independent 64-bit seed for one mask of one sweep point.

    Seeds come from ``numpy.random.SeedSequence`` spawn keys, so the value only
    depends on the four labels and never on evaluation order.
    """
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(int(strength_index), int(mask_index), SIDE_TAGS[side])
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _kolmogorov_psd(f: np.ndarray, r0: float = 1.0) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore"):
        psd = 0.023 * r0 ** (-5.0 / 3.0) * f ** (-11.0 / 3.0)
    return np.where(f == 0, 0.0, psd)


def _cell_weight(fx: float, fy: float, width: float, m: int = 48) -> float:
    """Variance assigned to the spectral cell centred at ``(fx, fy)`` (r0 = 1).

    The weight reproduces the cell's second spectral moment,
    ``int PSD |f|^2 d^2f / |f_c|^2``, which is what sets the structure function
    at lags short compared with ``1/f``.  Plain midpoint weights
    ``PSD(f_c) width^2`` undershoot near the singular origin.
    """
    o = ((np.arange(m) + 0.5) / m - 0.5) * width
    ox, oy = np.meshgrid(o, o, indexing="ij")
    gx, gy = fx + ox, fy + oy
    f2 = gx**2 + gy**2
    return float(np.mean(_kolmogorov_psd(np.sqrt(f2)) * f2) * width**2 / (fx**2 + fy**2))


@lru_cache(maxsize=4)
def _spectral_weights(grid: GridSpec, subharmonics: bool):
    """Per-component variances at r0 = 1: the FFT grid and the subharmonic levels."""
    n, df = grid.n, 1.0 / grid.side_length
    f1 = np.fft.fftfreq(n, d=grid.dx)
    fx, fy = np.meshgrid(f1, f1, indexing="ij")
    fft_w = _kolmogorov_psd(np.hypot(fx, fy)) * df**2
    levels = []
    if subharmonics:
        k = MOMENT_MATCHED_CELLS
        for i in range(-k, k + 1):
            for j in range(-k, k + 1):
                if i or j:
                    fft_w[i % n, j % n] = _cell_weight(i * df, j * df, df)
        for level in range(1, SUBHARMONIC_LEVELS + 1):
            d = df / 3**level
            ax = np.array([-1.0, 0.0, 1.0]) * d
            w = np.array([[_cell_weight(a, b, d) if (a or b) else 0.0 for b in ax] for a in ax])
            levels.append((ax, w))
    fft_w.setflags(write=False)
    return fft_w, tuple(levels)


def kolmogorov_screen(grid: GridSpec, r0: float, seed: int, subharmonics: bool = True) -> PhaseScreen:
    """Draw one Kolmogorov phase screen.

    The result is a pure function of ``(grid, r0, seed)``; the spatial mean is
    removed.  ``r0 = inf`` gives the flat screen without touching the RNG.
    ``subharmonics=False`` falls back to plain midpoint FFT synthesis, which
    lacks large-scale power and fails the structure-function check; it exists
    for diagnostics only.
    """
    if not r0 > 0:
        raise ValidationError(f"r0 must be positive (or FLAT), got {r0}")
    if math.isinf(r0):
        return PhaseScreen(grid, np.zeros((grid.n, grid.n)), FLAT, int(seed))

    n = grid.n
    scale = r0 ** (-5.0 / 6.0)
    fft_w, levels = _spectral_weights(grid, subharmonics)
    rng = np.random.default_rng(int(seed))
    cn = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * np.sqrt(fft_w)
    phase = np.fft.ifft2(cn).real * (n * n * scale)
    x = grid.axis
    low = np.zeros((n, n), dtype=np.complex128)
    for ax, w in levels:
        c = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) * np.sqrt(w)
        ex = np.exp(2j * np.pi * np.outer(ax, x))
        # sum_ab c[a, b] exp(i 2 pi (f_a x + f_b y))
        low += ex.T @ c @ ex
    phase = phase + low.real * scale
    phase = phase - phase.mean()
    return PhaseScreen(grid, phase, float(r0), int(seed))


def kolmogorov_structure(r, r0: float):
    """Analytic phase structure function ``6.88 (r / r0)**(5/3)``."""
    r = np.asarray(r, dtype=float)
    if math.isinf(r0):
        return np.zeros_like(r)
    return KOLMOGOROV_D_COEFF * (r / r0) ** (5.0 / 3.0)


def structure_function(screens, radii, min_screens: int = 100):
    """Ensemble- and space-averaged phase structure function.

    Each radius is snapped to the nearest whole-pixel lag; differences are taken
    along both grid axes without wrap-around.

    Returns
    -------
    list of (r, d_hat, d_ref)
        ``r`` is the lag actually used, ``d_ref`` the Kolmogorov law at ``r0``.
    """
    screens = list(screens)
    if len(screens) < min_screens:
        raise ValidationError(f"need at least {min_screens} screens, got {len(screens)}")
    grid, r0 = screens[0].grid, screens[0].r0
    if any(s.grid != grid or s.r0 != r0 for s in screens):
        raise ValidationError("all screens must share grid and r0")
    lo, hi = 4 * grid.dx, grid.side_length / 4
    lags = []
    for r in radii:
        if r < lo * (1 - 1e-9) or r > hi * (1 + 1e-9):
            raise ValidationError(f"radius {r} outside resolvable band [{lo}, {hi}]")
        lags.append(int(round(r / grid.dx)))

    stack = np.stack([s.phase for s in screens])
    out = []
    for k in lags:
        dxs = stack[:, k:, :] - stack[:, :-k, :]
        dys = stack[:, :, k:] - stack[:, :, :-k]
        d_hat = 0.5 * (np.mean(dxs**2) + np.mean(dys**2))
        r = k * grid.dx
        out.append((r, float(d_hat), float(kolmogorov_structure(r, r0))))
    return out


def validation_radii(grid: GridSpec, count: int = 8) -> list[float]:
    """Log-spaced whole-pixel radii spanning ``[4 dx, side_length / 4]``."""
    lags = np.unique(np.round(np.geomspace(4, grid.n / 4, count)).astype(int))
    return [float(k * grid.dx) for k in lags]
