"""Sampled transverse planes, Laguerre-Gaussian modes and discrete overlaps.

All lengths are in units of the beam waist ``w0`` unless a caller chooses
otherwise; energies are in units of hbar*omega elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from oamsim.errors import ValidationError

DEFAULT_N = 256
DEFAULT_SIDE_LENGTH = 12.0
DEFAULT_W0 = 1.0
DEFAULT_L_MAX = 10


@dataclass(frozen=True)
class GridSpec:
    """Square ``n x n`` sampling of a window ``side_length`` wide.

    Sample ``(i, j)`` sits at ``((i - n/2 + 0.5) dx, (j - n/2 + 0.5) dx)`` so the
    origin falls between pixels; axis 0 is x, axis 1 is y.
    """

    n: int
    side_length: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise ValidationError(f"grid size must be an integer, got {self.n!r}")
        if self.n < 64 or self.n % 2:
            raise ValidationError(f"grid size must be even and >= 64, got {self.n}")
        if not self.side_length > 0:
            raise ValidationError(f"side_length must be positive, got {self.side_length}")

    @property
    def dx(self) -> float:
        return self.side_length / self.n

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n / 2 + 0.5) * self.dx

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, y)`` coordinate arrays of shape ``(n, n)``."""
        a = self.axis
        return np.meshgrid(a, a, indexing="ij")

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.coordinates()
        return np.hypot(x, y), np.arctan2(y, x)


def make_grid(n: int, side_length: float) -> GridSpec:
    return GridSpec(int(n) if isinstance(n, np.integer) else n, float(side_length))


@dataclass(frozen=True)
class ModeIndex:
    """Azimuthal index of a p = 0 Laguerre-Gaussian mode."""

    ell: int
    p: int = 0

    def __post_init__(self):
        if self.p != 0:
            raise ValidationError("only radial index p = 0 is supported")

    def check_truncation(self, l_max: int) -> None:
        if abs(self.ell) > l_max:
            raise ValidationError(f"|ell| = {abs(self.ell)} exceeds truncation l_max = {l_max}")


@dataclass(frozen=True, eq=False)
class ComplexField:
    """A complex transverse field sampled on ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (self.grid.n, self.grid.n):
            raise ValidationError(
                f"field shape {values.shape} does not match grid ({self.grid.n}, {self.grid.n})"
            )
        values = values.copy() if values.flags.writeable else values
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.sqrt(overlap(self, self).real))

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def _lg_values(grid: GridSpec, ell: int, w0: float) -> np.ndarray:
    r, phi = grid.polar()
    radial = (np.sqrt(2.0) * r / w0) ** abs(ell) * np.exp(-(r**2) / w0**2)
    u = radial * np.exp(1j * ell * phi)
    norm = np.sqrt(np.sum(np.abs(u) ** 2) * grid.dx**2)
    return u / norm


def lg_mode(grid: GridSpec, mode: ModeIndex | int, w0: float = DEFAULT_W0) -> ComplexField:
    """Unit-norm LG_{ell,0} mode on ``grid``.

    The normalisation is computed on the grid itself, not from the analytic
    constant, so the discrete norm is one to rounding.

    Raises
    ------
    ValidationError
        If ``w0 <= 0`` or the ring radius ``w0 sqrt(|ell|/2)`` exceeds a quarter
        of the window.
    """
    ell = mode.ell if isinstance(mode, ModeIndex) else int(mode)
    if not w0 > 0:
        raise ValidationError(f"w0 must be positive, got {w0}")
    ring = w0 * np.sqrt(abs(ell) / 2.0)
    if ring > grid.side_length / 4:
        raise ValidationError(
            f"LG mode ell={ell} under-resolved: ring radius {ring:.4g} > side_length/4 = "
            f"{grid.side_length / 4:.4g}"
        )
    return ComplexField(grid, _lg_values(grid, ell, w0))


def overlap(a: ComplexField, b: ComplexField) -> complex:
    """Discrete inner product ``sum(conj(a) * b) * dx**2``."""
    if a.grid != b.grid:
        raise ValidationError(f"grid mismatch: {a.grid} vs {b.grid}")
    return complex(np.vdot(a.values, b.values) * a.grid.dx**2)


@lru_cache(maxsize=8)
def mode_basis(grid: GridSpec, l_max: int, w0: float = DEFAULT_W0) -> np.ndarray:
    """Stack of LG modes ``ell = -l_max..l_max`` as rows, flattened and scaled by ``dx``.

    Scaling each row by ``dx`` turns the discrete overlap into a plain dot
    product: ``overlap(LG_a, f) == conj(B[a]) @ (f.ravel() * dx)``.
    """
    rows = [lg_mode(grid, ell, w0).values.ravel() * grid.dx for ell in range(-l_max, l_max + 1)]
    basis = np.ascontiguousarray(np.stack(rows))
    basis.setflags(write=False)
    return basis


def orthonormality_error(grid: GridSpec, l_max: int, w0: float = DEFAULT_W0) -> float:
    """Largest ``|<LG_a, LG_b> - delta_ab|`` over the truncated mode set."""
    basis = mode_basis(grid, l_max, w0)
    gram = basis.conj() @ basis.T
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
