"""Fourier representation of periodic fields on the box [0, L)^3.

Coefficients are stored in the real-to-complex half-spectrum layout
(last axis holds m_z = 0 .. n/2) and are normalized so that

    u(x) = sum_k u_hat(k) exp(i k.x),     u_hat = rfftn(u) / n^3.

With this convention ``L^3 * sum_k |u_hat(k)|^2`` over the full logical
spectrum equals the physical ``\\int |u|^2 dx`` (Parseval), and every
homogeneous norm in the package is measured that way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralVelocity",
    "ScalarSpectralField",
    "PhysicalField",
    "to_physical",
    "to_spectral",
    "leray_project",
    "riesz_multiply",
    "hs_norm",
    "nonlinear_term",
    "gradient",
    "divergence",
    "curl",
    "laplacian_power",
    "lp_norm",
    "energy",
    "tail_fraction",
]


@dataclass(frozen=True)
class Grid:
    """Periodic collocation lattice with ``n_modes`` points per axis.

    Parameters
    ----------
    n_modes : int
        Points per axis, a power of two.
    box_length : float
        Period ``L`` of the box.
    dealias_fraction : float
        Modes with any ``|m| > dealias_fraction * n_modes / 2`` are removed
        by :attr:`mask`. The Nyquist index is always removed.
    """

    n_modes: int
    box_length: float = 2 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        n = self.n_modes
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ValueError(f"n_modes must be a power of two >= 4, got {n!r}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n_modes,) * 3

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        n = self.n_modes
        return (n, n, n // 2 + 1)

    @property
    def dx(self) -> float:
        return self.box_length / self.n_modes

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.box_length**3

    @cached_property
    def signed_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed mode indices per axis, broadcastable to ``spectral_shape``."""
        n = self.n_modes
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.fft.rfftfreq(n, 1.0 / n)
        return (
            full.reshape(n, 1, 1),
            full.reshape(1, n, 1),
            half.reshape(1, 1, n // 2 + 1),
        )

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        scale = 2 * np.pi / self.box_length
        return tuple(scale * m for m in self.signed_index)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros(self.spectral_shape)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @property
    def kmax_index(self) -> int:
        """Largest retained ``|m|`` per axis."""
        cut = self.dealias_fraction * self.n_modes / 2
        return min(int(np.floor(cut + 1e-12)), self.n_modes // 2 - 1)

    @cached_property
    def mask(self) -> np.ndarray:
        keep = np.ones(self.spectral_shape, dtype=bool)
        km = self.kmax_index
        for m in self.signed_index:
            keep &= np.abs(m) <= km
        return keep

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Number of full-spectrum modes each half-spectrum entry stands for."""
        n = self.n_modes
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w.reshape(1, 1, -1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n_modes) * self.dx
        return x.reshape(-1, 1, 1), x.reshape(1, -1, 1), x.reshape(1, 1, -1)

    def mode_sum(self, values: np.ndarray) -> float:
        """Sum of a real per-mode quantity over the full logical spectrum."""
        return float(np.sum(values * self.multiplicity))


# ---------------------------------------------------------------------------
# array-level kernels (used directly by the time steppers)


def _hermitian_fix(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Make the self-conjugate planes exactly Hermitian, drop the zero mode
    and every Nyquist index. Works on any leading component axes."""
    n = grid.n_modes
    c = np.array(c, dtype=complex, copy=True)
    h = n // 2
    c[..., h, :, :] = 0
    c[..., :, h, :] = 0
    c[..., :, :, h] = 0
    plane = c[..., :, :, 0]
    flipped = np.roll(plane[..., ::-1, ::-1], 1, axis=(-2, -1))
    c[..., :, :, 0] = 0.5 * (plane + np.conj(flipped))
    c[..., 0, 0, 0] = 0
    return c


def _to_phys(grid: Grid, c: np.ndarray) -> np.ndarray:
    n = grid.n_modes
    ax = tuple(range(c.ndim - 3, c.ndim))
    return sfft.irfftn(c, s=grid.physical_shape, axes=ax) * n**3


def _to_spec(grid: Grid, v: np.ndarray) -> np.ndarray:
    n = grid.n_modes
    ax = tuple(range(v.ndim - 3, v.ndim))
    return sfft.rfftn(v, axes=ax) / n**3


def _project(grid: Grid, c: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.k
    kdotu = (kx * c[0] + ky * c[1] + kz * c[2]) * grid.inv_k2
    out = np.empty_like(c)
    out[0] = c[0] - kx * kdotu
    out[1] = c[1] - ky * kdotu
    out[2] = c[2] - kz * kdotu
    out[:, 0, 0, 0] = 0
    return out


def _products(grid: Grid, uh: np.ndarray, vh: np.ndarray) -> np.ndarray:
    """Dealiased spectra of F_ij = u_i v_j, shape (3, 3, ...)."""
    mask = grid.mask
    up = _to_phys(grid, uh * mask)
    vp = up if vh is uh else _to_phys(grid, vh * mask)
    F = np.empty((3, 3) + grid.spectral_shape, dtype=complex)
    sym = vh is uh
    for i in range(3):
        for j in range(3):
            if sym and j < i:
                F[i, j] = F[j, i]
                continue
            F[i, j] = _to_spec(grid, up[i] * vp[j]) * mask
    return F


def _nonlinear(grid: Grid, uh: np.ndarray, vh: np.ndarray) -> np.ndarray:
    """Spectrum of div(u (x) v) with components d_j(u_i v_j)."""
    F = _products(grid, uh, vh)
    kx, ky, kz = grid.k
    return 1j * (kx * F[:, 0] + ky * F[:, 1] + kz * F[:, 2])


def _hs_sq(grid: Grid, c: np.ndarray, s: float) -> float:
    power = np.abs(c) ** 2
    if power.ndim == 4:
        power = power.sum(axis=0)
    if s == 0:
        mult = np.ones(grid.spectral_shape)
    else:
        mult = np.zeros(grid.spectral_shape)
        nz = grid.k2 > 0
        mult[nz] = grid.k2[nz] ** s
    mult[0, 0, 0] = 0
    return grid.volume * grid.mode_sum(mult * power)


def _embed(grid: Grid, fine: Grid, c: np.ndarray) -> np.ndarray:
    """Zero-pad half-spectrum coefficients onto a finer grid (exact resampling)."""
    n, nf = grid.n_modes, fine.n_modes
    if nf < n:
        raise ValueError("target grid must not be coarser")
    h = n // 2
    out = np.zeros(c.shape[:-3] + fine.spectral_shape, dtype=complex)
    idx = np.r_[0:h, nf - h : nf]
    src = np.r_[0:h, n - h : n]
    out[..., idx[:, None], idx[None, :], : h + 1] = c[..., src[:, None], src[None, :], :]
    return out


def _tail_fraction(grid: Grid, c: np.ndarray) -> float:
    """Energy in the top third of the retained index range over total energy."""
    power = np.abs(c) ** 2
    if power.ndim == 4:
        power = power.sum(axis=0)
    power = power * grid.mask
    total = grid.mode_sum(power)
    if total == 0:
        return 0.0
    mx, my, mz = grid.signed_index
    radius = np.sqrt(mx**2 + my**2 + mz**2)
    tail = radius > (2.0 / 3.0) * grid.kmax_index
    return grid.mode_sum(power * tail) / total


# ---------------------------------------------------------------------------
# field types


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class _SpectralBase:
    grid: Grid
    coeffs: np.ndarray

    def _wrap(self, coeffs):
        raise NotImplementedError

    def __add__(self, other):
        _same_grid(self, other)
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_grid(self, other)
        return self._wrap(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._wrap(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.coeffs)

    def physical(self) -> "PhysicalField":
        return to_physical(self)


@dataclass(frozen=True, eq=False)
class SpectralVelocity(_SpectralBase):
    """Three-component real vector field held by its Fourier coefficients.

    The zero mode and Nyquist indices are removed and the coefficients are
    made Hermitian on construction. With ``divergence_free=True`` the
    constructor checks ``k . u_hat(k) = 0`` to 1e-12 relative.
    """

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape != (3,) + self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid "
                f"{(3,) + self.grid.spectral_shape}"
            )
        c = _hermitian_fix(self.grid, c)
        if self.divergence_free:
            kx, ky, kz = self.grid.k
            div = np.abs(kx * c[0] + ky * c[1] + kz * c[2])
            scale = np.max(self.grid.kmag * np.sqrt(np.sum(np.abs(c) ** 2, axis=0)))
            if scale > 0 and div.max() > 1e-12 * scale:
                raise ValueError(
                    f"field is not divergence-free (relative {div.max() / scale:.3e})"
                )
        object.__setattr__(self, "coeffs", _freeze(c))

    @classmethod
    def _trusted(cls, grid: Grid, coeffs: np.ndarray, divergence_free: bool) -> "SpectralVelocity":
        # Linear combinations of divergence-free fields stay divergence-free;
        # re-checking would only measure cancellation error.
        out = object.__new__(cls)
        object.__setattr__(out, "grid", grid)
        object.__setattr__(out, "divergence_free", divergence_free)
        object.__setattr__(out, "coeffs", _freeze(_hermitian_fix(grid, coeffs)))
        return out

    def _wrap(self, coeffs):
        return SpectralVelocity._trusted(self.grid, coeffs, self.divergence_free)

    def __add__(self, other):
        _same_grid(self, other)
        flag = self.divergence_free and other.divergence_free
        return SpectralVelocity._trusted(self.grid, self.coeffs + other.coeffs, flag)

    def __sub__(self, other):
        _same_grid(self, other)
        flag = self.divergence_free and other.divergence_free
        return SpectralVelocity._trusted(self.grid, self.coeffs - other.coeffs, flag)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralVelocity":
        return cls(grid, np.zeros((3,) + grid.spectral_shape, dtype=complex))


@dataclass(frozen=True, eq=False)
class ScalarSpectralField(_SpectralBase):
    """Real scalar field held by its Fourier coefficients (zero mean)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", _freeze(_hermitian_fix(self.grid, c)))

    def _wrap(self, coeffs):
        return ScalarSpectralField(self.grid, coeffs)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarSpectralField":
        return cls(grid, np.zeros(grid.spectral_shape, dtype=complex))


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real samples on the ``n^3`` lattice; ``values`` is (n,n,n) or (3,n,n,n)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape not in (self.grid.physical_shape, (3,) + self.grid.physical_shape):
            raise ValueError(f"values shape {v.shape} does not match grid")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def n_components(self) -> int:
        return 3 if self.values.ndim == 4 else 1

    def magnitude(self) -> np.ndarray:
        if self.values.ndim == 4:
            return np.sqrt(np.sum(self.values**2, axis=0))
        return np.abs(self.values)


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


# ---------------------------------------------------------------------------
# public operations


def to_physical(f: SpectralVelocity | ScalarSpectralField) -> PhysicalField:
    return PhysicalField(f.grid, _to_phys(f.grid, f.coeffs))


def to_spectral(
    f: PhysicalField, divergence_free: bool | None = None
) -> SpectralVelocity | ScalarSpectralField:
    """Transform lattice samples to coefficients.

    The spatial mean is discarded. For vector input ``divergence_free=None``
    flags the result by checking the discrete divergence.
    """
    grid = f.grid
    c = _to_spec(grid, f.values)
    if f.n_components == 1:
        return ScalarSpectralField(grid, c)
    if divergence_free is None:
        try:
            return SpectralVelocity(grid, c, True)
        except ValueError:
            return SpectralVelocity(grid, c, False)
    return SpectralVelocity(grid, c, divergence_free)


def leray_project(u: SpectralVelocity) -> SpectralVelocity:
    """Apply ``P_ij(k) = delta_ij - k_i k_j / |k|^2`` mode-wise."""
    return SpectralVelocity._trusted(u.grid, _project(u.grid, u.coeffs), True)


def riesz_multiply(i: int, j: int, f: ScalarSpectralField) -> ScalarSpectralField:
    """Apply ``R_i R_j`` with symbol ``-k_i k_j / |k|^2`` (axes 0, 1, 2)."""
    if i not in (0, 1, 2) or j not in (0, 1, 2):
        raise ValueError("axes must be 0, 1 or 2")
    k = f.grid.k
    return ScalarSpectralField(f.grid, -k[i] * k[j] * f.grid.inv_k2 * f.coeffs)


def hs_norm(u: SpectralVelocity | ScalarSpectralField, s: float) -> float:
    """Homogeneous Sobolev norm ``(L^3 sum |k|^{2s} |u_hat|^2)^{1/2}``."""
    return float(np.sqrt(_hs_sq(u.grid, u.coeffs, s)))


def energy(u: SpectralVelocity | ScalarSpectralField) -> float:
    """``\\int |u|^2 dx`` over the box."""
    return _hs_sq(u.grid, u.coeffs, 0.0)


def tail_fraction(u: SpectralVelocity) -> float:
    """Share of retained-mode energy held in the top third of the index range."""
    return _tail_fraction(u.grid, u.coeffs)


def nonlinear_term(u: SpectralVelocity, v: SpectralVelocity) -> SpectralVelocity:
    """``div(u (x) v)`` with components ``d_j(u_i v_j)``, dealiased.

    The 2/3 mask is applied to both factors before the collocation product
    and to the product spectrum after it.
    """
    _same_grid(u, v)
    vh = u.coeffs if v is u else v.coeffs
    return SpectralVelocity(u.grid, _nonlinear(u.grid, u.coeffs, vh), False)


def gradient(f: ScalarSpectralField) -> SpectralVelocity:
    kx, ky, kz = f.grid.k
    c = np.stack([1j * kx * f.coeffs, 1j * ky * f.coeffs, 1j * kz * f.coeffs])
    return SpectralVelocity(f.grid, c, False)


def divergence(u: SpectralVelocity) -> ScalarSpectralField:
    kx, ky, kz = u.grid.k
    return ScalarSpectralField(u.grid, 1j * (kx * u.coeffs[0] + ky * u.coeffs[1] + kz * u.coeffs[2]))


def curl(u: SpectralVelocity) -> SpectralVelocity:
    kx, ky, kz = u.grid.k
    c = u.coeffs
    out = 1j * np.stack([ky * c[2] - kz * c[1], kz * c[0] - kx * c[2], kx * c[1] - ky * c[0]])
    return SpectralVelocity(u.grid, out, True)


def laplacian_power(f, s: float):
    """Multiply by ``|k|^{2s}``, i.e. apply ``(-Delta)^s``."""
    mult = np.zeros(f.grid.spectral_shape)
    nz = f.grid.k2 > 0
    mult[nz] = f.grid.k2[nz] ** s
    if isinstance(f, SpectralVelocity):
        return SpectralVelocity(f.grid, mult * f.coeffs, f.divergence_free)
    return ScalarSpectralField(f.grid, mult * f.coeffs)


def lp_norm(f: PhysicalField, p: float) -> float:
    """Lattice quadrature of ``(\\int |f|^p dx)^{1/p}``; ``|f|`` is Euclidean."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = f.magnitude()
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))
