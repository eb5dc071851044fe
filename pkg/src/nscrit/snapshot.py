"""Binary snapshot files.

Layout (little-endian)::

    magic         4 bytes  b"NSSF"
    version       u32      1
    n_modes       u32
    box_length    f64
    time          f64
    n_components  u32      3 (velocity) or 1 (scalar)
    coefficients  complex128[n_components, n, n, n]

Coefficients cover the full logical spectrum in FFT index order
(m = 0 .. n-1 per axis), row-major over (component, m_x, m_y, m_z), with the
normalization of :mod:`nscrit.spectral`.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import Grid, ScalarSpectralField, SpectralVelocity

MAGIC = b"NSSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIddI")


class SnapshotError(ValueError):
    """Raised for malformed or non-Hermitian snapshot files."""


def _partner(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def full_spectrum(grid: Grid, half: np.ndarray) -> np.ndarray:
    """Expand half-spectrum coefficients to the full ``n^3`` layout."""
    n = grid.n_modes
    h = n // 2
    lead = half.shape[:-3]
    full = np.zeros(lead + (n, n, n), dtype=complex)
    full[..., : h + 1] = half
    p = _partner(n)
    mirrored = np.conj(half[..., p, :, :][..., :, p, :])
    # m_z in (n/2, n) pairs with n - m_z in (0, n/2)
    full[..., h + 1 :] = mirrored[..., :, :, [n - mz for mz in range(h + 1, n)]]
    return full


def half_spectrum(grid: Grid, full: np.ndarray) -> np.ndarray:
    return np.array(full[..., : grid.n_modes // 2 + 1])


def hermitian_defect(full: np.ndarray) -> float:
    """Max ``|c(-k) - conj c(k)|`` relative to max ``|c|``."""
    n = full.shape[-1]
    p = _partner(n)
    flipped = full[..., p, :, :][..., :, p, :][..., :, :, p]
    scale = np.max(np.abs(full))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(flipped - np.conj(full))) / scale)


def write_snapshot(path, field: SpectralVelocity | ScalarSpectralField, time: float) -> None:
    grid = field.grid
    coeffs = field.coeffs if isinstance(field, SpectralVelocity) else field.coeffs[None]
    full = full_spectrum(grid, coeffs)
    header = _HEADER.pack(MAGIC, VERSION, grid.n_modes, grid.box_length, float(time), full.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(full.astype("<c16").tobytes(order="C"))


def read_snapshot(
    path, dealias_fraction: float = 2.0 / 3.0, tol: float = 1e-12
) -> tuple[SpectralVelocity | ScalarSpectralField, float]:
    """Read a snapshot and validate magic, size and Hermitian symmetry.

    Returns ``(field, time)``. Velocity snapshots come back flagged
    divergence-free only if they pass the divergence check.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError(
            f"{path}: truncated header at offset {len(data)} (need {_HEADER.size} bytes)"
        )
    magic, version, n, box_length, time, ncomp = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version} at offset 4")
    if ncomp not in (1, 3):
        raise SnapshotError(f"{path}: component count {ncomp} at offset 28 must be 1 or 3")
    try:
        grid = Grid(int(n), float(box_length), dealias_fraction)
    except ValueError as exc:
        raise SnapshotError(f"{path}: invalid grid header at offset 8: {exc}") from None
    expected = _HEADER.size + ncomp * n**3 * 16
    if len(data) != expected:
        raise SnapshotError(
            f"{path}: truncated or oversized payload: file ends at offset {len(data)}, "
            f"expected {expected}"
        )
    full = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape((ncomp, n, n, n))
    defect = hermitian_defect(full)
    if defect > tol:
        raise SnapshotError(f"{path}: coefficients not Hermitian (relative defect {defect:.3e})")
    half = half_spectrum(grid, full).astype(complex)
    if ncomp == 1:
        return ScalarSpectralField(grid, half[0]), float(time)
    try:
        return SpectralVelocity(grid, half, True), float(time)
    except ValueError:
        return SpectralVelocity(grid, half, False), float(time)
