"""Exact evaluation of band-limited fields on small tensor lattices.

Local diagnostics (balls, cylinders, probe regions) need quadrature on a
lattice that scales with the region rather than with the global grid. A
trigonometric polynomial can be evaluated at arbitrary tensor-product points
by three successive one-dimensional contractions.
"""

from __future__ import annotations

import numpy as np

from .spectral import Grid


def cell_centers(center, half_width: float, n_points: int):
    """Cell-centred coordinates of a cube of side ``2*half_width`` per axis."""
    h = 2.0 * half_width / n_points
    offs = -half_width + h * (np.arange(n_points) + 0.5)
    return tuple(float(c) + offs for c in center), h


def ball_mask(axes, center, radius: float) -> np.ndarray:
    x, y, z = axes
    d2 = (
        (x[:, None, None] - center[0]) ** 2
        + (y[None, :, None] - center[1]) ** 2
        + (z[None, None, :] - center[2]) ** 2
    )
    return d2 < radius**2


def evaluate(grid: Grid, coeffs: np.ndarray, axes) -> np.ndarray:
    """Field values at the tensor product of ``axes`` (three 1-D arrays).

    ``coeffs`` has the half-spectrum layout with any number of leading axes;
    the result has shape ``lead + (len(ax0), len(ax1), len(ax2))``.
    """
    kx, ky, kz = (k.ravel() for k in grid.k)
    e0 = np.exp(1j * np.outer(axes[0], kx))
    e1 = np.exp(1j * np.outer(axes[1], ky))
    e2 = np.exp(1j * np.outer(axes[2], kz)) * grid.multiplicity.ravel()[None, :]
    c = np.asarray(coeffs)
    out = np.tensordot(c, e2, axes=([-1], [1]))  # lead, m0, m1, c
    out = np.tensordot(out, e1, axes=([-2], [1]))  # lead, m0, c, b
    out = np.tensordot(out, e0, axes=([-3], [1]))  # lead, c, b, a
    lead = out.ndim - 3
    out = np.moveaxis(out, [lead, lead + 1, lead + 2], [lead + 2, lead + 1, lead])
    return out.real


def derivative_coeffs(grid: Grid, coeffs: np.ndarray, order: int) -> np.ndarray:
    """Spectra of all order-``order`` spatial derivatives.

    For a vector field (3, ...) the result has shape (3, 3**order, ...);
    derivative index ordering is lexicographic over the differentiation axes.
    """
    c = np.asarray(coeffs)
    vec = c.ndim == 4
    cur = c[:, None] if vec else c[None]
    k = grid.k
    for _ in range(order):
        cur = np.concatenate([1j * k[j] * cur for j in range(3)], axis=1 if vec else 0)
    return cur
