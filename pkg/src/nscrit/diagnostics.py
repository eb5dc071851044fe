"""Regularity diagnostics on solver trajectories.

Quantities are computed on local cell-centred lattices that scale with the
cylinder (exact point evaluation of the band-limited field, ball membership by
cell centre, uniform weights) and trapezoid/Simpson rules in time over the
snapshots. Sup-norms are lattice maxima, hence lower bounds on the true sup.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson

from .mild import Trajectory
from .pressure import _pressure_coeffs
from .sampling import ball_mask, cell_centers, derivative_coeffs, evaluate
from .spectral import Grid, ScalarSpectralField, _embed, _products, _to_phys, _to_spec

__all__ = [
    "ParabolicCylinder",
    "TildeCylinder",
    "DiagnosticsRecord",
    "Classification",
    "InsufficientResolution",
    "SpaceBump",
    "TestFunction",
    "ckn_quantity",
    "classify_point",
    "local_energy_residual",
    "init_energy_residual",
    "local_l2_continuity",
    "local_energy_norm",
    "decay_diagnostic",
    "derivative_bound_check",
    "time_holder_check",
    "cylinder_sweep",
    "SWEEP_COLUMNS",
    "DEFAULT_EPS0",
]

DEFAULT_EPS0 = 0.05


class InsufficientResolution(ValueError):
    """Snapshots too sparse (or too few) for the requested cylinder."""


class Classification(str, Enum):
    SMALL = "small"
    NOT_SMALL = "not_small"


@dataclass(frozen=True)
class ParabolicCylinder:
    """``Q = B(center_x, radius) x (center_t - radius^2, center_t]``."""

    center_x: tuple
    center_t: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center_x", tuple(float(c) for c in self.center_x))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.center_t - self.radius**2 < -1e-12:
            raise ValueError(
                f"cylinder starts before t=0: center_t={self.center_t}, radius^2={self.radius**2}"
            )

    @property
    def t_start(self) -> float:
        return max(0.0, self.center_t - self.radius**2)

    def half(self) -> "ParabolicCylinder":
        return ParabolicCylinder(self.center_x, self.center_t, self.radius / 2)


@dataclass(frozen=True)
class TildeCylinder:
    """``B(center_x, radius) x (0, radius^2)``."""

    center_x: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center_x", tuple(float(c) for c in self.center_x))
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass
class DiagnosticsRecord:
    """Labelled scalar series plus classification flags."""

    series: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def add(self, label: str, times, values) -> None:
        t = np.asarray(times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"series {label!r} must be ordered by increasing time")
        self.series[label] = (t, np.asarray(values, dtype=float))


def _check_ball(grid: Grid, radius: float) -> None:
    if radius >= grid.box_length / 4:
        raise ValueError(f"ball radius {radius} must be below box_length/4 = {grid.box_length / 4}")


def _time_nodes(traj: Trajectory, t_lo: float, t_hi: float, max_gap: float | None = None) -> np.ndarray:
    """``t_lo``, the snapshot times strictly inside, and ``t_hi``."""
    if t_lo < -1e-12 or t_hi > traj.horizon * (1 + 1e-12) + 1e-14:
        raise ValueError(f"interval [{t_lo}, {t_hi}] outside trajectory [0, {traj.horizon}]")
    eps = 1e-12 * max(1.0, t_hi)
    inner = traj.times[(traj.times > t_lo + eps) & (traj.times < t_hi - eps)]
    nodes = np.concatenate([[max(t_lo, 0.0)], inner, [t_hi]])
    if max_gap is not None and len(nodes) > 1 and np.max(np.diff(nodes)) > max_gap * (1 + 1e-9):
        raise InsufficientResolution(
            f"snapshot spacing {np.max(np.diff(nodes)):.4g} exceeds {max_gap:.4g} on [{t_lo:.4g}, {t_hi:.4g}]"
        )
    return nodes


def _pressure_at(traj: Trajectory, t: float, pressures) -> np.ndarray:
    """Pressure coefficients at ``t``: recomputed from velocity, or
    interpolated from a per-snapshot sequence."""
    if pressures is None:
        uc = traj.coeffs_at(t)
        F = _products(traj.grid, uc, uc)
        return _pressure_coeffs(traj.grid, F)
    stack = np.stack([p.coeffs if isinstance(p, ScalarSpectralField) else p for p in pressures])
    times = traj.times
    j = int(np.clip(np.searchsorted(times, t), 1, len(times) - 1))
    w = (t - times[j - 1]) / (times[j] - times[j - 1])
    w = min(max(w, 0.0), 1.0)
    return (1 - w) * stack[j - 1] + w * stack[j]


def _vector_magnitude(vals: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(vals**2, axis=0))


# ---------------------------------------------------------------------------
# epsilon-regularity quantity


def ckn_quantity(
    traj: Trajectory, cyl: ParabolicCylinder, pressures: Sequence | None = None, n_points: int = 24
) -> float:
    """``r^-2 \\iint_Q (|u|^3 + |p - mean_ball p|^{3/2}) dx dt``.

    The pressure is re-centred by its ball mean in every time slice.
    Requires snapshot spacing at most ``radius^2 / 8`` inside the cylinder.
    """
    grid = traj.grid
    r = cyl.radius
    _check_ball(grid, r)
    nodes = _time_nodes(traj, cyl.center_t - r**2, cyl.center_t, max_gap=r**2 / 8)
    axes, h = cell_centers(cyl.center_x, r, n_points)
    inside = ball_mask(axes, cyl.center_x, r)
    vol = h**3
    vals = []
    for t in nodes:
        u = evaluate(grid, traj.coeffs_at(t), axes)
        p = evaluate(grid, _pressure_at(traj, t, pressures), axes)[inside]
        umag = _vector_magnitude(u)[inside]
        pc = p - p.mean()
        vals.append(np.sum(umag**3 + np.abs(pc) ** 1.5) * vol)
    return float(np.trapezoid(vals, nodes) / r**2)


def classify_point(value: float, eps0: float = DEFAULT_EPS0) -> Classification:
    """``small`` iff ``value < eps0`` (strict).

    A ``small`` verdict certifies regularity of the half cylinder only under
    the hypotheses of the epsilon-regularity criterion and only for the
    (convention-dependent) ``eps0`` used, which callers should echo.
    """
    return Classification.SMALL if value < eps0 else Classification.NOT_SMALL


# ---------------------------------------------------------------------------
# test functions and local energy


@dataclass(frozen=True)
class SpaceBump:
    """Tensor-product bump ``prod_i (1 - ((x_i - c_i)/a)^2)^power`` on ``|x_i - c_i| < a``.

    ``power=3`` gives two continuous derivatives. The Fourier coefficients of
    its periodization are computed by Gauss-Legendre quadrature of each 1-D
    factor (exact to rounding for the wavenumbers of the grid).
    """

    center: tuple
    half_width: float
    power: int = 3

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def squared(self) -> "SpaceBump":
        return SpaceBump(self.center, self.half_width, 2 * self.power)

    def __call__(self, x, y, z):
        out = 1.0
        for xi, ci in zip((x, y, z), self.center):
            s = (np.asarray(xi) - ci) / self.half_width
            out = out * np.where(np.abs(s) < 1, (1 - s**2) ** self.power, 0.0)
        return out

    def coefficients(self, grid: Grid) -> np.ndarray:
        """Half-spectrum coefficients ``(1/L^3) \\int psi e^{-ik.x} dx``."""
        if self.half_width >= grid.box_length / 2:
            raise ValueError("bump support wider than the box")
        nodes, weights = leggauss(max(64, 8 * self.power + 4 * grid.n_modes))
        a = self.half_width
        prof = (1 - nodes**2) ** self.power * weights * a
        factors = []
        for k, c in zip(grid.k, self.center):
            kk = k.ravel()
            phase = np.exp(-1j * np.outer(kk, c + a * nodes))
            factors.append((phase @ prof) / grid.box_length)
        f0, f1, f2 = factors
        return f0[:, None, None] * f1[None, :, None] * f2[None, None, :]


@dataclass(frozen=True)
class TestFunction:
    """Space-time bump ``phi(x, t) = psi(x) * theta(t)``.

    ``theta(t) = (1 - ((t - time_center)/time_half_width)^2)^3`` on its support.
    A support reaching below ``t = 0`` is used for the initial-time form.
    """

    space: SpaceBump
    time_center: float
    time_half_width: float

    __test__ = False  # not a pytest class

    def theta(self, t):
        s = (np.asarray(t, dtype=float) - self.time_center) / self.time_half_width
        return np.where(np.abs(s) < 1, (1 - s**2) ** 3, 0.0)

    def theta_t(self, t):
        s = (np.asarray(t, dtype=float) - self.time_center) / self.time_half_width
        return np.where(np.abs(s) < 1, -6 * s * (1 - s**2) ** 2 / self.time_half_width, 0.0)

    @property
    def t_support(self) -> tuple[float, float]:
        return self.time_center - self.time_half_width, self.time_center + self.time_half_width

    def __call__(self, x, y, z, t):
        return self.space(x, y, z) * self.theta(t)


def _padded_grid(grid: Grid) -> Grid:
    return Grid(2 * grid.n_modes, grid.box_length, grid.dealias_fraction)


def _pair(big: Grid, f_hat: np.ndarray, psi_hat: np.ndarray) -> float:
    """``\\int f psi dx`` for real f, psi from half-spectrum coefficients."""
    return big.volume * big.mode_sum((f_hat * np.conj(psi_hat)).real)


def _energy_densities(grid: Grid, big: Grid, uc: np.ndarray, pc: np.ndarray):
    """Spectra on the padded grid of |u|^2 and of the flux/dissipation density

    ``Delta|u|^2 - div((|u|^2 + 2p) u) - 2|grad u|^2``.
    """
    uh = _embed(grid, big, uc * grid.mask)
    ph = _embed(grid, big, pc)
    u = _to_phys(big, uh)
    p = _to_phys(big, ph)
    q = np.sum(u**2, axis=0)
    k = big.k
    grad2 = np.zeros(big.physical_shape)
    for j in range(3):
        d = _to_phys(big, 1j * k[j] * uh)
        grad2 += np.sum(d**2, axis=0)
    g = q + 2 * p
    q_hat = _to_spec(big, q)
    flux_div = sum(1j * k[j] * _to_spec(big, g * u[j]) for j in range(3))
    b_hat = -big.k2 * q_hat - flux_div - 2 * _to_spec(big, grad2)
    return q_hat, b_hat, _to_spec(big, grad2)


def _local_energy_terms(traj: Trajectory, phi: TestFunction, pressures, t_lo: float, t_hi: float):
    grid = traj.grid
    big = _padded_grid(grid)
    psi_hat = phi.space.coefficients(big)
    nodes = _time_nodes(traj, t_lo, t_hi)
    integrand, dissipation = [], []
    for t in nodes:
        q_hat, b_hat, g2_hat = _energy_densities(grid, big, traj.coeffs_at(t), _pressure_at(traj, t, pressures))
        a = _pair(big, q_hat, psi_hat)
        b = _pair(big, b_hat, psi_hat)
        integrand.append(float(phi.theta_t(t)) * a + float(phi.theta(t)) * b)
        dissipation.append(2 * float(phi.theta(t)) * _pair(big, g2_hat, psi_hat))
    return nodes, np.array(integrand), np.array(dissipation), psi_hat, big


def _time_integral(values, nodes) -> float:
    if len(nodes) < 3:
        return float(np.trapezoid(values, nodes))
    return float(simpson(values, x=nodes))


def local_energy_residual(
    traj: Trajectory, phi: TestFunction, pressures: Sequence | None = None, return_scale: bool = False
):
    """Right minus left side of the local energy inequality.

    ``\\iint |u|^2 (phi_t + Delta phi) + (|u|^2 + 2p) u.grad phi - 2 |grad u|^2 phi``

    (with ``Delta phi`` in the first term). Spatial integrals are exact Fourier
    pairings against the bump's coefficients; time integrals use Simpson's
    rule over the snapshots. With ``return_scale`` also returns
    ``\\iint 2 |grad u|^2 phi``.
    """
    t0, t1 = phi.t_support
    if t0 < 0 or t1 > traj.horizon * (1 + 1e-12):
        raise ValueError(f"test function support [{t0}, {t1}] leaves trajectory range [0, {traj.horizon}]")
    _check_support(traj.grid, phi.space)
    nodes, integrand, diss, _, _ = _local_energy_terms(traj, phi, pressures, t0, t1)
    res = _time_integral(integrand, nodes)
    if return_scale:
        return res, _time_integral(diss, nodes)
    return res


def _check_support(grid: Grid, bump: SpaceBump) -> None:
    if bump.half_width >= grid.box_length / 2:
        raise ValueError("test function support leaves the periodic box")


def init_energy_residual(
    u0, traj: Trajectory, phi0: TestFunction, pressures: Sequence | None = None, return_scale: bool = False
):
    """Residual of the initial-time local energy form.

    ``\\int |u_0|^2 phi(x, 0) + \\int_0^T \\int [|u|^2 (phi_t + Delta phi)
    + (|u|^2 + 2p) u.grad phi - 2 |grad u|^2 phi]``, with ``phi0`` nonzero at
    ``t = 0`` and supported before the trajectory horizon.
    """
    t0, t1 = phi0.t_support
    if t1 > traj.horizon * (1 + 1e-12):
        raise ValueError(f"test function support ends at {t1}, beyond horizon {traj.horizon}")
    _check_support(traj.grid, phi0.space)
    nodes, integrand, diss, psi_hat, big = _local_energy_terms(traj, phi0, pressures, 0.0, t1)
    u0c = u0.coeffs if hasattr(u0, "coeffs") else u0
    q0 = np.sum(_to_phys(big, _embed(traj.grid, big, u0c)) ** 2, axis=0)
    initial = float(phi0.theta(0.0)) * _pair(big, _to_spec(big, q0), psi_hat)
    res = initial + _time_integral(integrand, nodes)
    if return_scale:
        return res, _time_integral(diss, nodes)
    return res


def local_l2_continuity(traj: Trajectory, u0, psi: SpaceBump, times) -> np.ndarray:
    """``||(u(t) - u_0) psi||_{L^2}`` at each requested time."""
    grid = traj.grid
    big = _padded_grid(grid)
    psi2_hat = psi.squared().coefficients(big)
    u0c = u0.coeffs if hasattr(u0, "coeffs") else u0
    out = []
    for t in times:
        d = _to_phys(big, _embed(grid, big, traj.coeffs_at(t) - u0c))
        out.append(math.sqrt(max(_pair(big, _to_spec(big, np.sum(d**2, axis=0)), psi2_hat), 0.0)))
    return np.array(out)


# ---------------------------------------------------------------------------
# energy norms, decay and derivative bounds


def local_energy_norm(traj: Trajectory, tc: TildeCylinder, n_points: int = 24) -> float:
    """``||u||^2_{L^inf L^2} + ||grad u||^2_{L^2 L^2}`` on ``B x (0, r^2)``."""
    grid = traj.grid
    r = tc.radius
    _check_ball(grid, r)
    if r**2 > traj.horizon * (1 + 1e-12):
        raise ValueError(f"radius^2 = {r**2} exceeds trajectory horizon {traj.horizon}")
    nodes = _time_nodes(traj, 0.0, r**2)
    axes, h = cell_centers(tc.center_x, r, n_points)
    inside = ball_mask(axes, tc.center_x, r)
    vol = h**3
    l2, g2 = [], []
    for t in nodes:
        c = traj.coeffs_at(t)
        u = evaluate(grid, c, axes)
        du = evaluate(grid, derivative_coeffs(grid, c, 1), axes)
        l2.append(np.sum(np.sum(u**2, axis=0)[inside]) * vol)
        g2.append(np.sum(np.sum(du**2, axis=(0, 1))[inside]) * vol)
    return float(max(l2) + np.trapezoid(g2, nodes))


def decay_diagnostic(traj: Trajectory, l: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``t^{(l+1)/2} max_lattice |grad^l u(t)|`` over the snapshots."""
    if not 0 <= l <= 3:
        raise ValueError("derivative order must be between 0 and 3")
    grid = traj.grid
    vals = []
    for c in traj.coeffs:
        d = _to_phys(grid, derivative_coeffs(grid, c, l))
        vals.append(float(np.sqrt(np.max(np.sum(d**2, axis=(0, 1))))))
    t = traj.times
    return t, t ** ((l + 1) / 2) * np.array(vals)


def _half_cylinder_nodes(traj: Trajectory, cyl: ParabolicCylinder):
    half = cyl.half()
    _check_ball(traj.grid, cyl.radius)
    return half, _time_nodes(traj, cyl.center_t - half.radius**2, cyl.center_t)


def derivative_bound_check(traj: Trajectory, cyl: ParabolicCylinder, k: int = 0, n_points: int = 24) -> float:
    """``r^{1+k} sup_{Q(z0, r/2)} |grad^k u|`` (dimensionless)."""
    grid = traj.grid
    half, nodes = _half_cylinder_nodes(traj, cyl)
    axes, _ = cell_centers(half.center_x, half.radius, n_points)
    inside = ball_mask(axes, half.center_x, half.radius)
    best = 0.0
    for t in nodes:
        d = evaluate(grid, derivative_coeffs(grid, traj.coeffs_at(t), k), axes)
        best = max(best, float(np.sqrt(np.max(np.sum(d**2, axis=(0, 1))[inside]))))
    return best * cyl.radius ** (1 + k)


def time_holder_check(traj: Trajectory, cyl: ParabolicCylinder, n_points: int = 16) -> float:
    """``max |u(x,t) - u(x,t')| / |t - t'|^{1/3}`` over snapshot pairs in ``Q(z0, r/2)``."""
    grid = traj.grid
    half = cyl.half()
    _check_ball(grid, cyl.radius)
    lo = cyl.center_t - half.radius**2
    sel = np.nonzero((traj.times > lo + 1e-14) & (traj.times <= cyl.center_t + 1e-12))[0]
    if len(sel) < 4:
        raise InsufficientResolution(f"need at least 4 snapshots in the half cylinder, found {len(sel)}")
    axes, _ = cell_centers(half.center_x, half.radius, n_points)
    inside = ball_mask(axes, half.center_x, half.radius)
    vals = [evaluate(grid, traj.coeffs[i], axes)[:, inside] for i in sel]
    best = 0.0
    for a in range(len(sel)):
        for b in range(a + 1, len(sel)):
            dt = traj.times[sel[b]] - traj.times[sel[a]]
            diff = np.max(_vector_magnitude(vals[b] - vals[a]))
            best = max(best, float(diff / dt ** (1.0 / 3.0)))
    return best


# ---------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = (
    "center_x",
    "center_y",
    "center_z",
    "center_t",
    "r",
    "ckn_value",
    "classification",
    "energy_norm_sq",
    "energy_over_r",
)


def cylinder_sweep(
    traj: Trajectory,
    centers: Sequence,
    radii: Sequence[float],
    center_t: float,
    eps0: float = DEFAULT_EPS0,
    n_points: int = 16,
    workers: int = 1,
) -> list[dict]:
    """CKN value, classification and Lemarie energy ratio for each (center, radius).

    Rows are ordered by center then radius whatever the worker count. The
    energy columns are NaN when ``r^2`` exceeds the trajectory horizon.
    """
    p_cache = [
        ScalarSpectralField(traj.grid, _pressure_coeffs(traj.grid, _products(traj.grid, c, c)))
        for c in traj.coeffs
    ]

    def one(task):
        c, r = task
        cyl = ParabolicCylinder(tuple(c), center_t, r)
        value = ckn_quantity(traj, cyl, p_cache, n_points)
        if r**2 <= traj.horizon * (1 + 1e-12):
            e = local_energy_norm(traj, TildeCylinder(tuple(c), r), n_points)
        else:
            e = float("nan")
        return {
            "center_x": float(c[0]),
            "center_y": float(c[1]),
            "center_z": float(c[2]),
            "center_t": float(center_t),
            "r": float(r),
            "ckn_value": value,
            "classification": classify_point(value, eps0).value,
            "energy_norm_sq": e,
            "energy_over_r": e / r,
        }

    tasks = [(c, r) for c in centers for r in radii]
    if workers <= 1:
        return [one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, tasks))
