"""Navier-Stokes evolution two ways: Duhamel/Picard fixed point and
integrating-factor RK4 time stepping, plus the blow-up proxy classifier.

Units: the equation is ``u_t + div(u (x) u) + grad p - Delta u = 0`` with unit
viscosity, on the periodic box of the grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .spectral import (
    Grid,
    SpectralVelocity,
    _hermitian_fix,
    _hs_sq,
    _nonlinear,
    _project,
    _tail_fraction,
    _to_phys,
)

log = logging.getLogger(__name__)

__all__ = [
    "Outcome",
    "Caps",
    "NormSeries",
    "Trajectory",
    "SolveReport",
    "CFLError",
    "PicardError",
    "heat_propagate",
    "duhamel_bilinear",
    "duhamel_integral",
    "stokes_mild",
    "picard_solve",
    "evolve",
    "x_norm",
    "detect_blowup_proxy",
    "energy_budget_defect",
    "cfl_number",
]


class Outcome(str, Enum):
    COMPLETED = "completed"
    BLOWUP_PROXY = "blowup_proxy"
    UNDERRESOLVED = "underresolved"


class CFLError(ValueError):
    pass


class PicardError(RuntimeError):
    """Picard iteration hit ``max_iter`` without converging or diverging."""


@dataclass(frozen=True)
class Caps:
    """Thresholds for the blow-up proxy.

    ``hhalf_factor`` caps the H^{1/2} norm relative to its initial value,
    ``x_norm`` (optional) caps the cumulative L^4_t H^1_x norm, and
    ``tail_fraction`` is the resolution gate.
    """

    hhalf_factor: float = 20.0
    tail_fraction: float = 1e-3
    x_norm: float | None = None


@dataclass
class NormSeries:
    """Per-step norms of a run; columns of the norm CSV."""

    times: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    hhalf: list = field(default_factory=list)
    h1: list = field(default_factory=list)
    x_norm_cum: list = field(default_factory=list)
    tail_fraction: list = field(default_factory=list)

    COLUMNS = ("time", "l2", "hhalf", "h1", "x_norm_cum", "tail_fraction")

    def append(self, grid: Grid, t: float, c: np.ndarray) -> None:
        h1 = math.sqrt(_hs_sq(grid, c, 1.0))
        if self.times:
            dt = t - self.times[-1]
            prev4 = self.x_norm_cum[-1] ** 4
            x4 = prev4 + 0.5 * dt * (self.h1[-1] ** 4 + h1**4)
        else:
            x4 = 0.0
        self.times.append(float(t))
        self.l2.append(math.sqrt(_hs_sq(grid, c, 0.0)))
        self.hhalf.append(math.sqrt(_hs_sq(grid, c, 0.5)))
        self.h1.append(h1)
        self.x_norm_cum.append(x4**0.25)
        self.tail_fraction.append(_tail_fraction(grid, c))

    def rows(self):
        return zip(self.times, self.l2, self.hhalf, self.h1, self.x_norm_cum, self.tail_fraction)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered velocity snapshots; ``coeffs`` has shape (n_t, 3, ...)."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray
    dt_policy: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 5 or c.shape[1:] != (3,) + self.grid.spectral_shape:
            raise ValueError(f"snapshot array shape {c.shape} does not match grid")
        if len(t) != len(c):
            raise ValueError("snapshot count differs from time count")
        if len(t) == 0 or t[0] != 0.0:
            raise ValueError("times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_fields(cls, times, fields, dt_policy=None) -> "Trajectory":
        fields = list(fields)
        return cls(fields[0].grid, np.asarray(times), np.stack([f.coeffs for f in fields]), dt_policy or {})

    @cached_property
    def snapshots(self) -> tuple[SpectralVelocity, ...]:
        return tuple(SpectralVelocity(self.grid, c, True) for c in self.coeffs)

    def __getitem__(self, i: int) -> SpectralVelocity:
        return SpectralVelocity(self.grid, self.coeffs[i], True)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def coeffs_at(self, t: float) -> np.ndarray:
        """Coefficients at time ``t``, linear in time between snapshots."""
        times = self.times
        if t < -1e-14 or t > times[-1] * (1 + 1e-12) + 1e-14:
            raise ValueError(f"time {t} outside trajectory range [0, {times[-1]}]")
        j = int(np.searchsorted(times, t))
        if j < len(times) and abs(times[j] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.coeffs[j]
        if j > 0 and abs(times[j - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.coeffs[j - 1]
        j = min(max(j, 1), len(times) - 1)
        w = (t - times[j - 1]) / (times[j] - times[j - 1])
        return (1 - w) * self.coeffs[j - 1] + w * self.coeffs[j]

    def at(self, t: float) -> SpectralVelocity:
        return SpectralVelocity(self.grid, self.coeffs_at(t), True)


@dataclass
class SolveReport:
    outcome: Outcome
    t_end: float
    x_norm_history: NormSeries
    picard_iterations: int | None = None
    contraction_ratios: list = field(default_factory=list)
    difference_norms: list = field(default_factory=list)
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "t_end": self.t_end,
            "picard_iterations": self.picard_iterations,
            "contraction_ratios": list(self.contraction_ratios),
            "message": self.message,
        }


# ---------------------------------------------------------------------------
# linear part


def heat_propagate(u: SpectralVelocity, t: float) -> SpectralVelocity:
    """Apply the heat semigroup ``exp(-|k|^2 t)`` mode-wise."""
    if t < 0:
        raise ValueError(f"heat propagation needs t >= 0, got {t}")
    return SpectralVelocity(u.grid, np.exp(-u.grid.k2 * t) * u.coeffs, u.divergence_free)


# ---------------------------------------------------------------------------
# Duhamel integral


def _graded_nodes(h: float, quad_nodes: int):
    """Gauss-Legendre nodes/weights for s = t - tau^2, tau on [0, sqrt(h)]."""
    x, w = np.polynomial.legendre.leggauss(quad_nodes)
    half = 0.5 * math.sqrt(h)
    tau = half * (x + 1)
    return tau, 2 * tau * w * half


def _interval_integral(grid, spline, t_right, h, quad_nodes):
    """\\int_{t_right-h}^{t_right} S(t_right - s) F(s) ds by graded Gauss-Legendre."""
    tau, w = _graded_nodes(h, quad_nodes)
    values = spline(t_right - tau**2)
    out = np.zeros(values.shape[1:], dtype=complex)
    for q in range(len(tau)):
        out += w[q] * np.exp(-grid.k2 * tau[q] ** 2) * values[q]
    return out


def duhamel_integral(
    grid: Grid, times: np.ndarray, forcing: np.ndarray, targets, quad_nodes: int = 16
) -> np.ndarray:
    """``\\int_0^t S(t-s) F(s) ds`` at each target time.

    ``forcing`` holds F at ``times`` (leading axis); F is interpolated by a
    cubic spline in time. Each lattice interval is integrated with the graded
    substitution ``s = t - tau^2`` and the accumulated integral is carried
    forward by the semigroup.
    """
    times = np.asarray(times, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(targets < 0) or np.any(targets > times[-1] * (1 + 1e-12)):
        raise ValueError("target time beyond the forcing time range")
    if len(times) == 1:
        return np.zeros((len(targets),) + forcing.shape[1:], dtype=complex)
    spline = CubicSpline(times, forcing, axis=0)
    order = np.argsort(targets)
    out = np.empty((len(targets),) + forcing.shape[1:], dtype=complex)
    acc = np.zeros(forcing.shape[1:], dtype=complex)
    t_acc = 0.0
    for idx in order:
        t = targets[idx]
        # carry acc over every full lattice interval below t
        for t_node in times[(times > t_acc) & (times <= t)]:
            h = t_node - t_acc
            acc = np.exp(-grid.k2 * h) * acc + _interval_integral(grid, spline, t_node, h, quad_nodes)
            t_acc = t_node
        if t > t_acc:
            h = t - t_acc
            out[idx] = np.exp(-grid.k2 * h) * acc + _interval_integral(grid, spline, t, h, quad_nodes)
        else:
            out[idx] = acc
    return out


def _bilinear_forcing(grid: Grid, uc: np.ndarray, vc: np.ndarray) -> np.ndarray:
    """P div f with f_ij = -u_i v_j, i.e. -P div(u (x) v), per time slice."""
    out = np.empty_like(uc)
    for m in range(len(uc)):
        vh = uc[m] if vc is uc else vc[m]
        out[m] = -_project(grid, _nonlinear(grid, uc[m], vh))
    return out


def duhamel_bilinear(u: Trajectory, v: Trajectory, t: float, quad_nodes: int = 16) -> SpectralVelocity:
    """``B(u, v)(t) = \\int_0^t S(t-s) P div f(s) ds`` with ``f_ij = -u_i v_j``."""
    if u.grid != v.grid:
        raise ValueError("grid mismatch")
    if len(u.times) != len(v.times) or not np.allclose(u.times, v.times, rtol=0, atol=1e-14):
        raise ValueError("trajectories must share their time lattice")
    if t < 0 or t > u.horizon * (1 + 1e-12):
        raise ValueError(f"t={t} beyond trajectory range [0, {u.horizon}]")
    vc = u.coeffs if v is u else v.coeffs
    forcing = _bilinear_forcing(u.grid, u.coeffs, vc)
    val = duhamel_integral(u.grid, u.times, forcing, [t], quad_nodes)[0]
    return SpectralVelocity(u.grid, val, True)


def stokes_mild(
    u0: SpectralVelocity, times, f_hat: np.ndarray, quad_nodes: int = 16
) -> Trajectory:
    """Mild solution of the forced Stokes problem ``u_t + grad p - Delta u = d_k f_k``.

    ``f_hat`` has shape (n_t, 3, 3, ...) with ``f_hat[m, i, j]`` the spectrum
    of ``f_ij`` at ``times[m]``.
    """
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    kx, ky, kz = grid.k
    forcing = np.empty((len(times), 3) + grid.spectral_shape, dtype=complex)
    for m in range(len(times)):
        div = 1j * (kx * f_hat[m, :, 0] + ky * f_hat[m, :, 1] + kz * f_hat[m, :, 2])
        forcing[m] = _project(grid, div)
    duh = duhamel_integral(grid, times, forcing, times, quad_nodes)
    lin = np.exp(-grid.k2[None] * times[:, None, None, None, None]) * u0.coeffs[None]
    return Trajectory(grid, times, lin + duh, {"scheme": "stokes_mild", "quad_nodes": quad_nodes})


# ---------------------------------------------------------------------------
# X-norm


def _h1_fourth(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return np.array([_hs_sq(grid, c, 1.0) ** 2 for c in coeffs])


def _x_norm_lattice(grid: Grid, times: np.ndarray, coeffs: np.ndarray) -> float:
    return float(np.trapezoid(_h1_fourth(grid, coeffs), times) ** 0.25)


def x_norm(traj: Trajectory, T: float | None = None) -> float:
    """``(\\int_0^T ||u||_{H^1}^4 dt)^{1/4}`` by the trapezoid rule on snapshot times."""
    if T is None:
        T = traj.horizon
    if T < 0 or T > traj.horizon * (1 + 1e-12):
        raise ValueError(f"T={T} outside trajectory range [0, {traj.horizon}]")
    vals = _h1_fourth(traj.grid, traj.coeffs)
    times = traj.times
    inside = times <= T
    t_use = times[inside]
    v_use = vals[inside]
    if t_use[-1] < T:
        v_end = np.interp(T, times, vals)
        t_use = np.append(t_use, T)
        v_use = np.append(v_use, v_end)
    return float(np.trapezoid(v_use, t_use) ** 0.25)


# ---------------------------------------------------------------------------
# Picard iteration


def picard_solve(
    u0: SpectralVelocity,
    horizon: float,
    tol: float = 1e-10,
    max_iter: int = 50,
    n_intervals: int = 64,
    quad_nodes: int = 16,
    growth_window: int = 3,
) -> tuple[Trajectory, SolveReport]:
    """Iterate ``u <- U + B(u, u)`` on a uniform time lattice.

    Convergence is declared when successive iterates differ by less than
    ``tol`` in the X-norm. ``growth_window`` consecutive growing differences
    (or a non-finite iterate) end the run as ``blowup_proxy`` for this
    interval length. Raises :class:`PicardError` if neither happens within
    ``max_iter`` iterations.
    """
    if not u0.divergence_free:
        raise ValueError("initial data must be divergence-free")
    grid = u0.grid
    times = np.linspace(0.0, horizon, n_intervals + 1)
    U = np.exp(-grid.k2[None] * times[:, None, None, None, None]) * u0.coeffs[None]
    U = np.stack([_hermitian_fix(grid, c) for c in U])
    u = U
    diffs: list[float] = []
    ratios: list[float] = []
    policy = {"scheme": "picard", "n_intervals": n_intervals, "quad_nodes": quad_nodes}
    outcome = None
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        forcing = _bilinear_forcing(grid, u, u)
        new = U + duhamel_integral(grid, times, forcing, times, quad_nodes)
        new = np.stack([_hermitian_fix(grid, c) for c in new])
        if not np.all(np.isfinite(new)):
            outcome = Outcome.BLOWUP_PROXY
            break
        d = _x_norm_lattice(grid, times, new - u)
        if diffs:
            ratios.append(d / diffs[-1] if diffs[-1] > 0 else 0.0)
        diffs.append(d)
        u = new
        log.debug("picard iteration %d: |du|_X = %.3e", it, d)
        if d < tol:
            outcome = Outcome.COMPLETED
            break
        if len(ratios) >= growth_window and all(r > 1 for r in ratios[-growth_window:]):
            outcome = Outcome.BLOWUP_PROXY
            break
    if outcome is None:
        raise PicardError(
            f"no convergence decision after {max_iter} iterations (last |du|_X={diffs[-1]:.3e})"
        )
    series = NormSeries()
    if outcome is Outcome.COMPLETED:
        for t, c in zip(times, u):
            series.append(grid, t, c)
        traj = Trajectory(grid, times, u, policy)
    else:
        traj = Trajectory(grid, times, U, policy)
        for t, c in zip(times, U):
            series.append(grid, t, c)
    report = SolveReport(
        outcome=outcome,
        t_end=float(horizon) if outcome is Outcome.COMPLETED else 0.0,
        x_norm_history=series,
        picard_iterations=iterations,
        contraction_ratios=ratios,
        difference_norms=diffs,
        message="" if outcome is Outcome.COMPLETED else "Picard iterates stopped contracting",
    )
    return traj, report


# ---------------------------------------------------------------------------
# integrating-factor RK4


def cfl_number(u: SpectralVelocity | np.ndarray, dt: float, grid: Grid | None = None) -> float:
    if isinstance(u, SpectralVelocity):
        grid, c = u.grid, u.coeffs
    else:
        c = u
    phys = _to_phys(grid, c)
    umax = float(np.sqrt(np.max(np.sum(phys**2, axis=0))))
    return umax * dt / grid.dx


def _classify(caps: Caps, hhalf0: float, hhalf: float, xcum: float, tail: float) -> Outcome | None:
    if tail > caps.tail_fraction:
        return Outcome.UNDERRESOLVED
    if hhalf0 > 0 and hhalf > caps.hhalf_factor * hhalf0:
        return Outcome.BLOWUP_PROXY
    if caps.x_norm is not None and xcum > caps.x_norm:
        return Outcome.BLOWUP_PROXY
    return None


def ifrk4_run(
    grid: Grid,
    c0: np.ndarray,
    rhs: Callable[[float, np.ndarray], np.ndarray],
    horizon: float,
    dt: float,
    stride: int = 1,
    caps: Caps | None = None,
    on_step: Callable[[float, np.ndarray], None] | None = None,
):
    """Integrating-factor (Lawson) RK4 for ``c_t = -|k|^2 c + rhs(t, c)``.

    Returns ``(times, snapshots, series, outcome, t_end, message)``.
    """
    nsteps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    h = horizon / nsteps
    E1 = np.exp(-grid.k2 * h)
    E2 = np.exp(-grid.k2 * h / 2)
    c = _hermitian_fix(grid, c0)
    series = NormSeries()
    series.append(grid, 0.0, c)
    if on_step is not None:
        on_step(0.0, c)
    hhalf0 = series.hhalf[0]
    times = [0.0]
    snaps = [c]
    outcome, message, t = Outcome.COMPLETED, "", 0.0
    for step in range(1, nsteps + 1):
        t0 = (step - 1) * h
        k1 = rhs(t0, c)
        k2 = rhs(t0 + h / 2, E2 * (c + 0.5 * h * k1))
        k3 = rhs(t0 + h / 2, E2 * c + 0.5 * h * k2)
        k4 = rhs(t0 + h, E1 * c + h * E2 * k3)
        c = E1 * c + (h / 6) * (E1 * k1 + 2 * E2 * (k2 + k3) + k4)
        c = _hermitian_fix(grid, _project(grid, c))
        t = step * h if step < nsteps else float(horizon)
        if not np.all(np.isfinite(c)):
            outcome, message = Outcome.UNDERRESOLVED, f"non-finite coefficients at t={t:.6g}"
            t = t0
            break
        series.append(grid, t, c)
        if on_step is not None:
            on_step(t, c)
        if step % stride == 0 or step == nsteps:
            times.append(t)
            snaps.append(c)
        if caps is not None:
            verdict = _classify(caps, hhalf0, series.hhalf[-1], series.x_norm_cum[-1], series.tail_fraction[-1])
            if verdict is not None:
                outcome = verdict
                message = f"{verdict.value} triggered at t={t:.6g}"
                if times[-1] != t:
                    times.append(t)
                    snaps.append(c)
                break
    return np.array(times), np.stack(snaps), series, outcome, t, message, h


def evolve(
    u0: SpectralVelocity,
    horizon: float,
    dt: float,
    stride: int = 1,
    caps: Caps | None = None,
    cfl_limit: float = 0.5,
) -> tuple[Trajectory, SolveReport]:
    """Advance ``u_hat_t = -|k|^2 u_hat - P div(u (x) u)^`` by IF-RK4 with fixed ``dt``.

    Snapshots are kept every ``stride`` steps (and at the final step); the
    norm series is recorded every step. With ``caps`` the run stops at the
    first resolution or norm-cap event.
    """
    if not u0.divergence_free:
        raise ValueError("initial data must be divergence-free")
    grid = u0.grid
    cfl = cfl_number(u0, dt)
    if not cfl < cfl_limit:
        raise CFLError(f"CFL number {cfl:.3f} exceeds limit {cfl_limit} (dt={dt}, dx={grid.dx:.4g})")

    def rhs(t, c):
        return -_project(grid, _nonlinear(grid, c, c))

    times, snaps, series, outcome, t_end, message, h = ifrk4_run(
        grid, u0.coeffs, rhs, horizon, dt, stride, caps
    )
    policy = {"scheme": "ifrk4", "dt": h, "stride": stride}
    traj = Trajectory(grid, times, snaps, policy)
    if outcome is Outcome.COMPLETED:
        t_end = float(horizon)
    report = SolveReport(outcome, float(t_end), series, message=message)
    return traj, report


def energy_budget_defect(series: NormSeries) -> np.ndarray:
    """``|E(t) + 2\\int_0^t ||grad u||^2 ds - E(0)| / E(0)`` at each recorded time.

    ``E = \\int |u|^2``; the dissipation integral uses cumulative Simpson on the
    per-step series.
    """
    t = series.array("times")
    E = series.array("l2") ** 2
    if E[0] == 0:
        return np.zeros_like(E)
    diss = 2 * series.array("h1") ** 2
    if len(t) < 3:
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (diss[1:] + diss[:-1]))])
    else:
        cum = cumulative_simpson(diss, x=t, initial=0.0)
    return np.abs(E + cum - E[0]) / E[0]


def detect_blowup_proxy(traj: Trajectory | None, report: SolveReport, caps: Caps = Caps()) -> Outcome:
    """Classify a run from its norm history (heuristic, never a singularity claim).

    ``blowup_proxy`` when the H^{1/2} norm (or X-norm, if capped) crosses its
    cap while the tail fraction is below the gate; ``underresolved`` when the
    tail fraction crosses the gate first; otherwise ``completed``.
    """
    s = report.x_norm_history
    if not s.times and traj is not None:
        s = NormSeries()
        for t, c in zip(traj.times, traj.coeffs):
            s.append(traj.grid, t, c)
    if not s.times:
        return report.outcome
    hhalf0 = s.hhalf[0]
    for hh, xc, tf in zip(s.hhalf, s.x_norm_cum, s.tail_fraction):
        verdict = _classify(caps, hhalf0, hh, xc, tf)
        if verdict is not None:
            return verdict
    if report.outcome is Outcome.UNDERRESOLVED:
        return Outcome.UNDERRESOLVED
    return Outcome.COMPLETED
