"""Initial data families and the experiment harnesses built on the solver."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .diagnostics import decay_diagnostic
from .mild import Caps, Outcome, SolveReport, Trajectory, evolve, ifrk4_run
from .sampling import ball_mask, cell_centers, derivative_coeffs, evaluate
from .snapshot import read_snapshot
from .spectral import (
    Grid,
    SpectralVelocity,
    _hs_sq,
    _nonlinear,
    _project,
    _to_phys,
    _to_spec,
    curl,
    hs_norm,
)

log = logging.getLogger(__name__)

__all__ = [
    "FAMILIES",
    "InitialDataSpec",
    "make_initial_data",
    "CalderonSplit",
    "calderon_split",
    "rescale_data",
    "rescale_to_box",
    "translate_data",
    "scaling_covariance_experiment",
    "ProbeRegion",
    "modulation_sequence",
    "translation_sequence",
    "weak_convergence_experiment",
    "perturbation_energy_experiment",
    "BisectionError",
    "BisectionResult",
    "amplitude_bisection",
    "normalize_trigger_time",
    "decay_ensemble_experiment",
]

FAMILIES = ("taylor_green", "beltrami", "random_divfree", "localized_bump", "from_file")


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialDataSpec:
    """Parameters of an initial-data family.

    ``wavenumber`` sets the base mode of ``taylor_green`` and ``beltrami``.
    ``amplitude`` is the velocity scale for the closed-form families, the
    rms velocity for ``random_divfree`` and the peak lattice speed for
    ``localized_bump``; ``from_file`` multiplies the stored field by it.
    ``offset`` translates the realized field (``localized_bump`` is placed
    at the box centre before translation).
    """

    family: str = "taylor_green"
    amplitude: float = 1.0
    seed: int = 0
    spectrum_slope: float = -2.0
    offset: tuple = (0.0, 0.0, 0.0)
    wavenumber: int = 1
    ring_radius: float = 0.25
    core_radius: float = 0.15
    path: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError("amplitude must be finite and non-negative")
        if len(tuple(self.offset)) != 3:
            raise ValueError("offset must have three components")
        object.__setattr__(self, "offset", tuple(float(o) for o in self.offset))
        if int(self.wavenumber) != self.wavenumber or self.wavenumber < 1:
            raise ValueError("wavenumber must be a positive integer")
        if self.family == "localized_bump" and not 0 < self.core_radius < self.ring_radius:
            raise ValueError("localized_bump needs 0 < core_radius < ring_radius (fractions of the box)")
        if self.family == "from_file" and not self.path:
            raise ValueError("from_file needs a path")

    def with_amplitude(self, amplitude: float) -> "InitialDataSpec":
        return replace(self, amplitude=float(amplitude))


def _mesh(grid: Grid):
    return np.broadcast_arrays(*grid.coords)


def _taylor_green(grid: Grid, spec: InitialDataSpec) -> np.ndarray:
    k = 2 * np.pi / grid.box_length * spec.wavenumber
    X, Y, Z = _mesh(grid)
    return np.stack(
        [
            np.cos(k * X) * np.sin(k * Y) * np.sin(k * Z),
            -np.sin(k * X) * np.cos(k * Y) * np.sin(k * Z),
            np.zeros_like(X),
        ]
    )


def _beltrami(grid: Grid, spec: InitialDataSpec) -> np.ndarray:
    # ABC flow with A = B = C = 1; curl u = k u
    k = 2 * np.pi / grid.box_length * spec.wavenumber
    X, Y, Z = _mesh(grid)
    return np.stack(
        [
            np.sin(k * Z) + np.cos(k * Y),
            np.sin(k * X) + np.cos(k * Z),
            np.sin(k * Y) + np.cos(k * X),
        ]
    )


def _random_taper(grid: Grid) -> np.ndarray:
    """1 up to a third of the cutoff index, cos^2 roll-off to 0 at two thirds.

    Two thirds is where the resolution gate starts counting, so random data
    begins with zero tail fraction.
    """
    mx, my, mz = grid.signed_index
    m = np.sqrt(mx**2 + my**2 + mz**2)
    a, b = grid.kmax_index / 3.0, 2.0 * grid.kmax_index / 3.0
    s = np.clip((m - a) / (b - a), 0.0, 1.0)
    return np.cos(0.5 * np.pi * s) ** 2


def _random_coeffs(grid: Grid, spec: InitialDataSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal((3,) + grid.physical_shape)
    c = _to_spec(grid, noise)
    shape = np.zeros(grid.spectral_shape)
    nz = grid.k2 > 0
    shape[nz] = grid.kmag[nz] ** spec.spectrum_slope * _random_taper(grid)[nz]
    c = _project(grid, c * shape) * grid.mask
    e = _hs_sq(grid, c, 0.0)
    if e == 0:
        raise ValueError("random field vanished after projection; grid too coarse")
    return c * (spec.amplitude / math.sqrt(e / grid.volume))


def _smooth_bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _vortex_ring(grid: Grid, spec: InitialDataSpec) -> SpectralVelocity:
    # curl of psi(rho, z) e_theta, psi a C-infinity bump around the core circle
    L = grid.box_length
    R, delta = spec.ring_radius * L, spec.core_radius * L
    if R + delta >= L / 2:
        raise ValueError("vortex ring does not fit in the box")
    X, Y, Z = (x - L / 2 for x in _mesh(grid))
    rho = np.sqrt(X**2 + Y**2)
    psi = _smooth_bump(np.sqrt((rho - R) ** 2 + Z**2) / delta)
    safe = np.where(rho > 0, rho, 1.0)
    A = np.stack([-psi * Y / safe, psi * X / safe, np.zeros_like(psi)])
    pot = SpectralVelocity(grid, _to_spec(grid, A), divergence_free=False)
    u = curl(pot)
    peak = float(np.max(np.sqrt(np.sum(_to_phys(grid, u.coeffs) ** 2, axis=0))))
    return SpectralVelocity(grid, u.coeffs * (spec.amplitude / peak), True)


def make_initial_data(spec: InitialDataSpec, grid: Grid) -> SpectralVelocity:
    """Realize ``spec`` on ``grid`` as a dealiased, divergence-free field."""
    if spec.family in ("taylor_green", "beltrami"):
        if spec.wavenumber > grid.kmax_index:
            raise ValueError(f"wavenumber {spec.wavenumber} not retained on an N={grid.n_modes} grid")
        phys = _taylor_green(grid, spec) if spec.family == "taylor_green" else _beltrami(grid, spec)
        c = spec.amplitude * _to_spec(grid, phys)
        u = SpectralVelocity(grid, _project(grid, c) * grid.mask, True)
    elif spec.family == "random_divfree":
        u = SpectralVelocity(grid, _random_coeffs(grid, spec), True)
    elif spec.family == "localized_bump":
        ring = _vortex_ring(grid, spec)
        u = SpectralVelocity(grid, ring.coeffs * grid.mask, True)
    else:
        stored, _ = read_snapshot(spec.path, grid.dealias_fraction)
        if not isinstance(stored, SpectralVelocity):
            raise ValueError(f"{spec.path} holds a scalar field, expected a velocity")
        if stored.grid.n_modes != grid.n_modes or not math.isclose(stored.grid.box_length, grid.box_length):
            raise ValueError(
                f"{spec.path} has N={stored.grid.n_modes}, L={stored.grid.box_length}; "
                f"expected N={grid.n_modes}, L={grid.box_length}"
            )
        u = SpectralVelocity(grid, _project(grid, stored.coeffs) * grid.mask * spec.amplitude, True)
    if any(spec.offset):
        u = translate_data(u, spec.offset)
    return u


# ---------------------------------------------------------------------------
# symmetries


def translate_data(u0: SpectralVelocity, shift) -> SpectralVelocity:
    """``u0(x - shift)`` via the phase multiplier ``exp(-i k.shift)``."""
    grid = u0.grid
    phase = np.exp(-1j * sum(k * float(s) for k, s in zip(grid.k, shift)))
    return SpectralVelocity(grid, u0.coeffs * phase, u0.divergence_free)


def rescale_data(u0: SpectralVelocity, lam: int, grid: Grid | None = None) -> SpectralVelocity:
    """``lam * u0(lam * x)`` on the same periodic box.

    Mode ``m`` moves to ``lam * m`` with coefficient ``lam * u_hat(m)``. By
    default the target grid has the smallest power-of-two size at least
    ``lam * N`` so every retained mode of ``u0`` stays retained. The result is ``L/lam``-periodic, so over the box it
    holds ``lam^3`` copies of a period cell: its Hs norm on the box is
    ``lam^{3/2}`` times the scale-invariant per-cell value.
    """
    if isinstance(lam, bool) or int(lam) != lam or lam < 1:
        raise ValueError(f"lam must be a positive integer, got {lam!r}")
    lam = int(lam)
    src = u0.grid
    if grid is None:
        n = 1 << (src.n_modes * lam - 1).bit_length()
        grid = Grid(n, src.box_length, src.dealias_fraction)
    if not math.isclose(grid.box_length, src.box_length):
        raise ValueError("target grid must share the box length")
    c = u0.coeffs
    out = np.zeros(c.shape[:-3] + grid.spectral_shape, dtype=complex)
    nt = grid.n_modes
    mx, my, mz = (m.ravel().astype(int) for m in src.signed_index)
    live = np.abs(c) > 0
    if c.ndim == 4:
        live = live.any(axis=0)
    for idx in np.argwhere(live):
        i, j, l = idx
        tm = lam * np.array([mx[i], my[j], mz[l]])
        if np.any(np.abs(tm) > grid.kmax_index):
            raise ValueError(
                f"mode {(int(mx[i]), int(my[j]), int(mz[l]))} maps beyond the retained range of N={nt}"
            )
        out[..., tm[0] % nt, tm[1] % nt, tm[2]] = lam * c[..., i, j, l]
    return SpectralVelocity(grid, out, u0.divergence_free)


def rescale_to_box(u0: SpectralVelocity, lam: float) -> SpectralVelocity:
    """``lam * u0(lam * x)`` on the box of side ``L / lam`` (any ``lam > 0``).

    Coefficients are multiplied by ``lam`` on an identically indexed grid, so
    every scale-invariant norm is preserved exactly and the solver's discrete
    dynamics map onto themselves with time step ``dt / lam^2``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    g = u0.grid
    grid = Grid(g.n_modes, g.box_length / lam, g.dealias_fraction)
    return SpectralVelocity(grid, lam * u0.coeffs, u0.divergence_free)


def hhalf_per_cell(u: SpectralVelocity, lam: int = 1) -> float:
    """Hs(1/2) norm of one ``L/lam`` period cell of an ``L/lam``-periodic field."""
    return hs_norm(u, 0.5) / lam**1.5


def _map_parallel(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def scaling_covariance_experiment(
    u0: SpectralVelocity,
    lam: int,
    T: float,
    dt: float,
    caps: Caps | None = None,
    workers: int = 1,
) -> dict:
    """Compare ``rescale(u(T))`` with the solution from ``rescale(u0)`` at ``T/lam^2``.

    The fine run uses a ``lam``-times finer grid and ``dt / lam^2``. Returns
    the relative Hs(1/2) discrepancy, or ``None`` with ``flagged=True`` when
    either run fails the resolution gate.
    """
    fine0 = rescale_data(u0, lam)
    jobs = [(u0, T, dt), (fine0, T / lam**2, dt / lam**2)]
    runs = _map_parallel(lambda j: evolve(j[0], j[1], j[2], caps=caps), jobs, workers)
    (coarse, rc), (fine, rf) = runs
    report = {
        "lam": int(lam),
        "T": float(T),
        "dt": float(dt),
        "n_coarse": u0.grid.n_modes,
        "n_fine": fine0.grid.n_modes,
        "outcome_coarse": rc.outcome.value,
        "outcome_fine": rf.outcome.value,
        "hhalf_coarse_T": hhalf_per_cell(coarse[len(coarse) - 1]),
        "hhalf_fine_T_per_cell": hhalf_per_cell(fine[len(fine) - 1], lam),
    }
    if rc.outcome is not Outcome.COMPLETED or rf.outcome is not Outcome.COMPLETED:
        report.update(flagged=True, discrepancy=None)
        return report
    mapped = rescale_data(coarse[len(coarse) - 1], lam, fine0.grid)
    target = fine[len(fine) - 1]
    denom = hs_norm(target, 0.5)
    report.update(flagged=False, discrepancy=hs_norm(mapped - target, 0.5) / denom if denom else 0.0)
    return report


# ---------------------------------------------------------------------------
# Calderon split


@dataclass(frozen=True)
class CalderonSplit:
    a0: SpectralVelocity
    v0: SpectralVelocity
    cutoff_radius: float
    a0_hhalf: float
    v0_l2: float
    eta: float
    message: str = ""


def _cutoff(s: np.ndarray) -> np.ndarray:
    """Smooth radial profile: 1 for s <= 1, 0 for s >= 2."""
    out = np.zeros_like(s)
    out[s <= 1] = 1.0
    band = (s > 1) & (s < 2)
    x = s[band] - 1.0
    f = np.exp(-1.0 / (1.0 - x))
    g = np.exp(-1.0 / x)
    out[band] = f / (f + g)
    return out


def _exact_split(u: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # v = u - phi u, a = u - v: one of the two subtractions is exact, so a + v == u
    v = u - phi * u
    return u - v, v


def calderon_split(u0: SpectralVelocity, eta: float, iterations: int = 60) -> CalderonSplit:
    """``u0 = a0 + v0`` with ``a0`` a smooth low-pass of ``u0`` and ``||a0||_{Hs(1/2)} < eta``.

    The cutoff radius is the largest found by bisection with the bound
    satisfied. Reconstruction ``a0 + v0 == u0`` holds bit-exactly.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    grid = u0.grid
    u = u0.coeffs
    kmag = grid.kmag

    def split(rho):
        phi = _cutoff(kmag / rho) if math.isfinite(rho) else np.ones_like(kmag)
        a, v = _exact_split(u, phi)
        return a, v, math.sqrt(_hs_sq(grid, a, 0.5))

    total = math.sqrt(_hs_sq(grid, u, 0.5))
    k_min = 2 * np.pi / grid.box_length
    message = ""
    if total < eta:
        rho = math.inf
        a, v, norm = split(rho)
    else:
        lo, hi = k_min / 2, float(kmag.max())
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if split(mid)[2] < eta:
                lo = mid
            else:
                hi = mid
        rho = lo
        a, v, norm = split(rho)
        if norm == 0.0:
            shells = np.unique(np.round(kmag[np.abs(u).sum(axis=0) > 0], 12))
            smallest = split(shells[0])[2] if len(shells) else 0.0
            message = f"no nonzero low-pass below eta; smallest shell norm {smallest:.6g}"
    a0 = SpectralVelocity(grid, a, u0.divergence_free)
    v0 = SpectralVelocity(grid, v, u0.divergence_free)
    return CalderonSplit(a0, v0, rho, norm, math.sqrt(_hs_sq(grid, v, 0.0)), float(eta), message)


# ---------------------------------------------------------------------------
# weak convergence


@dataclass(frozen=True)
class ProbeRegion:
    center: tuple
    radius: float
    n_points: int = 12


def modulation_sequence(u0: SpectralVelocity, amplitude: float, wavenumbers: Sequence[int]) -> list:
    """``w_k = P[e(x) cos(m_k x_1)]`` with envelope ``e = u0 / max|u0|``,
    each scaled to Hs(1/2) norm ``amplitude * ||u0||_{Hs(1/2)}``."""
    grid = u0.grid
    env = _to_phys(grid, u0.coeffs)
    env = env / np.max(np.sqrt(np.sum(env**2, axis=0)))
    X = np.broadcast_to(grid.coords[0], grid.physical_shape)
    target = amplitude * hs_norm(u0, 0.5)
    out = []
    for m in wavenumbers:
        k = 2 * np.pi / grid.box_length * m
        c = _project(grid, _to_spec(grid, env * np.cos(k * X))) * grid.mask
        w = SpectralVelocity(grid, c, True)
        out.append(w * (target / hs_norm(w, 0.5)))
    return out


def translation_sequence(bump: SpectralVelocity, shifts: Sequence) -> list:
    return [translate_data(bump, s) for s in shifts]


def _audit_modulation(ws) -> list[float]:
    # an all-zero sequence is trivially weakly null
    ratios = [hs_norm(w, -1.0) / n if (n := hs_norm(w, 0.5)) > 0 else 0.0 for w in ws]
    if any(b >= a > 0 for a, b in zip(ratios, ratios[1:])):
        raise ValueError(f"modulation sequence is not weakly null: Hs(-1)/Hs(1/2) ratios {ratios}")
    return ratios


def _audit_translation(ws, probe: ProbeRegion) -> list[float]:
    grid = ws[0].grid
    axes, h = cell_centers(probe.center, probe.radius, probe.n_points)
    inside = ball_mask(axes, probe.center, probe.radius)
    mass = [float(np.sum(np.sum(evaluate(grid, w.coeffs, axes) ** 2, axis=0)[inside]) * h**3) for w in ws]
    if mass[0] == 0 and mass[-1] == 0:
        return mass
    if mass[-1] >= mass[0] or any(b > a * (1 + 1e-9) + 1e-300 for a, b in zip(mass, mass[1:])):
        raise ValueError(f"translation sequence does not leave the probe region: masses {mass}")
    return mass


def _probe_differences(ref: Trajectory, run: Trajectory, probe: ProbeRegion, T: float) -> dict:
    grid = ref.grid
    axes, h = cell_centers(probe.center, probe.radius, probe.n_points)
    inside = ball_mask(axes, probe.center, probe.radius)
    t = ref.times
    nodes = np.concatenate([[T / 2], t[(t > T / 2) & (t < T)], [T]])
    l3, sup0, sup1 = [], 0.0, 0.0
    for s in nodes:
        d = run.coeffs_at(s) - ref.coeffs_at(s)
        v = evaluate(grid, d, axes)
        mag = np.sqrt(np.sum(v**2, axis=0))[inside]
        l3.append(np.sum(mag**3) * h**3)
        sup0 = max(sup0, float(mag.max()))
        g = evaluate(grid, derivative_coeffs(grid, d, 1), axes)
        sup1 = max(sup1, float(np.sqrt(np.sum(g**2, axis=(0, 1)))[inside].max()))
    return {"l3_diff": float(np.trapezoid(l3, nodes) ** (1 / 3)), "sup_diff": sup0, "grad_sup_diff": sup1}


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def weak_convergence_experiment(
    u0: SpectralVelocity,
    perturbations: Sequence[SpectralVelocity],
    T: float,
    probe: ProbeRegion,
    dt: float,
    kind: str = "modulation",
    stride: int = 1,
    caps: Caps | None = None,
    workers: int = 1,
) -> dict:
    """Solve from ``u0 + w_k`` and from ``u0``; compare on ``probe x [T/2, T]``.

    ``kind`` selects the weak-nullness audit ("modulation": decreasing
    Hs(-1)/Hs(1/2) ratio; "translation": mass in the probe ball decreasing).
    """
    if kind == "modulation":
        audit = _audit_modulation(perturbations)
    elif kind == "translation":
        audit = _audit_translation(perturbations, probe)
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    data = [u0] + [u0 + w for w in perturbations]
    runs = _map_parallel(lambda u: evolve(u, T, dt, stride=stride, caps=caps), data, workers)
    ref, ref_report = runs[0]
    rows = []
    for k, (traj, rep) in enumerate(runs[1:], start=1):
        row = {"k": k, "outcome": rep.outcome.value}
        if rep.outcome is Outcome.COMPLETED and ref_report.outcome is Outcome.COMPLETED:
            row.update(_probe_differences(ref, traj, probe, T))
        else:
            row.update(l3_diff=None, sup_diff=None, grad_sup_diff=None)
        rows.append(row)
    tail = rows[-3:]
    ok = all(r["l3_diff"] is not None for r in tail)
    return {
        "kind": kind,
        "T": float(T),
        "audit": audit,
        "reference_outcome": ref_report.outcome.value,
        "field_scale": float(np.max(np.sqrt(np.sum(_to_phys(u0.grid, u0.coeffs) ** 2, axis=0)))),
        "rows": rows,
        "l3_decreasing_last3": ok and _strictly_decreasing([r["l3_diff"] for r in tail]),
        "sup_decreasing_last3": ok and _strictly_decreasing([r["sup_diff"] for r in tail]),
    }


# ---------------------------------------------------------------------------
# small/large splitting: the v-equation


def _interpolator(traj: Trajectory):
    def at(t):
        return traj.coeffs_at(min(max(t, 0.0), traj.horizon))

    return at


def perturbation_energy_experiment(u0: SpectralVelocity, eta: float, T: float, dt: float) -> dict:
    """Split ``u0 = a0 + v0``, solve for ``a`` and then for ``v`` with ``a`` frozen.

    ``v_t + P[a.grad v + v.grad a + v.grad v] = Delta v``. Reports the
    discrete energy balance of ``v``,
    ``|v(t)|^2 + 2 \\int |grad v|^2 + 2 \\int\\int (v.grad a).v - |v0|^2``
    relative to ``|v0|^2``, and the measured constant
    ``c = |2 \\int\\int (v.grad a).v| / (||a||_{L4 H1} ||v||^{1/2}_{Linf L2} ||grad v||^{3/2}_{L2 L2})``.
    """
    split = calderon_split(u0, eta)
    grid = u0.grid
    a_traj, a_rep = evolve(split.a0, T, dt)
    a_at = _interpolator(a_traj)

    def rhs(t, c):
        a = a_at(t)
        return -_project(grid, _nonlinear(grid, c + a, c + a) - _nonlinear(grid, a, a))

    times, snaps, series, outcome, t_end, message, _ = ifrk4_run(grid, split.v0.coeffs, rhs, T, dt)
    cross = []
    for t, v in zip(times, snaps):
        # (v.grad a).v = v_i d_j(a_i v_j) pairs with v in Fourier space
        n_av = _nonlinear(grid, a_at(t), v)
        cross.append(grid.volume * grid.mode_sum(np.sum((np.conj(v) * n_av).real, axis=0)))
    cross = np.array(cross)
    E = np.array(series.l2) ** 2
    G = np.array(series.h1) ** 2
    diss = cumulative_simpson(G, x=times, initial=0.0)
    cross_cum = cumulative_simpson(cross, x=times, initial=0.0)
    E0 = E[0] if E[0] > 0 else 1.0
    balance = np.abs(E + 2 * diss + 2 * cross_cum - E[0]) / E0
    a_x = (np.trapezoid(np.array(a_rep.x_norm_history.h1) ** 4, a_rep.x_norm_history.times)) ** 0.25
    bound = a_x * math.sqrt(max(np.array(series.l2))) * diss[-1] ** 0.75
    worst = float(np.max(np.abs(2 * cross_cum)))
    return {
        "eta": float(eta),
        "T": float(T),
        "dt": float(dt),
        "a0_hhalf": split.a0_hhalf,
        "v0_l2": split.v0_l2,
        "a_outcome": a_rep.outcome.value,
        "v_outcome": outcome.value,
        "energy_balance_max": float(balance.max()),
        "cross_term_max": worst,
        "a_x_norm": float(a_x),
        "bound_product": float(bound),
        "measured_constant": float(worst / bound) if bound > 0 else 0.0,
    }


# ---------------------------------------------------------------------------
# amplitude bisection


class BisectionError(ValueError):
    def __init__(self, message: str, reports: dict | None = None):
        super().__init__(message)
        self.reports = reports or {}


@dataclass
class BisectionResult:
    """Bracket on the Galerkin threshold proxy (completed below, not above).

    ``label`` is always "Galerkin threshold proxy": the bracket is a property
    of this discretization and its caps, with no claimed continuum meaning.
    """

    lower: float
    upper: float
    iterations: int
    reports: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    label: str = "Galerkin threshold proxy"

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "lower": self.lower,
            "upper": self.upper,
            "iterations": self.iterations,
            "history": [list(b) for b in self.history],
            "runs": {repr(a): r.outcome.value for a, r in sorted(self.reports.items())},
        }


def default_runner(grid: Grid, T: float, dt: float, caps: Caps) -> Callable[[InitialDataSpec], SolveReport]:
    def run(spec: InitialDataSpec) -> SolveReport:
        return evolve(make_initial_data(spec, grid), T, dt, caps=caps)[1]

    return run


def amplitude_bisection(
    spec: InitialDataSpec,
    bracket: tuple[float, float],
    tol: float,
    runner: Callable[[InitialDataSpec], SolveReport],
) -> BisectionResult:
    """Bisect the amplitude between a completed and a non-completed run.

    Stops once ``upper - lower <= tol * a_lo`` with ``a_lo`` the initial lower
    end, i.e. after ``ceil(log2((a_hi - a_lo) / (tol * a_lo)))`` runs.
    ``runner`` maps a spec to a :class:`SolveReport`; see
    :func:`default_runner`.
    """
    a_lo, a_hi = map(float, bracket)
    if not 0 < a_lo < a_hi or not tol > 0:
        raise BisectionError(f"invalid bracket {bracket} or tol {tol}")
    reports = {a_lo: runner(spec.with_amplitude(a_lo)), a_hi: runner(spec.with_amplitude(a_hi))}
    lo_ok = reports[a_lo].outcome is Outcome.COMPLETED
    hi_ok = reports[a_hi].outcome is not Outcome.COMPLETED
    if not (lo_ok and hi_ok):
        raise BisectionError(
            f"bracket does not straddle the threshold: a_lo -> {reports[a_lo].outcome.value}, "
            f"a_hi -> {reports[a_hi].outcome.value}",
            reports,
        )
    lo, hi = a_lo, a_hi
    width_tol = tol * a_lo
    history = [(lo, hi)]
    iterations = 0
    while hi - lo > width_tol:
        mid = 0.5 * (lo + hi)
        rep = runner(spec.with_amplitude(mid))
        reports[mid] = rep
        iterations += 1
        if rep.outcome is Outcome.COMPLETED:
            lo = mid
        else:
            hi = mid
        history.append((lo, hi))
        log.info("bisection %d: [%r, %r] (%s at %r)", iterations, lo, hi, rep.outcome.value, mid)
    result = BisectionResult(lo, hi, iterations, reports, history)
    upper_outcomes = [r.outcome for r in reports.values() if r.outcome is not Outcome.COMPLETED]
    if all(o is Outcome.UNDERRESOLVED for o in upper_outcomes):
        raise BisectionError("every non-completed run was underresolved; refine the grid", reports)
    return result


def _trigger_time(report: SolveReport) -> float:
    if report.outcome is not Outcome.BLOWUP_PROXY:
        raise ValueError(f"run did not trigger the blow-up proxy ({report.outcome.value})")
    return report.t_end


def normalize_trigger_time(u0: SpectralVelocity, report: SolveReport, dt: float, target: float = 1.0):
    """Rescale a proxy-triggering run so the trigger moves to ``target``.

    Uses ``lam = sqrt(t_trigger / target)`` with :func:`rescale_to_box`, which
    maps the discrete dynamics onto themselves with ``dt * target / t_trigger``.
    Returns ``(u0_scaled, dt_scaled, lam)``.
    """
    t_star = _trigger_time(report)
    if t_star <= 0:
        raise ValueError("trigger time must be positive")
    lam = math.sqrt(t_star / target)
    return rescale_to_box(u0, lam), dt / lam**2, lam


# ---------------------------------------------------------------------------
# decay ensemble


def _heat_decay_series(u0: SpectralVelocity, times: np.ndarray) -> np.ndarray:
    grid = u0.grid
    out = []
    for t in times:
        c = np.exp(-grid.k2 * t) * u0.coeffs
        out.append(float(np.sqrt(np.max(np.sum(_to_phys(grid, c) ** 2, axis=0)))))
    return np.sqrt(times) * np.array(out)


def decay_ensemble_experiment(
    spec: InitialDataSpec,
    seeds: Sequence[int],
    grid: Grid,
    T: float,
    dt: float,
    stride: int = 10,
    workers: int = 1,
) -> dict:
    """``sup_t t^{1/2} max|u|`` for each seed against the heat-flow value."""

    def one(seed):
        u0 = make_initial_data(replace(spec, seed=int(seed)), grid)
        traj, rep = evolve(u0, T, dt, stride=stride)
        t, s = decay_diagnostic(traj, 0)
        lin = _heat_decay_series(u0, t)
        return {
            "seed": int(seed),
            "outcome": rep.outcome.value,
            "sup_nse": float(s.max()),
            "sup_heat": float(lin.max()),
            "relative_gap": float(abs(s.max() - lin.max()) / lin.max()),
        }

    members = _map_parallel(one, list(seeds), workers)
    return {"T": float(T), "dt": float(dt), "members": members}

