import numpy as np
import pytest

from nscrit.experiments import InitialDataSpec, make_initial_data
from nscrit.spectral import Grid, PhysicalField, SpectralVelocity, _project, to_spectral

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def tg16(grid16):
    return make_initial_data(InitialDataSpec("taylor_green"), grid16)


@pytest.fixture(scope="session")
def tg32(grid32):
    return make_initial_data(InitialDataSpec("taylor_green"), grid32)


def random_vector_field(grid, seed, divergence_free=False):
    """White-noise vector field, dealiased (optionally projected)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((3,) + grid.physical_shape)
    u = to_spectral(PhysicalField(grid, v), divergence_free=False)
    c = u.coeffs * grid.mask
    if divergence_free:
        c = _project(grid, c)
    return SpectralVelocity(grid, c, divergence_free)


def mesh(grid):
    return np.broadcast_arrays(*grid.coords)


def full_modes(grid, coeffs):
    """Nonzero full-spectrum modes as {(m0, m1, m2): value} (signed indices)."""
    from nscrit.snapshot import full_spectrum

    scalar = np.ndim(coeffs) == 3
    full = full_spectrum(grid, coeffs[None] if scalar else coeffs)
    n = grid.n_modes
    out = {}
    for idx in zip(*np.nonzero(np.abs(full).sum(axis=0) > 1e-14)):
        m = tuple(int(i) if i < n // 2 else int(i) - n for i in idx)
        out[m] = full[(0,) + idx] if scalar else full[(slice(None),) + idx]
    return out


def brute_products(grid, u, v):
    """F_ij(k) = sum_{p+q=k} u_i(p) v_j(q) over retained inputs and outputs."""
    km = grid.kmax_index
    keep = lambda m: all(abs(x) <= km for x in m)  # noqa: E731
    um = {m: c for m, c in full_modes(grid, u.coeffs).items() if keep(m)}
    vm = {m: c for m, c in full_modes(grid, v.coeffs).items() if keep(m)}
    F = {}
    for p, a in um.items():
        for q, b in vm.items():
            k = tuple(x + y for x, y in zip(p, q))
            if keep(k):
                F[k] = F.get(k, 0) + np.outer(a, b)
    return F
