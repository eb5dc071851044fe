import json

import numpy as np
import pytest
from conftest import brute_products, full_modes, mesh, random_vector_field

from nscrit.experiments import InitialDataSpec, make_initial_data
from nscrit.pressure import (
    harmonic_oscillation_ratio,
    mollified_indicator,
    pressure_from_velocity,
    windowed_pressure_split,
    write_split_sidecar,
)
from nscrit.sampling import ball_mask, cell_centers, evaluate
from nscrit.spectral import (
    Grid,
    PhysicalField,
    ScalarSpectralField,
    SpectralVelocity,
    _nonlinear,
    _project,
    lp_norm,
    to_physical,
    to_spectral,
)


def test_beltrami_pressure(grid16):
    u = make_initial_data(InitialDataSpec("beltrami"), grid16)
    p = to_physical(pressure_from_velocity(u)).values
    q = -0.5 * np.sum(to_physical(u).values ** 2, axis=0)
    np.testing.assert_allclose(p, q - q.mean(), rtol=0, atol=1e-10)


def test_taylor_green_pressure(grid16, tg16):
    X, Y, Z = mesh(grid16)
    expected = (np.cos(2 * X) + np.cos(2 * Y)) * (np.cos(2 * Z) - 2) / 16
    p = to_physical(pressure_from_velocity(tg16)).values
    np.testing.assert_allclose(p, expected - expected.mean(), atol=1e-13)


def test_zero_velocity(grid16):
    z = SpectralVelocity(grid16, np.zeros((3,) + grid16.spectral_shape, dtype=complex))
    assert not np.any(pressure_from_velocity(z).coeffs)


def test_two_mode_brute_force():
    g = Grid(8)
    X, Y, Z = mesh(g)
    v = np.zeros((3,) + g.physical_shape)
    v[1] = np.sin(X)
    v[0] = 0.7 * np.cos(Y + Z)
    v[0] += 0.3 * np.cos(2 * X - Y)
    v[1] += 0.6 * np.cos(2 * X - Y)
    u = to_spectral(PhysicalField(g, v))
    F = brute_products(g, u, u)
    got = full_modes(g, pressure_from_velocity(u).coeffs)
    scale = 2 * np.pi / g.box_length
    expected = {}
    for m, Fm in F.items():
        k = scale * np.array(m, dtype=float)
        k2 = k @ k
        if k2 > 0:
            val = -(k @ Fm @ k) / k2
            if abs(val) > 1e-14:
                expected[m] = val
    assert set(got) == set(expected)
    for m, val in expected.items():
        assert got[m] == pytest.approx(val, abs=1e-14)


def test_momentum_residual_gradient_part(grid16):
    u = random_vector_field(grid16, 5, divergence_free=True)
    p = pressure_from_velocity(u).coeffs
    N = _nonlinear(grid16, u.coeffs, u.coeffs)
    # u_t = -k^2 u - P N, so the residual reduces to (I - P) N + i k p
    ik_p = np.stack([1j * k * p for k in grid16.k])
    res = (N - _project(grid16, N)) + ik_p
    assert np.max(np.abs(res)) <= 1e-12 * np.max(np.abs(N))


def test_zero_mean(grid16):
    for seed in range(3):
        u = random_vector_field(grid16, seed, divergence_free=True)
        assert pressure_from_velocity(u).coeffs[0, 0, 0] == 0


# ---------------------------------------------------------------------------
# windowed split


def test_split_reconstructs(grid16):
    u = random_vector_field(grid16, 2, divergence_free=True)
    p = pressure_from_velocity(u)
    pt, h = windowed_pressure_split(u, p, (1.0, 2.0, 3.0), 1.0)
    fine = pt.grid
    assert fine.n_modes == 32
    total = pt.coeffs + h.coeffs
    # restricted to the coarse modes the sum is p itself
    coarse = to_physical(ScalarSpectralField(fine, total)).values[::2, ::2, ::2]
    np.testing.assert_allclose(coarse, to_physical(p).values, atol=1e-13 * np.abs(p.coeffs).max())


def test_whole_box_is_identity(grid16):
    u = random_vector_field(grid16, 4, divergence_free=True)
    p = pressure_from_velocity(u)
    pt, h = windowed_pressure_split(u, p, (0, 0, 0), 1.0, whole_box=True)
    assert np.max(np.abs(h.coeffs)) <= 1e-14 * np.max(np.abs(p.coeffs))


def _ball_lp(field, center, radius, p, n=24):
    axes, cell = cell_centers(center, radius, n)
    vals = evaluate(field.grid, field.coeffs, axes)
    inside = ball_mask(axes, center, radius)
    return (np.sum(np.abs(vals[inside]) ** p) * cell**3) ** (1 / p)


def test_far_field_gives_small_p_tilde():
    g = Grid(32)
    u = make_initial_data(InitialDataSpec("localized_bump", ring_radius=0.2, core_radius=0.1), g)
    p = pressure_from_velocity(u)
    center, r = (0.0, 0.0, 0.0), 0.5
    pt, h = windowed_pressure_split(u, p, center, r)
    small = _ball_lp(pt, center, r / 2, 1.5)
    total = lp_norm(to_physical(p), 1.5)
    assert small < 1e-3 * total
    assert _ball_lp(h, center, r / 2, 1.5) == pytest.approx(_ball_lp(p, center, r / 2, 1.5), rel=1e-2)


def laplacian_l2_ratio(u, center, radius):
    p = pressure_from_velocity(u)
    pt, h = windowed_pressure_split(u, p, center, radius)
    fine = pt.grid
    lap_h = ScalarSpectralField(fine, -fine.k2 * h.coeffs)
    lap_pt = ScalarSpectralField(fine, -fine.k2 * pt.coeffs)
    return _ball_lp(lap_h, center, 0.9 * radius, 2, n=32) / _ball_lp(lap_pt, center, 0.9 * radius, 2, n=32)


@pytest.mark.slow
def test_beltrami_split_near_harmonic():
    g = Grid(64)
    u = make_initial_data(InitialDataSpec("beltrami"), g)
    L = g.box_length
    assert laplacian_l2_ratio(u, (L / 2, L / 2, L / 2), L / 8) < 1e-2


def test_ball_too_large(grid16, tg16):
    p = pressure_from_velocity(tg16)
    with pytest.raises(ValueError):
        windowed_pressure_split(tg16, p, (0, 0, 0), grid16.box_length / 4)


def test_mollified_indicator_limits(grid32):
    chi = mollified_indicator(grid32, (np.pi, np.pi, np.pi), 1.0, 0.4)
    X, Y, Z = mesh(grid32)
    d = np.sqrt((X - np.pi) ** 2 + (Y - np.pi) ** 2 + (Z - np.pi) ** 2)
    assert np.all(np.abs(chi[d <= 1.0] - 1) < 4e-5)
    assert np.all(chi[d >= 1.4] < 4e-5)
    assert np.all((chi >= 0) & (chi <= 1))


def test_sidecar(tmp_path, grid16):
    path = tmp_path / "split.json"
    write_split_sidecar(path, (1, 2, 3), 0.5, 2.0, grid16)
    meta = json.loads(path.read_text())
    assert meta["center"] == [1.0, 2.0, 3.0]
    assert meta["radius"] == 0.5
    assert meta["mollification_width"] == pytest.approx(2 * grid16.dx)
    assert meta["oversample"] == 2


# ---------------------------------------------------------------------------
# oscillation ratio


def test_linear_ratio_constant():
    def h(x, y, z):
        return 0.3 * x - 1.2 * y + 0.5 * z

    vals = [harmonic_oscillation_ratio(h, (0.1, 0.2, 0.3), rs, 1.0, 1.5) for rs in (0.4, 0.2, 0.1, 0.05)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-9)


def test_constant_ratio_zero():
    assert harmonic_oscillation_ratio(lambda x, y, z: 2.0 + 0 * x, (0, 0, 0), 0.1, 1.0, 1.5) == 0.0


def test_harmonic_cubic_ratio_decreases():
    def h(x, y, z):
        return x**3 - 3 * x * y**2

    vals = [harmonic_oscillation_ratio(h, (0, 0, 0), rs, 1.0, 1.5) for rs in (0.4, 0.2, 0.1, 0.05)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    # oscillation ~ r^3 against the r^gamma normalization
    assert vals[-2] / vals[-1] == pytest.approx(2 ** (3 * 1.5 - 1.5), rel=0.05)


def test_spectral_input(grid16, tg16):
    p = pressure_from_velocity(tg16)
    val = harmonic_oscillation_ratio(p, (1.0, 1.0, 1.0), 0.2, 0.6, 1.5)
    assert np.isfinite(val) and val > 0


def test_radius_errors():
    f = lambda x, y, z: x  # noqa: E731
    with pytest.raises(ValueError):
        harmonic_oscillation_ratio(f, (0, 0, 0), 0.6, 1.0, 1.5)
    with pytest.raises(ValueError):
        harmonic_oscillation_ratio(f, (0, 0, 0), 0.1, 1.0, 0.5)
