import numpy as np
import pytest
from conftest import mesh, random_vector_field
from hypothesis import given, settings
from hypothesis import strategies as st

from nscrit.spectral import (
    Grid,
    PhysicalField,
    ScalarSpectralField,
    SpectralVelocity,
    curl,
    divergence,
    energy,
    gradient,
    hs_norm,
    laplacian_power,
    leray_project,
    lp_norm,
    nonlinear_term,
    riesz_multiply,
    tail_fraction,
    to_physical,
    to_spectral,
)

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def shear(grid, m, amp=1.0):
    """u = (0, 0, amp cos(k x)) with k = 2 pi m / L; divergence-free."""
    X, _, _ = mesh(grid)
    k = 2 * np.pi * m / grid.box_length
    v = np.zeros((3,) + grid.physical_shape)
    v[2] = amp * np.cos(k * X)
    return to_spectral(PhysicalField(grid, v), divergence_free=True)


class TestGrid:
    @pytest.mark.parametrize("n", [3, 6, 2, 12, 0])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            Grid(n)

    def test_rejects_bad_box_and_fraction(self):
        with pytest.raises(ValueError):
            Grid(8, box_length=0.0)
        with pytest.raises(ValueError):
            Grid(8, dealias_fraction=1.5)

    @pytest.mark.parametrize("n, kmax", [(8, 2), (16, 5), (32, 10), (64, 21)])
    def test_two_thirds_cutoff(self, n, kmax):
        assert Grid(n).kmax_index == kmax

    def test_full_fraction_still_drops_nyquist(self):
        assert Grid(8, dealias_fraction=1.0).kmax_index == 3

    def test_multiplicity_counts_full_spectrum(self):
        g = Grid(8)
        assert np.sum(np.broadcast_to(g.multiplicity, g.spectral_shape)) == 8**3

    def test_wavenumbers_scale_with_box(self):
        g = Grid(8, box_length=np.pi)
        assert g.k[0][1, 0, 0] == pytest.approx(2.0)


class TestTransforms:
    def test_roundtrip(self, grid16, tg16):
        back = to_spectral(to_physical(tg16))
        np.testing.assert_allclose(back.coeffs, tg16.coeffs, atol=1e-15)

    def test_mean_is_discarded(self, grid16):
        v = np.ones(grid16.physical_shape)
        f = to_spectral(PhysicalField(grid16, v))
        assert np.all(f.coeffs == 0)

    def test_divergence_flag_autodetected(self, grid16, tg16):
        assert to_spectral(to_physical(tg16)).divergence_free
        X, _, _ = mesh(grid16)
        v = np.stack([np.sin(X), 0 * X, 0 * X])
        assert not to_spectral(PhysicalField(grid16, v)).divergence_free

    def test_constructor_rejects_divergent_field(self, grid16):
        X, _, _ = mesh(grid16)
        c = to_spectral(PhysicalField(grid16, np.stack([np.sin(X), 0 * X, 0 * X])), False).coeffs
        with pytest.raises(ValueError, match="divergence"):
            SpectralVelocity(grid16, c, True)

    def test_shape_mismatch(self, grid16):
        with pytest.raises(ValueError):
            SpectralVelocity(grid16, np.zeros((3, 4, 4, 3)))
        with pytest.raises(ValueError):
            PhysicalField(grid16, np.zeros((2,) + grid16.physical_shape))

    def test_coefficients_read_only(self, tg16):
        with pytest.raises(ValueError):
            tg16.coeffs[0, 1, 1, 1] = 1.0

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_hermitian_fix_idempotent_and_real(self, seed):
        g = Grid(8)
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(g.spectral_shape) + 1j * rng.standard_normal(g.spectral_shape)
        f = ScalarSpectralField(g, c)
        again = ScalarSpectralField(g, f.coeffs)
        np.testing.assert_array_equal(again.coeffs, f.coeffs)
        phys = to_physical(f).values
        assert np.isrealobj(phys)
        np.testing.assert_allclose(to_spectral(PhysicalField(g, phys)).coeffs, f.coeffs, atol=1e-14)


class TestNorms:
    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_parseval_matches_lattice_sum(self, seed):
        g = Grid(8)
        u = random_vector_field(g, seed)
        direct = np.sum(to_physical(u).values ** 2) * g.cell_volume
        assert energy(u) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 1.5])
    def test_single_mode_closed_form(self, grid16, s):
        L = grid16.box_length
        u = shear(grid16, 3, amp=2.0)
        k = 2 * np.pi * 3 / L
        expected = np.sqrt(k ** (2 * s) * 4.0 * L**3 / 2)
        assert hs_norm(u, s) == pytest.approx(expected, rel=1e-13)

    def test_zero_mode_excluded(self, grid16):
        assert hs_norm(SpectralVelocity.zeros(grid16), 0.5) == 0.0

    def test_lp_norms(self, tg16):
        phys = to_physical(tg16)
        assert lp_norm(phys, np.inf) == pytest.approx(1.0, abs=1e-14)
        assert lp_norm(phys, 2) == pytest.approx(np.sqrt(energy(tg16)), rel=1e-13)
        with pytest.raises(ValueError):
            lp_norm(phys, 0.5)

    def test_tail_fraction_single_modes(self, grid32):
        assert tail_fraction(shear(grid32, 1)) == pytest.approx(0.0, abs=1e-25)
        assert tail_fraction(shear(grid32, grid32.kmax_index)) == pytest.approx(1.0)


class TestOperators:
    @settings(max_examples=15, deadline=None)
    @given(seeds)
    def test_leray_idempotent_and_solenoidal(self, seed):
        g = Grid(8)
        u = random_vector_field(g, seed)
        pu = leray_project(u)
        ppu = leray_project(pu)
        scale = np.abs(pu.coeffs).max()
        assert np.abs(ppu.coeffs - pu.coeffs).max() <= 1e-14 * scale
        assert np.abs(divergence(pu).coeffs).max() <= 1e-13 * scale

    def test_leray_kills_gradients(self, grid16):
        X, Y, Z = mesh(grid16)
        f = to_spectral(PhysicalField(grid16, np.sin(X) * np.cos(2 * Y) * np.sin(Z)))
        assert np.abs(leray_project(gradient(f)).coeffs).max() < 1e-15

    @settings(max_examples=15, deadline=None)
    @given(seeds)
    def test_riesz_trace_is_minus_identity(self, seed):
        g = Grid(8)
        rng = np.random.default_rng(seed)
        f = to_spectral(PhysicalField(g, rng.standard_normal(g.physical_shape)))
        tr = sum((riesz_multiply(i, i, f) for i in range(3)), ScalarSpectralField.zeros(g))
        np.testing.assert_allclose(tr.coeffs, -f.coeffs, atol=1e-15)

    def test_riesz_axis_validation(self, grid16):
        with pytest.raises(ValueError):
            riesz_multiply(0, 3, ScalarSpectralField.zeros(grid16))

    def test_beltrami_curl_eigenfield(self, grid16):
        from nscrit.experiments import InitialDataSpec, make_initial_data

        b = make_initial_data(InitialDataSpec("beltrami"), grid16)
        np.testing.assert_allclose(curl(b).coeffs, b.coeffs, atol=1e-14)

    def test_curl_curl_is_minus_laplacian(self, tg16):
        np.testing.assert_allclose(curl(curl(tg16)).coeffs, laplacian_power(tg16, 1.0).coeffs, atol=1e-14)

    def test_nonlinear_term_closed_form(self, grid16):
        # u = (0, 0, cos x), v = (sin z, 0, 0): d_j(u_i v_j) = (0, 0, -sin x sin z)
        X, _, Z = mesh(grid16)
        zero = np.zeros(grid16.physical_shape)
        u = to_spectral(PhysicalField(grid16, np.stack([zero, zero, np.cos(X)])), True)
        v = to_spectral(PhysicalField(grid16, np.stack([np.sin(Z), zero, zero])), True)
        n = to_physical(nonlinear_term(u, v)).values
        np.testing.assert_allclose(n, np.stack([zero, zero, -np.sin(X) * np.sin(Z)]), atol=1e-14)

    def test_nonlinear_term_is_dealiased(self, grid16):
        u = random_vector_field(grid16, 7, divergence_free=True)
        n = nonlinear_term(u, u).coeffs
        assert np.all(n[:, ~grid16.mask] == 0)

    def test_nonlinear_term_energy_neutral(self, grid16):
        # dealiased products are exact, so <u, (u.grad)u> = 0 to rounding
        u = random_vector_field(grid16, 3, divergence_free=True)
        n = nonlinear_term(u, u).coeffs
        pairing = grid16.mode_sum(np.sum((np.conj(u.coeffs) * n).real, axis=0))
        assert abs(pairing) < 1e-12 * np.sqrt(energy(u)) * np.abs(n).max() * grid16.n_modes**3

    def test_grid_mismatch_rejected(self, grid16, grid32):
        with pytest.raises(ValueError, match="grid"):
            _ = SpectralVelocity.zeros(grid16) + SpectralVelocity.zeros(grid32)


class TestClosedForms:
    def test_single_mode_samples(self, grid16):
        # u_hat(k0) = 1 on x-component, with its Hermitian partner -> 2 cos(k0.x)
        c = np.zeros((3,) + grid16.spectral_shape, dtype=complex)
        c[0, 2, 1, 0] = 1.0
        c[0, -2, -1, 0] = 1.0
        phys = to_physical(SpectralVelocity(grid16, c, False)).values
        X, Y, _ = mesh(grid16)
        np.testing.assert_allclose(phys[0], 2 * np.cos(2 * X + Y), atol=1e-14)
        np.testing.assert_allclose(phys[1:], 0.0)

    def test_zero_roundtrip(self, grid16):
        z = to_physical(SpectralVelocity.zeros(grid16))
        assert np.all(z.values == 0)
        assert np.all(to_spectral(z).coeffs == 0)

    def test_leray_hand_value(self, grid16):
        c = np.zeros((3,) + grid16.spectral_shape, dtype=complex)
        c[0, 1, 1, 0] = 1.0
        c[0, -1, -1, 0] = 1.0
        pu = leray_project(SpectralVelocity(grid16, c, False))
        np.testing.assert_allclose(pu.coeffs[:, 1, 1, 0], [0.5, -0.5, 0.0], atol=1e-16)

    def test_leray_identity_on_divergence_free(self, tg16):
        np.testing.assert_allclose(leray_project(tg16).coeffs, tg16.coeffs, atol=1e-16)

    def test_riesz_single_mode(self, grid16):
        c = np.zeros(grid16.spectral_shape, dtype=complex)
        c[1, 0, 0] = 1.0
        c[-1, 0, 0] = 1.0
        f = ScalarSpectralField(grid16, c)
        assert riesz_multiply(0, 0, f).coeffs[1, 0, 0] == pytest.approx(-1.0)
        assert riesz_multiply(0, 1, f).coeffs[1, 0, 0] == 0
        assert riesz_multiply(2, 1, f).coeffs[1, 0, 0] == 0

    def test_hhalf_oblique_mode(self, grid16):
        # u = A e cos(k0.x), e = (1, -1, 0)/sqrt2 perpendicular to k0 = (1, 1, 0)
        X, Y, _ = mesh(grid16)
        A = 1.7
        w = A * np.cos(X + Y) / np.sqrt(2)
        u = to_spectral(PhysicalField(grid16, np.stack([w, -w, 0 * w])), True)
        L = grid16.box_length
        assert hs_norm(u, 0.5) ** 2 == pytest.approx(np.sqrt(2) * A**2 * L**3 / 2, rel=1e-13)

    def test_nonlinear_taylor_green_matches_convolution(self):
        from nscrit.experiments import InitialDataSpec, make_initial_data
        from conftest import brute_products

        g = Grid(8)
        u = make_initial_data(InitialDataSpec("taylor_green"), g)
        F = brute_products(g, u, u)
        n = nonlinear_term(u, u)
        kscale = 2 * np.pi / g.box_length
        nfull = {}
        for k, Fk in F.items():
            kv = kscale * np.array(k)
            nfull[k] = 1j * Fk @ kv
        for k, val in nfull.items():
            if k[2] < 0:
                continue
            np.testing.assert_allclose(n.coeffs[:, k[0] % 8, k[1] % 8, k[2]], val, atol=1e-12)
        # and nothing else is populated
        populated = {k for k, v in nfull.items() if np.abs(v).max() > 1e-14 and k[2] >= 0}
        live = np.argwhere(np.abs(n.coeffs).sum(axis=0) > 1e-12)
        assert {tuple(int(i) if i < 4 or j == 2 else int(i) - 8 for j, i in enumerate(m)) for m in live} <= populated

    def test_nonlinear_of_zero(self, tg16, grid16):
        z = SpectralVelocity.zeros(grid16)
        assert np.all(nonlinear_term(z, tg16).coeffs == 0)

    def test_gradient_of_constant(self, grid16):
        f = to_spectral(PhysicalField(grid16, np.full(grid16.physical_shape, 3.0)))
        assert np.all(gradient(f).coeffs == 0)

    def test_divergence_of_gradient(self, grid16):
        X, Y, Z = mesh(grid16)
        f = to_spectral(PhysicalField(grid16, np.sin(X) * np.cos(2 * Y) + np.cos(3 * Z)))
        np.testing.assert_allclose(
            divergence(gradient(f)).coeffs, -laplacian_power(f, 1.0).coeffs, atol=1e-13
        )

    def test_half_power_composes(self, tg16):
        twice = laplacian_power(laplacian_power(tg16, 0.5), 0.5)
        np.testing.assert_allclose(twice.coeffs, laplacian_power(tg16, 1.0).coeffs, atol=1e-14)

    def test_lp_constant(self, grid16):
        L = grid16.box_length
        f = PhysicalField(grid16, np.full(grid16.physical_shape, 2.5))
        assert lp_norm(f, 2) == pytest.approx(2.5 * L**1.5, rel=1e-14)
        assert lp_norm(f, 3) == pytest.approx(2.5 * L, rel=1e-14)

    def test_lp_cosine_matches_parseval(self, grid16):
        u = shear(grid16, 2, amp=0.7)
        assert lp_norm(to_physical(u), 2) == pytest.approx(hs_norm(u, 0.0), rel=1e-12)

    def test_lp_abs_sine_cubed(self):
        # int_0^{2 pi} |sin x|^3 dx = 8/3. The kinks sit on lattice points where
        # the third derivative jumps by 12, so Euler-Maclaurin gives +h^4/30.
        g = Grid(64)
        X, _, _ = mesh(g)
        L, h = g.box_length, g.dx
        f = PhysicalField(g, np.abs(np.sin(X)))
        assert lp_norm(f, 3) ** 3 == pytest.approx(8.0 / 3.0 * L**2, rel=2e-6)
        assert lp_norm(f, 3) ** 3 == pytest.approx((8.0 / 3.0 + h**4 / 30) * L**2, rel=1e-8)


def _padded_product(grid, f, g):
    """Exact product of two band-limited scalars on a doubled grid."""
    from nscrit.spectral import _embed, _to_phys, _to_spec

    big = Grid(2 * grid.n_modes, grid.box_length)
    prod = _to_phys(big, _embed(grid, big, f.coeffs)) * _to_phys(big, _embed(grid, big, g.coeffs))
    return ScalarSpectralField(big, _to_spec(big, prod))


def test_product_inequality_constant_bounded():
    g = Grid(16)
    rng = np.random.default_rng(2024)
    ratios = []
    for _ in range(100):
        fs = []
        for _ in range(2):
            c = np.zeros(g.spectral_shape, dtype=complex)
            lo = (g.kmag > 0) & (g.kmag <= 4.5)
            c[lo] = rng.standard_normal(lo.sum()) + 1j * rng.standard_normal(lo.sum())
            c[lo] *= g.kmag[lo] ** rng.uniform(-3, 0)
            fs.append(ScalarSpectralField(g, c))
        prod = _padded_product(g, *fs)
        ratios.append(hs_norm(prod, 0.5) / (hs_norm(fs[0], 1.0) * hs_norm(fs[1], 1.0)))
    assert max(ratios) < 10


def test_projected_convection_energy_neutral(grid32):
    u = random_vector_field(grid32, 11, divergence_free=True)
    conv = leray_project(SpectralVelocity(grid32, nonlinear_term(u, u).coeffs, False))
    pairing = grid32.volume * grid32.mode_sum(np.sum((np.conj(u.coeffs) * conv.coeffs).real, axis=0))
    scale = energy(u) ** 1.5
    assert abs(pairing) < 1e-10 * scale
