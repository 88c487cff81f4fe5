import numpy as np
import pytest

from vpl_landau.norms import (NormParams, bessel_v, bessel_x, commutator_check, h_sigma_seminorm,
                              norm_report, sobolev_x_norm, weight)
from vpl_landau.phase_space import DistField, SpatialField, make_grid, maxwellian

# Tensor Gauss-Legendre on the box with the erf form of sigma (n = 96).
INT_SIGMA11_BOX6 = 224.29863673846793
# Gauss-Legendre (n = 160) weighted norms of mu over [-6, 6]^3.
MU_WEIGHTED = {5: 4.230896678026136, 10: 882.7370509381926, 15: 587895.6863325038}
# Plancherel radial quadrature over R^3 for |<xi>^0.5 mu|.
MU_BESSEL_HALF = 0.1859802194370189


class TestParams:
    @pytest.mark.parametrize("kw", [dict(s=2.5), dict(s=3.1), dict(r=0.0), dict(r=1.5),
                                    dict(m1=4.0), dict(m2=12.0), dict(m0=-1.0)])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            NormParams(**kw)

    def test_defaults(self):
        p = NormParams()
        assert (p.s, p.r, p.m0, p.m1, p.m2) == (2.6, 0.5, 5.0, 10.0, 15.0)


class TestReferenceValues:
    def test_weighted_norms(self, grid32, mu32):
        for m, want in MU_WEIGHTED.items():
            got = np.sqrt(np.sum((weight(grid32, m) * mu32.values) ** 2) * grid32.dvol_v)
            print(f"m={m}: {got!r} vs {want!r}")
            assert abs(got / want - 1) < 1e-6

    def test_bessel_norm(self, mu32):
        rep = norm_report(mu32, dissipation=False)
        assert abs(rep.e_terms[2] / MU_BESSEL_HALF - 1) < 1e-5
        assert abs(rep.e_terms[0] / MU_WEIGHTED[15] - 1) < 1e-5

    def test_h_sigma_of_linear_function(self):
        # Midpoint error is O(dv^2): 2.2e-4 at n_v = 32, 5.5e-5 at n_v = 64.
        g = make_grid(1, 8, 64, 6.0)
        psi = DistField(g, g.velocity()[0].copy())
        got = h_sigma_seminorm(psi)
        print(f"H_sigma(v1)^2 = {got!r}; quadrature {INT_SIGMA11_BOX6!r}")
        assert abs(got / INT_SIGMA11_BOX6 - 1) < 1e-4

    def test_h_sigma_quadratic_form(self, grid16, mu16):
        assert abs(h_sigma_seminorm(DistField(grid16, np.full(grid16.v_shape, 3.0)))) < 1e-14
        assert h_sigma_seminorm(2.0 * mu16) == pytest.approx(4 * h_sigma_seminorm(mu16), rel=1e-14)


class TestMultipliers:
    def test_bessel_v_zero_order_identity(self, mu16, grid16):
        assert np.allclose(bessel_v(mu16, 0.0).values, mu16.values, atol=1e-15)

    def test_bessel_x_on_single_mode(self, grid16):
        x = grid16.x_nodes
        f = SpatialField(grid16, np.cos(2 * np.pi * 3 * x))
        out = bessel_x(f, 2.0)
        assert np.allclose(out.values, (1 + (6 * np.pi) ** 2) * f.values)
        want = (1 + (6 * np.pi) ** 2) * np.sqrt(0.5)
        assert abs(sobolev_x_norm(f, 2.0) - want) < 1e-10 * want

    def test_bessel_x_identity_and_monotone(self, grid16, rng):
        f = SpatialField(grid16, rng.normal(size=16))
        assert np.allclose(bessel_x(f, 0.0).values, f.values, atol=1e-14)
        assert np.linalg.norm(bessel_x(f, 1.3).values) >= np.linalg.norm(f.values)
        x = grid16.x_nodes
        u = SpatialField(grid16, np.cos(2 * np.pi * x))
        assert np.allclose(bessel_x(u, 2.0).values, (1 + 4 * np.pi ** 2) * u.values)

    def test_bessel_x_ignores_velocity(self, grid16, mu16):
        F = DistField(grid16, np.broadcast_to(mu16.values, grid16.shape).copy())
        assert np.allclose(bessel_x(F, 2.6).values, F.values, atol=1e-14)


class TestReport:
    def test_terms_combine_in_quadrature(self, grid16, mu16):
        F = DistField(grid16, np.broadcast_to(mu16.values, grid16.shape) *
                      (1 + 0.2 * np.cos(2 * np.pi * grid16.x_nodes))[:, None, None, None])
        rep = norm_report(F)
        assert np.isclose(rep.e, np.sqrt(sum(t * t for t in rep.e_terms)))
        assert np.isclose(rep.d_prime, np.sqrt(sum(t * t for t in rep.d_prime_terms)))
        assert rep.e_prime < rep.e
        assert len(rep.csv_row()) == len(rep.CSV_HEADER)

    def test_zero_field(self, grid16):
        rep = norm_report(DistField(grid16, np.zeros(grid16.shape)))
        assert rep.e == rep.d == rep.e_prime == rep.d_prime == 0.0

    def test_x_independent_reduces_to_velocity_terms(self, grid16, mu16):
        F = DistField(grid16, np.broadcast_to(mu16.values, grid16.shape).copy())
        a = norm_report(F, dissipation=False)
        b = norm_report(mu16, dissipation=False)
        assert np.allclose(a.e_terms, b.e_terms, rtol=1e-12)
        w1 = np.sqrt(np.sum((weight(grid16, 10) * mu16.values) ** 2) * grid16.dvol_v)
        assert a.e_terms[1] == pytest.approx(w1, rel=1e-12)

    def test_no_dissipation(self, mu16):
        rep = norm_report(mu16, dissipation=False)
        assert np.isnan(rep.d) and np.isfinite(rep.e)


class TestCommutator:
    def test_commutator_of_constant_vanishes(self, grid16, mu16):
        one = DistField(grid16, np.ones(grid16.v_shape))
        lhs, rhs1, rhs2 = commutator_check(one, mu16, 5.0, 0.5)
        assert lhs < 1e-12 and rhs1 > 0 and rhs2 > 0

    def test_small_order_commutator_vanishes(self, grid32, mu32):
        u2 = DistField(grid32, grid32.velocity()[0] * mu32.values)
        u1 = maxwellian(grid32, 1.0, (0.5, 0, 0), 1.2, homogeneous=True)
        small = commutator_check(u1, u2, 5.0, 1e-3)[0]
        full = commutator_check(u1, u2, 5.0, 1.0)[0]
        print(f"r=1e-3: {small:.3e}; r=1: {full:.3e}")
        assert small < 1e-2 * full

    def test_estimate_holds_for_gaussians(self, grid32):
        u1 = maxwellian(grid32, 1.0, (0.5, 0, 0), 1.2, homogeneous=True)
        u2 = maxwellian(grid32, 1.0, (-0.3, 0.2, 0), 0.7, homogeneous=True)
        lhs, rhs1, rhs2 = commutator_check(u1, u2, 5.0, 0.5)
        print(f"lhs {lhs:.3e} rhs1 {rhs1:.3e} rhs2 {rhs2:.3e}")
        assert lhs <= rhs1 and lhs <= rhs2

    def test_arguments(self, mu16):
        with pytest.raises(ValueError):
            commutator_check(mu16, mu16, -1.0, 0.5)
        with pytest.raises(ValueError):
            commutator_check(mu16, mu16, 5.0, 1.5)
