import numpy as np
import pytest

from vpl_landau.phase_space import (BoundaryDecayWarning, DistField, GridError, SpatialField,
                                    boundary_fraction, fft_v, fft_x, ifft_v, ifft_x, make_grid,
                                    maxwellian, moments, read_snapshot, write_csv,
                                    write_snapshot)

# Midpoint sum of the unit Maxwellian, n_v = 32, v_max = 6 (40-digit mpmath).
MU_MASS_MIDPOINT_32 = 0.99999999520565094536


class TestGrid:
    def test_midpoint_nodes(self):
        g = make_grid(1, 8, 8, 4.0)
        assert g.dv == 1.0
        assert np.allclose(g.v_nodes, np.arange(-3.5, 4.0, 1.0))
        assert np.allclose(g.x_nodes, np.arange(8) / 8)
        assert g.shape == (8, 8, 8, 8)

    @pytest.mark.parametrize("args", [(0, 8, 8, 1.0), (4, 8, 8, 1.0), (1, 24, 8, 1.0),
                                      (1, 8, 4, 1.0), (1, 8, 8, 0.0), (1, 8, 8, np.inf)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(GridError):
            make_grid(*args)

    def test_grids_compare_by_value(self):
        assert make_grid(2, 8, 16, 5.0) == make_grid(2, 8, 16, 5)
        with pytest.raises(GridError):
            make_grid(1, 8, 8, 5.0).check_same(make_grid(1, 16, 8, 5.0))


class TestFields:
    def test_shape_checked(self, grid16):
        with pytest.raises(GridError):
            DistField(grid16, np.zeros((3, 3, 3)))
        with pytest.raises(GridError):
            SpatialField(grid16, np.zeros(8))

    def test_non_finite_rejected(self, grid16):
        vals = np.zeros(grid16.v_shape)
        vals[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            DistField(grid16, vals)

    def test_arithmetic_tracks_sign(self, mu16):
        assert (mu16 + mu16).nonneg
        assert not (mu16 - mu16).nonneg
        assert not (-1.0 * mu16).nonneg


class TestMaxwellian:
    def test_mass_matches_midpoint_oracle(self, mu32, grid32):
        mass = mu32.values.sum() * grid32.dvol_v
        print(f"midpoint mass {mass!r}")
        assert abs(mass - MU_MASS_MIDPOINT_32) < 1e-15

    def test_moments_of_shifted_maxwellian(self, grid32):
        F = maxwellian(grid32, density=2.0, mean=(0.5, -0.25, 0.0), temperature=0.8)
        n, mom, ke = moments(F)
        assert np.allclose(n.values, 2.0, rtol=1e-7)
        assert np.allclose(mom[0], 1.0, rtol=1e-7)
        assert np.allclose(mom[1], -0.5, rtol=1e-7)
        assert np.allclose(mom[2], 0.0, atol=1e-14)
        expected = 0.5 * 2.0 * (0.5 ** 2 + 0.25 ** 2 + 3 * 0.8)
        assert abs(ke - expected) < 1e-6 * expected

    def test_boundary_warning(self):
        g = make_grid(1, 8, 16, 3.0)
        with pytest.warns(BoundaryDecayWarning):
            maxwellian(g, homogeneous=True)

    def test_boundary_fraction_of_constant_is_one(self):
        assert boundary_fraction(np.ones((4, 4, 4))) == 1.0
        assert boundary_fraction(np.zeros((4, 4, 4))) == 0.0


def test_fft_round_trips(grid16, rng):
    u = rng.normal(size=grid16.shape)
    assert np.allclose(ifft_x(grid16, fft_x(grid16, u)), u, atol=1e-13)
    assert np.allclose(ifft_v(fft_v(u)), u, atol=1e-13)


def test_snapshot_round_trip(tmp_path, grid16, rng):
    fields = {"F_plus": rng.normal(size=grid16.shape), "beta": np.array([1.5]),
              "n": rng.normal(size=grid16.x_shape)}
    path = tmp_path / "snap.bin"
    write_snapshot(path, grid16, fields)
    g, out = read_snapshot(path)
    assert g == grid16
    assert list(out) == list(fields)
    for k in fields:
        assert np.array_equal(out[k], fields[k])


def test_snapshot_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"nope" + bytes(40))
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_csv_keeps_infinity(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ("a", "b"), [(1.0, np.inf), (0.1, 2)])
    assert p.read_text().splitlines() == ["a,b", "1.0,inf", "0.1,2"]
