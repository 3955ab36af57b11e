import numpy as np
import pytest

from spinchi.corpus import SkyrmionAnsatzSpec, skyrmion_ansatz
from spinchi.render import (density_rgb, density_rows, hsv_to_rgb, spin_rgb, sz_profile, vector_rows,
                            wall_mass_fraction)


def uniform(v, h=5, w=6):
    return np.broadcast_to(np.asarray(v, dtype=float), (h, w, 3)).copy()


def test_hsv_primaries():
    rgb = hsv_to_rgb([0.0, 1 / 3, 2 / 3, 1.0], 1.0, 1.0)
    np.testing.assert_allclose(rgb, [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]], atol=1e-12)
    np.testing.assert_allclose(hsv_to_rgb(0.4, 0.0, 0.25), [0.25, 0.25, 0.25])


def test_spin_up_is_white_and_down_is_black():
    assert (spin_rgb(uniform((0, 0, 1))) == 255).all()
    assert (spin_rgb(uniform((0, 0, -1))) == 0).all()


def test_in_plane_spins_are_saturated_hues():
    np.testing.assert_array_equal(spin_rgb(uniform((1, 0, 0)))[0, 0], [128, 0, 0])
    np.testing.assert_array_equal(spin_rgb(uniform((-1, 0, 0)))[0, 0], [0, 128, 128])


def test_density_colours():
    rgb = density_rgb(np.array([[0.0, 2.0, -2.0, 1.0]]))
    np.testing.assert_array_equal(rgb[0], [[255, 255, 255], [255, 0, 0], [0, 0, 255], [255, 128, 128]])
    assert (density_rgb(np.zeros((3, 3))) == 255).all()


def test_row_exports():
    d = np.arange(6.0).reshape(2, 3)
    assert density_rows(d)[4] == (1, 1, 4.0)
    s = uniform((0, 0, 1), 2, 2)
    assert vector_rows(s) == [(0, 0, 0.0, 0.0, 1.0), (1, 0, 0.0, 0.0, 1.0),
                              (0, 1, 0.0, 0.0, 1.0), (1, 1, 0.0, 0.0, 1.0)]


def test_profile_fits_ansatz_wall():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(20.0, 4.0, center=(64.0, 64.0)), (128, 128))
    prof = sz_profile(s, row=64)
    assert prof.fit is not None and prof.x[-1] == 63
    # the ansatz wall is tanh((R - r) / w): centre at x = 64 - 20
    assert abs(prof.fit.center - 44.0) < 0.05 and abs(prof.fit.delta - 4.0) < 0.05
    rows = prof.rows()
    assert rows[0][0] == 0 and rows[-1][1] == pytest.approx(s[64, 63, 2])


def test_profile_without_wall_reports_error():
    prof = sz_profile(uniform((0, 0, 1), 16, 16))
    assert prof.fit is None and prof.fit_error
    assert np.isnan(prof.rows()[0][2])
    with pytest.raises(ValueError):
        sz_profile(uniform((0, 0, 1), 16, 16), row=16)


def test_density_concentrates_on_wall():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(24.0, 3.0), (96, 96))
    assert wall_mass_fraction(s, 24.0, 3.0) >= 0.9
