import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from spinchi.corpus import SkyrmionAnsatzSpec, skyrmion_ansatz
from spinchi.energy import (HamiltonianParams, energy_densities, fit_wall_width, golden_section,
                            hamiltonian_energy, hamiltonian_grad, local_wall_width, minimize_wall_1d,
                            wall_profile_theoretical)
from spinchi.field import FieldError, normalize

# Brute-force per-anchor sums over the cycloid (q = pi/8, 8x33 lattice, J = 1,
# D = 0.5), computed term by term with explicit loops and frozen here.
CYCLOID_EXCHANGE = 0.15224093497742697
CYCLOID_DMI = 0.19134171618254453


def uniform(v, h=6, w=7):
    return np.broadcast_to(np.asarray(v, dtype=float), (h, w, 3)).copy()


def random_unit(seed, h=8, w=8):
    return normalize(np.random.default_rng(seed).normal(size=(h, w, 3)))


def test_uniform_z_has_zero_energy():
    e = hamiltonian_energy(uniform((0, 0, 1)), HamiltonianParams(1.0, 0.5, 0.3))
    assert (e.exchange, e.dmi, e.anisotropy, e.total) == (0.0, 0.0, 0.0, 0.0)


def test_uniform_x_costs_only_anisotropy():
    e = hamiltonian_energy(uniform((1, 0, 0)), HamiltonianParams(1.0, 0.5, 0.1))
    assert e.exchange == 0.0 and e.dmi == 0.0
    assert e.anisotropy == pytest.approx(0.1, abs=1e-15)


def test_cycloid_matches_brute_force_sum():
    q = math.pi / 8
    x = np.arange(33, dtype=float)[None, :].repeat(8, axis=0)
    s = np.stack([np.sin(q * x), np.zeros_like(x), np.cos(q * x)], axis=-1)
    e = hamiltonian_energy(s, HamiltonianParams(1.0, 0.5, 0.0))
    assert e.exchange == pytest.approx(CYCLOID_EXCHANGE, abs=1e-12)
    assert e.dmi == pytest.approx(CYCLOID_DMI, abs=1e-12)
    # closed forms per x-step: 2J(1 - cos q) and +D sin q for this helicity
    assert e.exchange == pytest.approx(2 * (1 - math.cos(q)), abs=1e-12)
    assert e.dmi == pytest.approx(0.5 * math.sin(q), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 2), st.floats(-2, 2), st.floats(0, 2))
def test_total_is_sum_and_signs(seed, j, d, k):
    e = hamiltonian_energy(random_unit(seed), HamiltonianParams(j, d, k))
    assert e.total == pytest.approx(e.exchange + e.dmi + e.anisotropy, abs=1e-12)
    assert e.exchange >= 0 and e.anisotropy >= 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_dmi_is_odd_in_d(seed):
    s = random_unit(seed)
    a = hamiltonian_energy(s, HamiltonianParams(0.0, 0.7, 0.0)).dmi
    b = hamiltonian_energy(s, HamiltonianParams(0.0, -0.7, 0.0)).dmi
    assert a == -b


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 2 * math.pi), st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_rotation_behaviour(seed, a, b, c):
    s = random_unit(seed)
    rot = Rotation.from_euler("zyz", [a, b, c]).as_matrix()
    p = HamiltonianParams(1.0, 0.0, 0.3)
    e0 = hamiltonian_energy(s, p)
    e1 = hamiltonian_energy(s @ rot.T, p)
    assert abs(e0.exchange - e1.exchange) < 1e-9
    rz = Rotation.from_euler("z", a).as_matrix()
    assert abs(e0.anisotropy - hamiltonian_energy(s @ rz.T, p).anisotropy) < 1e-12


def test_dmi_changes_under_generic_rotation():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(8.0, 2.0), (32, 32))
    p = HamiltonianParams(0.0, 1.0, 0.0)
    rot = Rotation.from_euler("x", 1.0).as_matrix()
    assert abs(hamiltonian_energy(s, p).dmi - hamiltonian_energy(s @ rot.T, p).dmi) > 1e-3


def test_uniform_fields_have_no_exchange_or_dmi():
    v = normalize(np.array([0.3, -0.4, 0.5]))
    e = hamiltonian_energy(uniform(v), HamiltonianParams(2.0, 1.0, 0.0))
    assert e.exchange == 0.0 and e.dmi == 0.0


def test_energy_rejects_non_unit_field():
    with pytest.raises(FieldError):
        hamiltonian_energy(uniform((0, 0, 2)), HamiltonianParams())


def test_params_validation():
    with pytest.raises(ValueError):
        HamiltonianParams(J=-1.0)
    with pytest.raises(ValueError):
        HamiltonianParams(K=float("nan"))


@pytest.mark.parametrize("p", [HamiltonianParams(1, 0, 0), HamiltonianParams(0, 0.5, 0),
                               HamiltonianParams(0, 0, 0.1), HamiltonianParams(1, 0.5, 0.1)])
def test_gradient_matches_finite_differences(p):
    s = random_unit(3)
    _, g = hamiltonian_grad(s, p)
    h = 1e-6
    rng = np.random.default_rng(0)
    for _ in range(40):
        i, j, k = rng.integers(0, 8), rng.integers(0, 8), rng.integers(0, 3)
        sp, sm = s.copy(), s.copy()
        sp[i, j, k] += h
        sm[i, j, k] -= h
        num = (np.mean(sum(energy_densities(sp, p))) - np.mean(sum(energy_densities(sm, p)))) / (2 * h)
        assert abs(num - g[i, j, k]) <= 1e-5 * max(abs(num), abs(g[i, j, k]), 1e-8)


def test_wall_profile_values():
    assert wall_profile_theoretical(2.0, 2.0, 3.0) == 0.0
    assert wall_profile_theoretical(5.0, 2.0, 3.0) == pytest.approx(0.7615941559557649, abs=1e-15)
    np.testing.assert_allclose(wall_profile_theoretical([-1e6, 1e6], 0.0, 1.0), [-1.0, 1.0])
    with pytest.raises(ValueError):
        wall_profile_theoretical(0.0, 0.0, 0.0)


def test_golden_section_on_parabola():
    x, fx = golden_section(lambda t: (t - 1.3) ** 2, -5.0, 5.0)
    assert x == pytest.approx(1.3, abs=1e-8) and fx < 1e-15


def test_fit_exact_tanh():
    x = np.arange(64, dtype=float)
    fit = fit_wall_width(x, np.tanh((x - 30.3) / 4.0))
    assert abs(fit.delta - 4.0) < 1e-6
    assert abs(fit.center - 30.3) < 1e-6
    assert fit.rms_residual < 1e-9


def test_fit_descending_profile():
    x = np.arange(64, dtype=float)
    fit = fit_wall_width(x, -np.tanh((x - 30.0) / 2.5))
    assert abs(fit.delta - 2.5) < 1e-6


def test_fit_with_noise():
    rng = np.random.Generator(np.random.Philox(7))
    x = np.arange(64, dtype=float)
    sz = np.tanh((x - 31.0) / 4.0) + rng.uniform(-0.01, 0.01, x.size)
    assert abs(fit_wall_width(x, sz).delta - 4.0) < 0.1


def test_fit_rejects_profiles_without_a_wall():
    x = np.arange(32, dtype=float)
    with pytest.raises(ValueError):
        fit_wall_width(x, np.full(32, 0.5))
    with pytest.raises(ValueError):
        fit_wall_width(x[:5], x[:5])


@pytest.mark.parametrize("k, lo, hi", [(0.1, 2.85, 3.48), (0.5, 1.27, 1.56)])
def test_relaxed_wall_width(k, lo, hi):
    relax = minimize_wall_1d(1.0, k)
    assert relax.converged
    delta = fit_wall_width(np.arange(64.0), relax.sz).delta
    assert lo <= delta <= hi
    assert abs(delta / math.sqrt(1.0 / k) - 1) <= 0.1


def test_relaxed_wall_ratio():
    d1 = fit_wall_width(np.arange(64.0), minimize_wall_1d(1.0, 0.1).sz).delta
    d5 = fit_wall_width(np.arange(64.0), minimize_wall_1d(1.0, 0.5).sz).delta
    assert abs((d1 / d5) / math.sqrt(5) - 1) <= 0.1


def test_minimize_wall_validation():
    with pytest.raises(ValueError):
        minimize_wall_1d(1.0, 0.1, length=8)
    with pytest.raises(ValueError):
        minimize_wall_1d(-1.0, 0.1)


def test_local_wall_width_is_exact_on_an_oblique_straight_wall():
    # atanh(Sz) is exactly linear here, so central differences recover 1/delta
    y, x = np.mgrid[0:40, 0:40].astype(float)
    phi, delta = math.radians(30.0), 3.0
    n = (x * math.cos(phi) + y * math.sin(phi) - 25.0) / delta
    sz = np.tanh(n)
    s = np.stack([np.sqrt(1 - sz ** 2) * math.cos(phi), np.sqrt(1 - sz ** 2) * math.sin(phi), sz], axis=-1)
    est = local_wall_width(s)
    assert est.delta == pytest.approx(3.0, abs=1e-9) and est.spread < 1e-9 and est.sites > 0


@pytest.mark.parametrize("w", [1.4, 2.0, 3.0])
def test_local_wall_width_of_ansatz(w):
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(14.0, w), (64, 64))
    assert abs(local_wall_width(s).delta - w) < 0.01


def test_local_wall_width_needs_a_wall():
    s = np.zeros((8, 8, 3))
    s[..., 2] = 1.0
    with pytest.raises(ValueError):
        local_wall_width(s)
    with pytest.raises(ValueError):
        local_wall_width(s, wall_sz=1.5)
