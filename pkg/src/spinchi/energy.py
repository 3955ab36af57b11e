"""Discrete magnetic Hamiltonian and domain-wall profile tools.

Every term is evaluated with forward differences on the plaquette-anchor
grid and averaged over its ``(H-1) * (W-1)`` anchors:

    exchange   = J (|dxS|^2 + |dyS|^2)
    dmi        = D (y.(S x dxS) - x.(S x dyS))
    anisotropy = K (1 - Sz^2)

The anisotropy is written with an easy out-of-plane axis so that uniform
+z or -z states cost nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import FieldError, anchor_corners, as_spin_field, forward_diff

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HamiltonianParams:
    J: float = 1.0
    D: float = 0.0
    K: float = 0.0

    def __post_init__(self):
        for name in ("J", "D", "K"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.J < 0 or self.K < 0:
            raise ValueError("J and K must be non-negative")


@dataclass(frozen=True)
class EnergyBreakdown:
    exchange: float
    dmi: float
    anisotropy: float
    total: float


@dataclass(frozen=True)
class WallFit:
    center: float
    delta: float
    rms_residual: float


@dataclass(frozen=True)
class LocalWallWidth:
    delta: float          # median over wall sites
    sites: int            # number of wall sites used
    spread: float         # interquartile range of the per-site widths


@dataclass(frozen=True)
class WallRelaxation:
    sz: np.ndarray
    energy: float
    steps: int
    converged: bool


def energy_densities(s: np.ndarray, p: HamiltonianParams):
    """Per-anchor exchange, DMI and anisotropy maps (no validation)."""
    s00 = s[:-1, :-1]
    dx = forward_diff(s, "x")
    dy = forward_diff(s, "y")
    exchange = p.J * (np.einsum("...k,...k->...", dx, dx) + np.einsum("...k,...k->...", dy, dy))
    cx = np.cross(s00, dx)
    cy = np.cross(s00, dy)
    dmi = p.D * (cx[..., 1] - cy[..., 0])
    anisotropy = p.K * (1.0 - s00[..., 2] ** 2)
    return exchange, dmi, anisotropy


def _breakdown(s: np.ndarray, p: HamiltonianParams) -> EnergyBreakdown:
    ex, dm, an = (float(np.mean(t)) for t in energy_densities(s, p))
    return EnergyBreakdown(ex, dm, an, ex + dm + an)


def hamiltonian_energy(s, p: HamiltonianParams) -> EnergyBreakdown:
    """Mean energy per anchor of a unit spin field.

    Raises ``FieldError`` for fields whose norms deviate from 1 by more than
    1e-6; normalize raw network output first.
    """
    s = as_spin_field(s, unit=True, tol=1e-6)
    if s.shape[0] < 2 or s.shape[1] < 2:
        raise FieldError("hamiltonian_energy needs at least a 2x2 lattice")
    return _breakdown(s, p)


def hamiltonian_grad(s: np.ndarray, p: HamiltonianParams):
    """Total mean energy and its gradient with respect to every spin.

    Uses ``S x dxS = S x S[+x]`` so the DMI gradient is bilinear in the
    two neighbouring spins.
    """
    e = _breakdown(s, p)
    n = (s.shape[0] - 1) * (s.shape[1] - 1)
    s00, s01, s10, _ = anchor_corners(s)
    g = np.zeros_like(s)
    g00 = g[:-1, :-1]
    if p.J:
        dx = s01 - s00
        dy = s10 - s00
        c = 2.0 * p.J / n
        g00 -= c * (dx + dy)
        g[:-1, 1:] += c * dx
        g[1:, :-1] += c * dy
    if p.D:
        c = p.D / n
        # d/da and d/db of (a x b)_y = a_z b_x - a_x b_z, with a = s00, b = s01
        g00[..., 0] -= c * s01[..., 2]
        g00[..., 2] += c * s01[..., 0]
        g[:-1, 1:, 0] += c * s00[..., 2]
        g[:-1, 1:, 2] -= c * s00[..., 0]
        # minus d/da and d/db of (a x b)_x = a_y b_z - a_z b_y, with b = s10
        g00[..., 1] -= c * s10[..., 2]
        g00[..., 2] += c * s10[..., 1]
        g[1:, :-1, 1] += c * s00[..., 2]
        g[1:, :-1, 2] -= c * s00[..., 1]
    if p.K:
        g00[..., 2] -= 2.0 * p.K / n * s00[..., 2]
    return e, g


def wall_profile_theoretical(x, center: float, delta: float):
    if delta <= 0:
        raise ValueError("delta must be positive")
    return np.tanh((np.asarray(x, dtype=np.float64) - center) / delta)


def golden_section(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a unimodal scalar function on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(c) + abs(d)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _zero_crossing(x: np.ndarray, sz: np.ndarray) -> float:
    idx = np.nonzero(np.diff(np.sign(sz)) != 0)[0]
    if idx.size == 0:
        if np.any(sz == 0):
            return float(x[np.argmax(sz == 0)])
        raise ValueError("profile does not cross Sz = 0")
    # take the crossing nearest the middle of the sample range
    k = idx[np.argmin(np.abs(idx - (len(x) - 1) / 2))]
    x0, x1, y0, y1 = x[k], x[k + 1], sz[k], sz[k + 1]
    return float(x0 if y1 == y0 else x0 - y0 * (x1 - x0) / (y1 - y0))


def fit_wall_width(x, sz) -> WallFit:
    """Least-squares fit of ``tanh((x - c) / delta)`` to a wall profile.

    Golden-section search on ``delta``; for each trial width the centre is
    refined by a nested golden-section search around the linear-interpolated
    zero crossing.  Descending profiles are negated first.
    """
    x = np.asarray(x, dtype=np.float64)
    sz = np.asarray(sz, dtype=np.float64)
    if x.shape != sz.shape or x.ndim != 1:
        raise ValueError("x and sz must be 1-D arrays of equal length")
    if x.size < 8:
        raise ValueError("need at least 8 samples")
    order = np.argsort(x, kind="stable")
    x, sz = x[order], sz[order]
    lo_side = sz[: max(1, x.size // 4)].mean()
    hi_side = sz[-max(1, x.size // 4):].mean()
    if lo_side > hi_side:
        sz = -sz
    if not (sz.min() < -0.9 and sz.max() > 0.9):
        raise ValueError("profile must span Sz from below -0.9 to above +0.9")
    c0 = _zero_crossing(x, sz)
    span = float(x[-1] - x[0])

    def sse(c, delta):
        r = np.tanh((x - c) / delta) - sz
        return float(r @ r)

    def best_center(delta):
        return golden_section(lambda c: sse(c, delta), c0 - 2.0, c0 + 2.0, tol=1e-12)

    delta, _ = golden_section(lambda d: best_center(d)[1], 1e-3, span, tol=1e-12)
    center, err = best_center(delta)
    return WallFit(float(center), float(delta), math.sqrt(err / x.size))


def local_wall_width(s, wall_sz: float = 0.8) -> LocalWallWidth:
    """Wall width of a 2-D texture from the local inverse of a tanh profile.

    Across a wall ``Sz = tanh(n / delta)`` along the wall normal ``n``, so
    ``atanh(Sz)`` is linear in ``n`` with slope ``1 / delta`` whatever the
    wall's shape.  Each site with ``|Sz| < wall_sz`` gives
    ``1 / |grad atanh(Sz)|`` by central differences (exact on a linear
    function); the median over those sites is returned.
    """
    s = as_spin_field(s)
    if not 0.0 < wall_sz < 1.0:
        raise ValueError("wall_sz must lie in (0, 1)")
    a = np.arctanh(np.clip(s[..., 2], -0.999, 0.999))
    gy, gx = np.gradient(a)
    g = np.hypot(gx, gy)
    wall = (np.abs(s[..., 2]) < wall_sz) & (g > 0.0)
    if not wall.any():
        raise ValueError("field has no wall sites")
    widths = 1.0 / g[wall]
    q1, med, q3 = np.percentile(widths, [25.0, 50.0, 75.0])
    return LocalWallWidth(float(med), int(wall.sum()), float(q3 - q1))


def minimize_wall_1d(J: float, K: float, length: int = 64, steps: int = 50000,
                     lr: float = 0.05) -> WallRelaxation:
    """Relax a pinned 1-D wall by gradient descent on in-plane angles.

    Spins lie in the x-z plane, ``S_i = (sin t_i, 0, -cos t_i)``, with
    ``t_0 = 0`` (-z) and ``t_{L-1} = pi`` (+z) held fixed.  The discrete
    energy is ``sum 2J (1 - cos(t_{i+1} - t_i)) + K sin^2 t_i``, the D = 0
    restriction of the lattice Hamiltonian.  Stops once a step lowers the
    energy by less than 1e-12.
    """
    if length < 32:
        raise ValueError("length must be at least 32")
    if J < 0 or K < 0:
        raise ValueError("J and K must be non-negative")
    t = np.linspace(0.0, math.pi, length)

    def energy(t):
        return float(np.sum(2.0 * J * (1.0 - np.cos(np.diff(t)))) + np.sum(K * np.sin(t) ** 2))

    e = energy(t)
    converged = False
    step = 0
    for step in range(1, steps + 1):
        d = np.diff(t)
        g = K * np.sin(2.0 * t)
        g[:-1] -= 2.0 * J * np.sin(d)
        g[1:] += 2.0 * J * np.sin(d)
        g[0] = g[-1] = 0.0
        t = t - lr * g
        e_new = energy(t)
        if e - e_new < 1e-12:
            e = min(e, e_new)
            converged = True
            break
        e = e_new
    return WallRelaxation(-np.cos(t), e, step, converged)
