"""Visualizations and exports of spin fields.

Spin renders use HSV: hue from the in-plane angle, saturation from the
in-plane magnitude and value from ``(Sz + 1) / 2``, so up spins are white,
down spins black and domain walls coloured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import WallFit, fit_wall_width
from .field import as_spin_field
from .topology import solid_angle_density


def hsv_to_rgb(h, s, v) -> np.ndarray:
    """Vectorized standard HSV -> RGB; all channels in ``[0, 1]``, hue wraps."""
    h = np.mod(np.asarray(h, dtype=np.float64), 1.0)
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _to_bytes(rgb: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def spin_rgb(s) -> np.ndarray:
    s = as_spin_field(s)
    hue = np.arctan2(s[..., 1], s[..., 0]) / (2.0 * math.pi)
    sat = np.clip(np.hypot(s[..., 0], s[..., 1]), 0.0, 1.0)
    val = np.clip((s[..., 2] + 1.0) / 2.0, 0.0, 1.0)
    return _to_bytes(hsv_to_rgb(hue, sat, val))


def density_rgb(density: np.ndarray, scale: Optional[float] = None) -> np.ndarray:
    """Diverging map: white at 0, red for positive, blue for negative.

    ``scale`` defaults to ``max |density|`` so the colour range is symmetric.
    """
    d = np.asarray(density, dtype=np.float64)
    m = float(np.max(np.abs(d))) if scale is None else float(scale)
    t = np.clip(d / m, -1.0, 1.0) if m > 0 else np.zeros_like(d)
    pos = np.clip(t, 0.0, 1.0)
    neg = np.clip(-t, 0.0, 1.0)
    rgb = np.stack([1.0 - neg, 1.0 - pos - neg, 1.0 - pos], axis=-1)
    return _to_bytes(rgb)


def density_rows(density: np.ndarray):
    """``(x, y, value)`` rows of a scalar map, row-major."""
    h, w = density.shape
    return [(x, y, float(density[y, x])) for y in range(h) for x in range(w)]


def vector_rows(s):
    """``(x, y, Sx, Sy, Sz)`` for every site, row-major."""
    s = as_spin_field(s)
    h, w = s.shape[:2]
    return [(x, y, *map(float, s[y, x])) for y in range(h) for x in range(w)]


@dataclass(frozen=True)
class Profile:
    row: int
    x: np.ndarray
    sz: np.ndarray
    fit: Optional[WallFit]
    fit_error: str = ""

    def rows(self):
        fitted = (np.tanh((self.x - self.fit.center) / self.fit.delta) if self.fit
                  else np.full(self.x.shape, np.nan))
        if self.fit is not None and self.sz[0] > self.sz[-1]:
            fitted = -fitted
        return [(int(x), float(z), float(f)) for x, z, f in zip(self.x, self.sz, fitted)]


def sz_profile(s, row: Optional[int] = None, start: int = 0, stop: Optional[int] = None) -> Profile:
    """``Sz`` along one row with a tanh wall fit when possible.

    Defaults cover the left half of the middle row, i.e. from the border
    to the centre, so a centred texture contributes a single wall.
    """
    s = as_spin_field(s)
    h, w = s.shape[:2]
    row = h // 2 if row is None else row
    stop = w // 2 if stop is None else stop
    if not 0 <= row < h:
        raise ValueError(f"row {row} outside 0..{h - 1}")
    x = np.arange(w)[start:stop]
    sz = s[row, start:stop, 2]
    try:
        fit, err = fit_wall_width(x, sz), ""
    except ValueError as exc:
        fit, err = None, str(exc)
    return Profile(row, x, sz.copy(), fit, err)


def wall_mass_fraction(s, radius: float, wall: float, center=None, method="berg_luscher") -> float:
    """Share of ``sum |density|`` on anchors within ``2 * wall`` of ``radius``."""
    d = np.abs(solid_angle_density(s, method))
    h, w = d.shape
    # site-grid centre; the (h, w) anchors sit at plaquette midpoints
    cx, cy = (w / 2.0, h / 2.0) if center is None else center
    y, x = np.mgrid[0:h, 0:w]
    r = np.hypot(x + 0.5 - cx, y + 0.5 - cy)
    band = np.abs(r - radius) <= 2.0 * wall
    total = d.sum()
    return float(d[band].sum() / total) if total > 0 else 0.0
