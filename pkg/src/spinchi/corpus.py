"""Synthetic shape images, analytic spin textures, and image preprocessing.

Shapes are rasterized from signed distance functions with a linear
coverage ramp one pixel wide, so binarizing at 0.5 recovers the exact set
``sdf < 0``.  Pixel centres sit at integer coordinates ``(x=j, y=i)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .field import FieldError

Kind = Literal["disk", "square", "triangle", "ring", "hole", "two_disks",
               "hex_grid", "window_frame", "blobs"]
Polarity = Literal["dark_on_light", "light_on_dark"]


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Geometry in pixels.  ``center`` is ``(x, y)``; unset values get defaults per kind.

    ``size`` is the radius for disks/holes/two_disks/hex cells and the side
    length for squares, triangles and rings.  ``thickness`` is the ring band.
    ``grid`` is ``(rows, cols)`` for hex_grid and window_frame.
    ``blobs`` lists ``(x, y, r)`` triples.
    """

    kind: Kind
    canvas: tuple[int, int] = (64, 64)
    polarity: Polarity = "dark_on_light"
    center: Optional[tuple[float, float]] = None
    size: Optional[float] = None
    thickness: Optional[float] = None
    separation: Optional[float] = None
    grid: Optional[tuple[int, int]] = None
    blobs: Optional[tuple[tuple[float, float, float], ...]] = None
    margin: int = 4

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeSpec":
        d = dict(d)
        for key in ("canvas", "center", "grid"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("blobs") is not None:
            d["blobs"] = tuple(tuple(float(v) for v in b) for b in d["blobs"])
        return cls(**d)


# --- signed distance functions (negative inside) ------------------------------


def _grid(canvas):
    h, w = canvas
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    return x, y


def _sd_disk(x, y, cx, cy, r):
    return np.hypot(x - cx, y - cy) - r


def _sd_box(x, y, cx, cy, hx, hy):
    dx = np.abs(x - cx) - hx
    dy = np.abs(y - cy) - hy
    outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
    return outside + np.minimum(np.maximum(dx, dy), 0.0)


def _sd_convex_polygon(x, y, verts):
    """Max of signed edge-line distances; exact inside, slight underestimate at outer corners."""
    v = np.asarray(verts, dtype=np.float64)
    # counter-clockwise order in (x, y) so outward normals are (dy, -dx)
    area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    if area < 0:
        v = v[::-1]
    d = np.full(x.shape, -np.inf)
    for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
        ex, ey = x1 - x0, y1 - y0
        nx, ny = ey, -ex
        norm = math.hypot(nx, ny)
        d = np.maximum(d, ((x - x0) * nx + (y - y0) * ny) / norm)
    return d


def _regular_polygon(cx, cy, r, n, phase):
    a = phase + 2 * math.pi * np.arange(n) / n
    return np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1)


def _union(*ds):
    return np.minimum.reduce(ds)


# --- per-kind geometry --------------------------------------------------------


def _default_center(spec):
    h, w = spec.canvas
    return spec.center if spec.center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)


def _shape_sdf(spec: ShapeSpec):
    """Return ``(sdf, bbox)`` where bbox = (xmin, xmax, ymin, ymax) of the dark set."""
    x, y = _grid(spec.canvas)
    h, w = spec.canvas
    cx, cy = _default_center(spec)
    k = spec.kind
    if k in ("disk", "hole"):
        r = spec.size if spec.size is not None else min(h, w) / 4.0
        d = _sd_disk(x, y, cx, cy, r)
        bbox = (cx - r, cx + r, cy - r, cy + r)
        if k == "hole":
            # the shape region is the canvas minus the disk
            return -d, bbox
        return d, bbox
    if k == "square":
        s = spec.size if spec.size is not None else min(h, w) / 2.0
        return _sd_box(x, y, cx, cy, s / 2, s / 2), (cx - s / 2, cx + s / 2, cy - s / 2, cy + s / 2)
    if k == "triangle":
        s = spec.size if spec.size is not None else min(h, w) * 0.6
        r = s / math.sqrt(3.0)
        # centroid at the centre, apex pointing up (towards row 0)
        verts = _regular_polygon(cx, cy + r / 4.0, r, 3, -math.pi / 2)
        return _sd_convex_polygon(x, y, verts), (verts[:, 0].min(), verts[:, 0].max(),
                                                 verts[:, 1].min(), verts[:, 1].max())
    if k == "ring":
        s = spec.size if spec.size is not None else min(h, w) * 0.6
        t = spec.thickness if spec.thickness is not None else s / 4.0
        if 2 * t >= s:
            raise ShapeError("ring thickness leaves no hole")
        outer = _sd_box(x, y, cx, cy, s / 2, s / 2)
        inner = _sd_box(x, y, cx, cy, s / 2 - t, s / 2 - t)
        return np.maximum(outer, -inner), (cx - s / 2, cx + s / 2, cy - s / 2, cy + s / 2)
    if k == "two_disks":
        r = spec.size if spec.size is not None else min(h, w) / 6.0
        sep = spec.separation if spec.separation is not None else 3.0 * r
        d = _union(_sd_disk(x, y, cx - sep / 2, cy, r), _sd_disk(x, y, cx + sep / 2, cy, r))
        return d, (cx - sep / 2 - r, cx + sep / 2 + r, cy - r, cy + r)
    if k == "hex_grid":
        rows, cols = spec.grid if spec.grid is not None else (3, 6)
        r = spec.size if spec.size is not None else 7.0
        pitch = spec.separation if spec.separation is not None else 2.6 * r
        # flat-topped hexagons; odd columns shifted down by half a pitch
        width = (cols - 1) * pitch * 0.9
        height = (rows - 0.5) * pitch
        x0, y0 = cx - width / 2, cy - height / 2 + pitch / 4
        cells = []
        for j in range(cols):
            for i in range(rows):
                hx = x0 + j * pitch * 0.9
                hy = y0 + i * pitch + (pitch / 2 if j % 2 else 0.0)
                cells.append(_sd_convex_polygon(x, y, _regular_polygon(hx, hy, r, 6, 0.0)))
        return _union(*cells), (x0 - r, x0 + width + r, y0 - r, y0 + (rows - 0.5) * pitch + r)
    if k == "window_frame":
        rows, cols = spec.grid if spec.grid is not None else (4, 5)
        cell = spec.size if spec.size is not None else 14.0
        bar = spec.thickness if spec.thickness is not None else 7.0
        fw = cols * cell + (cols + 1) * bar
        fh = rows * cell + (rows + 1) * bar
        d = _sd_box(x, y, cx, cy, fw / 2, fh / 2)
        left, top = cx - fw / 2, cy - fh / 2
        rng = np.random.Generator(np.random.Philox(20))
        for i in range(rows):
            for j in range(cols):
                hx = left + bar + cell / 2 + j * (cell + bar)
                hy = top + bar + cell / 2 + i * (cell + bar)
                # holes of varying shape and size, deterministic per cell
                scale = 0.7 + 0.3 * rng.random()
                if (i + j) % 3 == 0:
                    hole = _sd_disk(x, y, hx, hy, cell / 2 * scale)
                elif (i + j) % 3 == 1:
                    hole = _sd_box(x, y, hx, hy, cell / 2 * scale, cell / 2 * scale)
                else:
                    hole = _sd_box(x, y, hx, hy, cell / 2, cell / 2 * scale)
                d = np.maximum(d, -hole)
        return d, (cx - fw / 2, cx + fw / 2, cy - fh / 2, cy + fh / 2)
    if k == "blobs":
        if not spec.blobs:
            raise ShapeError("blobs kind needs a list of (x, y, r)")
        d = _union(*[_sd_disk(x, y, bx, by, br) for bx, by, br in spec.blobs])
        bbox = (min(b[0] - b[2] for b in spec.blobs), max(b[0] + b[2] for b in spec.blobs),
                min(b[1] - b[2] for b in spec.blobs), max(b[1] + b[2] for b in spec.blobs))
        return d, bbox
    raise ShapeError(f"unknown shape kind {k!r}")


def generate_shape(spec: ShapeSpec) -> np.ndarray:
    """Rasterize ``spec``: dark = 0, light = 1, one-pixel linear edge ramp."""
    h, w = spec.canvas
    if h < 8 or w < 8:
        raise ShapeError("canvas must be at least 8x8")
    sdf, (xmin, xmax, ymin, ymax) = _shape_sdf(spec)
    m = spec.margin
    if xmin < m or ymin < m or xmax > w - 1 - m or ymax > h - 1 - m:
        raise ShapeError(f"{spec.kind} does not fit the {h}x{w} canvas with margin {m}")
    coverage = np.clip(0.5 - sdf, 0.0, 1.0)
    img = 1.0 - coverage
    if spec.polarity == "light_on_dark":
        img = 1.0 - img
    elif spec.polarity != "dark_on_light":
        raise ShapeError(f"unknown polarity {spec.polarity!r}")
    return img


def load_shape_specs(path) -> list[tuple[str, ShapeSpec]]:
    """Read ``{"name": {spec...}, ...}`` or ``[{"name": ..., ...spec}]`` JSON."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        items = list(data.items())
    else:
        items = [(d.pop("name"), d) for d in (dict(e) for e in data)]
    return [(name, ShapeSpec.from_dict(d)) for name, d in items]


# --- named fixtures -----------------------------------------------------------

# Euler characteristics here are the intended values; tests confirm each one
# with the independent flood-fill and cubical oracles.
FIXTURES: dict[str, tuple[ShapeSpec, int]] = {
    "circle": (ShapeSpec("disk", (64, 64), size=16.0), 1),
    "square": (ShapeSpec("square", (64, 64), size=30.0), 1),
    "triangle": (ShapeSpec("triangle", (64, 64), size=38.0), 1),
    "hole": (ShapeSpec("hole", (64, 64), size=16.0), -1),
    "two_disks": (ShapeSpec("two_disks", (64, 64), size=10.0, separation=30.0), 2),
    "ring": (ShapeSpec("ring", (64, 64), size=40.0, thickness=12.0), 0),
    "inverted_square": (ShapeSpec("square", (64, 64), polarity="light_on_dark", size=30.0), -1),
    "hex_grid": (ShapeSpec("hex_grid", (96, 136), size=8.0, grid=(3, 6), separation=21.0), 18),
    "window_frame": (ShapeSpec("window_frame", (120, 144), size=15.0, thickness=8.0, grid=(4, 5)), -19),
    "small_triangle": (ShapeSpec("triangle", (64, 64), center=(38.0, 26.0), size=24.0), 1),
}

CROSSVAL_SET = ("circle", "square", "triangle", "hole", "two_disks", "ring")
EVAL_SUITE = CROSSVAL_SET + ("small_triangle", "inverted_square", "hex_grid", "window_frame")


def fixture(name: str) -> np.ndarray:
    return generate_shape(FIXTURES[name][0])


def fixture_suite(names=EVAL_SUITE) -> list[tuple[str, np.ndarray, int]]:
    return [(n, fixture(n), FIXTURES[n][1]) for n in names]


# Four blobs; the left pair sits 2.35 radii apart (a 1.75 px gap), so blur
# at sigma = 2 bridges it while sigma = 1 does not.
BLOB_RADIUS = 5.0
BLOB_SPACING = 2.35
BLOB_SPEC = ShapeSpec("blobs", (64, 64), blobs=(
    (17.0, 20.0, BLOB_RADIUS), (17.0 + BLOB_SPACING * BLOB_RADIUS, 20.0, BLOB_RADIUS),
    (20.0, 46.0, BLOB_RADIUS), (45.0, 44.0, BLOB_RADIUS)))


# --- analytic spin textures -----------------------------------------------------


@dataclass(frozen=True)
class SkyrmionAnsatzSpec:
    """Neel skyrmion; ``polarity`` is the sign of the core ``Sz``."""

    radius: float
    wall: float
    center: Optional[tuple[float, float]] = None
    polarity: int = 1
    helicity: Literal["neel_outward", "neel_inward"] = "neel_outward"
    nesting: Optional["SkyrmionAnsatzSpec"] = None


def _polar_angle(r, radius, wall):
    """Angle away from the background axis: pi at the core, exactly 0 beyond radius + 3*wall.

    ``2 atan(exp((R - r) / w))`` gives ``cos = -tanh((R - r)/w)``; a smoothstep
    over ``[R + 2w, R + 3w]`` takes the tail to zero so the outer ring is uniform.
    """
    a = 2.0 * np.arctan(np.exp((radius - r) / wall))
    t = np.clip((r - (radius + 2 * wall)) / wall, 0.0, 1.0)
    return a * (1.0 - t * t * (3.0 - 2.0 * t))


def skyrmion_ansatz(spec: SkyrmionAnsatzSpec, canvas: tuple[int, int]) -> np.ndarray:
    """Unit field ``Sz = p tanh((R - r) / w)`` with radial in-plane components.

    A nested spec adds an inner texture of the same polarity whose polar
    angle stacks on the outer one, giving a skyrmionium when it sits inside.
    """
    h, w = canvas
    x, y = _grid(canvas)
    cx, cy = spec.center if spec.center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    if spec.radius <= 2 * spec.wall:
        raise FieldError("ansatz needs radius > 2 * wall")
    if spec.polarity not in (1, -1):
        raise FieldError("polarity must be +1 or -1")
    r = np.hypot(x - cx, y - cy)
    alpha = _polar_angle(r, spec.radius, spec.wall)
    inner = spec.nesting
    while inner is not None:
        icx, icy = inner.center if inner.center is not None else (cx, cy)
        alpha = alpha + _polar_angle(np.hypot(x - icx, y - icy), inner.radius, inner.wall)
        inner = inner.nesting
    phi = np.arctan2(y - cy, x - cx) + (math.pi if spec.helicity == "neel_inward" else 0.0)
    p = spec.polarity
    s = np.stack([np.sin(alpha) * np.cos(phi), np.sin(alpha) * np.sin(phi), -p * np.cos(alpha)], axis=-1)
    ring = np.concatenate([s[0], s[-1], s[:, 0], s[:, -1]])
    if np.max(np.abs(ring - np.array([0.0, 0.0, -p]))) > 1e-9:
        raise FieldError("ansatz does not reach a uniform outer ring; shrink radius or wall")
    return s


def skyrmionium_spec(radius: float, inner_radius: float, wall: float, polarity: int = 1) -> SkyrmionAnsatzSpec:
    return SkyrmionAnsatzSpec(radius, wall, polarity=polarity,
                              nesting=SkyrmionAnsatzSpec(inner_radius, wall, polarity=polarity))


# --- preprocessing -------------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-k * k / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with radius ``ceil(3 sigma)`` and edge replication."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    a = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return a.copy()
    k = gaussian_kernel(sigma)
    r = k.size // 2
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        p = np.pad(a, pad, mode="edge")
        n = a.shape[axis]
        acc = np.zeros_like(a)
        for t, wt in enumerate(k):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(t, t + n)
            acc += wt * p[tuple(sl)]
        a = acc
    return a
