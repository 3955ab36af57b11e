"""Topological charge of spin lattices and Euler characteristic of images.

Two charge estimators are provided.  ``skyrmion_number_triple`` is the
branch-free plaquette triple product used inside the training loss;
``skyrmion_number_berg_luscher`` sums signed spherical-triangle solid
angles and returns an exact integer for fields with a uniform outer ring.

All sums use ``numpy.sum`` over a fixed array layout (pairwise reduction),
so results are reproducible run to run.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage

from .field import FieldError, anchor_corners, as_spin_field

Method = Literal["triple_product", "split_triple", "berg_luscher"]

FOUR_PI = 4.0 * math.pi
DEGENERATE_TOL = 1e-12
UNRELIABLE_FRACTION = 0.01

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class SkyrmionEstimate:
    value: float
    method: Method
    degenerate_plaquettes: int = 0


@dataclass
class RegionNode:
    label: int
    color: Literal["dark", "light"]
    depth: int
    pixel_count: int
    children: list["RegionNode"] = field(default_factory=list)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class EulerResult:
    chi: int
    region_tree: RegionNode
    convention: dict

    def counts(self) -> dict:
        """Non-root region counts by color."""
        out = {"dark": 0, "light": 0}
        for node in self.region_tree.walk():
            if node is not self.region_tree:
                out[node.color] += 1
        return out


@dataclass(frozen=True)
class ChiPrediction:
    chi: int
    estimate: SkyrmionEstimate
    reliable: bool


def _check_field(s) -> np.ndarray:
    s = as_spin_field(s)
    if s.shape[0] < 2 or s.shape[1] < 2:
        raise FieldError("charge estimators need at least a 2x2 lattice")
    return s


def _triple(a, b, c) -> np.ndarray:
    """Site-wise ``a . (b x c)``."""
    return np.einsum("...k,...k->...", a, np.cross(b, c))


def _dot(a, b) -> np.ndarray:
    return np.einsum("...k,...k->...", a, b)


def _triple_density(s: np.ndarray) -> np.ndarray:
    s00, s01, s10, _ = anchor_corners(s)
    dx = s01 - s00
    dy = s10 - s00
    return _triple(s00, dx, dy)


def _triangle_angles(s1, s2, s3):
    num = _triple(s1, s2, s3)
    den = 1.0 + _dot(s1, s2) + _dot(s2, s3) + _dot(s3, s1)
    degenerate = (np.abs(num) <= DEGENERATE_TOL) & (np.abs(den) <= DEGENERATE_TOL)
    omega = np.where(degenerate, 0.0, 2.0 * np.arctan2(num, den))
    return omega, degenerate


def _berg_luscher_density(s: np.ndarray):
    s00, s01, s10, s11 = anchor_corners(s)
    o1, d1 = _triangle_angles(s00, s01, s11)
    o2, d2 = _triangle_angles(s00, s11, s10)
    return o1 + o2, int(d1.sum() + d2.sum())


def skyrmion_number_triple(s) -> SkyrmionEstimate:
    """(1/4pi) * sum over plaquettes of ``S . (dxS x dyS)``."""
    s = _check_field(s)
    return SkyrmionEstimate(float(np.sum(_triple_density(s)) / FOUR_PI), "triple_product", 0)


def _split_density(s: np.ndarray) -> np.ndarray:
    s00, s01, s10, s11 = anchor_corners(s)
    return 0.5 * (_triple(s00, s01, s11) + _triple(s00, s11, s10))


def skyrmion_number_split(s) -> SkyrmionEstimate:
    """Triple products over both triangles of every plaquette, halved.

    This is the small-angle limit of the Berg-Luscher sum; unlike the
    forward-difference form it sees all four plaquette corners, so a
    checkerboard texture cannot inflate it.
    """
    s = _check_field(s)
    return SkyrmionEstimate(float(np.sum(_split_density(s)) / FOUR_PI), "split_triple", 0)


def skyrmion_number_berg_luscher(s) -> SkyrmionEstimate:
    s = _check_field(s)
    density, degenerate = _berg_luscher_density(s)
    return SkyrmionEstimate(float(np.sum(density) / FOUR_PI), "berg_luscher", degenerate)


def solid_angle_density(s, method: Method = "berg_luscher") -> np.ndarray:
    """Per-plaquette solid angle on the ``(H-1, W-1)`` anchor grid.

    The values are not divided by 4pi; ``density.sum() / (4*pi)`` reproduces
    the matching estimator.
    """
    s = _check_field(s)
    if method == "triple_product":
        return _triple_density(s)
    if method == "berg_luscher":
        return _berg_luscher_density(s)[0]
    if method == "split_triple":
        return _split_density(s)
    raise ValueError(f"unknown method {method!r}")


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def predict_chi(s) -> ChiPrediction:
    """Round the Berg-Luscher charge to the nearest integer.

    The prediction is flagged unreliable when more than 1% of the lattice
    sites carry degenerate triangles.
    """
    s = _check_field(s)
    est = skyrmion_number_berg_luscher(s)
    h, w = s.shape[:2]
    reliable = est.degenerate_plaquettes <= UNRELIABLE_FRACTION * h * w
    return ChiPrediction(round_half_away(est.value), est, reliable)


# --- Euler characteristic oracles -------------------------------------------


def binarize(img, threshold: float = 0.5) -> np.ndarray:
    """Boolean mask of dark pixels (``pixel < threshold``)."""
    return np.asarray(img, dtype=np.float64) < threshold


def _label_regions(dark: np.ndarray, root_dark: bool):
    """Label dark and light components with the dual 4/8 connectivity pair."""
    dark_struct = _FOUR if root_dark else _EIGHT
    light_struct = _EIGHT if root_dark else _FOUR
    dark_lab, n_dark = ndimage.label(dark, structure=dark_struct)
    light_lab, n_light = ndimage.label(~dark, structure=light_struct)
    # one label image: dark regions 1..n_dark, light regions n_dark+1..
    labels = np.where(dark, dark_lab, light_lab + n_dark)
    return labels, n_dark, n_light


def _region_tree(labels: np.ndarray, n_dark: int, root_label: int) -> RegionNode:
    n = int(labels.max())
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    # adjacency between regions of different colour via 4-neighbour contacts
    pairs = []
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        m = a != b
        pairs.append(np.stack([a[m], b[m]], axis=1))
    edges = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    adj: dict[int, list[int]] = {k: [] for k in range(1, n + 1)}
    for a, b in edges:
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))

    def make(label: int, depth: int) -> RegionNode:
        color = "dark" if label <= n_dark else "light"
        return RegionNode(label, color, depth, int(sizes[label]))

    root = make(root_label, 0)
    seen = {root_label}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for nb in sorted(adj[node.label]):
            if nb in seen:
                continue
            seen.add(nb)
            child = make(nb, node.depth + 1)
            node.children.append(child)
            queue.append(child)
    return root


def euler_characteristic(img, threshold: float = 0.5) -> EulerResult:
    """Signed region count of a binarized image.

    Every connected region other than the one holding pixel (0, 0)
    contributes +1 if dark and -1 if light.  Regions sharing the root's
    colour are 4-connected, the opposite colour 8-connected.  For dark
    shapes on a light background this is objects minus holes.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 2:
        raise FieldError(f"euler_characteristic needs a 2-D image of at least 2x2, got {a.shape}")
    dark = binarize(a, threshold)
    root_dark = bool(dark[0, 0])
    labels, n_dark, n_light = _label_regions(dark, root_dark)
    root_label = int(labels[0, 0])
    if root_dark:
        chi = -(n_light) + (n_dark - 1)
    else:
        chi = n_dark - (n_light - 1)
    tree = _region_tree(labels, n_dark, root_label)
    convention = {
        "threshold": threshold,
        "dark": "pixel < threshold",
        "root_color": "dark" if root_dark else "light",
        "root_connectivity": 4,
        "other_connectivity": 8,
    }
    return EulerResult(int(chi), tree, convention)


def euler_characteristic_cubical(img, threshold: float = 0.5) -> int:
    """V - E + F of the closed cubical complex spanned by the dark pixels.

    Matches 8-connected foreground counting; for images whose (0, 0) pixel
    is dark, callers negate the result on the inverted image instead.
    """
    return _cubical_chi(binarize(img, threshold))


def _cubical_chi(mask: np.ndarray) -> int:
    p = np.pad(mask, 1)
    faces = int(mask.sum())
    # a corner exists if any of its four surrounding pixels is dark
    verts = int((p[:-1, :-1] | p[:-1, 1:] | p[1:, :-1] | p[1:, 1:]).sum())
    # horizontal edges lie between vertically stacked pixels, and vice versa
    h_edges = int((p[:-1, 1:-1] | p[1:, 1:-1]).sum())
    v_edges = int((p[1:-1, :-1] | p[1:-1, 1:]).sum())
    return verts - (h_edges + v_edges) + faces


def signed_cubical_chi(img, threshold: float = 0.5) -> int:
    """Cubical oracle with the signed root-colour convention applied."""
    dark = binarize(img, threshold)
    if dark[0, 0]:
        return -_cubical_chi(~dark)
    return _cubical_chi(dark)
