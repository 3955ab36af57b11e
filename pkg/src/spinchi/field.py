"""Lattice containers and shared finite-difference primitives.

Images are ``(H, W)`` float64 arrays, spin fields are ``(H, W, 3)`` float64
arrays with components ``(Sx, Sy, Sz)`` in the last axis, and scalar fields
are ``(H, W)`` float64 arrays.  Row index ``i`` runs along ``y`` and column
index ``j`` along ``x``; the lattice constant is 1.
"""

from __future__ import annotations

import numpy as np

MIN_IMAGE_SIDE = 8
NORMALIZE_EPS = 1e-12


class FieldError(ValueError):
    """Raised for malformed lattice data (bad shape, non-finite values)."""


def as_image(pixels, *, min_side: int = MIN_IMAGE_SIDE) -> np.ndarray:
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2:
        raise FieldError(f"image must be 2-D, got shape {img.shape}")
    if min(img.shape) < min_side:
        raise FieldError(f"image {img.shape} smaller than {min_side}x{min_side}")
    if not np.all(np.isfinite(img)):
        raise FieldError("image contains non-finite pixels")
    return img


def as_spin_field(vectors, *, unit: bool = False, tol: float = 1e-9) -> np.ndarray:
    """Validate an ``(H, W, 3)`` field; with ``unit=True`` also check norms."""
    s = np.asarray(vectors, dtype=np.float64)
    if s.ndim != 3 or s.shape[2] != 3:
        raise FieldError(f"spin field must have shape (H, W, 3), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise FieldError("spin field contains non-finite components")
    if unit:
        dev = np.max(np.abs(norm_map(s) - 1.0)) if s.size else 0.0
        if dev > tol:
            raise FieldError(f"spin field is not unit (max |norm - 1| = {dev:.3g})")
    return s


def rescale_brightness(pixels) -> np.ndarray:
    """Min-max map raw intensities onto [0, 1]; constant images become 0.5."""
    p = np.asarray(pixels, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise FieldError("cannot rescale non-finite pixels")
    lo, hi = p.min(), p.max()
    if hi == lo:
        return np.full_like(p, 0.5)
    out = (p - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def normalize(raw, epsilon: float = NORMALIZE_EPS) -> np.ndarray:
    """Map each site ``v`` to ``v / sqrt(v.v + epsilon)``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = np.asarray(raw, dtype=np.float64)
    return r / np.sqrt(np.einsum("...k,...k->...", r, r) + epsilon)[..., None]


def norm_map(raw) -> np.ndarray:
    r = np.asarray(raw, dtype=np.float64)
    return np.sqrt(np.einsum("...k,...k->...", r, r))


def forward_diff(field, axis: str) -> np.ndarray:
    """Forward difference on the ``(H-1, W-1)`` plaquette-anchor grid.

    ``axis='x'`` gives ``S[i, j+1] - S[i, j]``, ``axis='y'`` gives
    ``S[i+1, j] - S[i, j]``.  Both drop the last row and column so every
    lattice functional sees the same domain.
    """
    s = np.asarray(field, dtype=np.float64)
    if s.shape[0] < 2 or s.shape[1] < 2:
        raise FieldError("forward_diff needs at least a 2x2 lattice")
    if axis == "x":
        return s[:-1, 1:] - s[:-1, :-1]
    if axis == "y":
        return s[1:, :-1] - s[:-1, :-1]
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def anchor_corners(s: np.ndarray):
    """Return the four plaquette corners ``(S00, S01, S10, S11)``.

    ``S01`` is the +x neighbour and ``S10`` the +y neighbour of each anchor.
    """
    return s[:-1, :-1], s[:-1, 1:], s[1:, :-1], s[1:, 1:]
