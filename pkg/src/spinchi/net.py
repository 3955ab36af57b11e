"""Small fully convolutional image-to-spin network.

Layer 0 maps the 1-channel image to ``F`` channels, optional middle layers
map ``F -> F``, and the last layer maps ``F -> 3``.  Every layer is a 5x5
cross-correlation with replicate padding of 2 (same-size output); hidden
layers use ``tanh`` and the output layer is linear.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .field import as_image

KERNEL = 5
PAD = KERNEL // 2
PRNG_NAME = "numpy.random.Philox (4x64 counter-based)"
PARAMS_MAGIC = b"SCN1"


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    filters: int = 32
    depth: int = 2
    kernel: int = KERNEL
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("filters must be positive")
        if self.depth < 2:
            raise ValueError("depth must be at least 2")
        if self.kernel != KERNEL:
            raise ValueError("kernel size is fixed at 5")
        if self.hidden_activation != "tanh" or self.output_activation != "identity":
            raise ValueError("only tanh hidden / identity output activations are supported")

    def channels(self) -> list[tuple[int, int]]:
        """``(in, out)`` channel pair of every layer."""
        f = self.filters
        return [(1, f)] + [(f, f)] * (self.depth - 2) + [(f, 3)]


@dataclass
class NetParams:
    """Kernels ``[out][in][5][5]`` and biases ``[out]`` per layer."""

    config: NetConfig
    kernels: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.check()

    def check(self):
        expected = self.config.channels()
        if len(self.kernels) != len(expected) or len(self.biases) != len(expected):
            raise ShapeMismatch(f"expected {len(expected)} layers for {self.config}")
        for k, (w, b, (cin, cout)) in enumerate(zip(self.kernels, self.biases, expected)):
            if w.shape != (cout, cin, KERNEL, KERNEL) or b.shape != (cout,):
                raise ShapeMismatch(
                    f"layer {k}: got kernel {w.shape} / bias {b.shape}, "
                    f"expected {(cout, cin, KERNEL, KERNEL)} / {(cout,)}")

    def arrays(self) -> list[np.ndarray]:
        """Kernels and biases interleaved per layer, in serialization order."""
        out = []
        for w, b in zip(self.kernels, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "NetParams":
        vec = np.asarray(vec, dtype=np.float64)
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ShapeMismatch(f"flat vector has {vec.size} entries, expected {pos}")
        return NetParams(self.config, arrays[0::2], arrays[1::2])

    def copy(self) -> "NetParams":
        return NetParams(self.config, [w.copy() for w in self.kernels], [b.copy() for b in self.biases])

    def count(self) -> int:
        return sum(a.size for a in self.arrays())


def param_count(cfg: NetConfig) -> int:
    return sum(cout * (cin * KERNEL * KERNEL + 1) for cin, cout in cfg.channels())


def init_params(cfg: NetConfig, seed: int) -> NetParams:
    """Uniform kernels in ``[-a, a]`` with ``a = sqrt(1 / (in * 25))``; zero biases.

    Draws come from a Philox generator keyed by ``seed`` in layer order, so
    the whole parameter set is a function of ``(cfg, seed)``.
    """
    rng = np.random.Generator(np.random.Philox(int(seed)))
    kernels, biases = [], []
    for cin, cout in cfg.channels():
        a = math.sqrt(1.0 / (cin * KERNEL * KERNEL))
        kernels.append(rng.uniform(-a, a, size=(cout, cin, KERNEL, KERNEL)))
        biases.append(np.zeros(cout))
    return NetParams(cfg, kernels, biases)


def zero_params(cfg: NetConfig) -> NetParams:
    return NetParams(cfg,
                     [np.zeros((co, ci, KERNEL, KERNEL)) for ci, co in cfg.channels()],
                     [np.zeros(co) for _, co in cfg.channels()])


# --- convolution kernels -----------------------------------------------------


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((PAD, PAD), (PAD, PAD), (0, 0)), mode="edge")


def _im2col(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """``(H+4, W+4, C)`` padded input -> ``(H*W, C*25)`` patches ordered [c][ky][kx]."""
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(0, 1))  # (H, W, C, 5, 5)
    return win.reshape(h * w, -1)


def _unpad_grad(gp: np.ndarray) -> np.ndarray:
    """Fold the gradient of a replicate-padded array back onto its source."""
    g = gp[PAD:-PAD].copy()
    g[0] += gp[:PAD].sum(axis=0)
    g[-1] += gp[-PAD:].sum(axis=0)
    out = g[:, PAD:-PAD].copy()
    out[:, 0] += g[:, :PAD].sum(axis=1)
    out[:, -1] += g[:, -PAD:].sum(axis=1)
    return out


def _taps():
    return [(ky, kx) for ky in range(KERNEL) for kx in range(KERNEL)]


def _tap_major(wk: np.ndarray) -> np.ndarray:
    """``[out][in][ky][kx]`` kernel -> ``(in, 25 * out)`` matrix ordered [tap][out]."""
    cout, cin = wk.shape[:2]
    return wk.reshape(cout, cin, KERNEL * KERNEL).transpose(1, 2, 0).reshape(cin, -1)


# Layers with one input channel use explicit patches (25 columns).  Wider
# inputs are first projected onto every (tap, out) pair and the 25 shifted
# projections summed, which keeps intermediates at (H+4)(W+4) x 25*out.


def _conv_forward(x: np.ndarray, wk: np.ndarray, bk: np.ndarray):
    h, w, cin = x.shape
    cout = wk.shape[0]
    xp = _pad(x)
    if cin == 1:
        cols = _im2col(xp, h, w)
        z = (cols @ wk.reshape(cout, -1).T).reshape(h, w, cout)
        return z + bk, cols
    proj = (xp.reshape(-1, cin) @ _tap_major(wk)).reshape(h + 2 * PAD, w + 2 * PAD, KERNEL * KERNEL, cout)
    proj = np.ascontiguousarray(proj.transpose(2, 0, 1, 3))
    z = np.zeros((h, w, cout))
    for t, (ky, kx) in enumerate(_taps()):
        z += proj[t, ky:ky + h, kx:kx + w]
    return z + bk, xp


def _spread(g: np.ndarray) -> np.ndarray:
    """Place ``g`` (H, W, out) at every tap offset of the padded grid -> ``((H+4)(W+4), 25*out)``."""
    h, w, cout = g.shape
    hp, wp = h + 2 * PAD, w + 2 * PAD
    spread = np.zeros((KERNEL * KERNEL, hp, wp, cout))
    for t, (ky, kx) in enumerate(_taps()):
        spread[t, ky:ky + h, kx:kx + w] = g
    return spread.transpose(1, 2, 0, 3).reshape(hp * wp, -1)


def _conv_backward(saved: np.ndarray, g: np.ndarray, wk: np.ndarray, need_input: bool):
    """Return ``(d kernel, d bias, d input or None)`` for upstream gradient ``g`` (H, W, out)."""
    h, w, cout = g.shape
    cin = wk.shape[1]
    gb = g.sum(axis=(0, 1))
    spread = None
    if cin == 1:
        gk = np.ascontiguousarray((saved.T @ g.reshape(h * w, cout)).T.reshape(wk.shape))
    else:
        spread = _spread(g)
        gwt = saved.reshape(-1, cin).T @ spread  # (cin, 25*cout)
        gk = np.ascontiguousarray(gwt.reshape(cin, KERNEL, KERNEL, cout).transpose(3, 0, 1, 2))
    gx = None
    if need_input:
        spread = _spread(g) if spread is None else spread
        gx = _unpad_grad((spread @ _tap_major(wk).T).reshape(h + 2 * PAD, w + 2 * PAD, cin))
    return gk, gb, gx


def forward_cached(params: NetParams, img: np.ndarray):
    """Forward pass keeping what backprop needs for every layer."""
    x = img[:, :, None]
    cache = []
    n = len(params.kernels)
    for k, (wk, bk) in enumerate(zip(params.kernels, params.biases)):
        z, saved = _conv_forward(x, wk, bk)
        x = np.tanh(z) if k < n - 1 else z
        cache.append((saved, x))
    return x, cache


def backward(params: NetParams, cache, grad_out: np.ndarray):
    """Gradients of a scalar w.r.t. every kernel and bias given ``dL/d(output)``."""
    n = len(params.kernels)
    gk = [None] * n
    gb = [None] * n
    g = grad_out
    for k in range(n - 1, -1, -1):
        saved, a = cache[k]
        if k < n - 1:
            g = g * (1.0 - a * a)
        gk[k], gb[k], g = _conv_backward(saved, g, params.kernels[k], need_input=k > 0)
    return NetParams(params.config, gk, gb)


def forward(params: NetParams, img) -> np.ndarray:
    """Raw ``(H, W, 3)`` spin field for an image of at least 8x8 pixels."""
    params.check()
    img = as_image(img)
    return forward_cached(params, img)[0]


# --- serialization ------------------------------------------------------------


def params_to_bytes(params: NetParams) -> bytes:
    """``SCN1`` header (filters, depth, reserved as u32 LE) then LE float64 payload."""
    cfg = params.config
    head = PARAMS_MAGIC + struct.pack("<III", cfg.filters, cfg.depth, 0)
    return head + params.flat().astype("<f8").tobytes()


def params_from_bytes(data: bytes) -> NetParams:
    if len(data) < 16 or data[:4] != PARAMS_MAGIC:
        raise ValueError("not an SCN1 parameter file")
    filters, depth, _ = struct.unpack("<III", data[4:16])
    cfg = NetConfig(filters=filters, depth=depth)
    payload = np.frombuffer(data[16:], dtype="<f8").astype(np.float64)
    if payload.size != param_count(cfg):
        raise ValueError(f"payload holds {payload.size} values, expected {param_count(cfg)}")
    return zero_params(cfg).with_flat(payload)
