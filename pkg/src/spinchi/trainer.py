"""Composite training loss, its exact gradient, and single-image training.

The loss for raw network output ``R`` and unit field ``U = R / sqrt(R.R + eps)``:

    main  = (n_target - n(U))^2
    norm  = mean_sites (1 - |R|)^2
    ham   = H(U).total
    total = main + alpha * norm + beta * ham

``n`` is the two-triangle triple-product charge by default
(``charge="split"``); ``charge="forward"`` selects the single
forward-difference triple product instead.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import net as netmod
from .energy import HamiltonianParams, hamiltonian_grad
from .field import NORMALIZE_EPS, anchor_corners, as_image, normalize
from .net import NetConfig, NetParams
from .topology import (FOUR_PI, predict_chi, skyrmion_number_berg_luscher, skyrmion_number_split,
                       skyrmion_number_triple)

DIVERGENCE_LIMIT = 1e6
STOP_PATIENCE = 50


class TrainingError(RuntimeError):
    """Non-finite value met while evaluating the loss."""


@dataclass(frozen=True)
class TrainConfig:
    n_target: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    ham: HamiltonianParams = field(default_factory=lambda: HamiltonianParams(1.0, 0.5, 0.1))
    learning_rate: float = 1e-3
    max_steps: int = 5000
    stop_tolerance: float = 1e-4
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)
    history_every: int = 50
    charge: str = "split"
    min_steps: int = 0

    def __post_init__(self):
        for name in ("n_target", "alpha", "beta", "learning_rate", "stop_tolerance"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.learning_rate <= 0 or self.stop_tolerance <= 0:
            raise ValueError("learning_rate and stop_tolerance must be positive")
        if self.max_steps < 1 or self.history_every < 1:
            raise ValueError("max_steps and history_every must be positive")
        if self.min_steps < 0:
            raise ValueError("min_steps must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.charge not in ("split", "forward"):
            raise ValueError("charge must be 'split' or 'forward'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        """Build from a (possibly partial) JSON-style mapping; missing keys take defaults."""
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "ham" in d:
            d["ham"] = HamiltonianParams(**d["ham"])
        if "net" in d:
            d["net"] = NetConfig(**d["net"])
        return cls(**d)


@dataclass(frozen=True)
class LossBreakdown:
    main: float
    norm: float
    ham: float
    total: float


# --- loss and gradient --------------------------------------------------------


def _triple_grad(u: np.ndarray):
    """Triple-product charge and its gradient w.r.t. the unit field."""
    s00, s01, s10, _ = anchor_corners(u)
    n = float(np.sum(np.einsum("...k,...k->...", s00, np.cross(s01 - s00, s10 - s00)))) / FOUR_PI
    g = np.zeros_like(u)
    # q = s00 . (s01 x s10), rewritten from s00 . (dx x dy)
    g[:-1, :-1] += np.cross(s01, s10)
    g[:-1, 1:] += np.cross(s10, s00)
    g[1:, :-1] += np.cross(s00, s01)
    return n, g / FOUR_PI


def _split_grad(u: np.ndarray):
    """Charge from both plaquette triangles, ``(q(00,01,11) + q(00,11,10)) / 2``."""
    n = skyrmion_number_split(u).value
    s00, s01, s10, s11 = anchor_corners(u)
    g = np.zeros_like(u)
    g[:-1, :-1] += np.cross(s01, s11) + np.cross(s11, s10)
    g[:-1, 1:] += np.cross(s11, s00)
    g[1:, 1:] += np.cross(s00, s01) + np.cross(s10, s00)
    g[1:, :-1] += np.cross(s00, s11)
    return n, g / (2.0 * FOUR_PI)


def _evaluate(raw: np.ndarray, cfg: TrainConfig, want_grad: bool):
    r2 = np.einsum("...k,...k->...", raw, raw)
    mag = np.sqrt(r2)
    norm = float(np.mean((1.0 - mag) ** 2))
    inv = 1.0 / np.sqrt(r2 + NORMALIZE_EPS)
    u = raw * inv[..., None]
    if want_grad:
        n, gn = (_split_grad if cfg.charge == "split" else _triple_grad)(u)
        e, ge = hamiltonian_grad(u, cfg.ham) if cfg.beta else (None, None)
    else:
        n = (skyrmion_number_split if cfg.charge == "split" else skyrmion_number_triple)(u).value
        e = hamiltonian_grad(u, cfg.ham)[0] if cfg.beta else None
    ham = e.total if e is not None else 0.0
    main = (cfg.n_target - n) ** 2
    total = main + cfg.alpha * norm + cfg.beta * ham
    lb = LossBreakdown(main, norm, ham, total)
    if not all(math.isfinite(v) for v in (main, norm, ham, total)):
        raise TrainingError(f"non-finite loss {lb}")
    if not want_grad:
        return lb, None
    gu = -2.0 * (cfg.n_target - n) * gn
    if ge is not None:
        gu = gu + cfg.beta * ge
    # through U = R / sqrt(R.R + eps)
    g_raw = (gu - u * np.einsum("...k,...k->...", u, gu)[..., None]) * inv[..., None]
    # through mean (1 - |R|)^2; the zero vector has no defined direction
    safe = np.where(mag > 0, mag, 1.0)
    coef = np.where(mag > 0, -2.0 * (1.0 - mag) / safe, 0.0) / mag.size
    g_raw += cfg.alpha * coef[..., None] * raw
    return lb, g_raw


def loss(params: NetParams, img, cfg: TrainConfig) -> LossBreakdown:
    raw = netmod.forward(params, img)
    return _evaluate(raw, cfg, want_grad=False)[0]


def loss_gradient(params: NetParams, img, cfg: TrainConfig):
    """Exact reverse-mode gradient of the total loss; returns ``(grads, breakdown)``."""
    params.check()
    img = as_image(img)
    raw, cache = netmod.forward_cached(params, img)
    lb, g_raw = _evaluate(raw, cfg, want_grad=True)
    return netmod.backward(params, cache, g_raw), lb


def grad_check(params: NetParams, img, cfg: TrainConfig, h: float = 1e-6,
               samples: int = 64) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a deterministic sample of ``samples`` parameter entries spread
    evenly across the flat parameter vector (all entries if fewer).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grads, _ = loss_gradient(params, img, cfg)
    g = grads.flat()
    theta = params.flat()
    idx = np.unique(np.linspace(0, theta.size - 1, min(samples, theta.size)).round().astype(int))
    worst = 0.0
    for i in idx:
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        num = (loss(params.with_flat(tp), img, cfg).total - loss(params.with_flat(tm), img, cfg).total) / (2 * h)
        err = abs(g[i] - num) / max(abs(g[i]), abs(num), 1e-12)
        worst = max(worst, err)
    return worst


# --- optimizer ------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetParams) -> "OptimizerState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(state: OptimizerState, params: NetParams, grads: NetParams,
              learning_rate: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_arrays, ms, vs = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_arrays.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        ms.append(m)
        vs.append(v)
    new_params = NetParams(params.config, new_arrays[0::2], new_arrays[1::2])
    return new_params, OptimizerState(ms, vs, t)


# --- training --------------------------------------------------------------------


@dataclass
class EvalRecord:
    image_id: str
    oracle_chi: int
    predicted_chi: int
    n_triple: float
    n_berg_luscher: float
    abs_error: float
    reliable: bool


@dataclass
class TrialReport:
    config: dict
    prng: str
    loss_history: list[list[float]]
    final_loss: dict
    final_n_triple: Optional[float]
    final_n_berg_luscher: Optional[float]
    evaluations: list[EvalRecord]
    success: bool
    steps: int
    seconds: float
    status: str = "completed"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("seconds")
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


def evaluate(params: NetParams, suite) -> list[EvalRecord]:
    """Predict chi for every ``(image_id, image, oracle_chi)`` in ``suite``."""
    out = []
    for image_id, img, chi in suite:
        u = normalize(netmod.forward(params, img))
        pred = predict_chi(u)
        bl = pred.estimate.value
        out.append(EvalRecord(str(image_id), int(chi), pred.chi, skyrmion_number_triple(u).value,
                              bl, abs(chi - bl), pred.reliable))
    return out


def train_single_image(img, cfg: TrainConfig, eval_suite, progress=None):
    """Train from ``init_params(cfg.net, cfg.seed)`` on one image, then evaluate.

    Stops when the total loss stays below ``stop_tolerance`` for 50
    consecutive steps (but not before ``min_steps``) or after ``max_steps``.
    A divergent or non-finite run is returned as a failed trial rather
    than raised.
    """
    if not eval_suite:
        raise ValueError("eval_suite must not be empty")
    img = as_image(img)
    start = time.perf_counter()
    params = netmod.init_params(cfg.net, cfg.seed)
    state = OptimizerState.zeros_like(params)
    history: list[list[float]] = []
    below = 0
    status, diagnostics = "completed", {}
    lb = None
    step = 0
    for step in range(cfg.max_steps):
        try:
            grads, lb = loss_gradient(params, img, cfg)
        except TrainingError as exc:
            status, diagnostics = "diverged", {"step": step, "error": str(exc)}
            break
        if lb.total > DIVERGENCE_LIMIT:
            status, diagnostics = "diverged", {"step": step, "total": lb.total}
            break
        if step % cfg.history_every == 0:
            history.append([step, lb.main, lb.norm, lb.ham, lb.total])
            if progress is not None:
                progress(step, lb)
        below = below + 1 if lb.total < cfg.stop_tolerance else 0
        if below >= STOP_PATIENCE and step >= cfg.min_steps:
            break
        params, state = adam_step(state, params, grads, cfg.learning_rate)
    else:
        step = cfg.max_steps
    steps = step
    if status == "completed":
        lb = loss(params, img, cfg)
        history.append([steps, lb.main, lb.norm, lb.ham, lb.total])
        u = normalize(netmod.forward(params, img))
        n_tp = skyrmion_number_triple(u).value
        n_bl = skyrmion_number_berg_luscher(u).value
        records = evaluate(params, eval_suite)
        success = all(r.predicted_chi == r.oracle_chi for r in records)
        diagnostics["mean_pairwise_dot"] = mean_pairwise_dot(u)
    else:
        n_tp = n_bl = None
        records, success = [], False
    report = TrialReport(
        config=cfg.to_dict(), prng=netmod.PRNG_NAME, loss_history=history,
        final_loss=asdict(lb) if lb is not None else {}, final_n_triple=n_tp,
        final_n_berg_luscher=n_bl, evaluations=records, success=success, steps=steps,
        seconds=time.perf_counter() - start, status=status, diagnostics=diagnostics)
    return params, report


def mean_pairwise_dot(u: np.ndarray) -> float:
    """Mean dot product between every pair of sites, ``(|sum u|^2 - N) / (N (N - 1))``."""
    flat = u.reshape(-1, 3)
    n = flat.shape[0]
    s = flat.sum(axis=0)
    return float((s @ s - np.einsum("ij,ij->", flat, flat)) / (n * (n - 1)))


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
