"""Multi-trial experiment harnesses: cross-validation, capacity sweep,
wall-width scaling, DMI chirality, ring collapse and blur robustness.

Every trial is a pure function of its config and images.  Trials run in a
process pool when more than one worker is requested; results are keyed and
sorted before aggregation, so reports do not depend on scheduling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import corpus
from .energy import HamiltonianParams, fit_wall_width, local_wall_width
from .field import normalize, rescale_brightness
from .net import NetConfig, forward
from .topology import euler_characteristic
from .trainer import TrainConfig, mean_pairwise_dot, train_single_image

CROSSVAL_GRID = (-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
DEFAULT_TRIALS = 20


@dataclass(frozen=True)
class TrialResult:
    key: tuple
    seed: int
    status: str
    success: bool
    steps: int
    final_n_berg_luscher: Optional[float]
    predictions: dict          # image id -> Berg-Luscher value
    predicted_chi: dict        # image id -> rounded chi
    mean_pairwise_dot: Optional[float]
    field: Optional[np.ndarray] = None


def _run(job) -> TrialResult:
    key, cfg, img, suite, keep_field = job
    params, report = train_single_image(img, cfg, suite)
    u = normalize(forward(params, img)) if keep_field and report.status == "completed" else None
    return TrialResult(
        key=key, seed=cfg.seed, status=report.status, success=report.success, steps=report.steps,
        final_n_berg_luscher=(report.final_n_berg_luscher if report.status == "completed" else None),
        predictions={e.image_id: e.n_berg_luscher for e in report.evaluations},
        predicted_chi={e.image_id: e.predicted_chi for e in report.evaluations},
        mean_pairwise_dot=report.diagnostics.get("mean_pairwise_dot"),
        field=u)


def run_trials(jobs: Sequence[tuple], workers: int = 1) -> list[TrialResult]:
    """Execute ``(key, cfg, image, suite, keep_field)`` jobs; results sorted by key."""
    if workers < 1:
        raise ValueError("workers must be positive")
    if workers == 1 or len(jobs) <= 1:
        results = [_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, jobs))
    return sorted(results, key=lambda r: r.key)


def _binomial_stderr(k: int, n: int) -> float:
    p = k / n
    return math.sqrt(p * (1.0 - p) / n)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def to_json(report) -> str:
    return json.dumps(_jsonable(asdict(report)), indent=2, sort_keys=True)


# --- n_target cross-validation -------------------------------------------------------


@dataclass
class CrossValReport:
    grid: list
    trials: int
    base_seed: int
    config: dict
    train_images: list
    test_images: list
    records: list            # one dict per (train image, n_target, trial)
    mean_error: dict         # train image -> {n_target: mean over trials}

    def argmin(self, train_image: str) -> float:
        row = self.mean_error[train_image]
        return min(self.grid, key=lambda t: (row[repr(t)], abs(t)))

    def csv_rows(self):
        return [(r["train_image"], r["n_target"], r["trial"], r["seed"], r["status"],
                 r["mean_abs_error"]) for r in self.records]


CROSSVAL_CSV_HEADER = ("train_image", "n_target", "trial", "seed", "status", "mean_abs_error")


def crossval(dataset: Sequence[tuple], train_names: Sequence[str], grid=CROSSVAL_GRID,
             trials: int = DEFAULT_TRIALS, cfg: TrainConfig = TrainConfig(),
             base_seed: int = 0, workers: int = 1) -> CrossValReport:
    """Train on each named image at every ``n_target``; score on the whole dataset.

    ``dataset`` holds ``(image_id, image, chi)``.  Trial ``t`` uses seed
    ``base_seed + t`` at every grid point, so rows share initializations.
    A failed trial scores as missing and is excluded from the mean; a grid
    point with no finite trial scores ``inf``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    by_id = {d[0]: d for d in dataset}
    missing = [n for n in train_names if n not in by_id]
    if missing:
        raise KeyError(f"train images not in dataset: {missing}")
    grid = [float(t) for t in grid]
    jobs = []
    for name in train_names:
        for ti, t in enumerate(grid):
            for k in range(trials):
                c = replace(cfg, n_target=t, seed=base_seed + k)
                jobs.append(((name, ti, k), c, by_id[name][1], list(dataset), False))
    results = run_trials(jobs, workers)
    chis = {d[0]: d[2] for d in dataset}
    records = []
    sums: dict = {}
    for r in results:
        name, ti, k = r.key
        t = grid[ti]
        if r.status == "completed":
            errs = {i: abs(chis[i] - v) for i, v in r.predictions.items()}
            err = float(np.mean(list(errs.values())))
        else:
            errs, err = {}, float("nan")
        records.append({"train_image": name, "n_target": t, "trial": k, "seed": r.seed,
                        "status": r.status, "mean_abs_error": err, "per_image": r.predictions})
        sums.setdefault(name, {}).setdefault(repr(t), []).append(err)
    mean_error = {name: {t: (float(np.mean([e for e in v if math.isfinite(e)]))
                             if any(math.isfinite(e) for e in v) else float("inf"))
                         for t, v in row.items()} for name, row in sums.items()}
    return CrossValReport(grid, trials, base_seed, cfg.to_dict(), list(train_names),
                          [d[0] for d in dataset], records, mean_error)


def per_image_error(report: CrossValReport, test_image: str, chi: int) -> dict:
    """Mean ``|chi - n|`` of one test image per (train image, n_target) across trials."""
    out: dict = {}
    for r in report.records:
        if r["status"] != "completed":
            continue
        row = out.setdefault(r["train_image"], {}).setdefault(repr(r["n_target"]), [])
        row.append(abs(chi - r["per_image"][test_image]))
    return {k: {t: float(np.mean(v)) for t, v in row.items()} for k, row in out.items()}


# --- capacity sweep ----------------------------------------------------------------------


@dataclass
class SweepReport:
    config: dict
    train_image: str
    suite: list
    trials: int
    base_seed: int
    entries: list            # {filters, beta, trials, successes, ratio, stderr, failed_seeds}

    def ratio(self, filters: int, beta: float) -> float:
        for e in self.entries:
            if e["filters"] == filters and e["beta"] == beta:
                return e["ratio"]
        raise KeyError((filters, beta))


def sweep(filters: Sequence[int], betas: Sequence[float], trials: int = DEFAULT_TRIALS,
          cfg: TrainConfig = TrainConfig(), train_image: str = "circle",
          suite_names: Sequence[str] = corpus.EVAL_SUITE, base_seed: int = 0,
          workers: int = 1) -> SweepReport:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    suite = corpus.fixture_suite(suite_names)
    img = corpus.fixture(train_image)
    jobs = []
    for f in filters:
        for b in betas:
            for k in range(trials):
                c = replace(cfg, net=replace(cfg.net, filters=int(f)), beta=float(b), seed=base_seed + k)
                jobs.append(((int(f), float(b), k), c, img, suite, False))
    results = run_trials(jobs, workers)
    entries = []
    for f in filters:
        for b in betas:
            rs = [r for r in results if r.key[:2] == (int(f), float(b))]
            k = sum(r.success for r in rs)
            entries.append({"filters": int(f), "beta": float(b), "trials": len(rs), "successes": k,
                            "ratio": k / len(rs), "stderr": _binomial_stderr(k, len(rs)),
                            "failed_seeds": [r.seed for r in rs if not r.success]})
    return SweepReport(cfg.to_dict(), train_image, list(suite_names), trials, base_seed, entries)


# --- ring collapse ----------------------------------------------------------


@dataclass
class RingReport:
    trials: int
    uniform_threshold: float
    records: list            # {seed, mean_pairwise_dot, n_circle, near_uniform, fails_circle}

    @property
    def uniform_ratio(self) -> float:
        return sum(r["near_uniform"] for r in self.records) / self.trials

    @property
    def circle_failure_ratio(self) -> float:
        return sum(r["fails_circle"] for r in self.records) / self.trials


def ring_collapse(trials: int = DEFAULT_TRIALS, cfg: TrainConfig = TrainConfig(),
                  base_seed: int = 0, workers: int = 1, uniform_threshold: float = 0.99) -> RingReport:
    """Train on the ring with ``n_target = 0`` and ``beta = 0``; test on the circle."""
    circle = [("circle", corpus.fixture("circle"), 1)]
    ring = corpus.fixture("ring")
    jobs = [((k,), replace(cfg, n_target=0.0, beta=0.0, seed=base_seed + k), ring, circle, False)
            for k in range(trials)]
    records = []
    for r in run_trials(jobs, workers):
        n = r.predictions.get("circle", float("nan"))
        dot = r.mean_pairwise_dot
        records.append({"seed": r.seed, "status": r.status, "mean_pairwise_dot": dot, "n_circle": n,
                        "near_uniform": dot is not None and dot > uniform_threshold,
                        "fails_circle": not (abs(1.0 - n) <= 0.5)})
    return RingReport(trials, uniform_threshold, records)


# --- wall width ------------------------------------------------------------------


# A fit whose RMS residual exceeds this is not a single tanh wall.
MAX_WALL_RMS = 0.2


def texture_center(u: np.ndarray) -> Optional[tuple[float, float]]:
    """``(x, y)`` centre of the largest domain whose ``Sz`` opposes the border's.

    The centre is the centroid of that 4-connected domain weighted by how
    strongly each site opposes the background; None for a field with no
    such domain.
    """
    sz = u[..., 2]
    border = np.concatenate([sz[0], sz[-1], sz[:, 0], sz[:, -1]])
    background = 1.0 if border.mean() >= 0 else -1.0
    minority = background * sz < 0
    labels, count = ndimage.label(minority)
    if count == 0:
        return None
    sizes = ndimage.sum(minority, labels, range(1, count + 1))
    largest = int(np.argmax(sizes)) + 1
    weight = np.where(labels == largest, -background * sz, 0.0)
    cy, cx = ndimage.center_of_mass(weight)
    return float(cx), float(cy)


def radial_wall_fit(u: np.ndarray, center=None, r_max: Optional[float] = None):
    """Fit ``tanh`` to ``Sz`` against distance from the texture centre.

    ``center`` defaults to :func:`texture_center` and ``r_max`` to the
    distance from it to the nearest border.  Returns ``(WallFit or None,
    reason)``; textures whose core and rim share an ``Sz`` sign, or whose
    fit residual exceeds ``MAX_WALL_RMS``, have no single radial wall.
    """
    h, w = u.shape[:2]
    if center is None:
        center = texture_center(u)
        if center is None:
            return None, "no domain opposing the background"
    cx, cy = center
    y, x = np.mgrid[0:h, 0:w]
    r = np.hypot(x - cx, y - cy).ravel()
    r_max = min(cx, cy, w - 1 - cx, h - 1 - cy) if r_max is None else r_max
    keep = r <= r_max
    order = np.argsort(r[keep], kind="stable")
    rr = r[keep][order]
    sz = u[..., 2].ravel()[keep][order]
    core = sz[rr <= 1.0].mean() if (rr <= 1.0).any() else sz[0]
    rim = sz[rr >= r_max - 1.0].mean()
    if core * rim >= 0:
        return None, "core and rim share an Sz sign"
    try:
        fit = fit_wall_width(rr, sz)
    except ValueError as exc:
        return None, str(exc)
    if fit.rms_residual > MAX_WALL_RMS:
        return None, f"rms residual {fit.rms_residual:.3f} above {MAX_WALL_RMS}"
    return fit, ""


@dataclass
class WallWidthReport:
    anisotropies: list
    seeds: list
    config: dict
    records: list            # {seed, deltas: {K: delta or None}, ratio, within}
    expected_ratio: float
    tolerance: float

    @property
    def passing(self) -> int:
        return sum(bool(r["within"]) for r in self.records)


# Both anisotropies get the same optimisation budget: with DMI the total loss
# can drop below the stop tolerance while the wall is still relaxing.
WALL_CONFIG = TrainConfig(net=NetConfig(filters=8, depth=4), max_steps=5000, min_steps=5000)


def trained_wall_width(u: np.ndarray, success: bool):
    """``(delta or None, reason)`` for one trained field."""
    if not success:
        return None, "training did not reach the target charge"
    if texture_center(u) is None:
        return None, "no domain opposing the background"
    try:
        return local_wall_width(u).delta, ""
    except ValueError as exc:
        return None, str(exc)


def wall_width(anisotropies=(0.1, 0.5), seeds: Sequence[int] = range(5),
               cfg: TrainConfig = WALL_CONFIG, tolerance: float = 0.2, workers: int = 1) -> WallWidthReport:
    """Train on the circle at each anisotropy and compare local wall widths.

    Widths come from :func:`local_wall_width`, which does not assume the
    trained texture is circular.
    """
    k_lo, k_hi = anisotropies
    img = corpus.fixture("circle")
    suite = [("circle", img, 1)]
    jobs = [((s, i), replace(cfg, ham=replace(cfg.ham, K=float(k)), seed=s), img, suite, True)
            for s in seeds for i, k in enumerate(anisotropies)]
    results = {r.key: r for r in run_trials(jobs, workers)}
    expected = math.sqrt(k_hi / k_lo)
    records = []
    for s in seeds:
        deltas, reasons = {}, {}
        for i, k in enumerate(anisotropies):
            r = results[(s, i)]
            d, why = (trained_wall_width(r.field, r.success) if r.field is not None else (None, r.status))
            deltas[repr(float(k))] = d
            reasons[repr(float(k))] = why
        d_lo, d_hi = deltas[repr(float(k_lo))], deltas[repr(float(k_hi))]
        ratio = d_lo / d_hi if d_lo and d_hi else None
        within = ratio is not None and abs(ratio / expected - 1.0) <= tolerance
        records.append({"seed": s, "deltas": deltas, "reasons": reasons, "ratio": ratio, "within": within})
    return WallWidthReport([float(k) for k in anisotropies], list(seeds), cfg.to_dict(), records,
                           expected, tolerance)


# --- chirality ----------------------------------------------------------------------


def radial_alignment(u: np.ndarray, center=None, wall_sz: float = 0.8) -> tuple[float, int, float]:
    """``(mean m_inplane . r_hat over wall sites, wall site count, core Sz)``.

    Wall sites have ``|Sz| < wall_sz``; ``m_inplane`` is the normalized
    in-plane part of the spin and ``r_hat`` points away from ``center``,
    which defaults to :func:`texture_center`.  The core ``Sz`` is
    averaged within one site of the centre.
    """
    h, w = u.shape[:2]
    if center is None:
        center = texture_center(u)
        if center is None:
            return 0.0, 0, float(u[h // 2, w // 2, 2])
    cx, cy = center
    y, x = np.mgrid[0:h, 0:w]
    dx, dy = x - cx, y - cy
    r = np.hypot(dx, dy)
    ip = np.hypot(u[..., 0], u[..., 1])
    wall = (np.abs(u[..., 2]) < wall_sz) & (ip > 0) & (r > 0)
    near = r <= 1.0
    core = float(u[..., 2][near].mean()) if near.any() else float(u[int(round(cy)), int(round(cx)), 2])
    if not wall.any():
        return 0.0, 0, core
    c = (u[..., 0] * dx + u[..., 1] * dy)[wall] / (ip * r)[wall]
    return float(c.mean()), int(wall.sum()), core


@dataclass
class ChiralityReport:
    dmi: list
    seeds: list
    config: dict
    threshold: float
    records: list            # {D, seed, alignment, wall_sites, core_sz, aligned}

    def aligned_count(self, d: float) -> int:
        return sum(r["aligned"] for r in self.records if r["D"] == d)

    def consistent_sign(self, d: float) -> bool:
        """All seeds radially aligned with the same chirality (alignment times core sign)."""
        rs = [r for r in self.records if r["D"] == d]
        if not all(r["aligned"] for r in rs):
            return False
        signs = {math.copysign(1.0, r["alignment"] * r["core_sz"]) for r in rs}
        return len(signs) == 1


def chirality(dmi_values=(0.5, 0.0), seeds: Sequence[int] = range(5),
              cfg: TrainConfig = TrainConfig(max_steps=2000), threshold: float = 0.8,
              workers: int = 1) -> ChiralityReport:
    img = corpus.fixture("circle")
    suite = [("circle", img, 1)]
    jobs = [((i, s), replace(cfg, ham=replace(cfg.ham, D=float(d)), seed=s), img, suite, True)
            for i, d in enumerate(dmi_values) for s in seeds]
    records = []
    for r in run_trials(jobs, workers):
        d = float(dmi_values[r.key[0]])
        if r.field is None:
            a, n, core = 0.0, 0, 0.0
        else:
            a, n, core = radial_alignment(r.field)
        records.append({"D": d, "seed": r.seed, "success": r.success, "alignment": a,
                        "wall_sites": n, "core_sz": core, "aligned": bool(r.success and abs(a) > threshold)})
    return ChiralityReport([float(d) for d in dmi_values], list(seeds), cfg.to_dict(), threshold, records)


# --- blur robustness -------------------------------------------------------------------


def blurred_inputs(spec=None, sigmas=(0.0, 1.0, 2.0)) -> list[tuple[str, np.ndarray, int]]:
    """Blurred, brightness-rescaled blob images with the oracle chi of each."""
    base = corpus.generate_shape(corpus.BLOB_SPEC if spec is None else spec)
    out = []
    for s in sigmas:
        img = rescale_brightness(corpus.gaussian_blur(base, s))
        out.append((f"blobs_sigma{s:g}", img, euler_characteristic(img).chi))
    return out


@dataclass
class BlurReport:
    sigmas: list
    seeds: list
    config: dict
    oracle: dict             # image id -> chi
    records: list            # {seed, predicted: {id: chi}, all_match}

    @property
    def matching(self) -> int:
        return sum(r["all_match"] for r in self.records)


def blur_robustness(sigmas=(0.0, 1.0, 2.0), seeds: Sequence[int] = range(5),
                    cfg: TrainConfig = TrainConfig(max_steps=1000), workers: int = 1) -> BlurReport:
    """Train on the circle, then predict chi of the blob fixture under each blur."""
    inputs = blurred_inputs(sigmas=sigmas)
    img = corpus.fixture("circle")
    jobs = [((s,), replace(cfg, seed=s), img, inputs, False) for s in seeds]
    oracle = {i: c for i, _, c in inputs}
    records = []
    for r in run_trials(jobs, workers):
        pred = dict(r.predicted_chi)
        records.append({"seed": r.seed, "status": r.status, "predicted": pred,
                        "all_match": r.status == "completed" and pred == oracle})
    return BlurReport([float(s) for s in sigmas], list(seeds), cfg.to_dict(), oracle, records)
