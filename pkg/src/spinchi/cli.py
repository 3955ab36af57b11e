"""Command-line interface.

Exit codes: 0 on success, 1 when a command ran but its result is a
failure (unsuccessful training, gradient check over tolerance), 2 when it
could not run at all (bad arguments, unreadable or invalid input).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import corpus, experiments, formats, render
from .field import FieldError, normalize
from .net import ShapeMismatch, forward, init_params, params_from_bytes, params_to_bytes
from .topology import euler_characteristic, predict_chi, skyrmion_number_triple, solid_angle_density
from .trainer import TrainConfig, grad_check, train_single_image

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


class UsageError(Exception):
    """Input problem that prevents a command from running."""


def _emit(args, data: dict, lines) -> None:
    if args.json:
        print(json.dumps(experiments._jsonable(data), indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_config(args) -> TrainConfig:
    data = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    try:
        cfg = TrainConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "steps", None):
        cfg = replace(cfg, max_steps=args.steps)
    return cfg


def load_dataset(directory) -> list[tuple[str, np.ndarray, int]]:
    """``*.pgm`` files in name order; chi from ``labels.json`` when listed, else the oracle."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"dataset directory not found: {directory}")
    labels = {}
    label_file = directory / "labels.json"
    if label_file.is_file():
        labels = json.loads(label_file.read_text())
    out = []
    for path in sorted(directory.glob("*.pgm")):
        img = formats.read_pgm(path)
        chi = int(labels[path.stem]) if path.stem in labels else euler_characteristic(img).chi
        out.append((path.stem, img, chi))
    if not out:
        raise UsageError(f"no .pgm images in {directory}")
    return out


def _spin_input(args) -> np.ndarray:
    if args.spin:
        return formats.read_spin_field(args.spin)
    if not (args.params and args.image):
        raise UsageError("give --spin FILE or both --params and --image")
    params = params_from_bytes(Path(args.params).read_bytes())
    return normalize(forward(params, formats.load_image(args.image)))


# --- subcommands -----------------------------------------------------------------------


def cmd_euler(args) -> int:
    img = formats.load_image(args.image)
    res = euler_characteristic(img, args.threshold)
    counts = res.counts()
    depth = max(n.depth for n in res.region_tree.walk())
    data = {"chi": res.chi, "regions": counts, "tree_depth": depth, "convention": res.convention}
    _emit(args, data, [f"chi: {res.chi}", f"dark regions: {counts['dark']}",
                       f"light regions: {counts['light']}", f"root: {res.convention['root_color']}",
                       f"nesting depth: {depth}"])
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    img = formats.load_image(args.image)
    suite = load_dataset(args.eval_dir) if args.eval_dir else corpus.fixture_suite()
    params, report = train_single_image(img, cfg, suite)
    out = Path(args.out)
    formats.atomic_write_bytes(out / "params.scn1", params_to_bytes(params))
    formats.atomic_write_text(out / "report.json", report.to_json(include_timing=False) + "\n")
    if report.status == "completed":
        formats.write_spin_field(out / "field.spf1", normalize(forward(params, img)))
    print(f"trained {report.steps} steps in {report.seconds:.1f} s", file=sys.stderr)
    _emit(args, report.to_dict(include_timing=False),
          [f"status: {report.status}", f"success: {str(report.success).lower()}",
           f"steps: {report.steps}", f"final n (Berg-Luscher): {report.final_n_berg_luscher}"]
          + [f"  {e.image_id}: chi {e.oracle_chi} predicted {e.predicted_chi}" for e in report.evaluations])
    return EXIT_OK if report.success else EXIT_FAILED


def cmd_predict(args) -> int:
    s = _spin_input(args)
    pred = predict_chi(s)
    n_tp = skyrmion_number_triple(s).value
    data = {"n_triple": n_tp, "n_berg_luscher": pred.estimate.value, "chi": pred.chi,
            "degenerate_plaquettes": pred.estimate.degenerate_plaquettes, "reliable": pred.reliable}
    _emit(args, data, [f"n_triple: {n_tp!r}", f"n_berg_luscher: {pred.estimate.value!r}",
                       f"chi: {pred.chi}", f"degenerate: {pred.estimate.degenerate_plaquettes}",
                       f"reliable: {str(pred.reliable).lower()}"])
    return EXIT_OK


def cmd_render(args) -> int:
    s = _spin_input(args)
    out = Path(args.out)
    stem = out.with_suffix("")
    written = []
    if args.mode == "spin":
        formats.write_ppm(stem.with_suffix(".ppm"), render.spin_rgb(s))
        vec = stem.parent / (stem.name + "_vectors.csv")
        formats.write_csv(vec, ("x", "y", "Sx", "Sy", "Sz"), render.vector_rows(s))
        written = [str(stem.with_suffix(".ppm")), str(vec)]
    elif args.mode == "density":
        d = solid_angle_density(s, args.method)
        formats.write_ppm(stem.with_suffix(".ppm"), render.density_rgb(d))
        formats.write_csv(stem.with_suffix(".csv"), ("x", "y", "density"), render.density_rows(d))
        written = [str(stem.with_suffix(".ppm")), str(stem.with_suffix(".csv"))]
    else:
        prof = render.sz_profile(s, args.row, args.start, args.stop)
        formats.write_csv(stem.with_suffix(".csv"), ("x", "Sz", "fit"), prof.rows())
        fit = asdict(prof.fit) if prof.fit else None
        fit_path = stem.parent / (stem.name + "_fit.json")
        formats.atomic_write_text(fit_path, json.dumps({"row": prof.row, "fit": fit,
                                                        "error": prof.fit_error}, indent=2, sort_keys=True) + "\n")
        written = [str(stem.with_suffix(".csv")), str(fit_path)]
    _emit(args, {"mode": args.mode, "files": written}, [f"wrote {p}" for p in written])
    return EXIT_OK


def cmd_crossval(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    if args.preset == "blur":
        rep = experiments.blur_robustness(seeds=range(cfg.seed, cfg.seed + args.trials), cfg=cfg,
                                          workers=args.threads)
        rows = [(r["seed"], i, rep.oracle[i], r["predicted"].get(i)) for r in rep.records for i in rep.oracle]
        formats.write_csv(out.with_suffix(".csv"), ("seed", "image", "oracle_chi", "predicted_chi"), rows)
        formats.atomic_write_text(out.with_suffix(".json"), experiments.to_json(rep) + "\n")
        _emit(args, asdict(rep), [f"seeds matching oracle at every sigma: {rep.matching}/{len(rep.records)}"])
        return EXIT_OK
    dataset = (load_dataset(args.dataset) if args.dataset
               else corpus.fixture_suite(corpus.CROSSVAL_SET))
    train = args.train.split(",") if args.train else [n for n in ("circle", "two_disks", "hole", "ring")
                                                      if n in {d[0] for d in dataset}]
    try:
        rep = experiments.crossval(dataset, train, args.grid, args.trials, cfg, cfg.seed, args.threads)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    formats.write_csv(out.with_suffix(".csv"), experiments.CROSSVAL_CSV_HEADER, rep.csv_rows())
    formats.atomic_write_text(out.with_suffix(".json"), experiments.to_json(rep) + "\n")
    lines = []
    for name in train:
        row = rep.mean_error[name]
        cells = " ".join(f"{t:g}:{row[repr(t)]:.3f}" for t in rep.grid)
        lines.append(f"{name}: argmin n_target {rep.argmin(name):g} | {cells}")
    _emit(args, {"mean_error": rep.mean_error, "grid": rep.grid, "trials": rep.trials}, lines)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rep = experiments.sweep(args.filters, args.betas, args.trials, cfg, base_seed=cfg.seed,
                            workers=args.threads)
    out = Path(args.out)
    formats.atomic_write_text(out.with_suffix(".json"), experiments.to_json(rep) + "\n")
    formats.write_csv(out.with_suffix(".csv"), ("filters", "beta", "trials", "successes", "ratio", "stderr"),
                      [(e["filters"], e["beta"], e["trials"], e["successes"], e["ratio"], e["stderr"])
                       for e in rep.entries])
    _emit(args, asdict(rep), [f"F={e['filters']} beta={e['beta']:g}: {e['successes']}/{e['trials']} "
                              f"ratio {e['ratio']:.2f} +- {e['stderr']:.2f}" for e in rep.entries])
    return EXIT_OK


def cmd_shapes(args) -> int:
    out = Path(args.out)
    if args.specs:
        try:
            named = corpus.load_shape_specs(args.specs)
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise UsageError(f"cannot load shape specs: {exc}") from None
    else:
        named = [(n, corpus.FIXTURES[n][0]) for n in corpus.EVAL_SUITE] + [("blobs", corpus.BLOB_SPEC)]
    labels = {}
    for name, spec in named:
        img = corpus.generate_shape(spec)
        formats.write_pgm(out / f"{name}.pgm", img, maxval=args.maxval)
        labels[name] = euler_characteristic(img).chi
    formats.atomic_write_text(out / "labels.json", json.dumps(labels, indent=2, sort_keys=True) + "\n")
    _emit(args, labels, [f"{n}: chi {c}" for n, c in labels.items()])
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    img = rng.uniform(0.0, 1.0, size=(args.size, args.size))
    if args.image:
        img = formats.load_image(args.image)
    err = grad_check(init_params(cfg.net, cfg.seed), img, cfg, samples=args.samples)
    ok = err < args.tol
    _emit(args, {"max_relative_error": err, "tolerance": args.tol, "pass": ok},
          [f"max relative error: {err:.3e}", f"pass: {str(ok).lower()}"])
    return EXIT_OK if ok else EXIT_FAILED


# --- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinchi", description="Euler characteristic via learned spin fields")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes for multi-trial commands")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("euler", help="oracle Euler characteristic of an image")
    e.add_argument("image")
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_euler)

    t = sub.add_parser("train", help="train on one image and evaluate")
    t.add_argument("--config", help="TrainConfig JSON; missing keys take defaults")
    t.add_argument("--image", required=True)
    t.add_argument("--eval-dir", help="directory of .pgm images (default: built-in suite)")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--steps", type=int, help="override max_steps")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="skyrmion number and chi of a field")
    pr.add_argument("--params")
    pr.add_argument("--image")
    pr.add_argument("--spin", help="SPF1 spin field")
    pr.set_defaults(func=cmd_predict)

    r = sub.add_parser("render", help="render a field to PPM / CSV")
    r.add_argument("--params")
    r.add_argument("--image")
    r.add_argument("--spin")
    r.add_argument("--mode", choices=("spin", "density", "profile"), default="spin")
    r.add_argument("--method", choices=("berg_luscher", "triple_product", "split_triple"),
                   default="berg_luscher")
    r.add_argument("--row", type=int, help="profile row (default: middle)")
    r.add_argument("--start", type=int, default=0, help="first profile column")
    r.add_argument("--stop", type=int, help="end profile column, exclusive (default: half width)")
    r.add_argument("--out", required=True, help="output path stem")
    r.set_defaults(func=cmd_render)

    c = sub.add_parser("crossval", help="n_target cross-validation, or the blur-robustness preset")
    c.add_argument("--dataset", help="directory of .pgm images (default: built-in six shapes)")
    c.add_argument("--train", help="comma-separated training image names")
    c.add_argument("--grid", type=_floats, default=list(experiments.CROSSVAL_GRID))
    c.add_argument("--trials", type=int, default=experiments.DEFAULT_TRIALS)
    c.add_argument("--config")
    c.add_argument("--steps", type=int, help="override max_steps")
    c.add_argument("--preset", choices=("ntarget", "blur"), default="ntarget")
    c.add_argument("--out", required=True, help="output path stem (.json and .csv)")
    c.set_defaults(func=cmd_crossval)

    s = sub.add_parser("sweep", help="success ratio over filters x beta")
    s.add_argument("--filters", type=_ints, default=[1, 2, 4, 8, 16, 32, 64])
    s.add_argument("--betas", type=_floats, default=[0.0, 1.0])
    s.add_argument("--trials", type=int, default=experiments.DEFAULT_TRIALS)
    s.add_argument("--config")
    s.add_argument("--steps", type=int, help="override max_steps")
    s.add_argument("--out", required=True, help="output path stem (.json and .csv)")
    s.set_defaults(func=cmd_sweep)

    sh = sub.add_parser("shapes", help="write the synthetic corpus as PGM files")
    sh.add_argument("--out", required=True)
    sh.add_argument("--specs", help="JSON file of named shape specs")
    sh.add_argument("--maxval", type=int, default=65535)
    sh.set_defaults(func=cmd_shapes)

    g = sub.add_parser("gradcheck", help="finite-difference check of the loss gradient")
    g.add_argument("--config")
    g.add_argument("--image")
    g.add_argument("--size", type=int, default=8)
    g.add_argument("--samples", type=int, default=64)
    g.add_argument("--tol", type=float, default=1e-5)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except (UsageError, FieldError, ShapeMismatch, formats.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
