import json
import math

import numpy as np
import pytest

from spinchi.corpus import SkyrmionAnsatzSpec, fixture, fixture_suite, skyrmion_ansatz, skyrmionium_spec
from spinchi.experiments import (ChiralityReport, crossval, per_image_error, radial_alignment, radial_wall_fit,
                                 run_trials, sweep, texture_center, to_json, trained_wall_width)
from spinchi.net import NetConfig
from spinchi.trainer import TrainConfig

TINY = TrainConfig(net=NetConfig(2, 2), max_steps=5, history_every=5)


def jobs():
    suite = fixture_suite(("circle", "hole"))
    img = fixture("circle")
    return [((k,), TrainConfig(net=NetConfig(2, 2), max_steps=5, seed=k), img, suite, False)
            for k in (3, 1, 2, 0)]


def test_parallel_results_match_serial():
    serial = run_trials(jobs(), workers=1)
    parallel = run_trials(jobs(), workers=2)
    assert [r.key for r in serial] == [(0,), (1,), (2,), (3,)]
    assert [(r.key, r.predictions, r.steps) for r in serial] == \
        [(r.key, r.predictions, r.steps) for r in parallel]


def test_run_trials_validates_workers():
    with pytest.raises(ValueError):
        run_trials([], workers=0)


def test_tiny_crossval():
    data = fixture_suite(("circle", "hole", "ring"))
    rep = crossval(data, ["circle"], grid=(-1.0, 1.0), trials=2, cfg=TINY, base_seed=4)
    assert len(rep.records) == 4 and {r["seed"] for r in rep.records} == {4, 5}
    assert set(rep.mean_error["circle"]) == {"-1.0", "1.0"}
    for r in rep.records:
        errs = [abs(c - r["per_image"][i]) for i, _, c in data]
        assert r["mean_abs_error"] == pytest.approx(np.mean(errs), abs=1e-15)
    assert rep.argmin("circle") in (-1.0, 1.0)
    ring = per_image_error(rep, "ring", 0)["circle"]
    assert set(ring) == {"-1.0", "1.0"}
    assert json.loads(to_json(rep))["trials"] == 2
    assert len(rep.csv_rows()) == 4
    with pytest.raises(KeyError):
        crossval(data, ["square"], grid=(0.0,), trials=1, cfg=TINY)


def test_tiny_sweep():
    rep = sweep([1, 2], [0.0], trials=2, cfg=TINY, suite_names=("circle",))
    assert [(e["filters"], e["trials"]) for e in rep.entries] == [(1, 2), (2, 2)]
    e = rep.entries[0]
    assert e["ratio"] == e["successes"] / 2
    assert e["stderr"] == pytest.approx(math.sqrt(e["ratio"] * (1 - e["ratio"]) / 2))
    assert rep.ratio(2, 0.0) == rep.entries[1]["ratio"]


def test_radial_wall_fit_recovers_ansatz_width():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(14.0, 3.0), (64, 64))
    fit, why = radial_wall_fit(s)
    assert why == "" and abs(fit.delta - 3.0) < 0.05 and abs(fit.center - 14.0) < 0.1


def test_radial_wall_fit_rejects_fields_without_a_single_wall():
    s = np.zeros((32, 32, 3))
    s[..., 2] = 1.0
    assert radial_wall_fit(s) == (None, "no domain opposing the background")
    ring = skyrmion_ansatz(skyrmionium_spec(20.0, 9.0, 3.0), (64, 64))
    fit, why = radial_wall_fit(ring, center=(31.5, 31.5))
    assert fit is None and "share" in why


def test_texture_center_finds_off_centre_skyrmion():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(8.0, 2.0, center=(20.0, 41.0)), (64, 64))
    cx, cy = texture_center(s)
    assert abs(cx - 20.0) < 1e-6 and abs(cy - 41.0) < 1e-6
    fit, why = radial_wall_fit(s)
    assert why == "" and abs(fit.delta - 2.0) < 0.05


def test_trained_wall_width_reasons():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(14.0, 3.0), (64, 64))
    d, why = trained_wall_width(s, True)
    assert why == "" and abs(d - 3.0) < 0.01
    assert trained_wall_width(s, False) == (None, "training did not reach the target charge")
    up = np.zeros((16, 16, 3))
    up[..., 2] = 1.0
    assert trained_wall_width(up, True) == (None, "no domain opposing the background")


@pytest.mark.parametrize("helicity, sign", [("neel_outward", 1.0), ("neel_inward", -1.0)])
def test_radial_alignment_of_neel_textures(helicity, sign):
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(14.0, 3.0, helicity=helicity), (64, 64))
    a, n, core = radial_alignment(s)
    assert n > 0 and core > 0.99
    assert a == pytest.approx(sign, abs=1e-9)


def test_chirality_sign_bookkeeping():
    rec = [{"D": 0.5, "seed": 0, "alignment": 0.95, "core_sz": 1.0, "aligned": True},
           {"D": 0.5, "seed": 1, "alignment": -0.9, "core_sz": -1.0, "aligned": True},
           {"D": 0.0, "seed": 0, "alignment": 0.95, "core_sz": 1.0, "aligned": True},
           {"D": 0.0, "seed": 1, "alignment": -0.9, "core_sz": 1.0, "aligned": True}]
    rep = ChiralityReport([0.5, 0.0], [0, 1], {}, 0.8, rec)
    assert rep.aligned_count(0.5) == 2
    assert rep.consistent_sign(0.5) and not rep.consistent_sign(0.0)
