import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinchi.corpus import (BLOB_SPEC, EVAL_SUITE, FIXTURES, ShapeError, ShapeSpec, SkyrmionAnsatzSpec,
                            fixture, fixture_suite, gaussian_blur, gaussian_kernel, generate_shape,
                            load_shape_specs, skyrmion_ansatz, skyrmionium_spec)
from spinchi.experiments import blurred_inputs
from spinchi.field import FieldError, rescale_brightness
from spinchi.topology import binarize, euler_characteristic, signed_cubical_chi

# Centre tap of the normalized sigma = 1 kernel (radius 3), frozen.
KERNEL_SIGMA1_CENTRE = 0.3990502796524549


def test_eval_suite_has_ten_distinct_images():
    assert len(EVAL_SUITE) == 10 and len(set(EVAL_SUITE)) == 10
    assert [c for _, _, c in fixture_suite()] == [FIXTURES[n][1] for n in EVAL_SUITE]


def test_edge_ramp_binarizes_to_exact_disk():
    img = generate_shape(ShapeSpec("disk", (32, 32), center=(15.0, 16.0), size=7.0))
    y, x = np.mgrid[0:32, 0:32]
    inside = np.hypot(x - 15.0, y - 16.0) < 7.0
    np.testing.assert_array_equal(binarize(img), inside)
    assert img.min() == 0.0 and img.max() == 1.0


def test_square_pixels():
    img = generate_shape(ShapeSpec("square", (16, 16), center=(7.5, 7.5), size=6.0))
    expected = np.ones((16, 16))
    expected[5:11, 5:11] = 0.0
    # side 6 centred on 7.5 covers pixel centres 5..10, edges at 4.5 and 10.5 are half covered
    np.testing.assert_array_equal(binarize(img), expected == 0.0)


def test_polarity_swaps_colours():
    a = generate_shape(ShapeSpec("disk", (32, 32), size=8.0))
    b = generate_shape(ShapeSpec("disk", (32, 32), size=8.0, polarity="light_on_dark"))
    np.testing.assert_array_equal(a, 1.0 - b)


def test_margin_rejection():
    with pytest.raises(ShapeError):
        generate_shape(ShapeSpec("disk", (32, 32), center=(3.0, 16.0), size=6.0))
    with pytest.raises(ShapeError):
        generate_shape(ShapeSpec("square", (32, 32), size=30.0))
    with pytest.raises(ShapeError):
        generate_shape(ShapeSpec("disk", (4, 4)))
    with pytest.raises(ShapeError):
        generate_shape(ShapeSpec("ring", (64, 64), size=20.0, thickness=10.0))


def test_spec_json_round_trip(tmp_path):
    path = tmp_path / "specs.json"
    specs = {"ring": FIXTURES["ring"][0].to_dict(), "blobs": BLOB_SPEC.to_dict()}
    path.write_text(json.dumps(specs))
    loaded = dict(load_shape_specs(path))
    assert loaded["ring"] == FIXTURES["ring"][0]
    assert loaded["blobs"] == BLOB_SPEC
    path.write_text(json.dumps([{"name": "d", "kind": "disk", "canvas": [32, 32], "size": 5.0}]))
    assert load_shape_specs(path) == [("d", ShapeSpec("disk", (32, 32), size=5.0))]


def test_blob_fixture_merges_only_at_sigma_two():
    chis = [chi for _, _, chi in blurred_inputs(sigmas=(0.0, 1.0, 2.0))]
    assert chis == [4, 4, 3]
    for _, img, chi in blurred_inputs(sigmas=(0.0, 1.0, 2.0)):
        assert signed_cubical_chi(img) == chi


def test_gaussian_kernel_values():
    k = gaussian_kernel(1.0)
    assert k.size == 7 and k[3] == pytest.approx(KERNEL_SIGMA1_CENTRE, abs=1e-15)
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(k, k[::-1])


def test_blur_identity_and_constant():
    img = fixture("circle")
    np.testing.assert_array_equal(gaussian_blur(img, 0.0), img)
    np.testing.assert_allclose(gaussian_blur(np.full((16, 16), 0.3), 2.0), 0.3, atol=1e-15)
    with pytest.raises(ValueError):
        gaussian_blur(img, -1.0)


def test_blur_impulse_is_outer_product_of_kernel():
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    out = gaussian_blur(img, 1.0)
    k = gaussian_kernel(1.0)
    np.testing.assert_allclose(out[4:11, 4:11], np.outer(k, k), atol=1e-16)
    assert out[7, 7] == pytest.approx(KERNEL_SIGMA1_CENTRE ** 2, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (12, 12), elements=st.floats(0, 1)), st.floats(0.3, 3.0))
def test_blur_stays_within_input_range(img, sigma):
    out = gaussian_blur(img, sigma)
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


def test_blur_preserves_mass_away_from_border():
    img = np.zeros((40, 40))
    img[15:25, 12:20] = 1.0
    assert gaussian_blur(img, 2.0).sum() == pytest.approx(img.sum(), abs=1e-9)


def test_ansatz_is_unit_with_uniform_outer_ring():
    s = skyrmion_ansatz(SkyrmionAnsatzSpec(16.0, 4.0), (64, 64))
    np.testing.assert_allclose(np.linalg.norm(s, axis=-1), 1.0, atol=1e-12)
    assert s[32, 32, 2] > 0.99
    np.testing.assert_array_equal(s[0, :], np.broadcast_to([0.0, 0.0, -1.0], (64, 3)))


def test_ansatz_polarity_flips_sz():
    up = skyrmion_ansatz(SkyrmionAnsatzSpec(12.0, 3.0), (48, 48))
    down = skyrmion_ansatz(SkyrmionAnsatzSpec(12.0, 3.0, polarity=-1), (48, 48))
    np.testing.assert_array_equal(up[..., 2], -down[..., 2])
    np.testing.assert_array_equal(up[..., :2], down[..., :2])


def test_ansatz_validation():
    with pytest.raises(FieldError):
        skyrmion_ansatz(SkyrmionAnsatzSpec(6.0, 4.0), (64, 64))
    with pytest.raises(FieldError):
        skyrmion_ansatz(SkyrmionAnsatzSpec(30.0, 4.0), (64, 64))
    with pytest.raises(FieldError):
        skyrmion_ansatz(SkyrmionAnsatzSpec(16.0, 4.0, polarity=2), (64, 64))


def test_skyrmionium_core_points_like_background():
    s = skyrmion_ansatz(skyrmionium_spec(20.0, 9.0, 3.0), (64, 64))
    # the outer texture flips the core up, the inner one flips it back down
    assert s[31, 31, 2] < -0.99 and s[0, 0, 2] == -1.0


def test_rescaled_fixtures_keep_their_oracle():
    for name in ("circle", "hole", "ring"):
        img = 0.2 + 0.5 * fixture(name)
        assert euler_characteristic(rescale_brightness(img)).chi == FIXTURES[name][1]
