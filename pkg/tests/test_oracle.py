import numpy as np
import pytest

from conftest import random_image
from palign import align, oracle
from palign.align import Formulation
from palign.tensor import ImageRGB

# closed-form values for oracle.random_pair(default_rng(2024)); frozen from
# the descent oracle (which agreed with them to ~7e-12)
FROZEN = {
    ("augmented", 0.0): ([[0.7640514395, -0.0459733239, -0.3267841076],
                          [0.4126113296, 0.9660767949, -0.2956059125],
                          [-0.3257746029, -0.3362510563, 1.1903551322]],
                         [0.0630106762, -0.0043714747, 0.0631657314]),
    ("augmented", 1e-3): ([[0.7638638682, -0.0459656829, -0.32672626],
                           [0.4125111763, 0.96579914, -0.2955104718],
                           [-0.3257053049, -0.3361026687, 1.1901001915]],
                          [0.063065176, -0.0042509325, 0.0631879883]),
    ("covariance", 1e-3): ([[0.7517297272, -0.0458700536, -0.3234716126],
                            [0.4063294585, 0.9486503346, -0.2895928174],
                            [-0.3219006167, -0.3273429483, 1.1739160456]],
                           [0.0670533048, 0.0031774221, 0.06521931]),
}


@pytest.mark.parametrize("key", list(FROZEN))
def test_frozen_closed_form(key):
    form, eps = key
    pred, gt = oracle.random_pair(np.random.default_rng(2024))
    t = align.solve_affine(pred, gt, eps, form)
    c, b = FROZEN[key]
    np.testing.assert_allclose(t.C, c, atol=1e-9)
    np.testing.assert_allclose(t.b, b, atol=1e-9)


def test_identity_converges(rng):
    pred = random_image(rng)
    rep = oracle.oracle_affine(pred, pred, 0.0)
    assert rep.converged and rep.max_deviation <= 1e-6
    np.testing.assert_allclose(rep.oracle.C, np.eye(3), atol=1e-6)


@pytest.mark.parametrize("form", list(Formulation))
def test_random_pair_agreement(pair, form):
    rep = oracle.oracle_affine(*pair, 1e-3, formulation=form)
    assert rep.converged and rep.iterations < 100_000


def test_heavy_ridge_shrinks_on_centered_data(rng):
    pred = ImageRGB(rng.uniform(-0.5, 0.5, size=(3, 8, 8)))
    pred = ImageRGB(pred.data - pred.data.mean(axis=(1, 2), keepdims=True))
    gt = ImageRGB(0.3 * pred.data)
    light = oracle.oracle_affine(pred, gt, 1e-3)
    heavy = oracle.oracle_affine(pred, gt, 1.0)
    assert heavy.converged
    assert np.linalg.norm(heavy.closed_form.C) < 0.2 * np.linalg.norm(light.closed_form.C)


def test_converged_implies_within_tolerance(pair):
    rep = oracle.oracle_affine(*pair, 1e-3, max_iter=3)
    assert not rep.converged
    assert rep.converged is False or rep.max_deviation <= rep.tolerance


def test_size_guard():
    big = ImageRGB.constant(0.5, 65, 65)
    with pytest.raises(ValueError):
        oracle.oracle_affine(big, big, 1e-3)


def test_scalar_grid_examples(rng):
    pred = random_image(rng)
    r2 = oracle.oracle_scalar_grid(pred, ImageRGB(2 * pred.data))
    assert abs(r2.oracle - 2.0) <= 1e-4 and r2.converged
    r1 = oracle.oracle_scalar_grid(pred, pred)
    assert abs(r1.oracle - 1.0) <= 1e-4


def test_diagonal_grid(pair):
    assert oracle.oracle_diagonal_grid(*pair, (-4, 4)).converged


def test_finite_diff_examples():
    g = oracle.finite_diff(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
    assert g[0] == pytest.approx(6.0, abs=1e-8)
    w = np.array([1.5, -2.0, 0.25])
    for step in (1e-1, 1e-3):
        np.testing.assert_allclose(oracle.finite_diff(lambda x: float(w @ x), np.ones(3), step),
                                   w, rtol=1e-12)
    with pytest.raises(ValueError):
        oracle.finite_diff(lambda x: 0.0, np.ones(1), 0.0)


def test_finite_diff_does_not_mutate():
    x = np.arange(4.0)
    seen = []
    oracle.finite_diff(lambda v: seen.append(v) or float(v.sum()), x, 0.5)
    np.testing.assert_array_equal(x, np.arange(4.0))
    assert len({id(v) for v in seen}) == len(seen)


def test_gaussian_elimination(rng):
    a = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    r = rng.standard_normal(4)
    np.testing.assert_allclose(oracle.gaussian_elimination(a, r), np.linalg.solve(a, r))
    with pytest.raises(ZeroDivisionError):
        oracle.gaussian_elimination(np.zeros((2, 2)), np.ones(2))


def test_random_transform_condition(rng):
    for _ in range(20):
        c0, b0 = oracle.random_transform(rng)
        assert np.linalg.cond(c0) <= 100 and np.all(np.abs(b0) <= 0.15)
