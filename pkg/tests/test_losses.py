import math

import numpy as np
import pytest

from anyloss.confusion import (
    Accuracy,
    BalancedAccuracy,
    FBeta,
    GMean,
    metric_score,
    soft_confusion,
)
from anyloss.gradcheck import LOSS_TOL, central_diff, check_loss_gradients, rel_err
from anyloss.losses import (
    ALL_LOSS_NAMES,
    DegenerateClassError,
    LossSpec,
    baseline_grad_p,
    default_specs,
    loss_from_name,
    loss_grad_yh,
    loss_value,
)

Y = [1, 0]
YH = [0.9, 0.2]


def spec(name, **kw):
    return loss_from_name(name, **kw)


@pytest.mark.parametrize("name, expected", [("acc", 0.15), ("f1", 0.142857), ("gmean", 0.151472)])
def test_loss_value_examples(name, expected):
    assert loss_value(spec(name), Y, YH) == pytest.approx(expected, abs=1e-6)


def test_baseline_values():
    assert loss_value(spec("mse"), [1, 0], [1, 0]) == 0.0
    assert loss_value(spec("bce"), [1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))


def test_gradient_examples():
    assert loss_grad_yh(spec("acc"), Y, YH).grad.tolist() == [-0.5, 0.5]
    assert loss_grad_yh(spec("f1"), Y, YH).grad == pytest.approx([-0.54422, 0.40816], abs=1e-5)
    assert loss_grad_yh(spec("bacc"), Y, YH).grad == pytest.approx([-0.5, 0.5])


def test_f1_example_against_fine_finite_difference():
    s = spec("f1")
    numeric = central_diff(lambda v: loss_value(s, Y, v), np.array(YH), 1e-7)
    assert loss_grad_yh(s, Y, YH).grad == pytest.approx(numeric, abs=1e-6)


def test_baseline_gradient_examples():
    assert baseline_grad_p(spec("mse"), [1], [0.5]).grad.tolist() == [-1.0]
    assert baseline_grad_p(spec("bce"), [1], [0.5]).grad.tolist() == [-2.0]
    p = np.array([0.2, 0.7, 0.4])
    assert np.all(baseline_grad_p(spec("mse"), p, p).grad == 0)


def test_accuracy_gradient_equals_summed_form():
    # d/dyh_i of -(tn + tp)/n, with tn and tp written as sums over the batch
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 20).astype(float)
    yh = rng.uniform(0.01, 0.99, 20)
    n = len(y)
    d_tn = -(1 - y)
    d_tp = y
    summed = -(d_tn + d_tp) / n
    assert np.array_equal(loss_grad_yh(spec("acc"), y, yh).grad, summed)


def test_names_and_validation():
    assert [s.name for s in default_specs()] == ["mse", "bce", "L_accuracy", "L_f1", "L_gmean", "L_bacc"]
    assert len(ALL_LOSS_NAMES) == 6
    assert spec("L_f1") == spec("f1")
    assert spec("f2").kind == FBeta(2.0)
    assert spec("f1").is_anyloss and not spec("bce").is_anyloss
    assert spec("gmean").is_class_ratio and not spec("f1").is_class_ratio
    with pytest.raises(ValueError):
        spec("f1", L=100)
    assert LossSpec(FBeta(1.0), 100, allow_any_L=True).L == 100
    with pytest.raises(ValueError):
        LossSpec(Accuracy(), -1.0, allow_any_L=True)
    with pytest.raises(ValueError):
        loss_grad_yh(spec("bce"), Y, YH)
    with pytest.raises(ValueError):
        baseline_grad_p(spec("f1"), Y, YH)
    with pytest.raises(ValueError):
        loss_value(spec("f1"), [1, 0, 1], [0.5, 0.5])


@pytest.mark.parametrize("name", ["gmean", "bacc"])
def test_single_class_batch_is_rejected(name):
    with pytest.raises(DegenerateClassError):
        loss_grad_yh(spec(name), [1, 1, 1], [0.4, 0.6, 0.8])


@pytest.mark.parametrize("s", default_specs(), ids=lambda s: s.name)
def test_gradients_match_finite_differences(s):
    res = check_loss_gradients(s, instances=100, seed=5)
    assert res.max_rel_err <= LOSS_TOL, res.worst


def test_rel_err_floor():
    assert rel_err([1e-12], [3e-12], 1e-5)[0] < 1e-5
    assert rel_err([1.0], [1.1], 1e-5)[0] == pytest.approx(0.1 / 1.1)


@pytest.mark.parametrize("name", ["acc", "f1", "gmean", "bacc"])
def test_range_and_zero_at_perfect(name):
    s = spec(name)
    rng = np.random.default_rng(1)
    for _ in range(200):
        y = rng.integers(0, 2, 15)
        y[:2] = (0, 1)
        yh = rng.uniform(0, 1, 15)
        assert 0.0 <= loss_value(s, y, yh) <= 1.0
    y = np.array([1, 0, 1, 0, 0])
    values = [loss_value(s, y, np.where(y == 1, 1 - eps, eps)) for eps in (1e-1, 1e-3, 1e-6, 0.0)]
    assert values == sorted(values, reverse=True)
    assert values[-1] == 0.0
    assert values[-2] < 1e-5


def test_fbeta_gradient_is_batch_coupled():
    s = spec("f1")
    y = np.array([1.0, 0.0, 1.0, 0.0])
    yh = np.array([0.7, 0.3, 0.4, 0.6])
    g0 = loss_grad_yh(s, y, yh).grad
    bumped = yh.copy()
    bumped[3] += 0.2
    g1 = loss_grad_yh(s, y, bumped).grad
    assert not np.isclose(g0[0], g1[0])
    assert not np.isclose(g0[1], g1[1])


def test_accuracy_gradient_is_per_sample():
    s = spec("acc")
    y = np.array([1.0, 0.0, 1.0, 0.0])
    g0 = loss_grad_yh(s, y, [0.7, 0.3, 0.4, 0.6]).grad
    g1 = loss_grad_yh(s, y, [0.7, 0.3, 0.4, 0.95]).grad
    assert np.array_equal(g0, g1)


def test_losses_are_one_minus_soft_metric():
    y = np.array([1, 0, 0, 1, 0])
    yh = np.array([0.8, 0.4, 0.1, 0.6, 0.3])
    conf = soft_confusion(y, yh)
    for kind in (Accuracy(), FBeta(1.0), FBeta(2.0), GMean(), BalancedAccuracy()):
        assert loss_value(LossSpec(kind), y, yh) == pytest.approx(1 - metric_score(conf, kind))
