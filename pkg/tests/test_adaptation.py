import copy

import numpy as np
import pytest

from driftcp.adaptation import (
    AdaptOptions,
    CalibrationCache,
    ShiftOptions,
    calibration_view,
    ctta_step,
    gamma_weights,
)
from driftcp.errors import InvalidInput
from driftcp.model import fit_supervised, init_params, make_pair, weighted_ce_loss_and_grad
from driftcp.predictors import PredictorConfig
from driftcp.stream import SourceTask, make_source

# ---------------------------------------------------------------------------
# gamma weights


def test_gamma_frozen_example():
    g = gamma_weights([1, 3, 5])
    assert g[0] == pytest.approx(1.0, abs=1e-12)
    assert g[1] == pytest.approx(0.5, abs=1e-9)
    assert g[2] == pytest.approx(0.0, abs=1e-9)


def test_gamma_singletons_get_full_weight():
    assert gamma_weights([1])[0] == 1.0
    g = gamma_weights([1, 1, 4])
    assert g[0] == 1.0 and g[1] == 1.0


def test_gamma_empty_sets_get_zero():
    g = gamma_weights([0, 2, 0, 2])
    assert g[0] == 0.0 and g[2] == 0.0
    # size-2 sets are the batch maximum, so they get almost no weight
    assert g[1] == g[3] == pytest.approx(0.0, abs=1e-8)


def test_gamma_all_empty_is_all_zero():
    np.testing.assert_array_equal(gamma_weights([0, 0, 0]), np.zeros(3))


def test_gamma_range_and_monotonicity():
    rng = np.random.default_rng(0)
    sizes = rng.integers(0, 10, size=200)
    g = gamma_weights(sizes)
    assert np.all(g >= 0.0) and np.all(g <= 1.0)
    nz = sizes > 0
    order = np.argsort(sizes[nz])
    assert np.all(np.diff(g[nz][order]) <= 1e-12)


def test_gamma_validation():
    with pytest.raises(InvalidInput):
        gamma_weights([-1, 2])
    with pytest.raises(InvalidInput):
        gamma_weights([1, 2], delta=0.0)


# ---------------------------------------------------------------------------
# ctta_step

TASK = SourceTask(n_classes=4, n_features=6, seed=1)


def make_setup(seed=0):
    splits = make_source(TASK, 600, 40, 100)
    params = init_params(TASK.n_features, TASK.n_classes, rng=seed)
    fit_supervised(params, splits.train_x, splits.train_y, epochs=15, rng=seed)
    pair = make_pair(params, ema_momentum=0.9)
    rng = np.random.default_rng(seed + 100)
    batch = splits.heldout_x[:32] + 0.5 * rng.standard_normal((32, TASK.n_features))
    return pair, splits.calibration, batch


def test_no_adapt_leaves_models_and_reports_no_loss():
    pair, cal, X = make_setup()
    out = ctta_step(pair, X, cal, PredictorConfig(method="THR", alpha=0.1))
    assert out.gammas is None and out.loss is None
    assert out.student_version == 0 and out.teacher_version == 0
    assert out.points.shape == (32,)
    assert len(out.sets) == 32


def test_predictions_precede_the_update():
    pair_a, cal, X = make_setup()
    pair_b = copy.deepcopy(pair_a)
    cfg = PredictorConfig(method="CUI", alpha=0.1, beta=1.0)
    frozen = ctta_step(pair_a, X, cal, cfg, adapt=False)
    adapted = ctta_step(pair_b, X, cal, cfg, adapt=True, adapt_opts=AdaptOptions(lr=0.5))
    np.testing.assert_array_equal(frozen.points, adapted.points)
    assert [s.classes for s in frozen.sets] == [s.classes for s in adapted.sets]
    assert adapted.threshold.value == frozen.threshold.value
    # and the update really happened afterwards
    assert adapted.student_version == 1
    assert adapted.teacher_version == 1
    assert not np.array_equal(pair_b.student.layers[0][0], pair_a.student.layers[0][0])


def test_adapt_updates_student_and_teacher():
    pair, cal, X = make_setup()
    w_student = pair.student.layers[0][0].copy()
    w_source = pair.source.layers[0][0].copy()
    out = ctta_step(
        pair,
        X,
        cal,
        PredictorConfig(method="THR", alpha=0.1),
        adapt=True,
        adapt_opts=AdaptOptions(lr=0.2),
    )
    assert out.loss is not None and out.loss >= 0.0
    assert out.gammas is not None and np.all((out.gammas >= 0) & (out.gammas <= 1))
    assert not np.array_equal(pair.student.layers[0][0], w_student)
    np.testing.assert_array_equal(pair.source.layers[0][0], w_source)


def test_uniform_gamma_mode_is_plain_mean_teacher():
    pair_a, cal, X = make_setup()
    pair_b = copy.deepcopy(pair_a)
    opts = AdaptOptions(lr=0.3, gamma_mode="uniform")
    out = ctta_step(pair_a, X, cal, PredictorConfig(method="THR", alpha=0.1), adapt=True, adapt_opts=opts)
    np.testing.assert_array_equal(out.gammas, np.ones(32))
    # hand-rolled plain mean-teacher step on the twin pair
    from driftcp.model import ema_update, sgd_step

    loss, grads = weighted_ce_loss_and_grad(pair_b, X, np.ones(32))
    sgd_step(pair_b.student, grads, 0.3)
    ema_update(pair_b)
    assert out.loss == loss
    for (wa, ba), (wb, bb) in zip(pair_a.student.layers, pair_b.student.layers):
        np.testing.assert_array_equal(wa, wb)
    for (wa, ba), (wb, bb) in zip(pair_a.teacher.layers, pair_b.teacher.layers):
        np.testing.assert_array_equal(wa, wb)


def test_all_empty_sets_give_zero_loss_and_frozen_student():
    pair, cal, X = make_setup()
    # literal compensation with a huge beta clamps the threshold to zero,
    # so every set is empty and every gamma is zero
    cfg = PredictorConfig(method="CUI", alpha=0.1, beta=1e6, compensation_sign="literal")
    w_before = [(W.copy(), b.copy()) for W, b in pair.student.layers]
    out = ctta_step(pair, X + 5.0, cal, cfg, adapt=True)
    assert out.threshold.value == 0.0
    assert all(len(s) == 0 for s in out.sets)
    assert out.loss == 0.0
    np.testing.assert_array_equal(out.gammas, np.zeros(32))
    assert pair.student.version == 1
    for (W, b), (W0, b0) in zip(pair.student.layers, w_before):
        np.testing.assert_array_equal(W, W0)
        np.testing.assert_array_equal(b, b0)


def test_cache_refreshes_only_on_version_change():
    pair, cal, X = make_setup()
    cache = CalibrationCache()
    cfg = PredictorConfig(method="THR", alpha=0.1)
    ctta_step(pair, X, cal, cfg, cache=cache)
    first = cache._view
    ctta_step(pair, X, cal, cfg, cache=cache)
    assert cache._view is first
    ctta_step(pair, X, cal, cfg, adapt=True, cache=cache)
    ctta_step(pair, X, cal, cfg, cache=cache)
    assert cache._view is not first
    assert cache._view.model_version == pair.teacher.version


def test_view_subsample_shrinks_joints_but_not_scores():
    pair, cal, X = make_setup()
    view = calibration_view(pair, cal, ShiftOptions(calib_subsample=10))
    assert view.joints.shape[0] == 10
    assert view.scores.n == cal.n


def test_student_as_current_model():
    pair, cal, X = make_setup()
    opts = AdaptOptions(current="student")
    out = ctta_step(pair, X, cal, PredictorConfig(method="THR", alpha=0.1), adapt_opts=opts)
    view = calibration_view(pair, cal, current="student")
    assert view.model_version == pair.student.version
    assert out.points.shape == (32,)


def test_option_validation():
    with pytest.raises(InvalidInput):
        AdaptOptions(gamma_mode="softmax")
    with pytest.raises(InvalidInput):
        AdaptOptions(current="source")
    with pytest.raises(InvalidInput):
        AdaptOptions(lr=0.0)
