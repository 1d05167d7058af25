import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from v2ivision import evaluate as E, pipeline, predictor, scenarios
from v2ivision.errors import ContractError, FormatError


class AreaModel:
    """Predicts a label from mask area through a fixed linear map."""

    def __init__(self, slope=0.01, offset=70.0):
        self.slope, self.offset = slope, offset

    def predict(self, images):
        return self.offset - self.slope * (np.asarray(images) > 0).reshape(len(images), -1).sum(axis=1)


class Oracle:
    def __init__(self, images, labels):
        self.lookup = {im.tobytes(): y for im, y in zip(images, labels)}

    def predict(self, images):
        return np.array([self.lookup[im.tobytes()] for im in images])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.integers(0, 2**31))
def test_rmse_matches_loop(truth, seed):
    preds = np.random.default_rng(seed).normal(size=len(truth)) * 10
    assert E.rmse(truth, preds) == pytest.approx(oracles.rmse_loop(truth, list(preds)), rel=1e-12, abs=1e-12)


def test_rmse_values_and_errors():
    assert E.rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert E.rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
    with pytest.raises(ContractError):
        E.rmse([], [])
    with pytest.raises(ContractError):
        E.rmse([1.0], [1.0, 2.0])


def test_swap_tolerance_scaling():
    assert E.swap_tolerance([60.0, 80.0]) == pytest.approx(2.0)
    assert E.swap_tolerance([60.0, 70.0, 65.0]) == pytest.approx(1.0)


def test_reference_table_values():
    assert E.REFERENCE_RMSE[("self_val", "single_mask", "pl_db")][0] == 2.46
    assert E.REFERENCE_RMSE[("cross_val", "single_mask", "pl_db")][0] == 4.9
    assert E.REFERENCE_RMSE[("cross_val", "raw_scene", "pl_db")][0] == 8.68
    assert len(E.REFERENCE_RMSE) == 21


@given(st.integers(1, 5000), st.integers(1, 6000), st.integers(0, 100))
def test_contiguous_block(m, size, seed):
    b = E.contiguous_block(m, size, seed)
    assert b.size == min(size, m) and b[0] >= 0 and b[-1] < m
    assert np.all(np.diff(b) == 1)
    assert np.array_equal(b, E.contiguous_block(m, size, seed))


@given(st.integers(10, 4000), st.integers(1, 900), st.integers(0, 3999))
def test_centred_block(m, size, mid):
    mid = mid % m
    b = E.centred_block(m, size, [mid, mid])
    assert b.size == min(size, m) and b[0] >= 0 and b[-1] < m
    if size <= m and size // 2 <= mid <= m - size + size // 2:
        assert b[0] == mid - size // 2


def test_report_validation():
    with pytest.raises(ContractError):
        E.EvalReport("nope", "single_mask", "pl_db", 1.0, 3)
    with pytest.raises(ContractError):
        E.EvalReport("self_val", "rgb", "pl_db", 1.0, 3)
    with pytest.raises(ContractError):
        E.EvalReport("self_val", "single_mask", "pl_db", -1.0, 3)
    r = E.EvalReport("cross_val", "raw_scene", "pl_db", 1.0, 3)
    assert r.reference == (8.68, 9.16)


def test_self_validation_with_perfect_model(street_a_data):
    imgs, y = street_a_data.images("single_mask"), street_a_data.labels("pl_db")
    rep, _ = E.run_self_validation(street_a_data, "single_mask", "pl_db", seed=2, model=Oracle(imgs, y))
    assert rep.n_samples == round(0.1 * len(street_a_data))
    # masks repeat occasionally, so the lookup can pick a twin's label
    assert rep.rmse < 0.05
    assert np.array_equal(rep.index, street_a_data.splits(2).test)


def test_cross_validation_block(street_a_data, street_b_data):
    rep = E.run_cross_validation(AreaModel(), street_b_data, "single_mask", "k_db", seed=1, train_scenario="A")
    assert rep.n_samples == round(0.2 * len(street_b_data))
    assert np.all(np.diff(rep.index) == 1)
    assert rep.meta == {"train_scenario": "A", "test_scenario": "B", "seed": 1}
    model = predictor.TrainedModel(predictor.init_params(1, 16, 16), "k_db", 0.0, 1.0)
    with pytest.raises(ContractError):
        E.run_cross_validation(model, street_b_data, "single_mask", "k_db")


def test_vehicle_swap_changes_area_model(street_a_data):
    fps = [street_a_data.footprint.scaled(s) for s in scenarios.SWAP_SCALES]
    base, swaps = E.run_vehicle_swap(AreaModel(), street_a_data, fps, "pl_db", seed=0)
    assert len(swaps) == 2
    block = E.swap_block(street_a_data, 0)
    assert set(base.index) <= set(block) and base.n_samples > 0.9 * block.size
    for s in swaps:
        assert np.array_equal(s.index, base.index)
    preds = [s.pred.mean() for s in swaps]
    assert preds[0] > base.pred.mean() > preds[1]  # larger vehicle, larger area, lower output


def test_swap_block_surrounds_test_block(street_a_data):
    test = street_a_data.splits(0).test
    block = E.swap_block(street_a_data, 0)
    assert block.size == min(900, round(0.2 * len(street_a_data)))
    assert block[0] <= test[0] or block[0] == 0
    assert block[-1] >= test[-1] or block[-1] == len(street_a_data) - 1


def test_table_round_trip(tmp_path):
    reps = [E.EvalReport("self_val", "single_mask", "pl_db", 0.125, 300), E.EvalReport("cross_val", "raw_scene", "k_db", 1 / 3, 600)]
    p = tmp_path / "r.csv"
    E.emit_table(reps, p)
    assert p.read_text().splitlines()[0] == "experiment,image_mode,target,rmse,n"
    back = E.read_table(p)
    assert [(r.experiment, r.rmse, r.n_samples) for r in back] == [("self_val", 0.125, 300), ("cross_val", 1 / 3, 600)]
    with pytest.raises(ContractError):
        E.emit_table([], p)
    p.write_text("bad\n")
    with pytest.raises(FormatError):
        E.read_table(p)


def test_write_series(tmp_path):
    rep = E.EvalReport("self_val", "single_mask", "pl_db", 0.0, 2, np.array([4, 5]), np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    p = tmp_path / "s.csv"
    E.write_series(rep, p)
    assert p.read_text().splitlines() == ["index,truth,pred", "4,1.0,1.0", "5,2.0,2.0"]


def test_run_suite_small(street_b_data):
    small_a = pipeline.build_scenario(scenarios.street_a(duration=4.0), scenarios.RX_VAN)
    cfg = predictor.TrainConfig(epochs=1, batch_size=64)
    res = E.run_suite(small_a, street_b_data, ["single_mask"], [0], cfg)
    kinds = [(r.experiment, r.target) for r in res.reports]
    assert kinds.count(("self_val", "pl_db")) == 1 and kinds.count(("cross_val", "k_db")) == 1
    assert kinds.count(("vehicle_swap", "rms_ds_ns")) == 2
    assert len(res.models) == 3 and len(res.swap_baselines) == 3
