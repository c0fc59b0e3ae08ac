import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vetrad.calib import (
    CalibrationError,
    CalibrationParams,
    calibrate_vector,
    fit_opt,
    fit_params,
    piecewise_transform,
)


def reference_transform(x, opt):
    """Independent evaluation of the two-piece formula."""
    return x / (2 * opt) if x <= opt else 1 - (1 - x) / (2 * (1 - opt))


def grid_youden(pairs, step=1e-3):
    """Brute-force J maximization over a fixed threshold grid."""
    scores = np.array([s for s, _ in pairs])
    labels = np.array([y for _, y in pairs])
    best_t, best_j = None, -np.inf
    for t in np.arange(step, 1.0, step):
        pred = scores >= t
        sens = np.sum(pred & (labels == 1)) / np.sum(labels == 1)
        spec = np.sum(~pred & (labels == 0)) / np.sum(labels == 0)
        j = sens + spec - 1
        if j > best_j or (j == best_j and abs(t - 0.5) < abs(best_t - 0.5)):
            best_t, best_j = t, j
    return best_t, best_j


class TestPiecewiseTransform:
    def test_opt_maps_to_half(self):
        for opt in (0.1, 0.25, 0.5, 0.9):
            assert piecewise_transform(opt, opt) == 0.5

    def test_endpoints_fixed(self):
        for opt in (0.2, 0.5, 0.8):
            assert piecewise_transform(0.0, opt) == 0.0
            assert piecewise_transform(1.0, opt) == 1.0

    def test_hand_value(self):
        assert piecewise_transform(0.5, 0.25) == pytest.approx(1 - 0.5 / 1.5, abs=1e-4)

    def test_domain_error(self):
        with pytest.raises(CalibrationError):
            piecewise_transform(0.5, 0.0)
        with pytest.raises(CalibrationError):
            piecewise_transform(0.5, 1.0)

    @given(st.floats(0, 1), st.floats(0.01, 0.99))
    @settings(max_examples=200, deadline=None)
    def test_matches_reference(self, x, opt):
        assert piecewise_transform(x, opt) == pytest.approx(
            reference_transform(x, opt), abs=1e-12
        )

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.99))
    @settings(max_examples=200, deadline=None)
    def test_strictly_increasing(self, a, b, opt):
        if a == b:
            return
        lo, hi = min(a, b), max(a, b)
        assert piecewise_transform(lo, opt) < piecewise_transform(hi, opt)

    def test_decision_equivalence(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.uniform(0, 1)
            opt = rng.uniform(0.01, 0.99)
            assert (x >= opt) == (piecewise_transform(x, opt) >= 0.5)


class TestFitOpt:
    def test_separable_hand_case(self):
        pairs = [(0.9, 1), (0.7, 1), (0.2, 0), (0.4, 0)]
        opt, j = fit_opt(pairs)
        assert opt == pytest.approx(0.55)
        assert j == 1.0

    def test_inverted_scores_warn(self):
        pairs = [(0.1, 1), (0.2, 1), (0.8, 0), (0.9, 0)]
        with pytest.warns(UserWarning):
            opt, j = fit_opt(pairs)
        assert j <= 0
        assert 0 < opt < 1

    def test_degenerate_tie_prefers_half(self):
        opt, j = fit_opt([(0.8, 1), (0.8, 0)])
        assert j == 0.0
        assert opt == pytest.approx(0.4)  # candidate nearest 0.5

    def test_single_class_rejected(self):
        with pytest.raises(CalibrationError, match="Youden"):
            fit_opt([(0.5, 1), (0.6, 1)])

    def test_matches_grid_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(10, 60))
            scores = rng.uniform(0, 1, n).round(3)
            labels = (scores + rng.normal(0, 0.3, n) > 0.5).astype(int)
            if labels.sum() in (0, n):
                continue
            pairs = list(zip(scores, labels))
            opt, j = fit_opt(pairs)
            _, grid_j = grid_youden(pairs)
            assert j >= grid_j - 1e-12


class TestCalibrateVector:
    def make_params(self, taxonomy):
        return CalibrationParams(opt={f.id: 0.3 for f in taxonomy})

    def test_raw_equal_opt_gives_half(self, taxonomy):
        params = self.make_params(taxonomy)
        out = calibrate_vector({f.id: 0.3 for f in taxonomy}, params)
        assert all(v == 0.5 for v in out.values())

    def test_all_zero(self, taxonomy):
        params = self.make_params(taxonomy)
        out = calibrate_vector({f.id: 0.0 for f in taxonomy}, params)
        assert all(v == 0.0 for v in out.values())

    def test_elementwise_matches_scalar(self, taxonomy):
        rng = np.random.default_rng(5)
        opts = {f.id: rng.uniform(0.05, 0.95) for f in taxonomy}
        params = CalibrationParams(opt=opts)
        raw = {f.id: rng.uniform(0, 1) for f in taxonomy}
        out = calibrate_vector(raw, params)
        for fid in raw:
            assert out[fid] == piecewise_transform(raw[fid], opts[fid])

    def test_missing_finding_rejected(self, taxonomy):
        params = CalibrationParams(opt={"cardiomegaly": 0.5})
        with pytest.raises(CalibrationError, match="pneumothorax"):
            calibrate_vector({"pneumothorax": 0.5}, params)

    def test_rank_preservation(self):
        params = CalibrationParams(opt={"f": 0.37})
        xs = np.sort(np.random.default_rng(2).uniform(0, 1, 50))
        ys = [calibrate_vector({"f": x}, params)["f"] for x in xs]
        assert all(a < b for a, b in zip(ys, ys[1:]) if a != b)
        assert ys == sorted(ys)


class TestParamsPersistence:
    def test_json_round_trip(self):
        params = fit_params(
            {"f1": [(0.9, 1), (0.1, 0)], "f2": [(0.8, 1), (0.3, 0), (0.2, 0)]},
            fitted_on="val-1",
            model_version="m-1",
        )
        restored = CalibrationParams.from_json(params.to_json())
        assert restored.opt == pytest.approx(params.opt)
        assert restored.fitted_on == "val-1"
        assert restored.model_version == "m-1"

    def test_out_of_range_opt_rejected(self):
        with pytest.raises(CalibrationError):
            CalibrationParams(opt={"f": 1.5})
