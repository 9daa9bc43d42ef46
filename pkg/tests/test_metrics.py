import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qefl.data import Dataset
from qefl.metrics import (
    CSV_HEADER,
    RoundMetrics,
    confusion_matrix,
    evaluate,
    export_csv,
    macro_f1,
    progress_line,
    read_csv,
    trend_check,
)
from qefl.nn import Architecture


def head_only(arch, V, b):
    """Parameters whose hidden layers are zero, so logits are V @ sin(0) + b = b unless V is used."""
    layers = arch.unpack(np.zeros(arch.n_params))
    layers[-1][0][:] = V
    layers[-1][1][:] = b
    return arch.pack(layers)


class TestEvaluate:
    def test_perfect_predictor(self):
        # one hidden unit sin(x) with x in {-1, 1}; head maps the sign to the class
        arch = Architecture(1, (1,), 2)
        layers = arch.unpack(np.zeros(arch.n_params))
        layers[0][0][:] = 1.0
        layers[1][0][:] = [[-10.0], [10.0]]
        params = arch.pack(layers)
        data = Dataset(np.array([[-1.0], [1.0], [-1.0], [1.0]]), np.array([0, 1, 0, 1]), 2)
        ev = evaluate(arch, params, data)
        assert ev.accuracy == 1.0 and ev.macro_f1 == 1.0

    def test_constant_predictor(self):
        arch = Architecture(3, (2,), 2)
        params = head_only(arch, 0.0, [1.0, 0.0])
        data = Dataset(np.random.default_rng(0).uniform(size=(10, 3)), np.array([0, 1] * 5), 2)
        ev = evaluate(arch, params, data)
        assert ev.accuracy == 0.5
        assert ev.macro_f1 == pytest.approx(1 / 3, abs=1e-15)
        expected_loss = np.log1p(np.exp(-1.0)) * 0.5 + np.log1p(np.exp(1.0)) * 0.5
        assert ev.mean_loss == pytest.approx(expected_loss, rel=1e-14)

    def test_ties_go_to_lowest_class(self):
        arch = Architecture(2, (1,), 3)
        data = Dataset(np.zeros((2, 2)), np.array([0, 2]), 3)
        ev = evaluate(arch, head_only(arch, 0.0, [0.0, 0.0, 0.0]), data)
        assert ev.confusion[:, 0].sum() == 2

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate(Architecture(2, (1,), 2), np.zeros(7), Dataset(np.zeros((0, 2)), np.zeros(0, int), 2))

    def test_pure(self, synth_arch, synth_params, synthetic_small):
        a = evaluate(synth_arch, synth_params, synthetic_small)
        b = evaluate(synth_arch, synth_params, synthetic_small)
        assert (a.accuracy, a.macro_f1, a.mean_loss) == (b.accuracy, b.macro_f1, b.mean_loss)

    def test_accuracy_from_confusion(self, synth_arch, synth_params, synthetic_small):
        ev = evaluate(synth_arch, synth_params, synthetic_small)
        assert ev.confusion.sum() == len(synthetic_small)
        assert ev.accuracy == np.trace(ev.confusion) / len(synthetic_small)


def f1_loop(cm):
    c = len(cm)
    scores = []
    for k in range(c):
        tp = cm[k][k]
        fp = sum(cm[j][k] for j in range(c)) - tp
        fn = sum(cm[k]) - tp
        scores.append(0.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / c


class TestMacroF1:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 5).flatmap(lambda c: st.tuples(
        st.just(c), st.lists(st.tuples(st.integers(0, c - 1), st.integers(0, c - 1)), min_size=1, max_size=40))))
    def test_against_loop(self, case):
        c, pairs = case
        yt, yp = zip(*pairs)
        cm = confusion_matrix(yt, yp, c)
        f = macro_f1(cm)
        assert 0.0 <= f <= 1.0
        assert f == pytest.approx(f1_loop(cm.tolist()), abs=1e-12)
        all_present = np.all(np.diag(cm) > 0)
        assert (f == 1.0) == (np.count_nonzero(cm - np.diag(np.diag(cm))) == 0 and all_present)

    def test_absent_class_counts_as_zero(self):
        cm = confusion_matrix([0, 1], [0, 1], 3)
        assert macro_f1(cm) == pytest.approx(2 / 3)


class TestTrend:
    def test_decreasing(self):
        r = trend_check([5, 4, 3, 2, 1], 2, 0.0)
        assert r.applicable and r.passed and r.first_violation is None

    def test_example_violation(self):
        r = trend_check([1.0, 0.5, 0.9], 1, 0.1)
        assert not r.passed and r.first_violation == 3

    @pytest.mark.parametrize("slack", [0.0, 0.5])
    def test_flat(self, slack):
        assert trend_check([0.3] * 8, 3, slack).passed

    def test_short_history_not_applicable(self):
        r = trend_check([1.0, 0.9], 5, 0.0)
        assert not r.applicable

    def test_window_round_mapping(self):
        # ma over window 2: 1.5, 2.5 (rise at round 3)
        r = trend_check([1, 2, 3], 2, 0.5)
        assert r.first_violation == 3
        np.testing.assert_allclose(r.moving_average, [1.5, 2.5])

    def test_bad_window(self):
        with pytest.raises(ValueError):
            trend_check([1.0], 0, 0.0)


def history(n):
    rng = np.random.default_rng(n)
    return [RoundMetrics(r, *rng.uniform(size=3), r * 0.125) for r in range(1, n + 1)]


class TestCsv:
    def test_one_round(self):
        text = export_csv(history(1))
        lines = text.split("\n")
        assert lines[-1] == "" and len(lines) == 3
        assert lines[0] == ",".join(CSV_HEADER)

    def test_roundtrip_12_digits(self):
        h = history(6)
        back = read_csv(export_csv(h))
        for a, b in zip(h, back):
            assert a.round == b.round
            for f in ("accuracy", "macro_f1", "mean_loss", "epsilon_total"):
                assert float(f"{getattr(a, f):.12g}") == float(f"{getattr(b, f):.12g}")

    def test_constant_columns(self):
        rows = export_csv(history(9)).splitlines()
        assert {len(r.split(",")) for r in rows} == {5}

    def test_infinite_epsilon_written(self):
        h = [RoundMetrics(1, 0.5, 0.5, 0.1, float("inf"))]
        assert read_csv(export_csv(h))[0].epsilon_total == float("inf")

    def test_empty(self):
        with pytest.raises(ValueError):
            export_csv([])


def test_progress_line_layout():
    line = progress_line(RoundMetrics(3, 0.25, 0.2, 1.5, 0.0))
    m = re.fullmatch(r"round=(\d+) acc=([0-9.]+) loss=([0-9.]+)", line)
    assert m and (int(m[1]), float(m[2]), float(m[3])) == (3, 0.25, 1.5)
